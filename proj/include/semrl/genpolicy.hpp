#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "semrl/catalog.hpp"

namespace semrl {

/// Autoregressive generator over SID tokens.
///
///   s   = tanh(W x + b)                        context state, dimension E
///   h_t = s + sum_{k<t} Emb_k[y_k]             state after the first t tokens
///   logit(child c of the current trie node) = O_c . h_t + bias_c
///
/// Output vectors live on trie nodes, so masking to valid continuations is
/// structural: the softmax only ever ranges over the children of the node
/// reached by the prefix. All parameters sit in one flat vector; the policy
/// also keeps the sampling snapshot (theta_old) and a frozen reference.
class GeneratorPolicy {
 public:
  enum class Which { kCurrent, kOld, kReference };

  GeneratorPolicy() = default;
  /// Small random init from `seed`. `old` and `reference` start equal to it.
  GeneratorPolicy(const Codebook& codebook, std::size_t input_dim, int embed_dim, std::uint64_t seed,
                  double init_scale = 0.1);

  std::size_t input_dim() const { return input_dim_; }
  int embed_dim() const { return embed_dim_; }
  int levels() const { return levels_; }
  int codebook_size() const { return codebook_size_; }
  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t num_params() const { return current_.size(); }

  std::span<double> params() { return current_; }
  std::span<const double> params(Which which = Which::kCurrent) const;
  void refresh_old() { old_ = current_; }
  void freeze_reference() { reference_ = current_; }

  /// Trie-masked distribution over the children of the node reached by
  /// `prefix`, in codebook.children() order. Throws InvalidSid on a dead prefix.
  std::vector<double> next_probs(std::span<const double> x, std::span<const Token> prefix, const Codebook& codebook,
                                 Which which = Which::kCurrent) const;

  /// Sum of per-position log-probabilities. Throws InvalidSid.
  double log_prob(std::span<const double> x, const SemanticId& sid, const Codebook& codebook,
                  Which which = Which::kCurrent) const;

  /// Log-probability of every valid SID, in codebook.all_sids() order.
  std::vector<std::pair<ItemId, double>> all_log_probs(std::span<const double> x, const Codebook& codebook,
                                                       Which which = Which::kCurrent) const;

  // Versioned text dump: header with the shape, then the three parameter arrays.
  void save(std::ostream& out) const;
  static GeneratorPolicy load(std::istream& in);

  // Flat-layout offsets, exposed for the gradient code.
  std::size_t w_offset() const { return 0; }
  std::size_t b_offset() const { return static_cast<std::size_t>(embed_dim_) * input_dim_; }
  std::size_t emb_offset(int level, Token t) const;
  std::size_t out_offset(std::int32_t node) const;
  std::size_t bias_offset(std::int32_t node) const;

  /// Context state s for the given parameter set.
  std::vector<double> encode(std::span<const double> p, std::span<const double> x) const;
  /// Child logits at `node` for state h.
  void child_logits(std::span<const double> p, const Codebook& codebook, std::int32_t node, std::span<const double> h,
                    std::vector<double>& out) const;

 private:
  void check_codebook(const Codebook& codebook) const;

  std::size_t input_dim_ = 0;
  int embed_dim_ = 0;
  int levels_ = 0;
  int codebook_size_ = 0;
  std::size_t num_nodes_ = 0;
  std::vector<double> current_;
  std::vector<double> old_;
  std::vector<double> reference_;
};

/// In-place log-softmax.
void log_softmax(std::vector<double>& v);

struct Rollout {
  SemanticId sid;
  double log_prob_current = 0.0;
  double log_prob_old = 0.0;
  ItemId item_id = 0;
};

/// G trie-constrained samples drawn under theta_old, with replacement.
std::vector<Rollout> sample_group(const GeneratorPolicy& policy, std::span<const double> x, const Codebook& codebook,
                                  int group_size, std::uint64_t seed);

/// One context's rollouts with their fused advantages.
struct RolloutGroup {
  std::vector<double> features;
  std::vector<Rollout> rollouts;
  std::vector<double> advantages;
};

struct SurrogateConfig {
  double delta = 0.2;     // clip threshold
  double beta_gen = 0.04; // reference KL coefficient, 0 disables the term
};

/// Clipped surrogate, averaged over all rollouts of the batch:
///   mean_i min(rho_i A_i, clip(rho_i, 1-delta, 1+delta) A_i)
///     - beta_gen * mean_i sum_t KL(pi_theta || pi_ref) at the visited prefixes,
/// with rho_i = exp(log pi_theta(y_i) - log_prob_old_i). Writes the ascent
/// gradient into `grad` when it is non-empty.
double surrogate_objective(const GeneratorPolicy& policy, const Codebook& codebook,
                           std::span<const RolloutGroup> groups, const SurrogateConfig& config,
                           std::span<double> grad = {});

}  // namespace semrl
