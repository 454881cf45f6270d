#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "semrl/judge.hpp"
#include "semrl/synthworld.hpp"

namespace semrl {

/// Discrete importance level per aspect, each in {0..K}.
struct WeightLevels {
  std::vector<int> levels;
  bool operator==(const WeightLevels&) const = default;
};

/// Simplex weights over aspects.
struct WeightVector {
  std::vector<double> w;
};

/// z / sum(z), or uniform when every level is zero.
WeightVector normalize_levels(const WeightLevels& z);

/// Holistic semantic score w . s. Throws DimensionMismatch when the weight
/// count differs from the aspect count.
double holistic_score(const WeightVector& w, const AspectScores& s);

/// 1 iff the winner's holistic score is strictly higher.
int pairwise_reward(double holistic_winner, double holistic_loser);

enum class PairSource { kIntra, kBehavioral };

struct PreferencePair {
  UserId user = 0;
  ItemId winner = 0;
  ItemId loser = 0;
  PairSource source = PairSource::kIntra;
};

// Preference-pair file: `user_id, winner_item, loser_item, source`.
void write_pairs(std::ostream& out, std::span<const PreferencePair> pairs);
std::vector<PreferencePair> read_pairs(std::istream& in);

/// User-conditional weight policy: `dims` independent categoricals over
/// {0..K}, each a softmax of a linear map of the context features. Holds the
/// live parameters and a frozen reference copy.
class AggregatorPolicy {
 public:
  AggregatorPolicy() = default;
  /// Zero-initialised weights, so the reference policy is uniform.
  AggregatorPolicy(int dims, int max_level, std::size_t input_dim);

  int dims() const { return dims_; }
  int max_level() const { return max_level_; }
  int n_levels() const { return max_level_ + 1; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t num_params() const { return params_.size(); }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::span<const double> reference_params() const { return reference_; }
  /// Makes the current parameters the new reference.
  void freeze_reference() { reference_ = params_; }

  /// Row-major dims x n_levels probabilities under the current (or reference) parameters.
  std::vector<double> probs(std::span<const double> x, bool reference = false) const;
  WeightLevels sample(std::span<const double> x, std::uint64_t seed) const;
  double log_prob(std::span<const double> x, const WeightLevels& z) const;
  /// Sum over aspects of KL(current || reference) at x.
  double kl(std::span<const double> x) const;
  /// Exact E_z[normalize_levels(z)] by enumeration of all level vectors.
  WeightVector expected_weights(std::span<const double> x) const;

  // Versioned text dump with the hyperparameter manifest in the header.
  void save(std::ostream& out) const;
  static AggregatorPolicy load(std::istream& in);

 private:
  std::size_t weight_index(int d, int k, std::size_t j) const;
  std::size_t bias_index(int d, int k) const;
  std::vector<double> logits(std::span<const double> params, std::span<const double> x) const;

  int dims_ = 0;
  int max_level_ = 0;
  std::size_t input_dim_ = 0;
  std::vector<double> params_;
  std::vector<double> reference_;
};

/// One context's sampled level vectors with their (fixed) advantages.
struct AggregatorGroup {
  std::vector<double> features;
  std::vector<WeightLevels> actions;
  std::vector<double> advantages;
};

/// The per-batch objective being ascended:
///   mean over groups of [ (1/G) sum_g A_g log pi(z_g | x) - beta KL(pi || pi_ref)(x) ].
/// With advantages held fixed this is the surrogate whose gradient is the
/// policy-gradient step. Writes the analytic gradient to `grad` if non-empty.
double aggregator_objective(const AggregatorPolicy& policy, std::span<const AggregatorGroup> groups, double beta,
                            std::span<double> grad = {});

struct AggregatorStepConfig {
  int group_size = 8;
  double beta = 0.04;
  double step_size = 0.5;
  double std_guard = 1e-8;
};

struct AggregatorDiagnostics {
  double mean_reward = 0.0;
  double kl = 0.0;
  double grad_norm = 0.0;
  double objective = 0.0;
};

/// Samples a group of level vectors per pair, rewards each by pairwise
/// consistency, standardizes within the group and takes one ascent step.
AggregatorDiagnostics aggregator_train_step(AggregatorPolicy& policy, std::span<const PreferencePair> batch,
                                            const ContextIndex& contexts, const Catalog& catalog,
                                            const AspectScorer& scorer, JudgeCache* cache,
                                            const AggregatorStepConfig& config, std::uint64_t seed);

/// Strict pairwise accuracy of the expected weight vector.
double pairwise_accuracy(const AggregatorPolicy& policy, std::span<const PreferencePair> pairs,
                         const ContextIndex& contexts, const Catalog& catalog, const AspectScorer& scorer,
                         JudgeCache* cache);

struct PairBuildConfig {
  int intra_per_user = 4;
  int behavioral_per_user = 1;
  int max_attempts = 32;
};

/// Intra-request pairs: two random items under one context, labelled by the
/// planted latent-weighted aspect score (ties skipped). Behavioral contrasts:
/// target over a random non-target item.
std::vector<PreferencePair> build_preference_pairs(const World& world, std::span<const Episode> episodes,
                                                   const AspectScorer& scorer, const PairBuildConfig& config,
                                                   std::uint64_t seed);

}  // namespace semrl
