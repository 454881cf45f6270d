#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "semrl/aggregator.hpp"
#include "semrl/fusion.hpp"
#include "semrl/genpolicy.hpp"
#include "semrl/judge.hpp"
#include "semrl/optim.hpp"
#include "semrl/synthworld.hpp"

namespace semrl {

/// Training variants. business_only ignores the judge entirely; reward_sum
/// mixes raw rewards before one standardization; the rest fuse per-stream
/// advantages through `fuse`.
enum class TrainMode { kBusinessOnly, kRewardSum, kAdvSum, kGateOnly, kMagnitudeOnly, kFull };

std::string_view to_string(TrainMode mode);
TrainMode parse_train_mode(std::string_view name);
/// Fusion mode for the advantage-level variants; nullopt for business_only.
std::optional<FusionMode> fusion_mode_of(TrainMode mode);

/// r_sem = w(x) . s(x, a): aspect scores from the scorer, weights from the
/// aggregator's expected weight vector (uniform when no aggregator is given).
/// Weight vectors are memoized per user.
class SemanticReward {
 public:
  SemanticReward(const AspectScorer& scorer, const Catalog& catalog, const ContextIndex& contexts,
                 const AggregatorPolicy* aggregator, JudgeCache* cache);

  double operator()(UserId user, ItemId item);
  const WeightVector& weights(UserId user);
  /// Pins a user's weights, bypassing the aggregator.
  void set_weights(UserId user, WeightVector w) { weights_[user] = std::move(w); }

 private:
  const AspectScorer* scorer_;
  const Catalog* catalog_;
  const ContextIndex* contexts_;
  const AggregatorPolicy* aggregator_;
  JudgeCache* cache_;
  std::unordered_map<UserId, WeightVector> weights_;
};

struct A2poStepConfig {
  TrainMode mode = TrainMode::kFull;
  FusionConfig fusion;
  int group_size = 16;
  SurrogateConfig surrogate;
  BusinessRewardConfig business;
  int inner_epochs = 1;  // ascent steps per batch of rollouts
};

struct BatchEntry {
  const Episode* episode = nullptr;
  bool judged = false;
};

struct StepDiagnostics {
  double objective = 0.0;
  double mean_lambda = 0.0;       // over judged candidates
  double gate_close_rate = 0.0;   // share of judged candidates with lambda = 0
  double consistency_rate = std::numeric_limits<double>::quiet_NaN();  // NaN when nothing judged
  double judged_fraction = 0.0;   // share of episodes judged
  double grad_norm = 0.0;
  double mean_business_reward = 0.0;
};

/// One A2PO update: sample a group per episode under theta_old, compute
/// business rewards, judge the selected episodes, standardize each stream
/// within its group, fuse, and ascend the clipped surrogate.
StepDiagnostics a2po_train_step(GeneratorPolicy& policy, Optimizer& optimizer, std::span<const BatchEntry> batch,
                                const ContextIndex& contexts, const Catalog& catalog, const Codebook& codebook,
                                SemanticReward* semantic, const A2poStepConfig& config, std::uint64_t seed);

struct TrainerConfig {
  A2poStepConfig step;
  int epochs = 10;
  int batch_size = 64;
  double p = 1.0;              // sparse sampling ratio
  int refresh_interval = 1;    // steps between theta_old refreshes
  std::uint64_t seed = 1;
};

/// Epoch/batch driver. Batch order and the judged mask are functions of
/// (seed, epoch) only, so a run can resume from any step checkpoint.
class A2poTrainer {
 public:
  A2poTrainer(const World& world, const ContextIndex& contexts, std::vector<const Episode*> train,
              SemanticReward* semantic, GeneratorPolicy policy, Optimizer optimizer, TrainerConfig config);

  int steps_per_epoch() const;
  int total_steps() const { return steps_per_epoch() * config_.epochs; }
  int step_index() const { return step_; }
  bool done() const { return step_ >= total_steps(); }

  StepDiagnostics step();

  const GeneratorPolicy& policy() const { return policy_; }
  const Optimizer& optimizer() const { return optimizer_; }

  /// Saves policy, optimizer and step index into `dir`.
  void save_checkpoint(const std::filesystem::path& dir) const;
  /// Restores state written by save_checkpoint.
  void load_checkpoint(const std::filesystem::path& dir);

 private:
  std::vector<std::size_t> epoch_order(int epoch) const;

  const World* world_;
  const ContextIndex* contexts_;
  std::vector<const Episode*> train_;
  SemanticReward* semantic_;
  GeneratorPolicy policy_;
  Optimizer optimizer_;
  TrainerConfig config_;
  int step_ = 0;
  int cached_epoch_ = -1;
  std::vector<std::size_t> order_;
  std::vector<bool> mask_;
};

/// Training log line: `step, objective, mean_lambda, gate_close_rate,
/// consistency_rate, judged_fraction, grad_norm` (NaN printed as `nan`).
std::string format_log_line(int step, const StepDiagnostics& d);
std::string log_header();

}  // namespace semrl
