#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "semrl/a2po.hpp"
#include "semrl/aggregator.hpp"
#include "semrl/evalkit.hpp"
#include "semrl/synthworld.hpp"

namespace semrl {

inline constexpr const char* kVersion = "semrl 1.0.0";

/// Where the semantic reward's aspect weights come from.
enum class WeightSource { kAggregator, kUniform, kLatent };

/// Every tunable of a run. Keys are `section.name`; the flat map form is what
/// config files and `--set` overrides address.
struct RunConfig {
  WorldParams world;

  // generator
  int embed_dim = 32;
  double init_scale = 0.1;

  // A2PO training
  TrainMode mode = TrainMode::kFull;
  int epochs = 8;
  int batch_size = 64;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double step_size = 0.01;
  int group_size = 16;
  double delta = 0.2;
  double beta_gen = 0.04;
  double p = 1.0;
  int refresh_interval = 1;
  int inner_epochs = 1;
  std::uint64_t seed = 1;
  double test_fraction = 0.2;
  std::uint64_t split_seed = 11;
  BusinessRewardConfig business{BusinessRewardConfig::Mode::kGraded, 0.3, 0.1};
  int eval_every = 0;        // epochs between held-out evaluations, 0 = final only
  int checkpoint_every = 0;  // steps between checkpoints, 0 = once per epoch

  FusionConfig fusion;

  // semantic judge
  WeightSource weights = WeightSource::kAggregator;
  std::string aggregator_path;  // empty: train one in-process

  // aggregator training
  int agg_max_level = 4;
  double agg_beta = 0.04;
  int agg_group_size = 8;
  double agg_step_size = 0.5;
  int agg_epochs = 32;
  int agg_batch_size = 64;
  int agg_intra_per_user = 4;
  int agg_behavioral_per_user = 1;
  std::uint64_t agg_seed = 3;
  double agg_holdout_fraction = 0.2;

  std::size_t enumeration_budget = 1u << 20;

  std::map<std::string, std::string> to_map() const;
  /// Applies `kv` on top of the defaults. Unknown keys throw Config naming the key.
  static RunConfig from_map(const std::map<std::string, std::string>& kv);
  void validate() const;
};

/// INI-style text: `[section]` headers, `key = value` lines, `#`/`;` comments.
/// Returns flattened `section.key` entries; duplicate keys are an error.
std::map<std::string, std::string> parse_config_text(const std::string& text, const std::string& origin = "config");
std::string format_config_text(const std::map<std::string, std::string>& kv);
/// `key=value` override, as given to `--set`.
std::pair<std::string, std::string> parse_override(const std::string& text);

/// Loads a config file (optional) and applies overrides in order.
RunConfig load_run_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides);

/// Generates and saves the world; returns it.
World generate_and_save_world(const RunConfig& config, const std::filesystem::path& dir);

/// Deterministic user-level split.
struct EpisodeSplit {
  std::vector<const Episode*> train;
  std::vector<const Episode*> test;
};
EpisodeSplit split_episodes(const World& world, double test_fraction, std::uint64_t seed);

struct AggregatorResult {
  AggregatorPolicy policy;
  double holdout_accuracy = 0.0;
  double reference_accuracy = 0.0;  // accuracy of the untrained (uniform) policy
  double argmax_match = 0.0;        // expected-weight argmax vs planted argmax, held-out users
  std::size_t train_pairs = 0;
  std::size_t holdout_pairs = 0;
};

/// Builds preference pairs, trains, and when `out_dir` is given writes
/// aggregator.txt, pairs.txt and logs/aggregator.log there.
AggregatorResult train_aggregator(const World& world, const RunConfig& config,
                                  const std::optional<std::filesystem::path>& out_dir);

struct TrainOptions {
  bool resume = false;
  int stop_after_steps = -1;  // simulate an interruption; -1 runs to completion
};

struct TrainResult {
  bool completed = false;
  int steps = 0;
  StratifiedReport report;
  double mean_consistency = std::numeric_limits<double>::quiet_NaN();
  double mean_judged_fraction = 0.0;
};

/// Full A2PO run into `run_dir` (manifest.txt, config.txt, checkpoints/, logs/,
/// reports/). With `resume`, continues from checkpoints/latest after checking
/// that the stored config matches; otherwise starts fresh.
TrainResult run_training(const World& world, const std::filesystem::path& world_dir, const RunConfig& config,
                         const std::filesystem::path& run_dir, const TrainOptions& options = {});

struct SweepRow {
  double p = 0.0;
  std::uint64_t seed = 0;
  double hr10 = 0.0;
  double ndcg10 = 0.0;
};

struct SweepSummary {
  std::vector<SweepRow> rows;      // one per (p, seed), p-major
  std::vector<SweepRow> baseline;  // business_only per seed
  bool p0_matches_baseline = true; // p = 0 rows reproduce business_only exactly
};

/// Paired full-mode runs over `p_values` x `seeds` plus a business_only
/// baseline per seed, under `out_dir/p_<p>/seed_<s>` and `out_dir/baseline/seed_<s>`.
/// Writes sweep.csv and sweep_summary.csv (p, mean HR@10, mean NDCG@10, fraction
/// of the p = 1 lift).
SweepSummary run_sweep_p(const World& world, const std::filesystem::path& world_dir, const RunConfig& config,
                         const std::vector<double>& p_values, const std::vector<std::uint64_t>& seeds,
                         const std::filesystem::path& out_dir);

/// Reads reports/report.csv from each run directory, writes a consolidated
/// table, and with a baseline run adds stratified lift tables. Throws
/// PartitionMismatch when runs were evaluated on different episodes.
void consolidate_reports(const std::vector<std::filesystem::path>& run_dirs,
                         const std::optional<std::filesystem::path>& baseline, const std::filesystem::path& out_dir);

}  // namespace semrl
