#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "semrl/catalog.hpp"
#include "semrl/genpolicy.hpp"
#include "semrl/synthworld.hpp"

namespace semrl {

struct RankedList {
  std::vector<ItemId> items;  // best first
  bool dedup = true;
  bool sampled = false;  // produced by the sampling fallback rather than enumeration
};

/// 1 iff target is among the first k items. Throws KTooLarge if k > length.
int hr_at_k(const RankedList& ranked, ItemId target, int k);
/// 1/log2(rank+1) for a 1-based rank <= k, else 0. Throws KTooLarge.
double ndcg_at_k(const RankedList& ranked, ItemId target, int k);

struct RankingConfig {
  std::size_t enumeration_budget = 1u << 20;  // max SIDs scored exhaustively
  bool allow_sampling_fallback = true;
  int fallback_samples = 4096;
  std::uint64_t seed = 0;
};

/// Top-k items by exact sequence log-probability, ties broken by ascending
/// item_id. Above the enumeration budget this either throws CatalogTooLarge or,
/// when allowed, ranks the distinct items of a sample by their log-probability
/// and sets `sampled`.
RankedList generate_ranked_list(const GeneratorPolicy& policy, std::span<const double> x, const Codebook& codebook,
                                int k_max, const RankingConfig& config = {});

inline constexpr std::array<int, 3> kCutoffs{3, 5, 10};

/// Per-level means of HR@K and NDCG@K for K in {3, 5, 10}.
struct StratifiedReport {
  std::array<std::size_t, kNoveltyLevels> counts{};
  std::array<std::array<double, kCutoffs.size()>, kNoveltyLevels> hr{};
  std::array<std::array<double, kCutoffs.size()>, kNoveltyLevels> ndcg{};
  std::uint64_t partition = 0;  // fingerprint of the evaluated episodes
  bool sampled = false;

  std::size_t total() const;
  /// Count-weighted mean over levels; index into kCutoffs.
  double overall_hr(std::size_t ki) const;
  double overall_ndcg(std::size_t ki) const;
  double hr_at(int level, int k) const;
  double ndcg_at(int level, int k) const;
};

std::size_t cutoff_index(int k);

/// Fingerprint over (user, target, level) of the episodes, order-sensitive.
std::uint64_t partition_fingerprint(std::span<const Episode* const> episodes);

/// Ranks the catalog for each episode and aggregates the metrics by novelty level.
StratifiedReport evaluate(const GeneratorPolicy& policy, const Codebook& codebook, const ContextIndex& contexts,
                          std::span<const Episode* const> episodes, const RankingConfig& config = {});

struct LiftTable {
  // [level][cutoff]; nullopt where the baseline metric is zero.
  std::array<std::array<std::optional<double>, kCutoffs.size()>, kNoveltyLevels> hr{};
  std::array<std::array<std::optional<double>, kCutoffs.size()>, kNoveltyLevels> ndcg{};
  std::array<std::optional<double>, kCutoffs.size()> overall_hr{};
  std::array<std::optional<double>, kCutoffs.size()> overall_ndcg{};
};

std::optional<double> relative_lift(double treatment, double baseline);

/// Relative lift per level and metric. Throws PartitionMismatch unless both
/// reports cover the same episodes.
LiftTable stratified_lift(const StratifiedReport& treatment, const StratifiedReport& baseline);

// Report emission. CSV rows: `level, metric, k, value` with level `all` for
// the overall row; a `count` metric row per level carries the sample counts.
void write_report_csv(std::ostream& out, const StratifiedReport& report);
StratifiedReport read_report_csv(std::istream& in);
std::string report_json(const StratifiedReport& report, const LiftTable* lift = nullptr);
// Plot tables: `level, metric, k, lift` rows.
void write_lift_table(std::ostream& out, const LiftTable& lift);

}  // namespace semrl
