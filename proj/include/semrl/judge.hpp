#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <utility>
#include <vector>

#include "semrl/catalog.hpp"
#include "semrl/synthworld.hpp"

namespace semrl {

enum class Aspect { kProfile = 0, kFuture = 1, kNovelty = 2, kContext = 3 };

/// Discrete aspect evidence. Alphabets: profile {-1,-0.5,0,0.5,1},
/// future and novelty {0,0.5,1}, context {-1,0} or absent.
struct AspectScores {
  double profile = 0.0;
  double future = 0.0;
  double novelty = 0.0;
  std::optional<double> context;

  int dims() const { return context ? 4 : 3; }
  double operator[](int d) const;
  bool operator==(const AspectScores&) const = default;

  /// True when every present field lies in its alphabet.
  bool well_formed() const;
};

/// Maps v in [lo, hi] onto `levels` evenly spaced bins and returns the bin's
/// alphabet value; values outside the range clamp to the end bins.
double quantize(double v, double lo, double hi, std::span<const double> alphabet);

inline constexpr double kProfileAlphabet[] = {-1.0, -0.5, 0.0, 0.5, 1.0};
inline constexpr double kFutureAlphabet[] = {0.0, 0.5, 1.0};

class AspectScorer {
 public:
  virtual ~AspectScorer() = default;
  virtual AspectScores score(const UserContext& ctx, const Item& item) const = 0;
};

/// Rule-based stand-in for the aspect-scoring LLM.
class OracleScorer final : public AspectScorer {
 public:
  OracleScorer(const Catalog& catalog, const ContextRules& rules, InterestModel interest)
      : catalog_(&catalog), rules_(&rules), interest_(interest) {}

  AspectScores score(const UserContext& ctx, const Item& item) const override;

 private:
  const Catalog* catalog_;
  const ContextRules* rules_;
  InterestModel interest_;
};

AspectScores oracle_score(const UserContext& ctx, const Item& item, const Catalog& catalog, const ContextRules& rules,
                          const InterestModel& interest = {});

/// Point-wise aspect reward over aligned lists: per dimension, exact-match
/// rate plus order consistency over gold-discordant pairs (1 when there are
/// none), summed with unit dimension weights. Maximum is 2 * dims.
double aspect_reward(std::span<const AspectScores> predicted, std::span<const AspectScores> gold);

/// (preferred, other) indices into the prediction vector.
using IndexPair = std::pair<std::size_t, std::size_t>;

/// Fraction of pairs whose predicted order matches; predicted ties score 0.5.
double pair_auc(std::span<const double> predicted, std::span<const IndexPair> gold_order);

/// Per-dimension exact-match rate, macro-averaged.
double point_acc(std::span<const AspectScores> predicted, std::span<const AspectScores> gold);

struct JudgeQuality {
  double pair_auc = 0.0;
  double point_acc = 0.0;
};

/// Both quality metrics, per dimension then macro-averaged. PairAUC for a
/// dimension uses every sample pair with distinct gold scores; dimensions
/// without such pairs are skipped.
JudgeQuality judge_quality(std::span<const AspectScores> predicted, std::span<const AspectScores> gold);

/// Bernoulli(p) episode mask. Draws are u_i < p on one uniform per episode,
/// so masks for p < p' from the same seed are nested.
std::vector<bool> judged_subset(std::size_t n_episodes, double p, std::uint64_t seed);

/// Thread-safe memo of scorer outputs keyed by (user_id, item_id).
class JudgeCache {
 public:
  AspectScores get_or_score(const AspectScorer& scorer, const UserContext& ctx, const Item& item);

  std::uint64_t hits() const;
  std::uint64_t misses() const;
  std::size_t size() const;

  // Judged-scores file: `user_id, item_id, profile, future, novelty, context`
  // with `-` for an absent context score.
  void save(std::ostream& out) const;
  void load(std::istream& in);

 private:
  mutable std::shared_mutex mu_;
  std::map<std::pair<UserId, ItemId>, AspectScores> entries_;
  std::uint64_t hits_ = 0;
  std::uint64_t misses_ = 0;
};

}  // namespace semrl
