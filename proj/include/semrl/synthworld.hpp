#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "semrl/catalog.hpp"

namespace semrl {

using UserId = std::int64_t;

struct UserContext {
  UserId user_id = 0;
  std::vector<double> profile_vector;
  std::vector<ItemId> history;  // most recent last
  std::optional<int> context_tag;
  std::vector<double> latent_weights;  // hidden ground truth, on the simplex
};

struct Episode {
  UserContext context;
  ItemId target_item = 0;
  int novelty_level = 0;
};

inline constexpr int kNoveltyLevels = 4;

/// Which roots each context tag tolerates. A world without tags has
/// n_tags() == 0 and the Context aspect is dropped downstream.
class ContextRules {
 public:
  ContextRules() = default;
  explicit ContextRules(std::vector<std::vector<bool>> allowed) : allowed_(std::move(allowed)) {}

  int n_tags() const { return static_cast<int>(allowed_.size()); }
  bool allows(int tag, int root) const {
    return allowed_.at(static_cast<std::size_t>(tag)).at(static_cast<std::size_t>(root));
  }
  const std::vector<std::vector<bool>>& table() const { return allowed_; }

 private:
  std::vector<std::vector<bool>> allowed_;
};

/// Shared definition of how a user's interests relate to an item. The
/// synthetic world plants targets with it and the oracle judge quantizes it.
struct InterestModel {
  int history_window = 5;      // last h history items feed the short-term vector
  double recency_decay = 0.7;  // weight of the k-th most recent item is decay^k

  /// Recency-weighted mean of the last `history_window` history features.
  std::vector<double> future_vector(std::span<const ItemId> history, const Catalog& catalog) const;
};

double cosine(std::span<const double> a, std::span<const double> b);

enum class LatentMode { kDirichlet, kSegmentOneHot };

struct WorldParams {
  std::uint64_t seed = 7;
  int n_users = 5000;
  int n_items = 512;
  int n_roots = 8;
  int n_subs_per_root = 8;
  int feature_dim = 16;
  int history_min = 4;
  int history_max = 10;
  int n_context_tags = 4;
  int sid_levels = 3;
  int sid_codebook_size = 8;

  // Item geometry: roots come in families of `root_family_size` sharing a
  // centroid; roots, subs and items are offsets of these scales.
  int root_family_size = 2;
  double family_spread = 0.6;
  double sub_spread = 0.6;
  double item_spread = 0.5;

  // User model.
  LatentMode latent_mode = LatentMode::kDirichlet;
  double dirichlet_alpha = 1.0;
  double history_temperature = 6.0;
  int recent_drift_items = 3;
  double drift_noise = 0.8;

  // Target planting. The target is drawn over the whole catalog with
  // probability proportional to exp(temperature * (utility + offset[level])),
  // where utility is the latent-weighted aspect value plus `business_affinity`
  // times a hidden per-item appeal that no semantic judge can see. The
  // per-level offsets are fitted so the expected level shares match level_mix.
  double target_temperature = 8.0;
  double business_affinity = 0.13;
  std::array<double, kNoveltyLevels> level_mix{0.25, 0.25, 0.25, 0.25};
  double min_level_fraction = 0.10;
  int quota_iterations = 100;

  InterestModel interest;

  /// Aspect dimension count: 4 with context tags, 3 without.
  int aspect_dims() const { return n_context_tags > 0 ? 4 : 3; }

  std::map<std::string, std::string> to_map() const;
  static WorldParams from_map(const std::map<std::string, std::string>& kv);
};

struct World {
  WorldParams params;
  Catalog catalog;
  Codebook codebook;
  ContextRules rules;
  std::vector<Episode> episodes;

  /// Persists catalog.txt, codebook.txt, users.txt, episodes.txt,
  /// context_rules.txt and manifest.txt under `dir`.
  void save(const std::filesystem::path& dir) const;
  static World load(const std::filesystem::path& dir);
};

/// Builds catalog, codebook and episodes from the seed. Throws
/// InfeasibleQuota when some novelty level cannot receive its share.
World generate_world(const WorldParams& params);

/// Novelty level of `target` relative to `history`: 0 re-consumption,
/// 1 seen sub-category, 2 seen root only, 3 unseen root.
int novelty_of(std::span<const ItemId> history, ItemId target, const Catalog& catalog);

struct BusinessRewardConfig {
  enum class Mode { kExact, kGraded };
  Mode mode = Mode::kExact;
  double graded_same_sub = 0.3;
  double graded_same_root = 0.1;

  void validate() const;
};

double business_reward(const BusinessRewardConfig& config, ItemId generated, ItemId target, const Catalog& catalog);

/// Fixed-size numeric view of a context used by both learned policies:
/// profile (F) | short-term vector (F) | history root histogram (R) | tag one-hot (n_tags).
struct FeatureSpec {
  std::size_t feature_dim = 0;
  int n_roots = 0;
  int n_tags = 0;
  InterestModel interest;

  static FeatureSpec for_world(const World& world);
  std::size_t size() const { return 2 * feature_dim + static_cast<std::size_t>(n_roots + n_tags); }
};

std::vector<double> context_features(const UserContext& ctx, const Catalog& catalog, const FeatureSpec& spec);

/// user_id -> (context, features) lookup over a world's episodes.
class ContextIndex {
 public:
  explicit ContextIndex(const World& world);

  const UserContext& context(UserId user) const { return entries_.at(slot(user)).first; }
  const std::vector<double>& features(UserId user) const { return entries_.at(slot(user)).second; }
  const FeatureSpec& spec() const { return spec_; }

 private:
  std::size_t slot(UserId user) const;

  FeatureSpec spec_;
  std::unordered_map<UserId, std::size_t> slots_;
  std::vector<std::pair<UserContext, std::vector<double>>> entries_;
};

// Episode file: `user_id, h_1 h_2 ... h_n, target, novelty_level, context_tag`
// with `-` for an absent tag.
void write_episodes(std::ostream& out, std::span<const Episode> episodes);
/// Profiles and latent weights are joined from the users file.
std::vector<Episode> read_episodes(std::istream& episodes_in, std::istream& users_in);
// Users file: `user_id, w_1 ... w_D, p_1 ... p_F`
void write_users(std::ostream& out, std::span<const Episode> episodes);

}  // namespace semrl
