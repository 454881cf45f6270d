#include "semrl/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "semrl/errors.hpp"
#include "semrl/rng.hpp"
#include "semrl/textio.hpp"

namespace semrl {

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(Errc::kDimensionMismatch, "cosine of vectors with different lengths");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

std::vector<double> InterestModel::future_vector(std::span<const ItemId> history, const Catalog& catalog) const {
  std::vector<double> out(catalog.feature_dim(), 0.0);
  const std::size_t n = history.size();
  const std::size_t window = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(history_window, 1)));
  double wsum = 0.0;
  double w = 1.0;
  for (std::size_t k = 0; k < window; ++k) {
    const Item& it = catalog.item(history[n - 1 - k]);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += w * it.feature_vector[j];
    wsum += w;
    w *= recency_decay;
  }
  if (wsum > 0)
    for (double& v : out) v /= wsum;
  return out;
}

int novelty_of(std::span<const ItemId> history, ItemId target, const Catalog& catalog) {
  const Item& t = catalog.item(target);
  bool same_sub = false;
  bool same_root = false;
  for (ItemId h : history) {
    if (h == target) return 0;
    const Item& it = catalog.item(h);
    if (it.root_category == t.root_category) {
      same_root = true;
      if (it.sub_category == t.sub_category) same_sub = true;
    }
  }
  if (same_sub) return 1;
  if (same_root) return 2;
  return 3;
}

void BusinessRewardConfig::validate() const {
  if (!(0.0 <= graded_same_root && graded_same_root <= graded_same_sub && graded_same_sub <= 1.0))
    throw Error(Errc::kConfig, "business reward needs 0 <= graded_same_root <= graded_same_sub <= 1");
}

double business_reward(const BusinessRewardConfig& config, ItemId generated, ItemId target, const Catalog& catalog) {
  if (generated == target) return 1.0;
  if (config.mode == BusinessRewardConfig::Mode::kExact) return 0.0;
  const Item& g = catalog.item(generated);
  const Item& t = catalog.item(target);
  if (g.root_category != t.root_category) return 0.0;
  return g.sub_category == t.sub_category ? config.graded_same_sub : config.graded_same_root;
}

FeatureSpec FeatureSpec::for_world(const World& world) {
  FeatureSpec s;
  s.feature_dim = world.catalog.feature_dim();
  s.n_roots = world.catalog.n_roots();
  s.n_tags = world.rules.n_tags();
  s.interest = world.params.interest;
  return s;
}

std::vector<double> context_features(const UserContext& ctx, const Catalog& catalog, const FeatureSpec& spec) {
  std::vector<double> x;
  x.reserve(spec.size());
  x.insert(x.end(), ctx.profile_vector.begin(), ctx.profile_vector.end());
  auto fv = spec.interest.future_vector(ctx.history, catalog);
  x.insert(x.end(), fv.begin(), fv.end());
  std::vector<double> hist(static_cast<std::size_t>(spec.n_roots), 0.0);
  for (ItemId h : ctx.history) hist[static_cast<std::size_t>(catalog.item(h).root_category)] += 1.0;
  if (!ctx.history.empty())
    for (double& v : hist) v /= static_cast<double>(ctx.history.size());
  x.insert(x.end(), hist.begin(), hist.end());
  for (int t = 0; t < spec.n_tags; ++t) x.push_back(ctx.context_tag && *ctx.context_tag == t ? 1.0 : 0.0);
  if (x.size() != spec.size()) throw Error(Errc::kDimensionMismatch, "context feature size mismatch");
  return x;
}

ContextIndex::ContextIndex(const World& world) : spec_(FeatureSpec::for_world(world)) {
  entries_.reserve(world.episodes.size());
  for (const Episode& e : world.episodes) {
    if (!slots_.emplace(e.context.user_id, entries_.size()).second)
      throw Error(Errc::kInvalidArgument, "user " + std::to_string(e.context.user_id) + " appears twice");
    entries_.emplace_back(e.context, context_features(e.context, world.catalog, spec_));
  }
}

std::size_t ContextIndex::slot(UserId user) const {
  auto it = slots_.find(user);
  if (it == slots_.end()) throw Error(Errc::kInvalidArgument, "unknown user " + std::to_string(user));
  return it->second;
}

namespace {

std::vector<double> random_unit(Rng& rng, std::size_t dim) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> v(dim);
  double n2 = 0;
  for (double& x : v) {
    x = nd(rng);
    n2 += x * x;
  }
  const double n = std::sqrt(n2);
  for (double& x : v) x /= n;
  return v;
}

std::vector<double> normalized(std::vector<double> v) {
  double n2 = 0;
  for (double x : v) n2 += x * x;
  const double n = std::sqrt(n2);
  if (n > 0)
    for (double& x : v) x /= n;
  return v;
}

std::vector<double> combine(std::span<const double> a, double wa, std::span<const double> b, double wb) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = wa * a[i] + wb * b[i];
  return out;
}

// Draws an index with probability proportional to exp(temperature * score).
std::size_t softmax_draw(std::span<const double> scores, double temperature, Rng& rng) {
  const double mx = *std::max_element(scores.begin(), scores.end());
  std::vector<double> cum(scores.size());
  double total = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    total += std::exp(temperature * (scores[i] - mx));
    cum[i] = total;
  }
  const double u = uniform01(rng) * total;
  auto it = std::upper_bound(cum.begin(), cum.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cum.begin()), scores.size() - 1);
}

std::vector<double> sample_dirichlet(Rng& rng, int dims, double alpha) {
  std::gamma_distribution<double> gd(alpha, 1.0);
  std::vector<double> w(static_cast<std::size_t>(dims));
  double s = 0;
  for (double& v : w) {
    v = gd(rng);
    s += v;
  }
  if (s <= 0) {
    std::fill(w.begin(), w.end(), 1.0 / dims);
    return w;
  }
  for (double& v : w) v /= s;
  return w;
}

void validate(const WorldParams& p) {
  if (p.n_users <= 0 || p.n_items <= 0 || p.n_roots <= 0 || p.n_subs_per_root <= 0 || p.feature_dim <= 0)
    throw Error(Errc::kInvalidArgument, "world sizes must be positive");
  if (p.history_min < 1 || p.history_max < p.history_min)
    throw Error(Errc::kInvalidArgument, "history length range must satisfy 1 <= min <= max");
  if (p.root_family_size < 1 || p.family_spread < 0 || p.quota_iterations < 1)
    throw Error(Errc::kInvalidArgument, "root_family_size and quota_iterations must be >= 1, family_spread >= 0");
  if (p.n_context_tags < 0) throw Error(Errc::kInvalidArgument, "n_context_tags must be >= 0");
  double mix = 0;
  for (double f : p.level_mix) {
    if (f < p.min_level_fraction)
      throw Error(Errc::kInfeasibleQuota, "level mix assigns less than the minimum fraction to some level");
    mix += f;
  }
  if (std::abs(mix - 1.0) > 1e-9) throw Error(Errc::kInvalidArgument, "level_mix must sum to 1");
  if (p.n_roots > p.sid_codebook_size || p.n_subs_per_root > p.sid_codebook_size)
    throw Error(Errc::kCapacityExceeded, "category counts exceed the SID codebook size");
}

}  // namespace

World generate_world(const WorldParams& p) {
  validate(p);
  const std::size_t F = static_cast<std::size_t>(p.feature_dim);
  const int D = p.aspect_dims();

  // --- catalog ---
  Rng geo = make_rng(p.seed, {1});
  std::vector<std::vector<double>> root_centroid;
  {
    std::vector<double> family;
    for (int r = 0; r < p.n_roots; ++r) {
      if (r % p.root_family_size == 0) family = random_unit(geo, F);
      root_centroid.push_back(normalized(combine(family, 1.0, random_unit(geo, F), p.family_spread)));
    }
  }
  std::vector<std::vector<std::vector<double>>> sub_centroid(static_cast<std::size_t>(p.n_roots));
  for (int r = 0; r < p.n_roots; ++r)
    for (int s = 0; s < p.n_subs_per_root; ++s)
      sub_centroid[static_cast<std::size_t>(r)].push_back(
          normalized(combine(root_centroid[static_cast<std::size_t>(r)], 1.0, random_unit(geo, F), p.sub_spread)));

  const int buckets = p.n_roots * p.n_subs_per_root;
  std::vector<Item> items;
  items.reserve(static_cast<std::size_t>(p.n_items));
  for (int i = 0; i < p.n_items; ++i) {
    Item it;
    it.item_id = i;
    it.root_category = (i % buckets) / p.n_subs_per_root;
    it.sub_category = (i % buckets) % p.n_subs_per_root;
    const auto& c = sub_centroid[static_cast<std::size_t>(it.root_category)][static_cast<std::size_t>(it.sub_category)];
    it.feature_vector = normalized(combine(c, 1.0, random_unit(geo, F), p.item_spread));
    items.push_back(std::move(it));
  }
  assign_residuals(items);
  Catalog catalog(std::move(items), p.n_roots, std::vector<int>(static_cast<std::size_t>(p.n_roots), p.n_subs_per_root));
  Codebook codebook = Codebook::assign(catalog, p.sid_levels, p.sid_codebook_size);

  // Hidden business-side appeal of each item.
  Rng appeal_rng = make_rng(p.seed, {2});
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> appeal(catalog.size());
  for (double& a : appeal) a = nd(appeal_rng);

  // --- context rules ---
  std::vector<std::vector<bool>> allowed;
  Rng ctx_rng = make_rng(p.seed, {3});
  for (int t = 0; t < p.n_context_tags; ++t) {
    std::vector<bool> row(static_cast<std::size_t>(p.n_roots));
    int n_ok = 0;
    for (int r = 0; r < p.n_roots; ++r) {
      row[static_cast<std::size_t>(r)] = uniform01(ctx_rng) >= 0.25;
      n_ok += row[static_cast<std::size_t>(r)] ? 1 : 0;
    }
    if (n_ok == 0) row[static_cast<std::size_t>(t % p.n_roots)] = true;
    allowed.push_back(std::move(row));
  }
  ContextRules rules(std::move(allowed));

  // --- users and histories ---
  struct Draft {
    UserContext ctx;
    std::vector<int> level;      // per item
    std::vector<double> score;   // per item, utility plus appeal
    std::array<double, kNoveltyLevels> mass{};  // sum of exp(temperature * (score - top)) per level
  };
  std::vector<Draft> drafts(static_cast<std::size_t>(p.n_users));
  const auto all_items = catalog.items();
  const double tau = p.target_temperature;
  for (int u = 0; u < p.n_users; ++u) {
    Draft& dr = drafts[static_cast<std::size_t>(u)];
    Rng urng = make_rng(p.seed, {5, static_cast<std::uint64_t>(u)});
    UserContext& ctx = dr.ctx;
    ctx.user_id = u;
    const auto R = static_cast<std::uint64_t>(p.n_roots);
    const int home = static_cast<int>(urng() % R);
    // A root the user is drifting towards but has not consumed yet.
    int emerging = -1;
    if (p.n_roots > 1) {
      emerging = static_cast<int>(urng() % (R - 1));
      if (emerging >= home) ++emerging;
    }
    int second = static_cast<int>(urng() % R);
    if (second == emerging) second = home;
    ctx.profile_vector = normalized(combine(
        combine(root_centroid[static_cast<std::size_t>(home)], 1.0, root_centroid[static_cast<std::size_t>(second)], 0.5),
        1.0, random_unit(urng, F), 0.3));
    if (p.latent_mode == LatentMode::kSegmentOneHot) {
      ctx.latent_weights.assign(static_cast<std::size_t>(D), 0.0);
      ctx.latent_weights[static_cast<std::size_t>(home % D)] = 1.0;
    } else {
      ctx.latent_weights = sample_dirichlet(urng, D, p.dirichlet_alpha);
    }
    if (p.n_context_tags > 0)
      ctx.context_tag = static_cast<int>(urng() % static_cast<std::uint64_t>(p.n_context_tags));

    Rng hrng = make_rng(p.seed, {6, static_cast<std::uint64_t>(u)});
    const int len = p.history_min + static_cast<int>(hrng() % static_cast<std::uint64_t>(p.history_max - p.history_min + 1));
    const int recent = std::min(p.recent_drift_items, len - 1);
    std::unordered_set<ItemId> used;
    auto draw_near = [&](std::span<const double> dir) {
      std::vector<double> score;
      std::vector<ItemId> ids;
      for (const Item& it : all_items) {
        if (used.count(it.item_id) || it.root_category == emerging) continue;
        score.push_back(cosine(dir, it.feature_vector));
        ids.push_back(it.item_id);
      }
      if (ids.empty()) return;
      const ItemId pick = ids[softmax_draw(score, p.history_temperature, hrng)];
      used.insert(pick);
      ctx.history.push_back(pick);
    };
    for (int k = 0; k < len - recent; ++k) draw_near(ctx.profile_vector);
    const auto& pull = emerging >= 0 ? root_centroid[static_cast<std::size_t>(emerging)] : ctx.profile_vector;
    const auto drift = normalized(combine(pull, 1.0, random_unit(hrng, F), p.drift_noise));
    for (int k = 0; k < recent; ++k) draw_near(drift);

    std::set<int> seen_roots;
    std::set<std::pair<int, int>> seen_subs;
    for (ItemId h : ctx.history) {
      const Item& it = catalog.item(h);
      seen_roots.insert(it.root_category);
      seen_subs.insert({it.root_category, it.sub_category});
    }
    const auto fv = p.interest.future_vector(ctx.history, catalog);
    dr.level.resize(catalog.size());
    dr.score.resize(catalog.size());
    for (std::size_t i = 0; i < catalog.size(); ++i) {
      const Item& it = all_items[i];
      int lv = 3;
      if (used.count(it.item_id)) lv = 0;
      else if (seen_subs.count({it.root_category, it.sub_category})) lv = 1;
      else if (seen_roots.count(it.root_category)) lv = 2;
      const double prof = cosine(ctx.profile_vector, it.feature_vector);
      const double fut = std::max(0.0, cosine(fv, it.feature_vector));
      const double nov_factor = lv >= 2 ? 1.0 : 0.0;
      double v = ctx.latent_weights[0] * prof + ctx.latent_weights[1] * fut + ctx.latent_weights[2] * fut * nov_factor;
      if (D == 4 && !rules.allows(*ctx.context_tag, it.root_category)) v -= ctx.latent_weights[3];
      dr.level[i] = lv;
      dr.score[i] = v + p.business_affinity * appeal[i];
    }
    const double top = *std::max_element(dr.score.begin(), dr.score.end());
    for (std::size_t i = 0; i < catalog.size(); ++i)
      dr.mass[static_cast<std::size_t>(dr.level[i])] += std::exp(tau * (dr.score[i] - top));
  }

  // --- per-level offsets so the expected level shares match level_mix ---
  std::array<double, kNoveltyLevels> offset{};
  for (int l = 0; l < kNoveltyLevels; ++l) {
    bool any = false;
    for (const Draft& dr : drafts) any = any || dr.mass[static_cast<std::size_t>(l)] > 0.0;
    if (!any)
      throw Error(Errc::kInfeasibleQuota, "no user has a level-" + std::to_string(l) + " candidate with this catalog shape");
  }
  for (int iter = 0; iter < p.quota_iterations; ++iter) {
    std::array<double, kNoveltyLevels> share{};
    for (const Draft& dr : drafts) {
      std::array<double, kNoveltyLevels> q{};
      double z = 0;
      for (std::size_t l = 0; l < kNoveltyLevels; ++l) z += q[l] = std::exp(tau * offset[l]) * dr.mass[l];
      for (std::size_t l = 0; l < kNoveltyLevels; ++l) share[l] += q[l] / z;
    }
    for (std::size_t l = 0; l < kNoveltyLevels; ++l)
      offset[l] += std::log(p.level_mix[l] * p.n_users / share[l]) / tau;
    for (std::size_t l = kNoveltyLevels; l-- > 0;) offset[l] -= offset[0];
  }

  std::vector<Episode> episodes;
  episodes.reserve(static_cast<std::size_t>(p.n_users));
  std::array<std::size_t, kNoveltyLevels> counts{};
  for (int u = 0; u < p.n_users; ++u) {
    Draft& dr = drafts[static_cast<std::size_t>(u)];
    Rng trng = make_rng(p.seed, {4, static_cast<std::uint64_t>(u)});
    std::vector<double> s(dr.score);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] += offset[static_cast<std::size_t>(dr.level[i])];
    const std::size_t pick = softmax_draw(s, tau, trng);
    Episode ep;
    ep.context = std::move(dr.ctx);
    ep.target_item = all_items[pick].item_id;
    ep.novelty_level = novelty_of(ep.context.history, ep.target_item, catalog);
    ++counts[static_cast<std::size_t>(ep.novelty_level)];
    episodes.push_back(std::move(ep));
  }
  for (int l = 0; l < kNoveltyLevels; ++l)
    if (static_cast<double>(counts[static_cast<std::size_t>(l)]) < p.min_level_fraction * p.n_users)
      throw Error(Errc::kInfeasibleQuota, "level " + std::to_string(l) + " received " +
                                              std::to_string(counts[static_cast<std::size_t>(l)]) + " of " +
                                              std::to_string(p.n_users) + " episodes");

  World w;
  w.params = p;
  w.catalog = std::move(catalog);
  w.codebook = std::move(codebook);
  w.rules = std::move(rules);
  w.episodes = std::move(episodes);
  return w;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

std::string join_doubles(std::span<const double> v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + textio::format_double(v[i]);
  return s;
}

std::vector<double> parse_doubles(std::string_view field) {
  std::vector<double> out;
  for (auto tok : textio::split(field, ' '))
    if (!tok.empty()) out.push_back(textio::parse_double(tok));
  return out;
}

}  // namespace

void write_episodes(std::ostream& out, std::span<const Episode> episodes) {
  for (const Episode& e : episodes) {
    out << e.context.user_id << ", ";
    for (std::size_t i = 0; i < e.context.history.size(); ++i) out << (i ? " " : "") << e.context.history[i];
    out << ", " << e.target_item << ", " << e.novelty_level << ", ";
    if (e.context.context_tag) out << *e.context.context_tag;
    else out << "-";
    out << "\n";
  }
}

void write_users(std::ostream& out, std::span<const Episode> episodes) {
  for (const Episode& e : episodes)
    out << e.context.user_id << ", " << join_doubles(e.context.latent_weights) << ", "
        << join_doubles(e.context.profile_vector) << "\n";
}

std::vector<Episode> read_episodes(std::istream& episodes_in, std::istream& users_in) {
  std::unordered_map<UserId, std::pair<std::vector<double>, std::vector<double>>> users;
  std::string line;
  while (std::getline(users_in, line)) {
    if (textio::trim(line).empty()) continue;
    auto f = textio::split(line, ',');
    if (f.size() != 3) throw Error(Errc::kParse, "users line needs 3 fields: " + line);
    users[textio::parse_int(f[0])] = {parse_doubles(f[1]), parse_doubles(f[2])};
  }
  std::vector<Episode> out;
  while (std::getline(episodes_in, line)) {
    if (textio::trim(line).empty()) continue;
    auto f = textio::split(line, ',');
    if (f.size() != 5) throw Error(Errc::kParse, "episode line needs 5 fields: " + line);
    Episode e;
    e.context.user_id = textio::parse_int(f[0]);
    for (auto tok : textio::split(f[1], ' '))
      if (!tok.empty()) e.context.history.push_back(textio::parse_int(tok));
    e.target_item = textio::parse_int(f[2]);
    e.novelty_level = static_cast<int>(textio::parse_int(f[3]));
    if (f[4] != "-") e.context.context_tag = static_cast<int>(textio::parse_int(f[4]));
    auto it = users.find(e.context.user_id);
    if (it == users.end()) throw Error(Errc::kParse, "episode references unknown user " + std::string(f[0]));
    e.context.latent_weights = it->second.first;
    e.context.profile_vector = it->second.second;
    out.push_back(std::move(e));
  }
  return out;
}

std::map<std::string, std::string> WorldParams::to_map() const {
  std::map<std::string, std::string> kv;
  auto d = textio::format_double;
  kv["seed"] = std::to_string(seed);
  kv["n_users"] = std::to_string(n_users);
  kv["n_items"] = std::to_string(n_items);
  kv["n_roots"] = std::to_string(n_roots);
  kv["n_subs_per_root"] = std::to_string(n_subs_per_root);
  kv["feature_dim"] = std::to_string(feature_dim);
  kv["history_min"] = std::to_string(history_min);
  kv["history_max"] = std::to_string(history_max);
  kv["n_context_tags"] = std::to_string(n_context_tags);
  kv["sid_levels"] = std::to_string(sid_levels);
  kv["sid_codebook_size"] = std::to_string(sid_codebook_size);
  kv["sub_spread"] = d(sub_spread);
  kv["item_spread"] = d(item_spread);
  kv["latent_mode"] = latent_mode == LatentMode::kSegmentOneHot ? "segment_one_hot" : "dirichlet";
  kv["dirichlet_alpha"] = d(dirichlet_alpha);
  kv["history_temperature"] = d(history_temperature);
  kv["recent_drift_items"] = std::to_string(recent_drift_items);
  kv["drift_noise"] = d(drift_noise);
  kv["target_temperature"] = d(target_temperature);
  kv["business_affinity"] = d(business_affinity);
  std::string mix;
  for (std::size_t i = 0; i < level_mix.size(); ++i) mix += (i ? " " : "") + d(level_mix[i]);
  kv["level_mix"] = mix;
  kv["min_level_fraction"] = d(min_level_fraction);
  kv["quota_iterations"] = std::to_string(quota_iterations);
  kv["root_family_size"] = std::to_string(root_family_size);
  kv["family_spread"] = d(family_spread);
  kv["history_window"] = std::to_string(interest.history_window);
  kv["recency_decay"] = d(interest.recency_decay);
  return kv;
}

WorldParams WorldParams::from_map(const std::map<std::string, std::string>& kv) {
  WorldParams p;
  for (const auto& [key, value] : kv) {
    auto i = [&] { return static_cast<int>(textio::parse_int(value)); };
    auto d = [&] { return textio::parse_double(value); };
    if (key == "seed") p.seed = static_cast<std::uint64_t>(textio::parse_int(value));
    else if (key == "n_users") p.n_users = i();
    else if (key == "n_items") p.n_items = i();
    else if (key == "n_roots") p.n_roots = i();
    else if (key == "n_subs_per_root") p.n_subs_per_root = i();
    else if (key == "feature_dim") p.feature_dim = i();
    else if (key == "history_min") p.history_min = i();
    else if (key == "history_max") p.history_max = i();
    else if (key == "n_context_tags") p.n_context_tags = i();
    else if (key == "sid_levels") p.sid_levels = i();
    else if (key == "sid_codebook_size") p.sid_codebook_size = i();
    else if (key == "sub_spread") p.sub_spread = d();
    else if (key == "item_spread") p.item_spread = d();
    else if (key == "latent_mode") {
      if (value == "segment_one_hot") p.latent_mode = LatentMode::kSegmentOneHot;
      else if (value == "dirichlet") p.latent_mode = LatentMode::kDirichlet;
      else throw Error(Errc::kConfig, "latent_mode must be dirichlet or segment_one_hot, got '" + value + "'");
    } else if (key == "dirichlet_alpha") p.dirichlet_alpha = d();
    else if (key == "history_temperature") p.history_temperature = d();
    else if (key == "recent_drift_items") p.recent_drift_items = i();
    else if (key == "drift_noise") p.drift_noise = d();
    else if (key == "target_temperature") p.target_temperature = d();
    else if (key == "business_affinity") p.business_affinity = d();
    else if (key == "level_mix") {
      auto v = parse_doubles(value);
      if (v.size() != kNoveltyLevels) throw Error(Errc::kConfig, "level_mix needs 4 values");
      std::copy(v.begin(), v.end(), p.level_mix.begin());
    } else if (key == "min_level_fraction") p.min_level_fraction = d();
    else if (key == "quota_iterations") p.quota_iterations = i();
    else if (key == "root_family_size") p.root_family_size = i();
    else if (key == "family_spread") p.family_spread = d();
    else if (key == "history_window") p.interest.history_window = i();
    else if (key == "recency_decay") p.interest.recency_decay = d();
    else throw Error(Errc::kConfig, "unknown world parameter '" + key + "'");
  }
  return p;
}

void World::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ostringstream cat, cb, users, eps, rules_out, manifest;
  catalog.write(cat);
  codebook.write(cb);
  write_users(users, episodes);
  write_episodes(eps, episodes);
  for (int t = 0; t < rules.n_tags(); ++t) {
    rules_out << t << ",";
    for (int r = 0; r < catalog.n_roots(); ++r)
      if (rules.allows(t, r)) rules_out << ' ' << r;
    rules_out << "\n";
  }
  textio::write_file(dir / "catalog.txt", cat.str());
  textio::write_file(dir / "codebook.txt", cb.str());
  textio::write_file(dir / "users.txt", users.str());
  textio::write_file(dir / "episodes.txt", eps.str());
  textio::write_file(dir / "context_rules.txt", rules_out.str());
  manifest << "# semrl world manifest v1\n";
  for (const auto& [k, v] : params.to_map()) manifest << k << " = " << v << "\n";
  manifest << "hash.catalog = " << textio::hex64(textio::fnv1a(cat.str())) << "\n";
  manifest << "hash.episodes = " << textio::hex64(textio::fnv1a(eps.str())) << "\n";
  textio::write_file(dir / "manifest.txt", manifest.str());
}

World World::load(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "manifest.txt"))
    throw Error(Errc::kMissingWorld, "no world manifest under " + dir.string());
  std::map<std::string, std::string> kv;
  {
    std::istringstream in(textio::read_file(dir / "manifest.txt"));
    std::string line;
    while (std::getline(in, line)) {
      if (textio::trim(line).empty() || line[0] == '#') continue;
      auto eq = line.find('=');
      if (eq == std::string::npos) throw Error(Errc::kParse, "bad manifest line: " + line);
      auto key = std::string(textio::trim(std::string_view(line).substr(0, eq)));
      if (key.rfind("hash.", 0) == 0) continue;
      kv[key] = std::string(textio::trim(std::string_view(line).substr(eq + 1)));
    }
  }
  World w;
  w.params = WorldParams::from_map(kv);
  {
    std::istringstream in(textio::read_file(dir / "catalog.txt"));
    w.catalog = Catalog::read(in);
  }
  {
    std::istringstream in(textio::read_file(dir / "codebook.txt"));
    w.codebook = Codebook::read(in);
  }
  {
    std::istringstream in(textio::read_file(dir / "context_rules.txt"));
    std::vector<std::vector<bool>> allowed;
    std::string line;
    while (std::getline(in, line)) {
      if (textio::trim(line).empty()) continue;
      auto f = textio::split(line, ',');
      if (f.size() != 2) throw Error(Errc::kParse, "bad context rule line: " + line);
      std::vector<bool> row(static_cast<std::size_t>(w.catalog.n_roots()), false);
      for (auto tok : textio::split(f[1], ' '))
        if (!tok.empty()) row.at(static_cast<std::size_t>(textio::parse_int(tok))) = true;
      allowed.push_back(std::move(row));
    }
    w.rules = ContextRules(std::move(allowed));
  }
  {
    std::istringstream eps(textio::read_file(dir / "episodes.txt"));
    std::istringstream users(textio::read_file(dir / "users.txt"));
    w.episodes = read_episodes(eps, users);
  }
  return w;
}

}  // namespace semrl
