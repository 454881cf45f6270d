#include "semrl/aggregator.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "semrl/errors.hpp"
#include "semrl/fusion.hpp"
#include "semrl/rng.hpp"
#include "semrl/textio.hpp"

namespace semrl {

WeightVector normalize_levels(const WeightLevels& z) {
  WeightVector out;
  out.w.assign(z.levels.size(), 0.0);
  if (z.levels.empty()) return out;
  double sum = 0.0;
  for (int l : z.levels) {
    if (l < 0) throw Error(Errc::kInvalidArgument, "importance levels must be non-negative");
    sum += l;
  }
  if (sum == 0.0) {
    std::fill(out.w.begin(), out.w.end(), 1.0 / static_cast<double>(z.levels.size()));
    return out;
  }
  for (std::size_t d = 0; d < z.levels.size(); ++d) out.w[d] = z.levels[d] / sum;
  return out;
}

double holistic_score(const WeightVector& w, const AspectScores& s) {
  if (static_cast<int>(w.w.size()) != s.dims())
    throw Error(Errc::kDimensionMismatch, "weight vector has " + std::to_string(w.w.size()) + " entries but scores have " +
                                              std::to_string(s.dims()));
  double out = 0.0;
  for (int d = 0; d < s.dims(); ++d) out += w.w[static_cast<std::size_t>(d)] * s[d];
  return out;
}

int pairwise_reward(double holistic_winner, double holistic_loser) { return holistic_winner > holistic_loser ? 1 : 0; }

void write_pairs(std::ostream& out, std::span<const PreferencePair> pairs) {
  for (const auto& p : pairs)
    out << p.user << ", " << p.winner << ", " << p.loser << ", "
        << (p.source == PairSource::kIntra ? "intra" : "behavioral") << "\n";
}

std::vector<PreferencePair> read_pairs(std::istream& in) {
  std::vector<PreferencePair> out;
  std::string line;
  while (std::getline(in, line)) {
    if (textio::trim(line).empty()) continue;
    auto f = textio::split(line, ',');
    if (f.size() != 4) throw Error(Errc::kParse, "preference line needs 4 fields: " + line);
    PreferencePair p;
    p.user = textio::parse_int(f[0]);
    p.winner = textio::parse_int(f[1]);
    p.loser = textio::parse_int(f[2]);
    if (f[3] == "intra") p.source = PairSource::kIntra;
    else if (f[3] == "behavioral") p.source = PairSource::kBehavioral;
    else throw Error(Errc::kParse, "unknown pair source: " + std::string(f[3]));
    if (p.winner == p.loser) throw Error(Errc::kParse, "winner equals loser: " + line);
    out.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------

AggregatorPolicy::AggregatorPolicy(int dims, int max_level, std::size_t input_dim)
    : dims_(dims), max_level_(max_level), input_dim_(input_dim) {
  if (dims < 1 || max_level < 1) throw Error(Errc::kInvalidArgument, "aggregator needs dims >= 1 and K >= 1");
  params_.assign(static_cast<std::size_t>(dims * n_levels()) * (input_dim + 1), 0.0);
  reference_ = params_;
}

std::size_t AggregatorPolicy::weight_index(int d, int k, std::size_t j) const {
  return static_cast<std::size_t>(d * n_levels() + k) * (input_dim_ + 1) + j;
}

std::size_t AggregatorPolicy::bias_index(int d, int k) const { return weight_index(d, k, input_dim_); }

std::vector<double> AggregatorPolicy::logits(std::span<const double> params, std::span<const double> x) const {
  if (x.size() != input_dim_) throw Error(Errc::kDimensionMismatch, "aggregator input has wrong dimension");
  std::vector<double> out(static_cast<std::size_t>(dims_ * n_levels()));
  for (int d = 0; d < dims_; ++d)
    for (int k = 0; k < n_levels(); ++k) {
      double v = params[bias_index(d, k)];
      const double* w = &params[weight_index(d, k, 0)];
      for (std::size_t j = 0; j < input_dim_; ++j) v += w[j] * x[j];
      out[static_cast<std::size_t>(d * n_levels() + k)] = v;
    }
  return out;
}

std::vector<double> AggregatorPolicy::probs(std::span<const double> x, bool reference) const {
  auto l = logits(reference ? std::span<const double>(reference_) : std::span<const double>(params_), x);
  const int L = n_levels();
  for (int d = 0; d < dims_; ++d) {
    double* row = &l[static_cast<std::size_t>(d * L)];
    const double mx = *std::max_element(row, row + L);
    double z = 0.0;
    for (int k = 0; k < L; ++k) z += (row[k] = std::exp(row[k] - mx));
    for (int k = 0; k < L; ++k) row[k] /= z;
  }
  return l;
}

WeightLevels AggregatorPolicy::sample(std::span<const double> x, std::uint64_t seed) const {
  const auto p = probs(x);
  Rng rng(seed);
  WeightLevels z;
  const int L = n_levels();
  for (int d = 0; d < dims_; ++d) {
    const double u = uniform01(rng);
    double acc = 0.0;
    int pick = L - 1;
    for (int k = 0; k < L; ++k) {
      acc += p[static_cast<std::size_t>(d * L + k)];
      if (u < acc) {
        pick = k;
        break;
      }
    }
    z.levels.push_back(pick);
  }
  return z;
}

double AggregatorPolicy::log_prob(std::span<const double> x, const WeightLevels& z) const {
  if (static_cast<int>(z.levels.size()) != dims_) throw Error(Errc::kDimensionMismatch, "level vector size");
  const auto p = probs(x);
  double lp = 0.0;
  for (int d = 0; d < dims_; ++d) lp += std::log(p[static_cast<std::size_t>(d * n_levels() + z.levels[static_cast<std::size_t>(d)])]);
  return lp;
}

double AggregatorPolicy::kl(std::span<const double> x) const {
  const auto p = probs(x);
  const auto q = probs(x, true);
  double out = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0) out += p[i] * (std::log(p[i]) - std::log(q[i]));
  return std::max(out, 0.0);
}

WeightVector AggregatorPolicy::expected_weights(std::span<const double> x) const {
  const auto p = probs(x);
  const int L = n_levels();
  WeightVector out;
  out.w.assign(static_cast<std::size_t>(dims_), 0.0);
  WeightLevels z;
  z.levels.assign(static_cast<std::size_t>(dims_), 0);
  // odometer over all level vectors
  while (true) {
    double pz = 1.0;
    for (int d = 0; d < dims_; ++d) pz *= p[static_cast<std::size_t>(d * L + z.levels[static_cast<std::size_t>(d)])];
    const auto w = normalize_levels(z);
    for (int d = 0; d < dims_; ++d) out.w[static_cast<std::size_t>(d)] += pz * w.w[static_cast<std::size_t>(d)];
    int d = 0;
    while (d < dims_ && ++z.levels[static_cast<std::size_t>(d)] == L) z.levels[static_cast<std::size_t>(d++)] = 0;
    if (d == dims_) break;
  }
  return out;
}

void AggregatorPolicy::save(std::ostream& out) const {
  out << "semrl-aggregator v1\n";
  out << "dims " << dims_ << "\n";
  out << "max_level " << max_level_ << "\n";
  out << "input_dim " << input_dim_ << "\n";
  for (const auto& [name, v] : {std::pair{"params", &params_}, std::pair{"reference", &reference_}}) {
    out << name << " " << v->size() << "\n";
    for (std::size_t i = 0; i < v->size(); ++i) out << textio::format_double((*v)[i]) << ((i + 1) % 8 ? ' ' : '\n');
    if (v->size() % 8) out << "\n";
  }
}

AggregatorPolicy AggregatorPolicy::load(std::istream& in) {
  std::string tok;
  in >> tok;
  std::string ver;
  in >> ver;
  if (tok != "semrl-aggregator" || ver != "v1") throw Error(Errc::kParse, "unsupported aggregator checkpoint");
  auto expect = [&](const char* key) -> std::int64_t {
    std::string k, v;
    in >> k >> v;
    if (k != key) throw Error(Errc::kParse, std::string("expected '") + key + "' in aggregator checkpoint");
    return textio::parse_int(v);
  };
  const int dims = static_cast<int>(expect("dims"));
  const int max_level = static_cast<int>(expect("max_level"));
  const auto input_dim = static_cast<std::size_t>(expect("input_dim"));
  AggregatorPolicy p(dims, max_level, input_dim);
  for (auto* v : {&p.params_, &p.reference_}) {
    std::string name, count;
    in >> name >> count;
    if (static_cast<std::size_t>(textio::parse_int(count)) != v->size())
      throw Error(Errc::kParse, "aggregator parameter count mismatch");
    for (double& x : *v) {
      in >> tok;
      x = textio::parse_double(tok);
    }
  }
  if (!in) throw Error(Errc::kParse, "aggregator checkpoint truncated");
  return p;
}

// ---------------------------------------------------------------------------

double aggregator_objective(const AggregatorPolicy& policy, std::span<const AggregatorGroup> groups, double beta,
                            std::span<double> grad) {
  if (groups.empty()) throw Error(Errc::kEmptyDataset, "aggregator objective over an empty batch");
  const bool want_grad = !grad.empty();
  if (want_grad) {
    if (grad.size() != policy.num_params()) throw Error(Errc::kDimensionMismatch, "gradient buffer size");
    std::fill(grad.begin(), grad.end(), 0.0);
  }
  const int D = policy.dims();
  const int L = policy.n_levels();
  const std::size_t n = policy.input_dim();
  const double inv_b = 1.0 / static_cast<double>(groups.size());
  double total = 0.0;
  std::vector<double> dlogit(static_cast<std::size_t>(D * L));
  for (const auto& g : groups) {
    if (g.actions.size() != g.advantages.size() || g.actions.empty())
      throw Error(Errc::kLengthMismatch, "group actions and advantages differ in size");
    const auto p = policy.probs(g.features);
    const auto q = policy.probs(g.features, true);
    const double inv_g = 1.0 / static_cast<double>(g.actions.size());
    double term = 0.0;
    std::fill(dlogit.begin(), dlogit.end(), 0.0);
    for (std::size_t s = 0; s < g.actions.size(); ++s) {
      const double a = g.advantages[s];
      for (int d = 0; d < D; ++d) {
        const int k = g.actions[s].levels[static_cast<std::size_t>(d)];
        term += inv_g * a * std::log(p[static_cast<std::size_t>(d * L + k)]);
        if (want_grad && a != 0.0)
          for (int j = 0; j < L; ++j)
            dlogit[static_cast<std::size_t>(d * L + j)] += inv_g * a * ((j == k) - p[static_cast<std::size_t>(d * L + j)]);
      }
    }
    for (int d = 0; d < D; ++d) {
      double kl_d = 0.0;
      for (int k = 0; k < L; ++k) {
        const auto i = static_cast<std::size_t>(d * L + k);
        kl_d += p[i] * (std::log(p[i]) - std::log(q[i]));
      }
      term -= beta * kl_d;
      if (want_grad && beta != 0.0)
        for (int k = 0; k < L; ++k) {
          const auto i = static_cast<std::size_t>(d * L + k);
          dlogit[i] -= beta * p[i] * (std::log(p[i]) - std::log(q[i]) - kl_d);
        }
    }
    total += inv_b * term;
    if (want_grad) {
      for (int d = 0; d < D; ++d)
        for (int k = 0; k < L; ++k) {
          const double gl = inv_b * dlogit[static_cast<std::size_t>(d * L + k)];
          if (gl == 0.0) continue;
          const std::size_t base = static_cast<std::size_t>(d * L + k) * (n + 1);
          for (std::size_t j = 0; j < n; ++j) grad[base + j] += gl * g.features[j];
          grad[base + n] += gl;
        }
    }
  }
  return total;
}

namespace {

AspectScores judged(const AspectScorer& scorer, JudgeCache* cache, const UserContext& ctx, const Item& item) {
  return cache ? cache->get_or_score(scorer, ctx, item) : scorer.score(ctx, item);
}

}  // namespace

AggregatorDiagnostics aggregator_train_step(AggregatorPolicy& policy, std::span<const PreferencePair> batch,
                                            const ContextIndex& contexts, const Catalog& catalog,
                                            const AspectScorer& scorer, JudgeCache* cache,
                                            const AggregatorStepConfig& config, std::uint64_t seed) {
  if (config.group_size < 2) throw Error(Errc::kGroupTooSmall, "aggregator group size must be >= 2");
  if (config.beta < 0) throw Error(Errc::kInvalidArgument, "beta must be >= 0");
  if (batch.empty()) throw Error(Errc::kEmptyDataset, "aggregator step on an empty batch");

  AggregatorDiagnostics diag;
  std::vector<AggregatorGroup> groups;
  groups.reserve(batch.size());
  double reward_sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& pair = batch[i];
    const UserContext& ctx = contexts.context(pair.user);
    const auto s_win = judged(scorer, cache, ctx, catalog.item(pair.winner));
    const auto s_lose = judged(scorer, cache, ctx, catalog.item(pair.loser));
    AggregatorGroup g;
    g.features = contexts.features(pair.user);
    std::vector<double> rewards;
    for (int k = 0; k < config.group_size; ++k) {
      auto z = policy.sample(g.features, derive_seed(seed, {i, static_cast<std::uint64_t>(k)}));
      const auto w = normalize_levels(z);
      const double r = pairwise_reward(holistic_score(w, s_win), holistic_score(w, s_lose));
      rewards.push_back(r);
      reward_sum += r;
      g.actions.push_back(std::move(z));
    }
    g.advantages = standardize_group(rewards, config.std_guard);
    diag.kl += policy.kl(g.features) / static_cast<double>(batch.size());
    groups.push_back(std::move(g));
  }
  diag.mean_reward = reward_sum / static_cast<double>(batch.size() * static_cast<std::size_t>(config.group_size));

  std::vector<double> grad(policy.num_params());
  diag.objective = aggregator_objective(policy, groups, config.beta, grad);
  double n2 = 0.0;
  for (double v : grad) n2 += v * v;
  diag.grad_norm = std::sqrt(n2);
  auto params = policy.params();
  for (std::size_t i = 0; i < params.size(); ++i) params[i] += config.step_size * grad[i];
  return diag;
}

double pairwise_accuracy(const AggregatorPolicy& policy, std::span<const PreferencePair> pairs,
                         const ContextIndex& contexts, const Catalog& catalog, const AspectScorer& scorer,
                         JudgeCache* cache) {
  if (pairs.empty()) throw Error(Errc::kEmptyDataset, "pairwise accuracy over no pairs");
  std::size_t correct = 0;
  for (const auto& pair : pairs) {
    const UserContext& ctx = contexts.context(pair.user);
    const auto w = policy.expected_weights(contexts.features(pair.user));
    correct += static_cast<std::size_t>(
        pairwise_reward(holistic_score(w, judged(scorer, cache, ctx, catalog.item(pair.winner))),
                        holistic_score(w, judged(scorer, cache, ctx, catalog.item(pair.loser)))));
  }
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

std::vector<PreferencePair> build_preference_pairs(const World& world, std::span<const Episode> episodes,
                                                   const AspectScorer& scorer, const PairBuildConfig& config,
                                                   std::uint64_t seed) {
  std::vector<PreferencePair> out;
  const auto items = world.catalog.items();
  const auto n_items = static_cast<std::uint64_t>(items.size());
  if (n_items < 2) return out;
  for (const Episode& e : episodes) {
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(e.context.user_id)});
    WeightVector latent{e.context.latent_weights};
    for (int k = 0; k < config.intra_per_user; ++k) {
      for (int attempt = 0; attempt < config.max_attempts; ++attempt) {
        const Item& a = items[rng() % n_items];
        const Item& b = items[rng() % n_items];
        if (a.item_id == b.item_id) continue;
        const double sa = holistic_score(latent, scorer.score(e.context, a));
        const double sb = holistic_score(latent, scorer.score(e.context, b));
        if (sa == sb) continue;
        out.push_back({e.context.user_id, sa > sb ? a.item_id : b.item_id, sa > sb ? b.item_id : a.item_id,
                       PairSource::kIntra});
        break;
      }
    }
    for (int k = 0; k < config.behavioral_per_user; ++k) {
      ItemId other = e.target_item;
      for (int attempt = 0; attempt < config.max_attempts && other == e.target_item; ++attempt)
        other = items[rng() % n_items].item_id;
      if (other != e.target_item) out.push_back({e.context.user_id, e.target_item, other, PairSource::kBehavioral});
    }
  }
  return out;
}

}  // namespace semrl
