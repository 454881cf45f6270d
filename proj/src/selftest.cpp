#include "semrl/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <random>
#include <string>

#include "semrl/aggregator.hpp"
#include "semrl/catalog.hpp"
#include "semrl/evalkit.hpp"
#include "semrl/fusion.hpp"
#include "semrl/genpolicy.hpp"
#include "semrl/rng.hpp"
#include "semrl/synthworld.hpp"

namespace semrl {

namespace {

World small_world() {
  WorldParams p;
  p.seed = 5;
  p.n_users = 200;
  p.n_items = 128;
  p.n_roots = 4;
  p.n_subs_per_root = 4;
  p.feature_dim = 8;
  return generate_world(p);
}

bool check_fusion() {
  Rng rng(1);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int i = 0; i < 100000; ++i) {
    const double b = u(rng), s = u(rng);
    const auto f = fuse({b, s}, {});
    if (std::abs(f.lambda * s) > std::abs(b)) return false;
    if (sign_of(b) != sign_of(s) && f.lambda != 0.0) return false;
    if (b != 0 && sign_of(f.a_fused) != sign_of(b)) return false;
  }
  return true;
}

bool check_standardize() {
  Rng rng(2);
  std::normal_distribution<double> n(0, 3);
  for (int i = 0; i < 10000; ++i) {
    std::vector<double> r(2 + rng() % 63);
    for (double& x : r) x = n(rng);
    const auto a = standardize_group(r);
    double m = 0;
    for (double x : a) m += x;
    if (std::abs(m / static_cast<double>(a.size())) > 1e-12) return false;
  }
  const auto z = standardize_group(std::vector<double>{5, 5, 5});
  return std::all_of(z.begin(), z.end(), [](double v) { return v == 0.0; });
}

bool check_normalization(const World& w) {
  const ContextIndex ctx(w);
  GeneratorPolicy g(w.codebook, ctx.spec().size(), 8, 3, 0.5);
  const auto& x = ctx.features(w.episodes.front().context.user_id);
  double total = 0;
  for (const auto& [item, lp] : g.all_log_probs(x, w.codebook)) total += std::exp(lp);
  return std::abs(total - 1.0) < 1e-9;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)}); }

bool check_generator_gradient(const World& w) {
  const ContextIndex ctx(w);
  GeneratorPolicy g(w.codebook, ctx.spec().size(), 6, 4, 0.3);
  std::vector<RolloutGroup> groups;
  for (int e = 0; e < 3; ++e) {
    RolloutGroup grp;
    grp.features = ctx.features(w.episodes[static_cast<std::size_t>(e)].context.user_id);
    grp.rollouts = sample_group(g, grp.features, w.codebook, 4, 10 + static_cast<std::uint64_t>(e));
    for (std::size_t i = 0; i < grp.rollouts.size(); ++i) grp.advantages.push_back(static_cast<double>(i) - 1.5);
    groups.push_back(grp);
  }
  // move away from the old snapshot so ratios differ from 1
  Rng rng(9);
  std::normal_distribution<double> n(0, 0.01);
  for (double& v : g.params()) v += n(rng);
  const SurrogateConfig sc{0.2, 0.04};
  std::vector<double> grad(g.num_params());
  surrogate_objective(g, w.codebook, groups, sc, grad);
  int checked = 0;
  for (std::size_t i = 0; i < grad.size() && checked < 30; i += 7) {
    if (grad[i] == 0.0) continue;
    const double keep = g.params()[i];
    g.params()[i] = keep + 1e-5;
    const double up = surrogate_objective(g, w.codebook, groups, sc);
    g.params()[i] = keep - 1e-5;
    const double down = surrogate_objective(g, w.codebook, groups, sc);
    g.params()[i] = keep;
    if (rel_err((up - down) / 2e-5, grad[i]) > 1e-4) return false;
    ++checked;
  }
  return checked > 0;
}

bool check_aggregator_gradient() {
  AggregatorPolicy p(4, 4, 5);
  Rng rng(3);
  std::normal_distribution<double> n(0, 0.5);
  for (double& v : p.params()) v += n(rng);
  std::vector<AggregatorGroup> groups(3);
  for (auto& g : groups) {
    for (int j = 0; j < 5; ++j) g.features.push_back(n(rng));
    for (int k = 0; k < 4; ++k) {
      g.actions.push_back(p.sample(g.features, rng()));
      g.advantages.push_back(n(rng));
    }
  }
  std::vector<double> grad(p.num_params());
  aggregator_objective(p, groups, 0.1, grad);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double keep = p.params()[i];
    p.params()[i] = keep + 1e-5;
    const double up = aggregator_objective(p, groups, 0.1);
    p.params()[i] = keep - 1e-5;
    const double down = aggregator_objective(p, groups, 0.1);
    p.params()[i] = keep;
    if (rel_err((up - down) / 2e-5, grad[i]) > 1e-4 && std::abs(grad[i]) > 1e-9) return false;
  }
  return true;
}

bool check_metrics() {
  Rng rng(4);
  for (int t = 0; t < 2000; ++t) {
    RankedList r;
    for (int i = 0; i < 12; ++i) r.items.push_back(static_cast<ItemId>(rng() % 40));
    std::sort(r.items.begin(), r.items.end());
    r.items.erase(std::unique(r.items.begin(), r.items.end()), r.items.end());
    std::shuffle(r.items.begin(), r.items.end(), rng);
    const ItemId target = static_cast<ItemId>(rng() % 40);
    const int k = 1 + static_cast<int>(rng() % r.items.size());
    int hit = 0;
    double dcg = 0;
    for (int i = 0; i < k; ++i)
      if (r.items[static_cast<std::size_t>(i)] == target) {
        hit = 1;
        dcg = 1.0 / std::log2(i + 2.0);
      }
    if (hr_at_k(r, target, k) != hit || ndcg_at_k(r, target, k) != dcg) return false;
  }
  return true;
}

bool check_codebook(const World& w) {
  for (const auto& item : w.catalog.items())
    if (w.codebook.map_sid(w.codebook.forward(item.item_id)) != item.item_id) return false;
  return true;
}

}  // namespace

bool run_selftest(std::ostream& out) {
  const World w = small_world();
  const std::vector<std::pair<std::string, std::function<bool()>>> checks = {
      {"fusion bound and sign gate", check_fusion},
      {"group standardization", check_standardize},
      {"sequence probabilities sum to one", [&] { return check_normalization(w); }},
      {"generator surrogate gradient", [&] { return check_generator_gradient(w); }},
      {"aggregator objective gradient", check_aggregator_gradient},
      {"HR / NDCG oracles", check_metrics},
      {"codebook round trip", [&] { return check_codebook(w); }},
  };
  bool all = true;
  for (const auto& [name, fn] : checks) {
    bool ok = false;
    try {
      ok = fn();
    } catch (const std::exception& e) {
      out << "  exception: " << e.what() << "\n";
    }
    out << (ok ? "ok   " : "FAIL ") << name << "\n";
    all = all && ok;
  }
  return all;
}

}  // namespace semrl
