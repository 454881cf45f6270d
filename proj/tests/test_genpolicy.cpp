#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "helpers.hpp"
#include "semrl/errors.hpp"
#include "semrl/genpolicy.hpp"
#include "semrl/optim.hpp"

using namespace semrl;

namespace {

std::vector<double> random_x(Rng& rng, std::size_t n) {
  std::normal_distribution<double> nd;
  std::vector<double> x(n);
  for (double& v : x) v = nd(rng);
  return x;
}

void zero(GeneratorPolicy& pol) {
  std::fill(pol.params().begin(), pol.params().end(), 0.0);
  pol.refresh_old();
}

std::vector<RolloutGroup> random_groups(const GeneratorPolicy& pol, const Codebook& cb, Rng& rng, int n, int G) {
  std::vector<RolloutGroup> groups;
  for (int i = 0; i < n; ++i) {
    RolloutGroup g;
    g.features = random_x(rng, pol.input_dim());
    g.rollouts = sample_group(pol, g.features, cb, G, rng());
    for (int k = 0; k < G; ++k) g.advantages.push_back(random_x(rng, 1)[0]);
    groups.push_back(std::move(g));
  }
  return groups;
}

}  // namespace

TEST_SUITE("genpolicy") {

TEST_CASE("a single-item catalog forces every rollout") {
  auto cat = testutil::make_catalog({{0, 0, 0}}, 1, 1);
  auto cb = Codebook::assign(cat, 3, 8);
  GeneratorPolicy pol(cb, 3, 4, 1);
  const std::vector<double> x{0.1, -0.2, 0.3};
  for (const auto& r : sample_group(pol, x, cb, 8, 5)) {
    CHECK(r.item_id == 0);
    CHECK(r.log_prob_old == 0.0);
    CHECK(r.log_prob_current == 0.0);
  }
  CHECK(pol.log_prob(x, cb.forward(0), cb) == 0.0);
}

TEST_CASE("two symmetric items split the mass evenly") {
  auto cat = testutil::make_catalog({{0, 0, 0}, {0, 0, 1}}, 1, 1);
  auto cb = Codebook::assign(cat, 3, 8);
  GeneratorPolicy pol(cb, 3, 4, 1);
  zero(pol);
  const std::vector<double> x{1, 2, 3};
  CHECK(pol.log_prob(x, cb.forward(0), cb) == doctest::Approx(std::log(0.5)));
  CHECK(pol.log_prob(x, cb.forward(1), cb) == doctest::Approx(std::log(0.5)));
}

TEST_CASE("sequence probabilities normalize over a 512-item catalog") {
  const auto w = generate_world(WorldParams{});
  GeneratorPolicy pol(w.codebook, 20, 16, 3, 0.5);
  Rng rng(6);
  for (int t = 0; t < 3; ++t) {
    const auto x = random_x(rng, 20);
    const auto all = pol.all_log_probs(x, w.codebook);
    REQUIRE(all.size() == 512);
    double s = 0;
    for (const auto& [id, lp] : all) s += std::exp(lp);
    CHECK(std::abs(s - 1.0) < 1e-6);
    const auto sids = w.codebook.all_sids();
    for (std::size_t i = 0; i < sids.size(); i += 37) {
      CHECK(all[i].first == w.codebook.map_sid(sids[i]));
      CHECK(all[i].second == doctest::Approx(pol.log_prob(x, sids[i], w.codebook)).epsilon(1e-12));
      for (std::size_t l = 0; l < 3; ++l) {
        const std::span<const Token> pre(sids[i].tokens.data(), l);
        const auto probs = pol.next_probs(x, pre, w.codebook);
        CHECK(probs.size() == w.codebook.valid_next_tokens(pre).size());
        CHECK(std::abs(std::accumulate(probs.begin(), probs.end(), 0.0) - 1.0) < 1e-9);
      }
    }
  }
}

TEST_CASE("uniform logits give uniform first tokens") {
  std::vector<std::tuple<int, int, int>> triples;
  for (int r = 0; r < 8; ++r) triples.emplace_back(r, 0, 0);
  auto cat = testutil::make_catalog(triples, 8, 1);
  auto cb = Codebook::assign(cat, 3, 8);
  GeneratorPolicy pol(cb, 2, 4, 1);
  zero(pol);
  const std::vector<double> x{0.5, 0.5};
  std::vector<int> counts(8, 0);
  for (const auto& r : sample_group(pol, x, cb, 100000, 9)) ++counts[static_cast<std::size_t>(r.sid.tokens[0])];
  for (int c : counts) CHECK(std::abs(c / 1e5 - 0.125) < 0.01);
}

TEST_CASE("sampling is deterministic in the seed and uses theta_old") {
  const auto cat = testutil::random_catalog(60, 4, 4, 2);
  const auto cb = Codebook::assign(cat, 3, 8);
  GeneratorPolicy pol(cb, 5, 6, 4, 0.8);
  const std::vector<double> x{1, 0, -1, 0.5, 0.2};
  const auto a = sample_group(pol, x, cb, 16, 3);
  const auto b = sample_group(pol, x, cb, 16, 3);
  REQUIRE(a.size() == 16);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].sid == b[i].sid);
    CHECK(cb.map_sid(a[i].sid) == a[i].item_id);
  }
  // Changing the current parameters does not change what theta_old samples.
  for (double& p : pol.params()) p += 0.3;
  const auto c = sample_group(pol, x, cb, 16, 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(c[i].sid == a[i].sid);
    CHECK(c[i].log_prob_old == a[i].log_prob_old);
    CHECK(c[i].log_prob_current == doctest::Approx(pol.log_prob(x, c[i].sid, cb)));
  }
  CHECK_THROWS_AS(sample_group(pol, x, cb, 1, 3), Error);
}

TEST_CASE("invalid sids and mismatched codebooks are rejected") {
  const auto cat = testutil::make_catalog({{0, 0, 0}, {1, 0, 0}}, 2, 1);
  const auto cb = Codebook::assign(cat, 3, 8);
  GeneratorPolicy pol(cb, 2, 4, 1);
  const std::vector<double> x{0, 1};
  CHECK_THROWS_AS(pol.log_prob(x, SemanticId{{0, 1, 0}}, cb), Error);
  CHECK_THROWS_AS(pol.next_probs(x, std::vector<Token>{5}, cb), Error);
  const auto other = Codebook::assign(testutil::make_catalog({{0, 0, 0}}, 1, 1), 3, 8);
  CHECK_THROWS_AS(pol.log_prob(x, other.forward(0), other), Error);
}

TEST_CASE("surrogate at theta = theta_old is the mean advantage") {
  const auto cat = testutil::random_catalog(40, 4, 4, 3);
  const auto cb = Codebook::assign(cat, 3, 8);
  GeneratorPolicy pol(cb, 4, 5, 2, 0.5);
  Rng rng(1);
  auto groups = random_groups(pol, cb, rng, 3, 6);
  double mean_a = 0;
  int n = 0;
  for (const auto& g : groups)
    for (double a : g.advantages) {
      mean_a += a;
      ++n;
    }
  SurrogateConfig cfg{0.2, 0.0};
  std::vector<double> grad(pol.num_params());
  CHECK(surrogate_objective(pol, cb, groups, cfg, grad) == doctest::Approx(mean_a / n));

  // The gradient is the advantage-weighted score function.
  std::vector<double> expect(pol.num_params(), 0.0);
  const double h = 1e-6;
  for (std::size_t i = 0; i < pol.num_params(); i += 7) {
    double fd = 0;
    const double keep = pol.params()[i];
    for (int sgn : {1, -1}) {
      pol.params()[i] = keep + sgn * h;
      double v = 0;
      for (const auto& g : groups)
        for (std::size_t k = 0; k < g.rollouts.size(); ++k)
          v += g.advantages[k] * pol.log_prob(g.features, g.rollouts[k].sid, cb);
      fd += sgn * v / n;
    }
    pol.params()[i] = keep;
    CHECK(grad[i] == doctest::Approx(fd / (2 * h)).epsilon(1e-5));
  }
}

TEST_CASE("zero advantages without KL give a zero gradient") {
  const auto cat = testutil::random_catalog(40, 4, 4, 3);
  const auto cb = Codebook::assign(cat, 3, 8);
  GeneratorPolicy pol(cb, 4, 5, 2, 0.5);
  Rng rng(2);
  auto groups = random_groups(pol, cb, rng, 2, 4);
  for (auto& g : groups) std::fill(g.advantages.begin(), g.advantages.end(), 0.0);
  for (double& p : pol.params()) p += 0.05;
  std::vector<double> grad(pol.num_params(), 1.0);
  surrogate_objective(pol, cb, groups, {0.2, 0.0}, grad);
  for (double g : grad) CHECK(g == 0.0);
}

TEST_CASE("surrogate gradient matches central differences") {
  const auto cat = testutil::random_catalog(50, 4, 4, 5);
  const auto cb = Codebook::assign(cat, 3, 8);
  Rng rng(13);
  for (int inst = 0; inst < 4; ++inst) {
    GeneratorPolicy pol(cb, 4, 5, rng(), 0.5);
    pol.freeze_reference();
    auto groups = random_groups(pol, cb, rng, 2, 5);
    std::normal_distribution<double> nd(0.0, 0.05);
    for (double& p : pol.params()) p += nd(rng);
    const SurrogateConfig cfg{0.2, 0.1};
    std::vector<double> grad(pol.num_params());
    surrogate_objective(pol, cb, groups, cfg, grad);
    for (int c = 0; c < 25; ++c) {
      const auto i = static_cast<std::size_t>(rng() % pol.num_params());
      const double h = 1e-5;
      const double keep = pol.params()[i];
      pol.params()[i] = keep + h;
      const double up = surrogate_objective(pol, cb, groups, cfg);
      pol.params()[i] = keep - h;
      const double dn = surrogate_objective(pol, cb, groups, cfg);
      pol.params()[i] = keep;
      const double fd = (up - dn) / (2 * h);
      CHECK(std::abs(fd - grad[i]) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("ascending a positive advantage raises that item's probability") {
  const auto cat = testutil::random_catalog(30, 4, 4, 9);
  const auto cb = Codebook::assign(cat, 3, 8);
  GeneratorPolicy pol(cb, 3, 4, 1);
  const std::vector<double> x{0.2, -0.4, 1.0};
  const auto target = cb.forward(cat.items()[7].item_id);
  const double before = pol.log_prob(x, target, cb);
  Optimizer opt(OptimizerKind::kSgd, pol.num_params(), 0.5);
  for (int step = 0; step < 20; ++step) {
    pol.refresh_old();
    RolloutGroup g;
    g.features = x;
    g.rollouts = {{target, 0, pol.log_prob(x, target, cb, GeneratorPolicy::Which::kOld), 0}};
    g.advantages = {1.0};
    std::vector<double> grad(pol.num_params());
    surrogate_objective(pol, cb, std::vector{g}, {0.2, 0.0}, grad);
    opt.ascend(pol.params(), grad);
  }
  CHECK(pol.log_prob(x, target, cb) > before + 1.0);
}

TEST_CASE("log_softmax") {
  std::vector<double> v{1.0, 2.0, 3.0};
  log_softmax(v);
  double s = 0;
  for (double x : v) s += std::exp(x);
  CHECK(s == doctest::Approx(1.0));
  CHECK(v[2] - v[1] == doctest::Approx(1.0));
  std::vector<double> big{1000.0, 1000.0};
  log_softmax(big);
  CHECK(big[0] == doctest::Approx(std::log(0.5)));
}

TEST_CASE("policy and optimizer save and load exactly") {
  const auto cat = testutil::random_catalog(30, 4, 4, 9);
  const auto cb = Codebook::assign(cat, 3, 8);
  GeneratorPolicy pol(cb, 3, 4, 11);
  pol.freeze_reference();
  for (double& p : pol.params()) p *= 1.5;
  std::stringstream ss;
  pol.save(ss);
  const auto back = GeneratorPolicy::load(ss);
  for (auto which : {GeneratorPolicy::Which::kCurrent, GeneratorPolicy::Which::kOld, GeneratorPolicy::Which::kReference}) {
    const auto a = pol.params(which);
    const auto b = back.params(which);
    CHECK(std::equal(a.begin(), a.end(), b.begin(), b.end()));
  }

  Optimizer opt(OptimizerKind::kAdam, 4, 0.01);
  std::vector<double> p{1, 2, 3, 4};
  opt.ascend(p, std::vector<double>{0.1, -0.2, 0.3, 0.0});
  std::stringstream os;
  opt.save(os);
  auto opt2 = Optimizer::load(os);
  auto q = p;
  opt.ascend(p, std::vector<double>{0.5, 0.5, -0.5, 1.0});
  opt2.ascend(q, std::vector<double>{0.5, 0.5, -0.5, 1.0});
  CHECK(p == q);
  CHECK(opt2.steps() == 2);
}

TEST_CASE("adam first step moves every coordinate by the step size") {
  Optimizer opt(OptimizerKind::kAdam, 3, 0.1);
  std::vector<double> p{0, 0, 0};
  opt.ascend(p, std::vector<double>{2.0, -0.5, 0.0});
  CHECK(p[0] == doctest::Approx(0.1));
  CHECK(p[1] == doctest::Approx(-0.1));
  CHECK(p[2] == 0.0);
  Optimizer sgd(OptimizerKind::kSgd, 1, 0.5);
  std::vector<double> s{1.0};
  sgd.ascend(s, std::vector<double>{2.0});
  CHECK(s[0] == 2.0);
}

}
