#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "semrl/a2po.hpp"
#include "semrl/errors.hpp"
#include "semrl/experiment.hpp"
#include "semrl/fusion.hpp"

using namespace semrl;

TEST_SUITE("fusion") {

TEST_CASE("standardize group examples") {
  const auto a = standardize_group(std::vector<double>{1, 2, 3});
  CHECK(a[0] == doctest::Approx(-1.2247).epsilon(1e-4));
  CHECK(a[1] == doctest::Approx(0.0));
  CHECK(a[2] == doctest::Approx(1.2247).epsilon(1e-4));
  CHECK(standardize_group(std::vector<double>{5, 5, 5, 5}) == std::vector<double>(4, 0.0));
  CHECK_THROWS_AS(standardize_group(std::vector<double>{1}), Error);
}

TEST_CASE("standardized groups have zero mean and near-unit spread") {
  Rng rng(1);
  for (int t = 0; t < 2000; ++t) {
    const int G = 2 + static_cast<int>(rng() % 63);
    std::vector<double> r(static_cast<std::size_t>(G));
    const double scale = std::exp(6 * uniform01(rng) - 3);
    for (double& v : r) v = scale * (uniform01(rng) - 0.5);
    const auto a = standardize_group(r);
    double m = 0, v2 = 0, rm = 0, rv = 0;
    for (double x : r) rm += x / G;
    for (double x : r) rv += (x - rm) * (x - rm) / G;
    for (double x : a) m += x / G;
    for (double x : a) v2 += (x - m) * (x - m) / G;
    const double sigma = std::sqrt(rv);
    CHECK(std::abs(m) < 1e-12);
    CHECK(std::abs(std::sqrt(v2) - sigma / (sigma + 1e-8)) < 1e-9);
  }
}

TEST_CASE("lambda examples") {
  CHECK(compute_lambda(1.0, -0.5) == 0.0);
  CHECK(compute_lambda(1.0, 1.0) == doctest::Approx(1.0));
  CHECK(std::abs(compute_lambda(2.0, 0.5) - 0.25) < 1e-7);
  CHECK(compute_lambda(0.0, 1.0) == 0.0);
  CHECK(compute_lambda(0.0, 0.0) == 0.0);
  CHECK_THROWS_AS(compute_lambda(1, 1, 0.0), Error);
}

TEST_CASE("fuse per mode") {
  FusionConfig full;
  auto f = fuse({2.0, 0.5}, full);
  CHECK(f.lambda == doctest::Approx(0.25));
  CHECK(f.a_fused == doctest::Approx(2.125));
  f = fuse({2.0, std::nullopt}, full);
  CHECK(f.a_fused == 2.0);
  CHECK(f.lambda == 0.0);

  FusionConfig gate{FusionMode::kGateOnly};
  CHECK(fuse({2.0, 0.5}, gate).a_fused == doctest::Approx(2.5));
  CHECK(fuse({2.0, -0.5}, gate).a_fused == 2.0);
  FusionConfig mag{FusionMode::kMagnitudeOnly};
  CHECK(fuse({2.0, -0.5}, mag).a_fused == doctest::Approx(2.0 - 0.125));
  FusionConfig sum{FusionMode::kAdvSum};
  CHECK(fuse({2.0, -0.5}, sum).a_fused == doctest::Approx(1.5));
  for (auto cfg : {gate, mag, sum}) CHECK(fuse({-1.0, std::nullopt}, cfg).a_fused == -1.0);
  CHECK_THROWS_AS(fuse({1.0, 1.0}, FusionConfig{FusionMode::kRewardSum}), Error);

  // With a semantic advantage equal to the business one, adv_sum doubles it
  // and full does the same up to lambda ~ 1.
  for (double a : {-1.7, 0.3, 2.2}) {
    CHECK(fuse({a, a}, sum).a_fused == doctest::Approx(2 * a));
    CHECK(fuse({a, a}, full).a_fused == doctest::Approx(2 * a).epsilon(1e-7));
  }
}

TEST_CASE("full fusion never lets the semantic term outweigh or flip the business sign") {
  Rng rng(3);
  FusionConfig full;
  for (int i = 0; i < 200000; ++i) {
    const double b = 20 * uniform01(rng) - 10;
    const double s = 20 * uniform01(rng) - 10;
    const auto f = fuse({b, s}, full);
    CHECK(std::abs(f.lambda * s) <= std::abs(b));
    CHECK(std::abs(f.a_fused - b) <= std::abs(b));
    if (sign_of(b) != sign_of(s)) CHECK(f.lambda == 0.0);
    CHECK((f.a_fused == 0.0 || sign_of(f.a_fused) == sign_of(b)));
  }
}

TEST_CASE("consistency rate") {
  std::vector<AdvantagePair> same{{1, 2.0}, {-1, -0.5}, {3, std::nullopt}};
  CHECK(consistency_rate(same) == 1.0);
  std::vector<AdvantagePair> mixed;
  for (int i = 0; i < 100; ++i) mixed.push_back({1.0, i < 45 ? 1.0 : -1.0});
  CHECK(consistency_rate(mixed) == doctest::Approx(0.45));
  CHECK_THROWS_AS(consistency_rate(std::vector<AdvantagePair>{{1.0, std::nullopt}}), Error);

  Rng rng(9);
  std::vector<AdvantagePair> rnd;
  for (int i = 0; i < 1000000; ++i) rnd.push_back({uniform01(rng) - 0.5, uniform01(rng) - 0.5});
  CHECK(std::abs(consistency_rate(rnd) - 0.5) < 0.003);
}

TEST_CASE("mode names round-trip") {
  for (auto m : {TrainMode::kBusinessOnly, TrainMode::kRewardSum, TrainMode::kAdvSum, TrainMode::kGateOnly,
                 TrainMode::kMagnitudeOnly, TrainMode::kFull})
    CHECK(parse_train_mode(to_string(m)) == m);
  CHECK_THROWS_AS(parse_train_mode("grpo"), Error);
  CHECK(!fusion_mode_of(TrainMode::kBusinessOnly).has_value());
  CHECK(fusion_mode_of(TrainMode::kFull) == FusionMode::kFull);
}

}

TEST_SUITE("a2po") {

namespace {

struct Fixture {
  World world = generate_world(testutil::small_world_params());
  ContextIndex contexts{world};
  OracleScorer scorer{world.catalog, world.rules, world.params.interest};
  JudgeCache cache;
  SemanticReward semantic{scorer, world.catalog, contexts, nullptr, &cache};
  std::vector<const Episode*> train;

  Fixture() {
    for (const auto& e : world.episodes) train.push_back(&e);
  }

  A2poTrainer trainer(TrainMode mode, double p, std::uint64_t seed = 1, int epochs = 1) {
    TrainerConfig cfg;
    cfg.step.mode = mode;
    if (auto fm = fusion_mode_of(mode)) cfg.step.fusion.mode = *fm;
    cfg.step.group_size = 8;
    cfg.step.business = {BusinessRewardConfig::Mode::kGraded, 0.3, 0.1};
    cfg.epochs = epochs;
    cfg.batch_size = 32;
    cfg.p = p;
    cfg.seed = seed;
    GeneratorPolicy pol(world.codebook, contexts.spec().size(), 8, 5);
    Optimizer opt(OptimizerKind::kAdam, pol.num_params(), 0.01);
    return A2poTrainer(world, contexts, train, &semantic, std::move(pol), std::move(opt), cfg);
  }
};

std::vector<double> params_of(const A2poTrainer& t) {
  const auto p = t.policy().params();
  return {p.begin(), p.end()};
}

}  // namespace

TEST_CASE("p = 0 reproduces business-only training bit for bit") {
  Fixture fx;
  auto base = fx.trainer(TrainMode::kBusinessOnly, 1.0);
  auto full = fx.trainer(TrainMode::kFull, 0.0);
  std::vector<std::string> la, lb;
  while (!base.done()) {
    la.push_back(format_log_line(base.step_index(), base.step()));
    lb.push_back(format_log_line(full.step_index(), full.step()));
  }
  CHECK(full.done());
  CHECK(la == lb);
  CHECK(params_of(base) == params_of(full));
}

TEST_CASE("full-mode diagnostics are consistent") {
  Fixture fx;
  auto t = fx.trainer(TrainMode::kFull, 1.0);
  for (int i = 0; i < 3; ++i) {
    const auto d = t.step();
    CHECK(d.judged_fraction == 1.0);
    CHECK(d.mean_lambda >= 0.0);
    CHECK(d.mean_lambda <= 1.0);
    CHECK(d.gate_close_rate >= 0.0);
    CHECK(d.gate_close_rate <= 1.0);
    CHECK(d.consistency_rate >= 0.0);
    CHECK(d.grad_norm > 0.0);
  }
  auto b = fx.trainer(TrainMode::kBusinessOnly, 1.0);
  const auto d = b.step();
  CHECK(std::isnan(d.consistency_rate));
  CHECK(d.judged_fraction == 0.0);
}

TEST_CASE("steps are deterministic and checkpoints resume exactly") {
  Fixture fx;
  auto a = fx.trainer(TrainMode::kFull, 0.5, 3, 2);
  auto b = fx.trainer(TrainMode::kFull, 0.5, 3, 2);
  const auto dir = testutil::scratch_dir("ckpt");
  for (int i = 0; i < 5; ++i) {
    a.step();
    b.step();
  }
  b.save_checkpoint(dir);
  auto c = fx.trainer(TrainMode::kFull, 0.5, 3, 2);
  c.load_checkpoint(dir);
  CHECK(c.step_index() == 5);
  std::vector<std::string> la, lc;
  while (!a.done()) {
    la.push_back(format_log_line(a.step_index(), a.step()));
    lc.push_back(format_log_line(c.step_index(), c.step()));
  }
  CHECK(la == lc);
  CHECK(params_of(a) == params_of(c));
}

TEST_CASE("the semantic reward is the weighted holistic score") {
  Fixture fx;
  const auto& ctx = fx.world.episodes[3].context;
  for (double w : fx.semantic.weights(3).w) CHECK(w == doctest::Approx(0.25));
  const auto s = fx.scorer.score(ctx, fx.world.catalog.item(10));
  CHECK(fx.semantic(3, 10) == doctest::Approx(holistic_score({{0.25, 0.25, 0.25, 0.25}}, s)));
  fx.semantic.set_weights(3, {{1, 0, 0, 0}});
  CHECK(fx.semantic(3, 10) == s.profile);
}

TEST_CASE("log lines") {
  StepDiagnostics d;
  d.objective = 0.5;
  const auto line = format_log_line(7, d);
  CHECK(line.rfind("7,", 0) == 0);
  CHECK(line.find("nan") != std::string::npos);
  CHECK(log_header().find("consistency_rate") != std::string::npos);
}

}
