#include <doctest.h>

#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "semrl/errors.hpp"
#include "semrl/judge.hpp"

using namespace semrl;

namespace {

AspectScores scores(double p, double f, double n, std::optional<double> c = 0.0) { return {p, f, n, c}; }

// Items: 0 and 1 in (0,0); 2 in (0,1); 3 in (1,0). Feature of 0 is e0, 3 is e1.
Catalog judge_catalog() {
  std::vector<Item> items(4);
  for (int i = 0; i < 4; ++i) items[static_cast<std::size_t>(i)].item_id = i;
  items[0].feature_vector = {1, 0, 0};
  items[1] = {1, 0, 0, 1, {1, 0.1, 0}};
  items[2] = {2, 0, 1, 0, {0.9, 0, 0.1}};
  items[3] = {3, 1, 0, 0, {0, 1, 0}};
  return Catalog(items, 2, {2, 2});
}

}  // namespace

TEST_SUITE("judge") {

TEST_CASE("quantization uses evenly spaced bins and clamps") {
  CHECK(quantize(-1.0, -1, 1, kProfileAlphabet) == -1.0);
  CHECK(quantize(-0.61, -1, 1, kProfileAlphabet) == -1.0);
  CHECK(quantize(-0.59, -1, 1, kProfileAlphabet) == -0.5);
  CHECK(quantize(0.0, -1, 1, kProfileAlphabet) == 0.0);
  CHECK(quantize(0.99, -1, 1, kProfileAlphabet) == 1.0);
  CHECK(quantize(5.0, -1, 1, kProfileAlphabet) == 1.0);
  CHECK(quantize(0.2, 0, 1, kFutureAlphabet) == 0.0);
  CHECK(quantize(0.5, 0, 1, kFutureAlphabet) == 0.5);
  CHECK(quantize(0.7, 0, 1, kFutureAlphabet) == 1.0);
  CHECK(quantize(-0.3, 0, 1, kFutureAlphabet) == 0.0);
}

TEST_CASE("oracle scores on hand-built contexts") {
  const auto cat = judge_catalog();
  ContextRules rules({{true, false}});
  UserContext ctx;
  ctx.profile_vector = {1, 0, 0};
  ctx.history = {0};
  ctx.context_tag = 0;

  // Identical to the profile, consumed, tag-compatible.
  CHECK(oracle_score(ctx, cat.item(0), cat, rules) == scores(1, 1, 0, 0));
  // Orthogonal to profile and history; its root is disallowed by the tag.
  CHECK(oracle_score(ctx, cat.item(3), cat, rules) == scores(0, 0, 0, -1));
  // High future, unseen (c1,c2): strong novelty.
  CHECK(oracle_score(ctx, cat.item(2), cat, rules).novelty == 1.0);
  // Same sub-category as history: no novelty.
  CHECK(oracle_score(ctx, cat.item(1), cat, rules).novelty == 0.0);

  ctx.context_tag.reset();
  CHECK_FALSE(oracle_score(ctx, cat.item(0), cat, ContextRules{}).context.has_value());
}

TEST_CASE("oracle scores are always well formed") {
  const auto w = generate_world(testutil::small_world_params());
  OracleScorer scorer(w.catalog, w.rules, w.params.interest);
  for (std::size_t u = 0; u < 20; ++u)
    for (const auto& it : w.catalog.items()) {
      const auto s = scorer.score(w.episodes[u].context, it);
      CHECK(s.well_formed());
      CHECK(s.dims() == 4);
      CHECK(s.novelty <= s.future);
    }
}

TEST_CASE("aspect reward") {
  std::vector<AspectScores> gold{scores(1, 1, 0), scores(0.5, 0, 1), scores(-1, 0.5, 0.5, -1), scores(0, 0, 0),
                                 scores(-0.5, 1, 1)};
  CHECK(aspect_reward(gold, gold) == doctest::Approx(8.0));
  CHECK(aspect_reward(std::vector{gold[0]}, std::vector{gold[0]}) == doctest::Approx(8.0));

  std::vector<AspectScores> g2{scores(1, 0, 0), scores(0, 0, 0)};
  std::vector<AspectScores> p2{scores(0, 0, 0), scores(1, 0, 0)};
  // profile: r_acc 0, r_ord 0; the other three dims are exact with no discordant pairs.
  CHECK(aspect_reward(p2, g2) == doctest::Approx(6.0));

  CHECK_THROWS_AS(aspect_reward(p2, std::vector{g2[0]}), Error);
  std::vector<AspectScores> no_ctx{scores(1, 0, 0, std::nullopt), scores(0, 0, 0, std::nullopt)};
  CHECK_THROWS_AS(aspect_reward(no_ctx, g2), Error);
}

TEST_CASE("pair auc") {
  const std::vector<double> pred{0.9, 0.5, 0.1};
  const std::vector<IndexPair> order{{0, 1}, {1, 2}, {0, 2}};
  const std::vector<IndexPair> reversed{{1, 0}, {2, 1}, {2, 0}};
  CHECK(pair_auc(pred, order) == 1.0);
  CHECK(pair_auc(pred, reversed) == 0.0);
  CHECK(pair_auc(std::vector<double>{0.3, 0.3}, std::vector<IndexPair>{{0, 1}}) == 0.5);
  CHECK_THROWS_AS(pair_auc(pred, std::vector<IndexPair>{}), Error);

  Rng rng(5);
  std::vector<double> rnd(20000);
  for (double& v : rnd) v = uniform01(rng);
  std::vector<IndexPair> pairs;
  for (std::size_t i = 0; i < 10000; ++i) pairs.emplace_back(2 * i, 2 * i + 1);
  CHECK(std::abs(pair_auc(rnd, pairs) - 0.5) < 0.02);
}

TEST_CASE("point accuracy") {
  std::vector<AspectScores> gold{scores(1, 1, 0), scores(0, 0.5, 0.5), scores(-1, 0, 0), scores(0.5, 1, 1)};
  CHECK(point_acc(gold, gold) == 1.0);
  std::vector<AspectScores> wrong{scores(0, 0, 1, -1), scores(1, 0, 0, -1), scores(0, 1, 1, -1), scores(0, 0, 0, -1)};
  CHECK(point_acc(wrong, gold) == 0.0);
  std::vector<AspectScores> half{gold[0], gold[1], wrong[2], wrong[3]};
  CHECK(point_acc(half, gold) == doctest::Approx(0.5));
}

TEST_CASE("judge quality of a perfect judge") {
  std::vector<AspectScores> gold{scores(1, 1, 0), scores(0, 0.5, 0.5, -1), scores(-1, 0, 0), scores(0.5, 1, 1)};
  const auto q = judge_quality(gold, gold);
  CHECK(q.pair_auc == 1.0);
  CHECK(q.point_acc == 1.0);
}

TEST_CASE("judged subsets") {
  CHECK(judged_subset(1000, 1.0, 3) == std::vector<bool>(1000, true));
  CHECK(judged_subset(1000, 0.0, 3) == std::vector<bool>(1000, false));
  const auto m = judged_subset(100000, 0.05, 17);
  const double frac = static_cast<double>(std::count(m.begin(), m.end(), true)) / 1e5;
  CHECK(std::abs(frac - 0.05) < 0.003);
  // Nested across p for one seed.
  const auto big = judged_subset(100000, 0.2, 17);
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i]) CHECK(big[i]);
  CHECK(judged_subset(500, 0.3, 9) == judged_subset(500, 0.3, 9));
  CHECK_THROWS_AS(judged_subset(10, 1.5, 1), Error);
}

TEST_CASE("judge cache memoizes and persists") {
  const auto cat = judge_catalog();
  ContextRules rules({{true, true}});
  OracleScorer scorer(cat, rules, {});
  UserContext ctx;
  ctx.user_id = 4;
  ctx.profile_vector = {1, 0, 0};
  ctx.history = {0};
  ctx.context_tag = 0;
  JudgeCache cache;
  const auto a = cache.get_or_score(scorer, ctx, cat.item(2));
  const auto b = cache.get_or_score(scorer, ctx, cat.item(2));
  CHECK(a == b);
  CHECK(cache.hits() == 1);
  CHECK(cache.misses() == 1);
  std::stringstream ss;
  cache.save(ss);
  JudgeCache loaded;
  loaded.load(ss);
  CHECK(loaded.size() == 1);
  CHECK(loaded.get_or_score(scorer, ctx, cat.item(2)) == a);
  CHECK(loaded.hits() == 1);
}

}
