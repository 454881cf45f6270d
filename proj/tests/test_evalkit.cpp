#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "helpers.hpp"
#include "semrl/errors.hpp"
#include "semrl/evalkit.hpp"

using namespace semrl;

namespace {

RankedList list_of(std::vector<ItemId> ids) { return RankedList{std::move(ids)}; }

// Balanced 2 x 2 x 2 catalog whose ids run against SID order.
Catalog balanced_catalog() {
  std::vector<std::tuple<int, int, int>> t;
  for (int a = 1; a >= 0; --a)
    for (int b = 1; b >= 0; --b)
      for (int r = 1; r >= 0; --r) t.emplace_back(a, b, r);
  return testutil::make_catalog(t, 2, 2);
}

StratifiedReport report_with(double hr10_l0, double hr10_l3) {
  StratifiedReport r;
  r.counts = {10, 10, 10, 10};
  r.hr[0][2] = hr10_l0;
  r.hr[3][2] = hr10_l3;
  r.partition = 42;
  return r;
}

}  // namespace

TEST_SUITE("evalkit") {

TEST_CASE("hit rate examples") {
  std::vector<ItemId> ids(12);
  std::iota(ids.begin(), ids.end(), 100);
  const auto l = list_of(ids);
  CHECK(hr_at_k(l, 100, 10) == 1);
  CHECK(hr_at_k(l, 7, 10) == 0);
  CHECK(hr_at_k(l, 110, 10) == 0);
  CHECK(hr_at_k(l, 110, 11) == 1);
  CHECK_THROWS_AS(hr_at_k(l, 100, 13), Error);
}

TEST_CASE("ndcg examples") {
  const auto l = list_of({5, 6, 7, 8, 9, 10, 11, 12, 13, 14});
  CHECK(ndcg_at_k(l, 5, 10) == 1.0);
  CHECK(ndcg_at_k(l, 7, 10) == doctest::Approx(0.5));
  CHECK(ndcg_at_k(l, 99, 10) == 0.0);
  CHECK(ndcg_at_k(l, 9, 3) == 0.0);
  try {
    ndcg_at_k(l, 5, 11);
    FAIL("expected KTooLarge");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kKTooLarge);
  }
}

TEST_CASE("a uniform policy ranks by item id") {
  const auto cat = balanced_catalog();
  const auto cb = Codebook::assign(cat, 3, 8);
  GeneratorPolicy pol(cb, 2, 3, 1);
  std::fill(pol.params().begin(), pol.params().end(), 0.0);
  const auto r = generate_ranked_list(pol, std::vector<double>{1, 1}, cb, 8);
  CHECK(r.items == std::vector<ItemId>{0, 1, 2, 3, 4, 5, 6, 7});
  CHECK_FALSE(r.sampled);
}

TEST_CASE("a policy biased towards one item ranks it first") {
  const auto cat = balanced_catalog();
  const auto cb = Codebook::assign(cat, 3, 8);
  GeneratorPolicy pol(cb, 2, 3, 1);
  const ItemId fav = 5;
  const auto& sid = cb.forward(fav);
  std::int32_t node = cb.root();
  for (Token t : sid.tokens) {
    node = cb.child(node, t);
    pol.params()[pol.bias_offset(node)] = 5.0;
  }
  const auto r = generate_ranked_list(pol, std::vector<double>{0.3, -0.1}, cb, 3);
  CHECK(r.items.front() == fav);
}

TEST_CASE("exact ranking agrees with the empirical top-10 of many samples") {
  const auto w = generate_world(WorldParams{});
  Rng rng(4);
  int agree = 0;
  const int policies = 10;
  for (int t = 0; t < policies; ++t) {
    GeneratorPolicy pol(w.codebook, 6, 8, rng(), 1.0);
    std::vector<double> x(6);
    for (double& v : x) v = uniform01(rng) * 2 - 1;
    const auto exact = generate_ranked_list(pol, x, w.codebook, 10);
    std::map<ItemId, int> freq;
    for (const auto& r : sample_group(pol, x, w.codebook, 1000000, rng())) ++freq[r.item_id];
    std::vector<std::pair<int, ItemId>> by(freq.size());
    std::transform(freq.begin(), freq.end(), by.begin(), [](auto kv) { return std::pair{-kv.second, kv.first}; });
    std::sort(by.begin(), by.end());
    std::set<ItemId> emp;
    for (int i = 0; i < 10; ++i) emp.insert(by[static_cast<std::size_t>(i)].second);
    agree += std::set<ItemId>(exact.items.begin(), exact.items.end()) == emp ? 1 : 0;
  }
  CHECK(agree >= 9);
}

TEST_CASE("enumeration budget: fallback or refusal") {
  const auto cat = testutil::random_catalog(80, 4, 4, 1);
  const auto cb = Codebook::assign(cat, 3, 8);
  GeneratorPolicy pol(cb, 2, 4, 1, 1.0);
  const std::vector<double> x{0.5, -0.5};
  RankingConfig small;
  small.enumeration_budget = 10;
  small.fallback_samples = 2000;
  const auto r = generate_ranked_list(pol, x, cb, 10, small);
  CHECK(r.sampled);
  CHECK(std::set<ItemId>(r.items.begin(), r.items.end()).size() == 10);
  small.allow_sampling_fallback = false;
  try {
    generate_ranked_list(pol, x, cb, 10, small);
    FAIL("expected CatalogTooLarge");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kCatalogTooLarge);
  }
}

TEST_CASE("relative and stratified lift") {
  CHECK(*relative_lift(0.11, 0.10) == doctest::Approx(0.10));
  CHECK(!relative_lift(0.3, 0.0).has_value());
  const auto base = report_with(0.10, 0.0);
  const auto same = stratified_lift(base, base);
  CHECK(*same.hr[0][2] == 0.0);
  CHECK(!same.hr[3][2].has_value());
  const auto lift = stratified_lift(report_with(0.11, 0.2), base);
  CHECK(*lift.hr[0][2] == doctest::Approx(0.10));
  auto other = base;
  other.partition = 43;
  CHECK_THROWS_AS(stratified_lift(other, base), Error);
}

TEST_CASE("evaluation on a world") {
  const auto w = generate_world(testutil::small_world_params());
  const ContextIndex contexts(w);
  GeneratorPolicy pol(w.codebook, contexts.spec().size(), 8, 2);
  std::vector<const Episode*> eps;
  for (std::size_t i = 0; i < 60; ++i) eps.push_back(&w.episodes[i]);
  const auto rep = evaluate(pol, w.codebook, contexts, eps);
  CHECK(rep.total() == 60);
  CHECK(rep.partition == partition_fingerprint(eps));
  double weighted = 0;
  for (int l = 0; l < kNoveltyLevels; ++l) {
    const auto& hr = rep.hr[static_cast<std::size_t>(l)];
    CHECK(hr[0] <= hr[1]);
    CHECK(hr[1] <= hr[2]);
    weighted += static_cast<double>(rep.counts[static_cast<std::size_t>(l)]) * hr[2];
  }
  CHECK(rep.overall_hr(2) == doctest::Approx(weighted / 60));

  // Brute-force oracle for one episode.
  const Episode& e = *eps[7];
  auto all = pol.all_log_probs(contexts.features(e.context.user_id), w.codebook);
  std::sort(all.begin(), all.end(), [](auto a, auto b) { return a.second != b.second ? a.second > b.second : a.first < b.first; });
  const auto ranked = generate_ranked_list(pol, contexts.features(e.context.user_id), w.codebook, 10);
  for (std::size_t i = 0; i < 10; ++i) CHECK(ranked.items[i] == all[i].first);

  SUBCASE("csv and json reports") {
    std::stringstream ss;
    write_report_csv(ss, rep);
    const auto back = read_report_csv(ss);
    CHECK(back.counts == rep.counts);
    CHECK(back.hr == rep.hr);
    CHECK(back.ndcg == rep.ndcg);
    CHECK(back.partition == rep.partition);
    const auto lift = stratified_lift(rep, back);
    const auto j = nlohmann::json::parse(report_json(rep, &lift));
    CHECK(j["levels"].size() == 4);
    CHECK(j["episodes"] == 60);
    CHECK(j["overall"]["hr@10"].get<double>() == doctest::Approx(rep.overall_hr(2)));
    CHECK(j["overall"].contains("lift_hr@5"));
    const auto plain = nlohmann::json::parse(report_json(rep));
    CHECK_FALSE(plain["overall"].contains("lift_hr@5"));
  }
}

}
