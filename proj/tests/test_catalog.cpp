#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "semrl/errors.hpp"

using namespace semrl;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return Errc::kIo;
}

}  // namespace

TEST_SUITE("catalog") {

TEST_CASE("sid is the direct base-C encoding of the category triple") {
  auto cat = testutil::make_catalog({{0, 0, 0}, {2, 5, 7}, {7, 7, 3}}, 8, 8);
  auto cb = Codebook::assign(cat, 3, 8);
  CHECK(cb.forward(0).tokens == std::vector<Token>{0, 0, 0});
  CHECK(cb.forward(1).tokens == std::vector<Token>{2, 5, 7});
  CHECK(cb.forward(2).tokens == std::vector<Token>{7, 7, 3});
}

TEST_CASE("deeper codebooks spread the residual over the trailing tokens") {
  auto cat = testutil::make_catalog({{1, 2, 0}, {1, 2, 13}}, 4, 4);
  auto cb = Codebook::assign(cat, 4, 4);
  CHECK(cb.forward(1).tokens == std::vector<Token>{1, 2, 3, 1});  // 13 = 3*4 + 1
}

TEST_CASE("capacity is exceeded only when a bucket needs residual >= C") {
  std::vector<std::tuple<int, int, int>> full;
  for (int a = 0; a < 8; ++a)
    for (int b = 0; b < 8; ++b)
      for (int r = 0; r < 8; ++r) full.emplace_back(a, b, r);
  CHECK_NOTHROW(Codebook::assign(testutil::make_catalog(full, 8, 8), 3, 8));

  // 513 items over 64 buckets: pigeonhole forces one bucket to hold 9.
  auto cat = testutil::random_catalog(513, 8, 8, 5, 4, 0);
  int worst = 0;
  for (const auto& it : cat.items()) worst = std::max(worst, it.residual_index);
  REQUIRE(worst >= 8);
  CHECK(code_of([&] { Codebook::assign(cat, 3, 8); }) == Errc::kCapacityExceeded);

  // A category outside the token range also overflows.
  CHECK(code_of([&] { Codebook::assign(testutil::make_catalog({{0, 9, 0}}, 1, 10), 3, 8); }) ==
        Errc::kCapacityExceeded);
}

TEST_CASE("duplicate triples are rejected") {
  auto cat = testutil::make_catalog({{1, 1, 2}, {1, 1, 2}}, 2, 2);
  CHECK(code_of([&] { Codebook::assign(cat, 3, 8); }) == Errc::kDuplicateTriple);
}

TEST_CASE("forward then map_sid is the identity") {
  auto cat = testutil::random_catalog(400, 8, 8, 11);
  auto cb = Codebook::assign(cat, 3, 8);
  for (const auto& it : cat.items()) CHECK(cb.map_sid(cb.forward(it.item_id)) == it.item_id);
  CHECK(cb.num_items() == cat.size());
}

TEST_CASE("unknown sids raise InvalidSid") {
  auto cat = testutil::make_catalog({{0, 0, 0}}, 1, 1);
  auto cb = Codebook::assign(cat, 3, 8);
  CHECK(code_of([&] { cb.map_sid(SemanticId{{0, 0, 1}}); }) == Errc::kInvalidSid);
  CHECK(code_of([&] { cb.map_sid(SemanticId{{0, 0}}); }) == Errc::kInvalidSid);
  CHECK(code_of([&] { cb.map_sid(SemanticId{{9, 0, 0}}); }) == Errc::kInvalidSid);
}

TEST_CASE("map_sid agrees with a linear scan on random sids") {
  auto cat = testutil::random_catalog(300, 8, 8, 3);
  auto cb = Codebook::assign(cat, 3, 8);
  Rng rng(99);
  int hits = 0;
  for (int n = 0; n < 1000; ++n) {
    SemanticId sid{{static_cast<Token>(rng() % 8), static_cast<Token>(rng() % 8), static_cast<Token>(rng() % 8)}};
    std::optional<ItemId> scan;
    for (const auto& it : cat.items())
      if (it.root_category == sid.tokens[0] && it.sub_category == sid.tokens[1] && it.residual_index == sid.tokens[2])
        scan = it.item_id;
    CHECK(cb.try_map(sid) == scan);
    hits += scan ? 1 : 0;
  }
  CHECK(hits > 0);
}

TEST_CASE("valid_next_tokens matches brute-force filtering") {
  auto cat = testutil::random_catalog(100, 8, 8, 21);
  auto cb = Codebook::assign(cat, 3, 8);
  const auto sids = cb.all_sids();
  std::set<std::vector<Token>> prefixes{{}};
  for (const auto& s : sids)
    for (std::size_t l = 1; l < 3; ++l) prefixes.insert(std::vector<Token>(s.tokens.begin(), s.tokens.begin() + l));
  // Also some dead prefixes.
  prefixes.insert({7, 7});
  prefixes.insert({5});
  for (const auto& pre : prefixes) {
    std::set<Token> expect;
    for (const auto& s : sids)
      if (std::equal(pre.begin(), pre.end(), s.tokens.begin())) expect.insert(s.tokens[pre.size()]);
    const auto got = cb.valid_next_tokens(pre);
    CHECK(std::is_sorted(got.begin(), got.end()));
    CHECK(std::set<Token>(got.begin(), got.end()) == expect);
  }
}

TEST_CASE("empty prefix lists every first token, a unique item gives singletons") {
  auto cat = testutil::make_catalog({{0, 0, 0}, {0, 1, 0}, {3, 2, 5}}, 4, 4);
  auto cb = Codebook::assign(cat, 3, 8);
  CHECK(cb.valid_next_tokens({}) == std::vector<Token>{0, 3});
  CHECK(cb.valid_next_tokens(std::vector<Token>{3}) == std::vector<Token>{2});
  CHECK(cb.valid_next_tokens(std::vector<Token>{3, 2}) == std::vector<Token>{5});
}

TEST_CASE("trie nodes are numbered breadth-first with ascending siblings") {
  auto cat = testutil::make_catalog({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {0, 0, 0}}, 2, 2);
  auto cb = Codebook::assign(cat, 3, 8);
  CHECK(cb.num_nodes() == 1 + 2 + 3 + 4);
  int last_depth = 0;
  for (std::int32_t n = 0; n < static_cast<std::int32_t>(cb.num_nodes()); ++n) {
    CHECK(cb.depth_of(n) >= last_depth);
    last_depth = cb.depth_of(n);
    const auto ch = cb.children(n);
    for (std::size_t i = 1; i < ch.size(); ++i) CHECK(cb.token_of(ch[i - 1]) < cb.token_of(ch[i]));
  }
  const auto order = cb.items_in_sid_order();
  CHECK(order == std::vector<ItemId>{3, 2, 1, 0});
}

TEST_CASE("catalog and codebook survive a text round trip") {
  auto cat = testutil::random_catalog(60, 4, 4, 8);
  auto cb = Codebook::assign(cat, 3, 8);
  std::stringstream cs, bs;
  cat.write(cs);
  cb.write(bs);
  auto cat2 = Catalog::read(cs);
  auto cb2 = Codebook::read(bs);
  REQUIRE(cat2.size() == cat.size());
  for (const auto& it : cat.items()) {
    const auto& b = cat2.item(it.item_id);
    CHECK(b.feature_vector == it.feature_vector);
    CHECK(b.residual_index == it.residual_index);
    CHECK(cb2.forward(it.item_id) == cb.forward(it.item_id));
  }
  CHECK(cb2.num_nodes() == cb.num_nodes());
}

TEST_CASE("residuals follow item id order inside a bucket") {
  std::vector<Item> items(3);
  items[0].item_id = 30;
  items[1].item_id = 10;
  items[2].item_id = 20;
  assign_residuals(items);
  CHECK(items[0].residual_index == 2);
  CHECK(items[1].residual_index == 0);
  CHECK(items[2].residual_index == 1);
}

}
