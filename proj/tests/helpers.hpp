#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <tuple>
#include <vector>

#include "semrl/catalog.hpp"
#include "semrl/rng.hpp"
#include "semrl/synthworld.hpp"

namespace testutil {

// Catalog from (c1, c2, residual) triples; ids are positions, features random.
inline semrl::Catalog make_catalog(const std::vector<std::tuple<int, int, int>>& triples, int n_roots, int n_subs,
                                   std::size_t dim = 4, std::uint64_t seed = 1) {
  semrl::Rng rng(seed);
  std::normal_distribution<double> nd;
  std::vector<semrl::Item> items;
  for (std::size_t i = 0; i < triples.size(); ++i) {
    semrl::Item it;
    it.item_id = static_cast<semrl::ItemId>(i);
    std::tie(it.root_category, it.sub_category, it.residual_index) = triples[i];
    for (std::size_t j = 0; j < dim; ++j) it.feature_vector.push_back(nd(rng));
    items.push_back(std::move(it));
  }
  return semrl::Catalog(std::move(items), n_roots, std::vector<int>(static_cast<std::size_t>(n_roots), n_subs));
}

// Random catalog with residuals assigned by item id within each bucket. With
// bucket_cap > 0 no bucket receives more than that many items.
inline semrl::Catalog random_catalog(std::size_t n, int n_roots, int n_subs, std::uint64_t seed, std::size_t dim = 4,
                                     int bucket_cap = 8) {
  semrl::Rng rng(seed);
  std::normal_distribution<double> nd;
  std::vector<semrl::Item> items;
  std::vector<int> fill(static_cast<std::size_t>(n_roots * n_subs), 0);
  for (std::size_t i = 0; i < n; ++i) {
    semrl::Item it;
    it.item_id = static_cast<semrl::ItemId>(i);
    do {
      it.root_category = static_cast<int>(rng() % static_cast<std::uint64_t>(n_roots));
      it.sub_category = static_cast<int>(rng() % static_cast<std::uint64_t>(n_subs));
    } while (bucket_cap > 0 && fill[static_cast<std::size_t>(it.root_category * n_subs + it.sub_category)] >= bucket_cap);
    ++fill[static_cast<std::size_t>(it.root_category * n_subs + it.sub_category)];
    for (std::size_t j = 0; j < dim; ++j) it.feature_vector.push_back(nd(rng));
    items.push_back(std::move(it));
  }
  semrl::assign_residuals(items);
  return semrl::Catalog(std::move(items), n_roots, std::vector<int>(static_cast<std::size_t>(n_roots), n_subs));
}

inline semrl::WorldParams small_world_params(std::uint64_t seed = 7) {
  semrl::WorldParams p;
  p.seed = seed;
  p.n_users = 300;
  p.n_items = 128;
  p.n_roots = 4;
  p.n_subs_per_root = 4;
  p.feature_dim = 8;
  return p;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("semrl_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testutil
