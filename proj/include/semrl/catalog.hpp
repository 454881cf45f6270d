#pragma once

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace semrl {

using ItemId = std::int64_t;
using Token = std::int32_t;

struct Item {
  ItemId item_id = 0;
  int root_category = 0;
  int sub_category = 0;
  int residual_index = 0;
  std::vector<double> feature_vector;
};

/// Item universe with the two-level category hierarchy.
class Catalog {
 public:
  Catalog() = default;
  /// Validates unique ids, category ranges and a common feature dimension.
  Catalog(std::vector<Item> items, int n_roots, std::vector<int> subs_per_root);

  std::span<const Item> items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  int n_roots() const { return n_roots_; }
  int n_subs(int root) const { return subs_per_root_.at(static_cast<std::size_t>(root)); }
  const std::vector<int>& subs_per_root() const { return subs_per_root_; }
  std::size_t feature_dim() const { return feature_dim_; }

  bool contains(ItemId id) const { return index_.count(id) != 0; }
  std::size_t index_of(ItemId id) const;
  const Item& item(ItemId id) const { return items_[index_of(id)]; }

  /// Text schema, one item per line:
  ///   item_id, c1, c2, residual, f_1, ..., f_F
  /// preceded by a `# catalog v1 n_roots=<R> subs=<s_0;s_1;...>` header.
  void write(std::ostream& out) const;
  static Catalog read(std::istream& in);

 private:
  std::vector<Item> items_;
  int n_roots_ = 0;
  std::vector<int> subs_per_root_;
  std::size_t feature_dim_ = 0;
  std::unordered_map<ItemId, std::size_t> index_;
};

/// Sets residual_index by ascending item_id within each (c1, c2) bucket.
void assign_residuals(std::vector<Item>& items);

struct SemanticId {
  std::vector<Token> tokens;

  auto operator<=>(const SemanticId&) const = default;
  bool operator==(const SemanticId&) const = default;
};

std::string to_string(const SemanticId& sid);

/// Deterministic SID assignment from the category hierarchy plus a prefix
/// trie over all valid SIDs. Immutable after construction.
///
/// Trie nodes are numbered breadth-first with siblings in ascending token
/// order; node 0 is the empty prefix and leaves sit at depth T. Node ids are
/// stable for a given catalog, which the generator relies on for its
/// per-prefix output parameters.
class Codebook {
 public:
  static Codebook assign(const Catalog& catalog, int levels, int codebook_size);

  int levels() const { return levels_; }
  int codebook_size() const { return codebook_size_; }
  std::size_t num_items() const { return forward_.size(); }
  std::size_t num_nodes() const { return nodes_.size(); }

  const SemanticId& forward(ItemId id) const;
  /// Throws Error(kInvalidSid) if sid is not a leaf of the trie.
  ItemId map_sid(const SemanticId& sid) const;
  std::optional<ItemId> try_map(const SemanticId& sid) const;
  bool is_valid(const SemanticId& sid) const { return try_map(sid).has_value(); }

  /// Tokens t such that prefix‖t is a prefix of some valid SID. Empty for
  /// dead prefixes. Requires prefix.size() < levels().
  std::vector<Token> valid_next_tokens(std::span<const Token> prefix) const;

  // Node-level access used by decoding.
  static constexpr std::int32_t kNoNode = -1;
  std::int32_t root() const { return 0; }
  std::int32_t child(std::int32_t node, Token t) const;
  std::span<const std::int32_t> children(std::int32_t node) const;
  Token token_of(std::int32_t node) const { return nodes_[static_cast<std::size_t>(node)].token; }
  int depth_of(std::int32_t node) const { return nodes_[static_cast<std::size_t>(node)].depth; }
  ItemId item_at(std::int32_t leaf) const { return nodes_[static_cast<std::size_t>(leaf)].item; }
  std::optional<std::int32_t> node_of(std::span<const Token> prefix) const;

  /// All valid SIDs in lexicographic order.
  std::vector<SemanticId> all_sids() const;
  /// Item ids in the same order as all_sids().
  std::vector<ItemId> items_in_sid_order() const;

  /// Versioned dump: header `semrl-codebook v1`, `levels T`, `codebook_size C`,
  /// `items N`, then `item_id -> t_1 t_2 ... t_T` per line in item_id order.
  void write(std::ostream& out) const;
  static Codebook read(std::istream& in);

 private:
  struct Node {
    Token token = -1;
    int depth = 0;
    ItemId item = -1;
    std::vector<std::int32_t> children;  // ascending token order
  };

  static Codebook from_sids(std::vector<std::pair<ItemId, SemanticId>> assignments, int levels,
                            int codebook_size);

  int levels_ = 0;
  int codebook_size_ = 0;
  std::unordered_map<ItemId, SemanticId> forward_;
  std::vector<Node> nodes_;
};

}  // namespace semrl
