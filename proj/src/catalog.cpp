#include "semrl/catalog.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

#include "semrl/errors.hpp"
#include "semrl/textio.hpp"

namespace semrl {

Catalog::Catalog(std::vector<Item> items, int n_roots, std::vector<int> subs_per_root)
    : items_(std::move(items)), n_roots_(n_roots), subs_per_root_(std::move(subs_per_root)) {
  if (n_roots_ <= 0 || static_cast<int>(subs_per_root_.size()) != n_roots_)
    throw Error(Errc::kInvalidArgument, "catalog needs one sub-category count per root");
  if (!items_.empty()) feature_dim_ = items_.front().feature_vector.size();
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const Item& it = items_[i];
    if (!index_.emplace(it.item_id, i).second)
      throw Error(Errc::kInvalidArgument, "duplicate item_id " + std::to_string(it.item_id));
    if (it.root_category < 0 || it.root_category >= n_roots_)
      throw Error(Errc::kInvalidArgument, "root category out of range for item " + std::to_string(it.item_id));
    if (it.sub_category < 0 || it.sub_category >= subs_per_root_[static_cast<std::size_t>(it.root_category)])
      throw Error(Errc::kInvalidArgument, "sub category out of range for item " + std::to_string(it.item_id));
    if (it.residual_index < 0)
      throw Error(Errc::kInvalidArgument, "negative residual for item " + std::to_string(it.item_id));
    if (it.feature_vector.size() != feature_dim_)
      throw Error(Errc::kDimensionMismatch, "feature dimension differs for item " + std::to_string(it.item_id));
  }
}

std::size_t Catalog::index_of(ItemId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw Error(Errc::kInvalidArgument, "unknown item_id " + std::to_string(id));
  return it->second;
}

void Catalog::write(std::ostream& out) const {
  out << "# catalog v1 n_roots=" << n_roots_ << " subs=";
  for (std::size_t r = 0; r < subs_per_root_.size(); ++r) out << (r ? ";" : "") << subs_per_root_[r];
  out << "\n";
  for (const Item& it : items_) {
    out << it.item_id << ", " << it.root_category << ", " << it.sub_category << ", " << it.residual_index;
    for (double f : it.feature_vector) out << ", " << textio::format_double(f);
    out << "\n";
  }
}

Catalog Catalog::read(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("# catalog v1", 0) != 0)
    throw Error(Errc::kParse, "missing catalog header");
  int n_roots = 0;
  std::vector<int> subs;
  {
    std::istringstream hs(line.substr(12));
    std::string tok;
    while (hs >> tok) {
      if (tok.rfind("n_roots=", 0) == 0) {
        n_roots = static_cast<int>(textio::parse_int(tok.substr(8)));
      } else if (tok.rfind("subs=", 0) == 0) {
        for (auto f : textio::split(std::string_view(tok).substr(5), ';'))
          subs.push_back(static_cast<int>(textio::parse_int(f)));
      }
    }
  }
  std::vector<Item> items;
  while (std::getline(in, line)) {
    if (textio::trim(line).empty() || line[0] == '#') continue;
    auto f = textio::split(line, ',');
    if (f.size() < 4) throw Error(Errc::kParse, "catalog line needs at least 4 fields: " + line);
    Item it;
    it.item_id = textio::parse_int(f[0]);
    it.root_category = static_cast<int>(textio::parse_int(f[1]));
    it.sub_category = static_cast<int>(textio::parse_int(f[2]));
    it.residual_index = static_cast<int>(textio::parse_int(f[3]));
    for (std::size_t k = 4; k < f.size(); ++k) it.feature_vector.push_back(textio::parse_double(f[k]));
    items.push_back(std::move(it));
  }
  return Catalog(std::move(items), n_roots, std::move(subs));
}

void assign_residuals(std::vector<Item>& items) {
  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::tie(items[a].root_category, items[a].sub_category, items[a].item_id) <
           std::tie(items[b].root_category, items[b].sub_category, items[b].item_id);
  });
  std::map<std::pair<int, int>, int> next;
  for (std::size_t i : order) items[i].residual_index = next[{items[i].root_category, items[i].sub_category}]++;
}

std::string to_string(const SemanticId& sid) {
  std::string s = "(";
  for (std::size_t i = 0; i < sid.tokens.size(); ++i) s += (i ? "," : "") + std::to_string(sid.tokens[i]);
  return s + ")";
}

Codebook Codebook::assign(const Catalog& catalog, int levels, int codebook_size) {
  if (levels < 2) throw Error(Errc::kInvalidArgument, "codebook needs at least 2 levels");
  if (codebook_size < 1) throw Error(Errc::kInvalidArgument, "codebook size must be positive");

  // residual capacity is C^(T-2)
  std::int64_t residual_cap = 1;
  for (int l = 2; l < levels; ++l) {
    residual_cap *= codebook_size;
    if (residual_cap > (std::int64_t{1} << 40)) break;
  }

  std::set<std::tuple<int, int, int>> seen;
  std::vector<std::pair<ItemId, SemanticId>> assignments;
  assignments.reserve(catalog.size());
  for (const Item& it : catalog.items()) {
    if (!seen.emplace(it.root_category, it.sub_category, it.residual_index).second)
      throw Error(Errc::kDuplicateTriple, "items share (c1,c2,residual) = (" + std::to_string(it.root_category) +
                                              "," + std::to_string(it.sub_category) + "," +
                                              std::to_string(it.residual_index) + ")");
    if (it.root_category >= codebook_size || it.sub_category >= codebook_size || it.residual_index >= residual_cap)
      throw Error(Errc::kCapacityExceeded, "item " + std::to_string(it.item_id) + " does not fit in C=" +
                                               std::to_string(codebook_size) + ", T=" + std::to_string(levels));
    SemanticId sid;
    sid.tokens.resize(static_cast<std::size_t>(levels));
    sid.tokens[0] = it.root_category;
    sid.tokens[1] = it.sub_category;
    std::int64_t r = it.residual_index;
    for (int l = levels - 1; l >= 2; --l) {
      sid.tokens[static_cast<std::size_t>(l)] = static_cast<Token>(r % codebook_size);
      r /= codebook_size;
    }
    assignments.emplace_back(it.item_id, std::move(sid));
  }
  return from_sids(std::move(assignments), levels, codebook_size);
}

Codebook Codebook::from_sids(std::vector<std::pair<ItemId, SemanticId>> assignments, int levels,
                             int codebook_size) {
  Codebook cb;
  cb.levels_ = levels;
  cb.codebook_size_ = codebook_size;
  std::sort(assignments.begin(), assignments.end(),
            [](const auto& a, const auto& b) { return a.second < b.second; });
  for (std::size_t i = 0; i + 1 < assignments.size(); ++i)
    if (assignments[i].second == assignments[i + 1].second)
      throw Error(Errc::kDuplicateTriple, "two items map to SID " + to_string(assignments[i].second));

  cb.nodes_.push_back(Node{});
  // Breadth-first: at each depth, prefixes appear in lexicographic order
  // because the SIDs are sorted.
  std::vector<std::int32_t> frontier(assignments.size(), 0);
  for (int d = 0; d < levels; ++d) {
    std::vector<std::int32_t> next(assignments.size());
    for (std::size_t i = 0; i < assignments.size(); ++i) {
      const Token t = assignments[i].second.tokens[static_cast<std::size_t>(d)];
      if (t < 0 || t >= codebook_size)
        throw Error(Errc::kCapacityExceeded, "token out of range in " + to_string(assignments[i].second));
      const bool same_as_prev = i > 0 && frontier[i] == frontier[i - 1] &&
                                assignments[i - 1].second.tokens[static_cast<std::size_t>(d)] == t;
      if (same_as_prev) {
        next[i] = next[i - 1];
        continue;
      }
      Node n;
      n.token = t;
      n.depth = d + 1;
      const auto id = static_cast<std::int32_t>(cb.nodes_.size());
      cb.nodes_.push_back(std::move(n));
      cb.nodes_[static_cast<std::size_t>(frontier[i])].children.push_back(id);
      next[i] = id;
    }
    frontier = std::move(next);
  }
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    cb.nodes_[static_cast<std::size_t>(frontier[i])].item = assignments[i].first;
    if (!cb.forward_.emplace(assignments[i].first, assignments[i].second).second)
      throw Error(Errc::kInvalidArgument, "duplicate item_id in codebook");
  }
  return cb;
}

const SemanticId& Codebook::forward(ItemId id) const {
  auto it = forward_.find(id);
  if (it == forward_.end()) throw Error(Errc::kInvalidArgument, "item " + std::to_string(id) + " has no SID");
  return it->second;
}

std::int32_t Codebook::child(std::int32_t node, Token t) const {
  const auto& ch = nodes_[static_cast<std::size_t>(node)].children;
  auto it = std::lower_bound(ch.begin(), ch.end(), t,
                             [&](std::int32_t c, Token tok) { return nodes_[static_cast<std::size_t>(c)].token < tok; });
  if (it == ch.end() || nodes_[static_cast<std::size_t>(*it)].token != t) return kNoNode;
  return *it;
}

std::span<const std::int32_t> Codebook::children(std::int32_t node) const {
  return nodes_[static_cast<std::size_t>(node)].children;
}

std::optional<std::int32_t> Codebook::node_of(std::span<const Token> prefix) const {
  if (static_cast<int>(prefix.size()) > levels_) return std::nullopt;
  std::int32_t node = 0;
  for (Token t : prefix) {
    node = child(node, t);
    if (node == kNoNode) return std::nullopt;
  }
  return node;
}

std::optional<ItemId> Codebook::try_map(const SemanticId& sid) const {
  if (static_cast<int>(sid.tokens.size()) != levels_) return std::nullopt;
  auto node = node_of(sid.tokens);
  if (!node) return std::nullopt;
  return nodes_[static_cast<std::size_t>(*node)].item;
}

ItemId Codebook::map_sid(const SemanticId& sid) const {
  auto id = try_map(sid);
  if (!id) throw Error(Errc::kInvalidSid, "SID " + to_string(sid) + " is not in the catalog");
  return *id;
}

std::vector<Token> Codebook::valid_next_tokens(std::span<const Token> prefix) const {
  std::vector<Token> out;
  if (static_cast<int>(prefix.size()) >= levels_) return out;
  auto node = node_of(prefix);
  if (!node) return out;
  for (std::int32_t c : children(*node)) out.push_back(token_of(c));
  return out;
}

std::vector<SemanticId> Codebook::all_sids() const {
  std::vector<SemanticId> out;
  out.reserve(forward_.size());
  for (std::size_t n = 0; n < nodes_.size(); ++n) {
    if (nodes_[n].depth != levels_) continue;
    out.push_back(forward_.at(nodes_[n].item));
  }
  return out;
}

std::vector<ItemId> Codebook::items_in_sid_order() const {
  std::vector<ItemId> out;
  out.reserve(forward_.size());
  for (const Node& n : nodes_)
    if (n.depth == levels_) out.push_back(n.item);
  return out;
}

void Codebook::write(std::ostream& out) const {
  out << "semrl-codebook v1\n";
  out << "levels " << levels_ << "\n";
  out << "codebook_size " << codebook_size_ << "\n";
  out << "items " << forward_.size() << "\n";
  std::vector<ItemId> ids;
  ids.reserve(forward_.size());
  for (const auto& [id, sid] : forward_) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  for (ItemId id : ids) {
    out << id << " ->";
    for (Token t : forward_.at(id).tokens) out << ' ' << t;
    out << "\n";
  }
}

Codebook Codebook::read(std::istream& in) {
  std::string line;
  auto expect = [&](const std::string& key) -> std::int64_t {
    if (!std::getline(in, line)) throw Error(Errc::kParse, "codebook truncated before '" + key + "'");
    auto f = textio::split(line, ' ');
    if (f.size() != 2 || f[0] != key) throw Error(Errc::kParse, "expected '" + key + "' line, got: " + line);
    return textio::parse_int(f[1]);
  };
  if (!std::getline(in, line) || textio::trim(line) != "semrl-codebook v1")
    throw Error(Errc::kParse, "unsupported codebook header");
  const int levels = static_cast<int>(expect("levels"));
  const int csize = static_cast<int>(expect("codebook_size"));
  const auto n = expect("items");
  std::vector<std::pair<ItemId, SemanticId>> assignments;
  while (std::getline(in, line)) {
    if (textio::trim(line).empty()) continue;
    auto arrow = line.find("->");
    if (arrow == std::string::npos) throw Error(Errc::kParse, "bad codebook line: " + line);
    SemanticId sid;
    for (auto tok : textio::split(textio::trim(std::string_view(line).substr(arrow + 2)), ' '))
      if (!tok.empty()) sid.tokens.push_back(static_cast<Token>(textio::parse_int(tok)));
    if (static_cast<int>(sid.tokens.size()) != levels) throw Error(Errc::kParse, "SID length mismatch: " + line);
    assignments.emplace_back(textio::parse_int(std::string_view(line).substr(0, arrow)), std::move(sid));
  }
  if (static_cast<std::int64_t>(assignments.size()) != n) throw Error(Errc::kParse, "codebook item count mismatch");
  return from_sids(std::move(assignments), levels, csize);
}

}  // namespace semrl
