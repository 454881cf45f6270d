#include "semrl/judge.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <mutex>
#include <ostream>
#include <set>
#include <string>

#include "semrl/errors.hpp"
#include "semrl/rng.hpp"
#include "semrl/textio.hpp"

namespace semrl {

double AspectScores::operator[](int d) const {
  switch (d) {
    case 0: return profile;
    case 1: return future;
    case 2: return novelty;
    case 3:
      if (!context) throw Error(Errc::kDimensionMismatch, "context aspect is absent");
      return *context;
    default: throw Error(Errc::kDimensionMismatch, "aspect index out of range");
  }
}

bool AspectScores::well_formed() const {
  auto in = [](double v, std::initializer_list<double> alpha) {
    return std::find(alpha.begin(), alpha.end(), v) != alpha.end();
  };
  return in(profile, {-1.0, -0.5, 0.0, 0.5, 1.0}) && in(future, {0.0, 0.5, 1.0}) && in(novelty, {0.0, 0.5, 1.0}) &&
         (!context || in(*context, {-1.0, 0.0}));
}

double quantize(double v, double lo, double hi, std::span<const double> alphabet) {
  const auto levels = static_cast<double>(alphabet.size());
  double bin = std::floor((v - lo) / (hi - lo) * levels);
  bin = std::clamp(bin, 0.0, levels - 1.0);
  return alphabet[static_cast<std::size_t>(bin)];
}

AspectScores oracle_score(const UserContext& ctx, const Item& item, const Catalog& catalog, const ContextRules& rules,
                          const InterestModel& interest) {
  AspectScores s;
  s.profile = quantize(cosine(ctx.profile_vector, item.feature_vector), -1.0, 1.0, kProfileAlphabet);
  const auto fv = interest.future_vector(ctx.history, catalog);
  s.future = quantize(cosine(fv, item.feature_vector), 0.0, 1.0, kFutureAlphabet);

  // Novel: not consumed and its sub-category unseen; graded by how well it
  // matches the short-term interest.
  bool sub_seen = false;
  for (ItemId h : ctx.history) {
    const Item& it = catalog.item(h);
    if (it.item_id == item.item_id ||
        (it.root_category == item.root_category && it.sub_category == item.sub_category))
      sub_seen = true;
  }
  if (!sub_seen) s.novelty = s.future;
  if (ctx.context_tag && rules.n_tags() > 0)
    s.context = rules.allows(*ctx.context_tag, item.root_category) ? 0.0 : -1.0;
  return s;
}

AspectScores OracleScorer::score(const UserContext& ctx, const Item& item) const {
  return oracle_score(ctx, item, *catalog_, *rules_, interest_);
}

namespace {

void check_aligned(std::span<const AspectScores> a, std::span<const AspectScores> b) {
  if (a.size() != b.size())
    throw Error(Errc::kLengthMismatch, "predicted and gold lists differ in length (" + std::to_string(a.size()) +
                                           " vs " + std::to_string(b.size()) + ")");
  if (a.empty()) throw Error(Errc::kLengthMismatch, "score lists are empty");
  const int d = b.front().dims();
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].dims() != d || b[i].dims() != d)
      throw Error(Errc::kDimensionMismatch, "context presence differs across aligned score lists");
}

int sgn(double v) { return (v > 0) - (v < 0); }

}  // namespace

double aspect_reward(std::span<const AspectScores> predicted, std::span<const AspectScores> gold) {
  check_aligned(predicted, gold);
  const int dims = gold.front().dims();
  const std::size_t n = gold.size();
  double total = 0.0;
  for (int d = 0; d < dims; ++d) {
    std::size_t exact = 0;
    for (std::size_t i = 0; i < n; ++i) exact += predicted[i][d] == gold[i][d] ? 1 : 0;
    const double r_acc = static_cast<double>(exact) / static_cast<double>(n);

    std::size_t eligible = 0;
    std::size_t concordant = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const int g = sgn(gold[i][d] - gold[j][d]);
        if (g == 0) continue;
        ++eligible;
        if (sgn(predicted[i][d] - predicted[j][d]) == g) ++concordant;
      }
    const double r_ord = eligible == 0 ? 1.0 : static_cast<double>(concordant) / static_cast<double>(eligible);
    total += r_acc + r_ord;
  }
  return total;
}

double pair_auc(std::span<const double> predicted, std::span<const IndexPair> gold_order) {
  if (gold_order.empty()) throw Error(Errc::kEmptyPairSet, "pair_auc needs at least one pair");
  double agree = 0.0;
  for (const auto& [win, lose] : gold_order) {
    if (win >= predicted.size() || lose >= predicted.size())
      throw Error(Errc::kInvalidArgument, "pair index out of range");
    if (predicted[win] > predicted[lose]) agree += 1.0;
    else if (predicted[win] == predicted[lose]) agree += 0.5;
  }
  return agree / static_cast<double>(gold_order.size());
}

double point_acc(std::span<const AspectScores> predicted, std::span<const AspectScores> gold) {
  check_aligned(predicted, gold);
  const int dims = gold.front().dims();
  double sum = 0.0;
  for (int d = 0; d < dims; ++d) {
    std::size_t exact = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) exact += predicted[i][d] == gold[i][d] ? 1 : 0;
    sum += static_cast<double>(exact) / static_cast<double>(gold.size());
  }
  return sum / dims;
}

JudgeQuality judge_quality(std::span<const AspectScores> predicted, std::span<const AspectScores> gold) {
  JudgeQuality q;
  q.point_acc = point_acc(predicted, gold);
  const int dims = gold.front().dims();
  double auc_sum = 0.0;
  int auc_dims = 0;
  for (int d = 0; d < dims; ++d) {
    std::vector<double> pred(predicted.size());
    for (std::size_t i = 0; i < predicted.size(); ++i) pred[i] = predicted[i][d];
    std::vector<IndexPair> pairs;
    for (std::size_t i = 0; i < gold.size(); ++i)
      for (std::size_t j = 0; j < gold.size(); ++j)
        if (gold[i][d] > gold[j][d]) pairs.emplace_back(i, j);
    if (pairs.empty()) continue;
    auc_sum += pair_auc(pred, pairs);
    ++auc_dims;
  }
  q.pair_auc = auc_dims ? auc_sum / auc_dims : 0.0;
  return q;
}

std::vector<bool> judged_subset(std::size_t n_episodes, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(Errc::kInvalidArgument, "sampling ratio p must lie in [0, 1]");
  std::vector<bool> mask(n_episodes);
  Rng rng(derive_seed(seed, {0x6a75646765ULL}));
  for (std::size_t i = 0; i < n_episodes; ++i) mask[i] = uniform01(rng) < p;
  return mask;
}

AspectScores JudgeCache::get_or_score(const AspectScorer& scorer, const UserContext& ctx, const Item& item) {
  const auto key = std::make_pair(ctx.user_id, item.item_id);
  {
    std::unique_lock lock(mu_);
    auto it = entries_.find(key);
    if (it != entries_.end()) {
      ++hits_;
      return it->second;
    }
    ++misses_;
  }
  AspectScores s = scorer.score(ctx, item);
  std::unique_lock lock(mu_);
  entries_[key] = s;
  return s;
}

std::uint64_t JudgeCache::hits() const {
  std::shared_lock lock(mu_);
  return hits_;
}

std::uint64_t JudgeCache::misses() const {
  std::shared_lock lock(mu_);
  return misses_;
}

std::size_t JudgeCache::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

void JudgeCache::save(std::ostream& out) const {
  std::shared_lock lock(mu_);
  for (const auto& [key, s] : entries_) {
    out << key.first << ", " << key.second << ", " << textio::format_double(s.profile) << ", "
        << textio::format_double(s.future) << ", " << textio::format_double(s.novelty) << ", ";
    if (s.context) out << textio::format_double(*s.context);
    else out << "-";
    out << "\n";
  }
}

void JudgeCache::load(std::istream& in) {
  std::string line;
  std::map<std::pair<UserId, ItemId>, AspectScores> loaded;
  while (std::getline(in, line)) {
    if (textio::trim(line).empty()) continue;
    auto f = textio::split(line, ',');
    if (f.size() != 6) throw Error(Errc::kParse, "judged-scores line needs 6 fields: " + line);
    AspectScores s;
    s.profile = textio::parse_double(f[2]);
    s.future = textio::parse_double(f[3]);
    s.novelty = textio::parse_double(f[4]);
    if (f[5] != "-") s.context = textio::parse_double(f[5]);
    if (!s.well_formed()) throw Error(Errc::kParse, "score outside its alphabet: " + line);
    loaded[{textio::parse_int(f[0]), textio::parse_int(f[1])}] = s;
  }
  std::unique_lock lock(mu_);
  for (auto& [k, v] : loaded) entries_[k] = v;
}

}  // namespace semrl
