#include "semrl/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <unordered_set>

#include <json.hpp>

#include "semrl/errors.hpp"
#include "semrl/textio.hpp"

namespace semrl {

namespace {

void check_k(const RankedList& ranked, int k) {
  if (k < 1) throw Error(Errc::kInvalidArgument, "k must be >= 1");
  if (static_cast<std::size_t>(k) > ranked.items.size())
    throw Error(Errc::kKTooLarge, "k=" + std::to_string(k) + " exceeds list length " + std::to_string(ranked.items.size()));
}

}  // namespace

int hr_at_k(const RankedList& ranked, ItemId target, int k) {
  check_k(ranked, k);
  const auto end = ranked.items.begin() + k;
  return std::find(ranked.items.begin(), end, target) != end ? 1 : 0;
}

double ndcg_at_k(const RankedList& ranked, ItemId target, int k) {
  check_k(ranked, k);
  for (int i = 0; i < k; ++i)
    if (ranked.items[static_cast<std::size_t>(i)] == target) return 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return 0.0;
}

RankedList generate_ranked_list(const GeneratorPolicy& policy, std::span<const double> x, const Codebook& codebook,
                                int k_max, const RankingConfig& config) {
  if (k_max < 1) throw Error(Errc::kInvalidArgument, "k_max must be >= 1");
  if (codebook.num_items() < static_cast<std::size_t>(k_max))
    throw Error(Errc::kKTooLarge, "catalog smaller than k_max");
  std::vector<std::pair<ItemId, double>> scored;
  RankedList out;
  if (codebook.num_items() <= config.enumeration_budget) {
    scored = policy.all_log_probs(x, codebook);
  } else {
    if (!config.allow_sampling_fallback)
      throw Error(Errc::kCatalogTooLarge, std::to_string(codebook.num_items()) + " SIDs exceed the enumeration budget");
    out.sampled = true;
    GeneratorPolicy current = policy;
    current.refresh_old();
    std::unordered_set<ItemId> seen;
    for (const auto& r : sample_group(current, x, codebook, std::max(2, config.fallback_samples), config.seed))
      if (seen.insert(r.item_id).second) scored.emplace_back(r.item_id, r.log_prob_old);
    if (scored.size() < static_cast<std::size_t>(k_max))
      throw Error(Errc::kCatalogTooLarge, "sampling fallback found fewer than k_max distinct items");
  }
  const auto better = [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  };
  std::partial_sort(scored.begin(), scored.begin() + k_max, scored.end(), better);
  for (int i = 0; i < k_max; ++i) out.items.push_back(scored[static_cast<std::size_t>(i)].first);
  return out;
}

std::size_t cutoff_index(int k) {
  for (std::size_t i = 0; i < kCutoffs.size(); ++i)
    if (kCutoffs[i] == k) return i;
  throw Error(Errc::kInvalidArgument, "unsupported cutoff " + std::to_string(k));
}

std::size_t StratifiedReport::total() const {
  std::size_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

namespace {

double weighted(const StratifiedReport& r, const std::array<std::array<double, kCutoffs.size()>, kNoveltyLevels>& m,
                std::size_t ki) {
  const auto n = r.total();
  if (n == 0) return 0.0;
  double acc = 0.0;
  for (int l = 0; l < kNoveltyLevels; ++l)
    acc += static_cast<double>(r.counts[static_cast<std::size_t>(l)]) * m[static_cast<std::size_t>(l)][ki];
  return acc / static_cast<double>(n);
}

}  // namespace

double StratifiedReport::overall_hr(std::size_t ki) const { return weighted(*this, hr, ki); }
double StratifiedReport::overall_ndcg(std::size_t ki) const { return weighted(*this, ndcg, ki); }
double StratifiedReport::hr_at(int level, int k) const { return hr.at(static_cast<std::size_t>(level))[cutoff_index(k)]; }
double StratifiedReport::ndcg_at(int level, int k) const {
  return ndcg.at(static_cast<std::size_t>(level))[cutoff_index(k)];
}

std::uint64_t partition_fingerprint(std::span<const Episode* const> episodes) {
  std::string buf;
  for (const Episode* e : episodes)
    buf += std::to_string(e->context.user_id) + ":" + std::to_string(e->target_item) + ":" +
           std::to_string(e->novelty_level) + ";";
  return textio::fnv1a(buf);
}

StratifiedReport evaluate(const GeneratorPolicy& policy, const Codebook& codebook, const ContextIndex& contexts,
                          std::span<const Episode* const> episodes, const RankingConfig& config) {
  StratifiedReport rep;
  rep.partition = partition_fingerprint(episodes);
  const int k_max = kCutoffs.back();
  for (const Episode* e : episodes) {
    const auto lvl = static_cast<std::size_t>(e->novelty_level);
    const auto ranked = generate_ranked_list(policy, contexts.features(e->context.user_id), codebook, k_max, config);
    rep.sampled = rep.sampled || ranked.sampled;
    ++rep.counts[lvl];
    for (std::size_t ki = 0; ki < kCutoffs.size(); ++ki) {
      rep.hr[lvl][ki] += hr_at_k(ranked, e->target_item, kCutoffs[ki]);
      rep.ndcg[lvl][ki] += ndcg_at_k(ranked, e->target_item, kCutoffs[ki]);
    }
  }
  for (std::size_t l = 0; l < kNoveltyLevels; ++l)
    if (rep.counts[l] > 0)
      for (std::size_t ki = 0; ki < kCutoffs.size(); ++ki) {
        rep.hr[l][ki] /= static_cast<double>(rep.counts[l]);
        rep.ndcg[l][ki] /= static_cast<double>(rep.counts[l]);
      }
  return rep;
}

std::optional<double> relative_lift(double treatment, double baseline) {
  if (baseline == 0.0) return std::nullopt;
  return (treatment - baseline) / baseline;
}

LiftTable stratified_lift(const StratifiedReport& treatment, const StratifiedReport& baseline) {
  if (treatment.partition != baseline.partition || treatment.counts != baseline.counts)
    throw Error(Errc::kPartitionMismatch, "reports were computed on different episode sets");
  LiftTable t;
  for (std::size_t ki = 0; ki < kCutoffs.size(); ++ki) {
    for (std::size_t l = 0; l < kNoveltyLevels; ++l) {
      t.hr[l][ki] = relative_lift(treatment.hr[l][ki], baseline.hr[l][ki]);
      t.ndcg[l][ki] = relative_lift(treatment.ndcg[l][ki], baseline.ndcg[l][ki]);
    }
    t.overall_hr[ki] = relative_lift(treatment.overall_hr(ki), baseline.overall_hr(ki));
    t.overall_ndcg[ki] = relative_lift(treatment.overall_ndcg(ki), baseline.overall_ndcg(ki));
  }
  return t;
}

void write_report_csv(std::ostream& out, const StratifiedReport& r) {
  out << "# partition " << textio::hex64(r.partition) << " sampled " << (r.sampled ? 1 : 0) << "\n";
  out << "level,metric,k,value\n";
  for (std::size_t l = 0; l < kNoveltyLevels; ++l) {
    out << l << ",count,0," << r.counts[l] << "\n";
    for (std::size_t ki = 0; ki < kCutoffs.size(); ++ki) {
      out << l << ",hr," << kCutoffs[ki] << "," << textio::format_double(r.hr[l][ki]) << "\n";
      out << l << ",ndcg," << kCutoffs[ki] << "," << textio::format_double(r.ndcg[l][ki]) << "\n";
    }
  }
  for (std::size_t ki = 0; ki < kCutoffs.size(); ++ki) {
    out << "all,hr," << kCutoffs[ki] << "," << textio::format_double(r.overall_hr(ki)) << "\n";
    out << "all,ndcg," << kCutoffs[ki] << "," << textio::format_double(r.overall_ndcg(ki)) << "\n";
  }
}

StratifiedReport read_report_csv(std::istream& in) {
  StratifiedReport r;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    const auto t = textio::trim(line);
    if (t.empty()) continue;
    if (t.starts_with("# partition")) {
      const auto f = textio::split(t.substr(2), ' ');
      if (f.size() != 4) throw Error(Errc::kParse, "bad report header: " + line);
      r.partition = std::stoull(std::string(f[1]), nullptr, 16);
      r.sampled = f[3] == "1";
      header = true;
      continue;
    }
    if (t.starts_with("level,")) continue;
    const auto f = textio::split(t, ',');
    if (f.size() != 4) throw Error(Errc::kParse, "bad report row: " + line);
    if (f[0] == "all") continue;  // derived
    const auto l = static_cast<std::size_t>(textio::parse_int(f[0]));
    if (l >= kNoveltyLevels) throw Error(Errc::kParse, "bad level in report row: " + line);
    if (f[1] == "count") {
      r.counts[l] = static_cast<std::size_t>(textio::parse_int(f[3]));
    } else {
      const auto ki = cutoff_index(static_cast<int>(textio::parse_int(f[2])));
      (f[1] == "hr" ? r.hr : r.ndcg)[l][ki] = textio::parse_double(f[3]);
    }
  }
  if (!header) throw Error(Errc::kParse, "report is missing its partition header");
  return r;
}

std::string report_json(const StratifiedReport& r, const LiftTable* lift) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["partition"] = textio::hex64(r.partition);
  j["sampled"] = r.sampled;
  j["episodes"] = r.total();
  auto opt = [](const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); };
  for (std::size_t l = 0; l < kNoveltyLevels; ++l) {
    ordered_json lv;
    lv["count"] = r.counts[l];
    for (std::size_t ki = 0; ki < kCutoffs.size(); ++ki) {
      const auto k = std::to_string(kCutoffs[ki]);
      lv["hr@" + k] = r.hr[l][ki];
      lv["ndcg@" + k] = r.ndcg[l][ki];
      if (lift) {
        lv["lift_hr@" + k] = opt(lift->hr[l][ki]);
        lv["lift_ndcg@" + k] = opt(lift->ndcg[l][ki]);
      }
    }
    j["levels"].push_back(lv);
  }
  ordered_json all;
  for (std::size_t ki = 0; ki < kCutoffs.size(); ++ki) {
    const auto k = std::to_string(kCutoffs[ki]);
    all["hr@" + k] = r.overall_hr(ki);
    all["ndcg@" + k] = r.overall_ndcg(ki);
    if (lift) {
      all["lift_hr@" + k] = opt(lift->overall_hr[ki]);
      all["lift_ndcg@" + k] = opt(lift->overall_ndcg[ki]);
    }
  }
  j["overall"] = all;
  return j.dump(2) + "\n";
}

void write_lift_table(std::ostream& out, const LiftTable& lift) {
  auto cell = [](const std::optional<double>& v) { return v ? textio::format_double(*v) : std::string("NA"); };
  out << "level,metric,k,lift\n";
  for (std::size_t l = 0; l < kNoveltyLevels; ++l)
    for (std::size_t ki = 0; ki < kCutoffs.size(); ++ki) {
      out << l << ",hr," << kCutoffs[ki] << "," << cell(lift.hr[l][ki]) << "\n";
      out << l << ",ndcg," << kCutoffs[ki] << "," << cell(lift.ndcg[l][ki]) << "\n";
    }
  for (std::size_t ki = 0; ki < kCutoffs.size(); ++ki) {
    out << "all,hr," << kCutoffs[ki] << "," << cell(lift.overall_hr[ki]) << "\n";
    out << "all,ndcg," << kCutoffs[ki] << "," << cell(lift.overall_ndcg[ki]) << "\n";
  }
}

}  // namespace semrl
