#include "semrl/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "semrl/errors.hpp"

namespace semrl {

std::vector<double> standardize_group(std::span<const double> rewards, double std_guard) {
  if (rewards.size() < 2) throw Error(Errc::kGroupTooSmall, "standardization needs a group of at least 2");
  const auto n = static_cast<double>(rewards.size());
  std::vector<double> out(rewards.size(), 0.0);
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards.front(); })) return out;
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / (sd + std_guard);
  return out;
}

double compute_lambda(double a_biz, double a_sem, double epsilon) {
  if (!(epsilon > 0)) throw Error(Errc::kInvalidArgument, "epsilon must be positive");
  if (sign_of(a_biz) != sign_of(a_sem)) return 0.0;
  const double x = std::abs(a_biz);
  const double y = std::abs(a_sem);
  return std::min(x, y) / (std::max(x, y) + epsilon);
}

std::string_view to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::kRewardSum: return "reward_sum";
    case FusionMode::kAdvSum: return "adv_sum";
    case FusionMode::kGateOnly: return "gate_only";
    case FusionMode::kMagnitudeOnly: return "magnitude_only";
    case FusionMode::kFull: return "full";
  }
  return "?";
}

FusionMode parse_fusion_mode(std::string_view name) {
  for (auto m : {FusionMode::kRewardSum, FusionMode::kAdvSum, FusionMode::kGateOnly, FusionMode::kMagnitudeOnly,
                 FusionMode::kFull})
    if (to_string(m) == name) return m;
  throw Error(Errc::kConfig, "unknown fusion mode '" + std::string(name) + "'");
}

void FusionConfig::validate() const {
  if (!(epsilon > 0)) throw Error(Errc::kConfig, "fusion epsilon must be > 0");
  if (!(std_guard > 0)) throw Error(Errc::kConfig, "std_guard must be > 0");
}

FusedAdvantage fuse(const AdvantagePair& a, const FusionConfig& config) {
  FusedAdvantage out;
  if (!a.a_sem) {
    out.a_fused = a.a_biz;
    return out;
  }
  const double b = a.a_biz;
  const double s = *a.a_sem;
  switch (config.mode) {
    case FusionMode::kFull: out.lambda = compute_lambda(b, s, config.epsilon); break;
    case FusionMode::kGateOnly: out.lambda = sign_of(b) == sign_of(s) ? 1.0 : 0.0; break;
    case FusionMode::kMagnitudeOnly:
      out.lambda = std::min(std::abs(b), std::abs(s)) / (std::max(std::abs(b), std::abs(s)) + config.epsilon);
      break;
    case FusionMode::kAdvSum: out.lambda = 1.0; break;
    case FusionMode::kRewardSum:
      throw Error(Errc::kInvalidArgument, "reward_sum mixes rewards before standardization; fuse does not apply");
  }
  out.a_fused = b + out.lambda * s;
  return out;
}

double consistency_rate(std::span<const AdvantagePair> pairs) {
  std::size_t present = 0;
  std::size_t agree = 0;
  for (const auto& p : pairs) {
    if (!p.a_sem) continue;
    ++present;
    if (sign_of(p.a_biz) == sign_of(*p.a_sem)) ++agree;
  }
  if (present == 0) throw Error(Errc::kNoJudgedPairs, "no pair carries a semantic advantage");
  return static_cast<double>(agree) / static_cast<double>(present);
}

}  // namespace semrl
