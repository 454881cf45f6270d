#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace semrl {

/// Group-relative advantages: (r - mean) / (population_std + std_guard).
/// A group of identical rewards maps to exact zeros. Requires size >= 2.
std::vector<double> standardize_group(std::span<const double> rewards, double std_guard = 1e-8);

/// Sign with sign(0) = 0.
inline int sign_of(double v) { return (v > 0) - (v < 0); }

/// Dual-consistency coefficient: the sign gate times the magnitude ratio
/// min(|a|,|b|) / (max(|a|,|b|) + epsilon).
double compute_lambda(double a_biz, double a_sem, double epsilon = 1e-8);

enum class FusionMode { kRewardSum, kAdvSum, kGateOnly, kMagnitudeOnly, kFull };

std::string_view to_string(FusionMode mode);
FusionMode parse_fusion_mode(std::string_view name);

struct FusionConfig {
  FusionMode mode = FusionMode::kFull;
  double alpha = 1.0;  // reward_sum mixing weight
  double epsilon = 1e-8;
  double std_guard = 1e-8;

  void validate() const;
};

struct AdvantagePair {
  double a_biz = 0.0;
  std::optional<double> a_sem;  // absent for unjudged episodes
};

struct FusedAdvantage {
  double lambda = 0.0;
  double a_fused = 0.0;
};

/// Advantage-space fusion A = a_biz + lambda * a_sem, with lambda chosen by
/// the mode: full uses compute_lambda, gate_only the bare sign indicator,
/// magnitude_only the bare ratio, adv_sum 1. An absent a_sem always gives
/// lambda = 0. reward_sum never reaches this function; calling it with that
/// mode is an error.
FusedAdvantage fuse(const AdvantagePair& a, const FusionConfig& config);

/// Share of pairs with present a_sem whose signs agree (sign(0) = 0).
/// Throws NoJudgedPairs if none is present.
double consistency_rate(std::span<const AdvantagePair> pairs);

}  // namespace semrl
