#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

namespace semrl {

enum class OptimizerKind { kSgd, kAdam };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(std::string_view name);

/// Gradient-ascent optimizer over a flat parameter vector. Adam keeps its
/// moment estimates here so checkpoints can resume bit-exactly.
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerKind kind, std::size_t n_params, double step_size, double beta1 = 0.9, double beta2 = 0.999,
            double eps = 1e-8);

  void ascend(std::span<double> params, std::span<const double> grad);

  OptimizerKind kind() const { return kind_; }
  double step_size() const { return step_size_; }
  std::int64_t steps() const { return t_; }

  void save(std::ostream& out) const;
  static Optimizer load(std::istream& in);

 private:
  OptimizerKind kind_ = OptimizerKind::kSgd;
  double step_size_ = 0.0;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::int64_t t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

}  // namespace semrl
