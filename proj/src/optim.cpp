#include "semrl/optim.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "semrl/errors.hpp"
#include "semrl/textio.hpp"

namespace semrl {

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::kAdam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer_kind(std::string_view name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd") return OptimizerKind::kSgd;
  throw Error(Errc::kConfig, "unknown optimizer '" + std::string(name) + "'");
}

Optimizer::Optimizer(OptimizerKind kind, std::size_t n_params, double step_size, double beta1, double beta2,
                     double eps)
    : kind_(kind), step_size_(step_size), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (!(step_size > 0)) throw Error(Errc::kConfig, "step size must be > 0");
  if (kind == OptimizerKind::kAdam) {
    m_.assign(n_params, 0.0);
    v_.assign(n_params, 0.0);
  }
}

void Optimizer::ascend(std::span<double> params, std::span<const double> grad) {
  if (params.size() != grad.size()) throw Error(Errc::kDimensionMismatch, "gradient and parameter sizes differ");
  ++t_;
  if (kind_ == OptimizerKind::kSgd) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] += step_size_ * grad[i];
    return;
  }
  if (m_.size() != params.size()) throw Error(Errc::kDimensionMismatch, "optimizer state has wrong size");
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] += step_size_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

void Optimizer::save(std::ostream& out) const {
  out << "semrl-optimizer v1\n";
  out << "kind " << to_string(kind_) << "\n";
  out << "step_size " << textio::format_double(step_size_) << "\n";
  out << "beta1 " << textio::format_double(beta1_) << "\n";
  out << "beta2 " << textio::format_double(beta2_) << "\n";
  out << "eps " << textio::format_double(eps_) << "\n";
  out << "t " << t_ << "\n";
  textio::write_array(out, "m", m_);
  textio::write_array(out, "v", v_);
}

Optimizer Optimizer::load(std::istream& in) {
  std::string magic, ver;
  in >> magic >> ver;
  if (magic != "semrl-optimizer" || ver != "v1") throw Error(Errc::kParse, "unsupported optimizer state");
  auto field = [&](const char* key) {
    std::string k, v;
    in >> k >> v;
    if (k != key) throw Error(Errc::kParse, std::string("expected '") + key + "' in optimizer state");
    return v;
  };
  Optimizer o;
  o.kind_ = parse_optimizer_kind(field("kind"));
  o.step_size_ = textio::parse_double(field("step_size"));
  o.beta1_ = textio::parse_double(field("beta1"));
  o.beta2_ = textio::parse_double(field("beta2"));
  o.eps_ = textio::parse_double(field("eps"));
  o.t_ = textio::parse_int(field("t"));
  o.m_ = textio::read_array(in, "m");
  o.v_ = textio::read_array(in, "v");
  return o;
}

}  // namespace semrl
