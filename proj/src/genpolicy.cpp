#include "semrl/genpolicy.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <string>

#include "semrl/errors.hpp"
#include "semrl/rng.hpp"
#include "semrl/textio.hpp"

namespace semrl {

void log_softmax(std::vector<double>& v) {
  if (v.empty()) return;
  const double mx = *std::max_element(v.begin(), v.end());
  double z = 0.0;
  for (double x : v) z += std::exp(x - mx);
  const double lz = mx + std::log(z);
  for (double& x : v) x -= lz;
}

GeneratorPolicy::GeneratorPolicy(const Codebook& codebook, std::size_t input_dim, int embed_dim, std::uint64_t seed,
                                 double init_scale)
    : input_dim_(input_dim),
      embed_dim_(embed_dim),
      levels_(codebook.levels()),
      codebook_size_(codebook.codebook_size()),
      num_nodes_(codebook.num_nodes()) {
  if (embed_dim < 1 || input_dim < 1) throw Error(Errc::kInvalidArgument, "generator needs positive dimensions");
  current_.assign(bias_offset(static_cast<std::int32_t>(num_nodes_)), 0.0);
  Rng rng = make_rng(seed, {0x9e4});
  std::normal_distribution<double> normal(0.0, init_scale);
  // biases stay at zero
  for (std::size_t i = 0; i < b_offset(); ++i) current_[i] = normal(rng);
  for (std::size_t i = emb_offset(0, 0); i < bias_offset(0); ++i) current_[i] = normal(rng);
  old_ = current_;
  reference_ = current_;
}

std::span<const double> GeneratorPolicy::params(Which which) const {
  switch (which) {
    case Which::kOld: return old_;
    case Which::kReference: return reference_;
    case Which::kCurrent: break;
  }
  return current_;
}

std::size_t GeneratorPolicy::emb_offset(int level, Token t) const {
  return b_offset() + static_cast<std::size_t>(embed_dim_) +
         static_cast<std::size_t>(level * codebook_size_ + t) * static_cast<std::size_t>(embed_dim_);
}

std::size_t GeneratorPolicy::out_offset(std::int32_t node) const {
  return emb_offset(levels_ - 1, 0) + static_cast<std::size_t>(node) * static_cast<std::size_t>(embed_dim_);
}

std::size_t GeneratorPolicy::bias_offset(std::int32_t node) const {
  return out_offset(static_cast<std::int32_t>(num_nodes_)) + static_cast<std::size_t>(node);
}

void GeneratorPolicy::check_codebook(const Codebook& codebook) const {
  if (codebook.levels() != levels_ || codebook.codebook_size() != codebook_size_ ||
      codebook.num_nodes() != num_nodes_)
    throw Error(Errc::kDimensionMismatch, "codebook shape differs from the one the generator was built for");
}

std::vector<double> GeneratorPolicy::encode(std::span<const double> p, std::span<const double> x) const {
  if (x.size() != input_dim_) throw Error(Errc::kDimensionMismatch, "generator input has wrong dimension");
  std::vector<double> s(static_cast<std::size_t>(embed_dim_));
  for (int e = 0; e < embed_dim_; ++e) {
    const double* w = &p[static_cast<std::size_t>(e) * input_dim_];
    double v = p[b_offset() + static_cast<std::size_t>(e)];
    for (std::size_t j = 0; j < input_dim_; ++j) v += w[j] * x[j];
    s[static_cast<std::size_t>(e)] = std::tanh(v);
  }
  return s;
}

void GeneratorPolicy::child_logits(std::span<const double> p, const Codebook& codebook, std::int32_t node,
                                   std::span<const double> h, std::vector<double>& out) const {
  const auto kids = codebook.children(node);
  out.resize(kids.size());
  const auto E = static_cast<std::size_t>(embed_dim_);
  for (std::size_t i = 0; i < kids.size(); ++i) {
    const double* o = &p[out_offset(kids[i])];
    double v = p[bias_offset(kids[i])];
    for (std::size_t e = 0; e < E; ++e) v += o[e] * h[e];
    out[i] = v;
  }
}

namespace {

void add_embedding(const GeneratorPolicy& g, std::span<const double> p, int level, Token t, std::vector<double>& h) {
  const double* emb = &p[g.emb_offset(level, t)];
  for (std::size_t e = 0; e < h.size(); ++e) h[e] += emb[e];
}

std::size_t child_slot(const Codebook& codebook, std::int32_t node, std::int32_t child) {
  const auto kids = codebook.children(node);
  return static_cast<std::size_t>(std::lower_bound(kids.begin(), kids.end(), child) - kids.begin());
}

}  // namespace

std::vector<double> GeneratorPolicy::next_probs(std::span<const double> x, std::span<const Token> prefix,
                                                const Codebook& codebook, Which which) const {
  check_codebook(codebook);
  if (static_cast<int>(prefix.size()) >= levels_) throw Error(Errc::kInvalidArgument, "prefix is already complete");
  const auto node = codebook.node_of(prefix);
  if (!node) throw Error(Errc::kInvalidSid, "dead prefix");
  const auto p = params(which);
  auto h = encode(p, x);
  for (std::size_t k = 0; k < prefix.size(); ++k) add_embedding(*this, p, static_cast<int>(k), prefix[k], h);
  std::vector<double> lg;
  child_logits(p, codebook, *node, h, lg);
  log_softmax(lg);
  for (double& v : lg) v = std::exp(v);
  return lg;
}

double GeneratorPolicy::log_prob(std::span<const double> x, const SemanticId& sid, const Codebook& codebook,
                                 Which which) const {
  check_codebook(codebook);
  if (!codebook.is_valid(sid)) throw Error(Errc::kInvalidSid, "sid " + to_string(sid) + " is not in the codebook");
  const auto p = params(which);
  auto h = encode(p, x);
  std::int32_t node = codebook.root();
  std::vector<double> lg;
  double lp = 0.0;
  for (int t = 0; t < levels_; ++t) {
    const Token tok = sid.tokens[static_cast<std::size_t>(t)];
    const auto next = codebook.child(node, tok);
    child_logits(p, codebook, node, h, lg);
    log_softmax(lg);
    lp += lg[child_slot(codebook, node, next)];
    if (t + 1 < levels_) add_embedding(*this, p, t, tok, h);
    node = next;
  }
  return lp;
}

std::vector<std::pair<ItemId, double>> GeneratorPolicy::all_log_probs(std::span<const double> x,
                                                                      const Codebook& codebook, Which which) const {
  check_codebook(codebook);
  const auto p = params(which);
  std::vector<std::pair<ItemId, double>> out;
  out.reserve(codebook.num_items());
  const auto s = encode(p, x);
  // depth-first so the output follows lexicographic SID order
  struct Frame {
    std::int32_t node;
    double lp;
    std::vector<double> h;
  };
  std::vector<Frame> stack;
  stack.push_back({codebook.root(), 0.0, s});
  std::vector<double> lg;
  while (!stack.empty()) {
    Frame f = std::move(stack.back());
    stack.pop_back();
    const int depth = codebook.depth_of(f.node);
    if (depth == levels_) {
      out.emplace_back(codebook.item_at(f.node), f.lp);
      continue;
    }
    child_logits(p, codebook, f.node, f.h, lg);
    log_softmax(lg);
    const auto kids = codebook.children(f.node);
    for (std::size_t i = kids.size(); i-- > 0;) {
      Frame c{kids[i], f.lp + lg[i], f.h};
      if (depth + 1 < levels_) add_embedding(*this, p, depth, codebook.token_of(kids[i]), c.h);
      stack.push_back(std::move(c));
    }
  }
  return out;
}

void GeneratorPolicy::save(std::ostream& out) const {
  out << "semrl-generator v1\n";
  out << "input_dim " << input_dim_ << "\n";
  out << "embed_dim " << embed_dim_ << "\n";
  out << "levels " << levels_ << "\n";
  out << "codebook_size " << codebook_size_ << "\n";
  out << "num_nodes " << num_nodes_ << "\n";
  textio::write_array(out, "current", current_);
  textio::write_array(out, "old", old_);
  textio::write_array(out, "reference", reference_);
}

GeneratorPolicy GeneratorPolicy::load(std::istream& in) {
  std::string magic, ver;
  in >> magic >> ver;
  if (magic != "semrl-generator" || ver != "v1") throw Error(Errc::kParse, "unsupported generator checkpoint");
  auto field = [&](const char* key) {
    std::string k, v;
    in >> k >> v;
    if (k != key) throw Error(Errc::kParse, std::string("expected '") + key + "' in generator checkpoint");
    return textio::parse_int(v);
  };
  GeneratorPolicy g;
  g.input_dim_ = static_cast<std::size_t>(field("input_dim"));
  g.embed_dim_ = static_cast<int>(field("embed_dim"));
  g.levels_ = static_cast<int>(field("levels"));
  g.codebook_size_ = static_cast<int>(field("codebook_size"));
  g.num_nodes_ = static_cast<std::size_t>(field("num_nodes"));
  g.current_ = textio::read_array(in, "current");
  g.old_ = textio::read_array(in, "old");
  g.reference_ = textio::read_array(in, "reference");
  const std::size_t n = g.bias_offset(static_cast<std::int32_t>(g.num_nodes_));
  if (g.current_.size() != n || g.old_.size() != n || g.reference_.size() != n)
    throw Error(Errc::kParse, "generator checkpoint arrays do not match the recorded shape");
  return g;
}

std::vector<Rollout> sample_group(const GeneratorPolicy& policy, std::span<const double> x, const Codebook& codebook,
                                  int group_size, std::uint64_t seed) {
  if (group_size < 2) throw Error(Errc::kGroupTooSmall, "group size must be >= 2");
  const auto old_p = policy.params(GeneratorPolicy::Which::kOld);
  const auto cur_p = policy.params(GeneratorPolicy::Which::kCurrent);
  const bool same = std::equal(old_p.begin(), old_p.end(), cur_p.begin(), cur_p.end());
  const auto s = policy.encode(old_p, x);
  Rng rng(seed);
  std::vector<Rollout> out;
  out.reserve(static_cast<std::size_t>(group_size));
  std::vector<double> lg;
  for (int g = 0; g < group_size; ++g) {
    Rollout r;
    auto h = s;
    std::int32_t node = codebook.root();
    for (int t = 0; t < policy.levels(); ++t) {
      policy.child_logits(old_p, codebook, node, h, lg);
      log_softmax(lg);
      const auto kids = codebook.children(node);
      const double u = uniform01(rng);
      double acc = 0.0;
      std::size_t pick = kids.size() - 1;
      for (std::size_t i = 0; i < kids.size(); ++i) {
        acc += std::exp(lg[i]);
        if (u < acc) {
          pick = i;
          break;
        }
      }
      r.log_prob_old += lg[pick];
      node = kids[pick];
      const Token tok = codebook.token_of(node);
      r.sid.tokens.push_back(tok);
      if (t + 1 < policy.levels()) add_embedding(policy, old_p, t, tok, h);
    }
    r.item_id = codebook.item_at(node);
    r.log_prob_current = same ? r.log_prob_old : policy.log_prob(x, r.sid, codebook);
    out.push_back(std::move(r));
  }
  return out;
}

double surrogate_objective(const GeneratorPolicy& policy, const Codebook& codebook,
                           std::span<const RolloutGroup> groups, const SurrogateConfig& config,
                           std::span<double> grad) {
  if (!(config.delta > 0)) throw Error(Errc::kInvalidArgument, "clip threshold must be > 0");
  if (config.beta_gen < 0) throw Error(Errc::kInvalidArgument, "beta_gen must be >= 0");
  const bool want_grad = !grad.empty();
  if (want_grad) {
    if (grad.size() != policy.num_params()) throw Error(Errc::kDimensionMismatch, "gradient buffer size");
    std::fill(grad.begin(), grad.end(), 0.0);
  }
  std::size_t n_total = 0;
  for (const auto& g : groups) {
    if (g.rollouts.size() != g.advantages.size())
      throw Error(Errc::kLengthMismatch, "rollouts and advantages differ in size");
    n_total += g.rollouts.size();
  }
  if (n_total == 0) return 0.0;

  const auto P = policy.params(GeneratorPolicy::Which::kCurrent);
  const auto R = policy.params(GeneratorPolicy::Which::kReference);
  const int T = policy.levels();
  const auto E = static_cast<std::size_t>(policy.embed_dim());
  const double inv_n = 1.0 / static_cast<double>(n_total);
  const double kcoef = config.beta_gen * inv_n;
  const bool use_kl = config.beta_gen > 0;

  struct StepCache {
    std::int32_t node;
    std::size_t slot;
    std::vector<double> h;
    std::vector<double> lp;  // log-probs over children
    std::vector<double> lq;  // reference log-probs
    double kl;
  };
  std::vector<StepCache> steps(static_cast<std::size_t>(T));
  std::vector<double> ds(E), dh(E), dlogit;

  double objective = 0.0;
  for (const auto& g : groups) {
    const auto s = policy.encode(P, g.features);
    const auto s_ref = use_kl ? policy.encode(R, g.features) : std::vector<double>{};
    std::fill(ds.begin(), ds.end(), 0.0);
    for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
      const Rollout& ro = g.rollouts[i];
      const double A = g.advantages[i];
      if (static_cast<int>(ro.sid.tokens.size()) != T) throw Error(Errc::kInvalidSid, "rollout sid has wrong length");
      auto h = s;
      auto h_ref = s_ref;
      std::int32_t node = codebook.root();
      double lp_total = 0.0;
      for (int t = 0; t < T; ++t) {
        auto& st = steps[static_cast<std::size_t>(t)];
        const Token tok = ro.sid.tokens[static_cast<std::size_t>(t)];
        const auto next = codebook.child(node, tok);
        if (next == Codebook::kNoNode) throw Error(Errc::kInvalidSid, "rollout sid leaves the trie");
        st.node = node;
        st.slot = child_slot(codebook, node, next);
        st.h = h;
        policy.child_logits(P, codebook, node, h, st.lp);
        log_softmax(st.lp);
        lp_total += st.lp[st.slot];
        st.kl = 0.0;
        if (use_kl) {
          policy.child_logits(R, codebook, node, h_ref, st.lq);
          log_softmax(st.lq);
          for (std::size_t j = 0; j < st.lp.size(); ++j) st.kl += std::exp(st.lp[j]) * (st.lp[j] - st.lq[j]);
          objective -= kcoef * st.kl;
        }
        if (t + 1 < T) {
          add_embedding(policy, P, t, tok, h);
          if (use_kl) add_embedding(policy, R, t, tok, h_ref);
        }
        node = next;
      }
      const double rho = std::exp(lp_total - ro.log_prob_old);
      const double clipped = std::clamp(rho, 1.0 - config.delta, 1.0 + config.delta);
      objective += inv_n * std::min(rho * A, clipped * A);
      if (!want_grad) continue;

      // Only the unclipped branch carries gradient; at equality it is the one taken.
      const bool clip_active = (A > 0 && rho > 1.0 + config.delta) || (A < 0 && rho < 1.0 - config.delta);
      const double c = clip_active ? 0.0 : inv_n * rho * A;
      if (c == 0.0 && !use_kl) continue;

      for (int t = 0; t < T; ++t) {
        const auto& st = steps[static_cast<std::size_t>(t)];
        const auto kids = codebook.children(st.node);
        dlogit.assign(kids.size(), 0.0);
        for (std::size_t j = 0; j < kids.size(); ++j) {
          const double pj = std::exp(st.lp[j]);
          double d = c * ((j == st.slot ? 1.0 : 0.0) - pj);
          if (use_kl) d -= kcoef * pj * (st.lp[j] - st.lq[j] - st.kl);
          dlogit[j] = d;
        }
        std::fill(dh.begin(), dh.end(), 0.0);
        for (std::size_t j = 0; j < kids.size(); ++j) {
          const double d = dlogit[j];
          if (d == 0.0) continue;
          const std::size_t oo = policy.out_offset(kids[j]);
          for (std::size_t e = 0; e < E; ++e) {
            grad[oo + e] += d * st.h[e];
            dh[e] += d * P[oo + e];
          }
          grad[policy.bias_offset(kids[j])] += d;
        }
        for (std::size_t e = 0; e < E; ++e) ds[e] += dh[e];
        for (int k = 0; k < t; ++k) {
          const std::size_t eo = policy.emb_offset(k, ro.sid.tokens[static_cast<std::size_t>(k)]);
          for (std::size_t e = 0; e < E; ++e) grad[eo + e] += dh[e];
        }
      }
    }
    if (!want_grad) continue;
    const std::size_t n = policy.input_dim();
    for (std::size_t e = 0; e < E; ++e) {
      const double dpre = ds[e] * (1.0 - s[e] * s[e]);
      if (dpre == 0.0) continue;
      double* gw = &grad[e * n];
      for (std::size_t j = 0; j < n; ++j) gw[j] += dpre * g.features[j];
      grad[policy.b_offset() + e] += dpre;
    }
  }
  return objective;
}

}  // namespace semrl
