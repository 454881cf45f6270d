#include "semrl/a2po.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "semrl/errors.hpp"
#include "semrl/rng.hpp"
#include "semrl/textio.hpp"

namespace semrl {

std::string_view to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::kBusinessOnly: return "business_only";
    case TrainMode::kRewardSum: return "reward_sum";
    case TrainMode::kAdvSum: return "adv_sum";
    case TrainMode::kGateOnly: return "gate_only";
    case TrainMode::kMagnitudeOnly: return "magnitude_only";
    case TrainMode::kFull: return "full";
  }
  return "?";
}

TrainMode parse_train_mode(std::string_view name) {
  for (auto m : {TrainMode::kBusinessOnly, TrainMode::kRewardSum, TrainMode::kAdvSum, TrainMode::kGateOnly,
                 TrainMode::kMagnitudeOnly, TrainMode::kFull})
    if (to_string(m) == name) return m;
  throw Error(Errc::kConfig, "unknown training mode '" + std::string(name) + "'");
}

std::optional<FusionMode> fusion_mode_of(TrainMode mode) {
  switch (mode) {
    case TrainMode::kBusinessOnly: return std::nullopt;
    case TrainMode::kRewardSum: return FusionMode::kRewardSum;
    case TrainMode::kAdvSum: return FusionMode::kAdvSum;
    case TrainMode::kGateOnly: return FusionMode::kGateOnly;
    case TrainMode::kMagnitudeOnly: return FusionMode::kMagnitudeOnly;
    case TrainMode::kFull: return FusionMode::kFull;
  }
  return std::nullopt;
}

SemanticReward::SemanticReward(const AspectScorer& scorer, const Catalog& catalog, const ContextIndex& contexts,
                               const AggregatorPolicy* aggregator, JudgeCache* cache)
    : scorer_(&scorer), catalog_(&catalog), contexts_(&contexts), aggregator_(aggregator), cache_(cache) {}

const WeightVector& SemanticReward::weights(UserId user) {
  auto it = weights_.find(user);
  if (it != weights_.end()) return it->second;
  WeightVector w;
  if (aggregator_) {
    w = aggregator_->expected_weights(contexts_->features(user));
  } else {
    const int dims = contexts_->spec().n_tags > 0 ? 4 : 3;
    w.w.assign(static_cast<std::size_t>(dims), 1.0 / dims);
  }
  return weights_.emplace(user, std::move(w)).first->second;
}

double SemanticReward::operator()(UserId user, ItemId item) {
  const UserContext& ctx = contexts_->context(user);
  const Item& it = catalog_->item(item);
  const AspectScores s = cache_ ? cache_->get_or_score(*scorer_, ctx, it) : scorer_->score(ctx, it);
  return holistic_score(weights(user), s);
}

StepDiagnostics a2po_train_step(GeneratorPolicy& policy, Optimizer& optimizer, std::span<const BatchEntry> batch,
                                const ContextIndex& contexts, const Catalog& catalog, const Codebook& codebook,
                                SemanticReward* semantic, const A2poStepConfig& config, std::uint64_t seed) {
  config.fusion.validate();
  config.business.validate();
  if (batch.empty()) throw Error(Errc::kEmptyDataset, "training step on an empty batch");
  if (config.inner_epochs < 1) throw Error(Errc::kConfig, "inner_epochs must be >= 1");
  const bool uses_judge = config.mode != TrainMode::kBusinessOnly;
  const auto fmode = fusion_mode_of(config.mode);

  StepDiagnostics diag;
  std::vector<RolloutGroup> groups;
  groups.reserve(batch.size());
  std::vector<AdvantagePair> judged_pairs;
  std::size_t n_judged = 0;
  std::size_t n_candidates = 0;
  double lambda_sum = 0.0;
  std::size_t gate_closed = 0;
  double biz_sum = 0.0;

  std::vector<double> r_biz, r_sem, mixed;
  for (const BatchEntry& entry : batch) {
    const Episode& ep = *entry.episode;
    const UserId user = ep.context.user_id;
    RolloutGroup g;
    g.features = contexts.features(user);
    g.rollouts = sample_group(policy, g.features, codebook, config.group_size,
                              derive_seed(seed, {static_cast<std::uint64_t>(user)}));
    r_biz.clear();
    for (const auto& r : g.rollouts) {
      r_biz.push_back(business_reward(config.business, r.item_id, ep.target_item, catalog));
      biz_sum += r_biz.back();
    }
    n_candidates += g.rollouts.size();

    const bool judged = uses_judge && entry.judged;
    if (judged && !semantic) throw Error(Errc::kInvalidArgument, "judged episode without a semantic reward");
    const auto a_biz = standardize_group(r_biz, config.fusion.std_guard);
    if (!judged) {
      g.advantages = a_biz;
      groups.push_back(std::move(g));
      continue;
    }
    ++n_judged;
    r_sem.clear();
    for (const auto& r : g.rollouts) r_sem.push_back((*semantic)(user, r.item_id));
    const auto a_sem = standardize_group(r_sem, config.fusion.std_guard);
    for (std::size_t i = 0; i < a_biz.size(); ++i) judged_pairs.push_back({a_biz[i], a_sem[i]});

    if (*fmode == FusionMode::kRewardSum) {
      mixed.clear();
      for (std::size_t i = 0; i < r_biz.size(); ++i) mixed.push_back(r_biz[i] + config.fusion.alpha * r_sem[i]);
      g.advantages = standardize_group(mixed, config.fusion.std_guard);
    } else {
      g.advantages.resize(a_biz.size());
      for (std::size_t i = 0; i < a_biz.size(); ++i) {
        const auto f = fuse({a_biz[i], a_sem[i]}, config.fusion);
        g.advantages[i] = f.a_fused;
        lambda_sum += f.lambda;
        gate_closed += f.lambda == 0.0 ? 1 : 0;
      }
    }
    groups.push_back(std::move(g));
  }

  std::vector<double> grad(policy.num_params());
  for (int inner = 0; inner < config.inner_epochs; ++inner) {
    const double obj = surrogate_objective(policy, codebook, groups, config.surrogate, grad);
    if (inner == 0) {
      diag.objective = obj;
      double n2 = 0.0;
      for (double v : grad) n2 += v * v;
      diag.grad_norm = std::sqrt(n2);
    }
    optimizer.ascend(policy.params(), grad);
  }

  diag.judged_fraction = static_cast<double>(n_judged) / static_cast<double>(batch.size());
  diag.mean_business_reward = biz_sum / static_cast<double>(n_candidates);
  if (!judged_pairs.empty()) {
    diag.consistency_rate = consistency_rate(judged_pairs);
    if (*fmode != FusionMode::kRewardSum) {
      diag.mean_lambda = lambda_sum / static_cast<double>(judged_pairs.size());
      diag.gate_close_rate = static_cast<double>(gate_closed) / static_cast<double>(judged_pairs.size());
    }
  }
  return diag;
}

// ---------------------------------------------------------------------------

A2poTrainer::A2poTrainer(const World& world, const ContextIndex& contexts, std::vector<const Episode*> train,
                         SemanticReward* semantic, GeneratorPolicy policy, Optimizer optimizer, TrainerConfig config)
    : world_(&world),
      contexts_(&contexts),
      train_(std::move(train)),
      semantic_(semantic),
      policy_(std::move(policy)),
      optimizer_(std::move(optimizer)),
      config_(std::move(config)) {
  if (train_.empty()) throw Error(Errc::kEmptyDataset, "no training episodes");
  if (config_.batch_size < 1 || config_.epochs < 0 || config_.refresh_interval < 1)
    throw Error(Errc::kConfig, "batch_size and refresh_interval must be >= 1, epochs >= 0");
  if (config_.p < 0 || config_.p > 1) throw Error(Errc::kConfig, "p must lie in [0, 1]");
}

int A2poTrainer::steps_per_epoch() const {
  return static_cast<int>((train_.size() + static_cast<std::size_t>(config_.batch_size) - 1) /
                          static_cast<std::size_t>(config_.batch_size));
}

std::vector<std::size_t> A2poTrainer::epoch_order(int epoch) const {
  std::vector<std::size_t> order(train_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = make_rng(config_.seed, {0x0de7, static_cast<std::uint64_t>(epoch)});
  // Fisher-Yates with our own index draw so the order does not depend on the
  // standard library's shuffle implementation.
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  return order;
}

StepDiagnostics A2poTrainer::step() {
  if (done()) throw Error(Errc::kInvalidArgument, "training already finished");
  const int spe = steps_per_epoch();
  const int epoch = step_ / spe;
  const int pos = step_ % spe;
  if (epoch != cached_epoch_) {
    order_ = epoch_order(epoch);
    mask_ = judged_subset(train_.size(), config_.p, derive_seed(config_.seed, {0x3a5c, static_cast<std::uint64_t>(epoch)}));
    cached_epoch_ = epoch;
  }
  if (step_ % config_.refresh_interval == 0) policy_.refresh_old();

  std::vector<BatchEntry> batch;
  const std::size_t begin = static_cast<std::size_t>(pos) * static_cast<std::size_t>(config_.batch_size);
  const std::size_t end = std::min(train_.size(), begin + static_cast<std::size_t>(config_.batch_size));
  for (std::size_t i = begin; i < end; ++i) batch.push_back({train_[order_[i]], static_cast<bool>(mask_[order_[i]])});

  const auto diag = a2po_train_step(policy_, optimizer_, batch, *contexts_, world_->catalog, world_->codebook,
                                    semantic_, config_.step,
                                    derive_seed(config_.seed, {0x57e9, static_cast<std::uint64_t>(step_)}));
  ++step_;
  return diag;
}

void A2poTrainer::save_checkpoint(const std::filesystem::path& dir) const {
  std::ostringstream pol, opt;
  policy_.save(pol);
  optimizer_.save(opt);
  textio::write_file(dir / "generator.txt", pol.str());
  textio::write_file(dir / "optimizer.txt", opt.str());
  textio::write_file(dir / "state.txt", "step " + std::to_string(step_) + "\n");
}

void A2poTrainer::load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream pol(dir / "generator.txt"), opt(dir / "optimizer.txt"), st(dir / "state.txt");
  if (!pol || !opt || !st) throw Error(Errc::kIo, "incomplete checkpoint in " + dir.string());
  auto loaded = GeneratorPolicy::load(pol);
  if (loaded.num_params() != policy_.num_params())
    throw Error(Errc::kResumeMismatch, "checkpoint generator shape differs from the configured one");
  policy_ = std::move(loaded);
  optimizer_ = Optimizer::load(opt);
  std::string key, value;
  st >> key >> value;
  if (key != "step") throw Error(Errc::kParse, "bad checkpoint state file");
  step_ = static_cast<int>(textio::parse_int(value));
  cached_epoch_ = -1;
}

std::string log_header() {
  return "step, objective, mean_lambda, gate_close_rate, consistency_rate, judged_fraction, grad_norm";
}

std::string format_log_line(int step, const StepDiagnostics& d) {
  auto f = [](double v) { return std::isnan(v) ? std::string("nan") : textio::format_double(v); };
  return std::to_string(step) + ", " + f(d.objective) + ", " + f(d.mean_lambda) + ", " + f(d.gate_close_rate) + ", " +
         f(d.consistency_rate) + ", " + f(d.judged_fraction) + ", " + f(d.grad_norm);
}

}  // namespace semrl
