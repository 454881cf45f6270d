#include "semrl/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <sstream>

#include "semrl/errors.hpp"
#include "semrl/judge.hpp"
#include "semrl/rng.hpp"
#include "semrl/textio.hpp"

#include <json.hpp>

namespace semrl {

namespace fs = std::filesystem;

namespace {

std::string weight_source_name(WeightSource w) {
  switch (w) {
    case WeightSource::kAggregator: return "aggregator";
    case WeightSource::kUniform: return "uniform";
    case WeightSource::kLatent: return "latent";
  }
  return "?";
}

WeightSource parse_weight_source(const std::string& s) {
  if (s == "aggregator") return WeightSource::kAggregator;
  if (s == "uniform") return WeightSource::kUniform;
  if (s == "latent") return WeightSource::kLatent;
  throw Error(Errc::kConfig, "judge.weights must be aggregator, uniform or latent, got '" + s + "'");
}

}  // namespace

std::map<std::string, std::string> RunConfig::to_map() const {
  std::map<std::string, std::string> kv;
  for (const auto& [k, v] : world.to_map()) kv["world." + k] = v;
  auto d = textio::format_double;
  auto i = [](auto v) { return std::to_string(v); };
  kv["generator.embed_dim"] = i(embed_dim);
  kv["generator.init_scale"] = d(init_scale);
  kv["train.mode"] = std::string(to_string(mode));
  kv["train.epochs"] = i(epochs);
  kv["train.batch_size"] = i(batch_size);
  kv["train.optimizer"] = std::string(to_string(optimizer));
  kv["train.step_size"] = d(step_size);
  kv["train.group_size"] = i(group_size);
  kv["train.delta"] = d(delta);
  kv["train.beta_gen"] = d(beta_gen);
  kv["train.p"] = d(p);
  kv["train.refresh_interval"] = i(refresh_interval);
  kv["train.inner_epochs"] = i(inner_epochs);
  kv["train.seed"] = i(seed);
  kv["train.test_fraction"] = d(test_fraction);
  kv["train.split_seed"] = i(split_seed);
  kv["train.business_reward"] = business.mode == BusinessRewardConfig::Mode::kGraded ? "graded" : "exact";
  kv["train.graded_same_sub"] = d(business.graded_same_sub);
  kv["train.graded_same_root"] = d(business.graded_same_root);
  kv["train.eval_every"] = i(eval_every);
  kv["train.checkpoint_every"] = i(checkpoint_every);
  kv["fusion.alpha"] = d(fusion.alpha);
  kv["fusion.epsilon"] = d(fusion.epsilon);
  kv["fusion.std_guard"] = d(fusion.std_guard);
  kv["judge.weights"] = weight_source_name(weights);
  kv["judge.aggregator_path"] = aggregator_path;
  kv["aggregator.max_level"] = i(agg_max_level);
  kv["aggregator.beta"] = d(agg_beta);
  kv["aggregator.group_size"] = i(agg_group_size);
  kv["aggregator.step_size"] = d(agg_step_size);
  kv["aggregator.epochs"] = i(agg_epochs);
  kv["aggregator.batch_size"] = i(agg_batch_size);
  kv["aggregator.intra_per_user"] = i(agg_intra_per_user);
  kv["aggregator.behavioral_per_user"] = i(agg_behavioral_per_user);
  kv["aggregator.seed"] = i(agg_seed);
  kv["aggregator.holdout_fraction"] = d(agg_holdout_fraction);
  kv["eval.enumeration_budget"] = i(enumeration_budget);
  return kv;
}

RunConfig RunConfig::from_map(const std::map<std::string, std::string>& kv) {
  RunConfig c;
  std::map<std::string, std::string> world_kv = c.world.to_map();
  for (const auto& [key, value] : kv) {
    try {
      auto i = [&] { return static_cast<int>(textio::parse_int(value)); };
      auto u = [&] { return static_cast<std::uint64_t>(textio::parse_int(value)); };
      auto d = [&] { return textio::parse_double(value); };
      if (key.rfind("world.", 0) == 0) {
        const auto sub = key.substr(6);
        if (!world_kv.count(sub)) throw Error(Errc::kConfig, "unknown config key '" + key + "'");
        world_kv[sub] = value;
      } else if (key == "generator.embed_dim") c.embed_dim = i();
      else if (key == "generator.init_scale") c.init_scale = d();
      else if (key == "train.mode") c.mode = parse_train_mode(value);
      else if (key == "train.epochs") c.epochs = i();
      else if (key == "train.batch_size") c.batch_size = i();
      else if (key == "train.optimizer") c.optimizer = parse_optimizer_kind(value);
      else if (key == "train.step_size") c.step_size = d();
      else if (key == "train.group_size") c.group_size = i();
      else if (key == "train.delta") c.delta = d();
      else if (key == "train.beta_gen") c.beta_gen = d();
      else if (key == "train.p") c.p = d();
      else if (key == "train.refresh_interval") c.refresh_interval = i();
      else if (key == "train.inner_epochs") c.inner_epochs = i();
      else if (key == "train.seed") c.seed = u();
      else if (key == "train.test_fraction") c.test_fraction = d();
      else if (key == "train.split_seed") c.split_seed = u();
      else if (key == "train.business_reward") {
        if (value == "graded") c.business.mode = BusinessRewardConfig::Mode::kGraded;
        else if (value == "exact") c.business.mode = BusinessRewardConfig::Mode::kExact;
        else throw Error(Errc::kConfig, "train.business_reward must be exact or graded");
      } else if (key == "train.graded_same_sub") c.business.graded_same_sub = d();
      else if (key == "train.graded_same_root") c.business.graded_same_root = d();
      else if (key == "train.eval_every") c.eval_every = i();
      else if (key == "train.checkpoint_every") c.checkpoint_every = i();
      else if (key == "fusion.alpha") c.fusion.alpha = d();
      else if (key == "fusion.epsilon") c.fusion.epsilon = d();
      else if (key == "fusion.std_guard") c.fusion.std_guard = d();
      else if (key == "judge.weights") c.weights = parse_weight_source(value);
      else if (key == "judge.aggregator_path") c.aggregator_path = value;
      else if (key == "aggregator.max_level") c.agg_max_level = i();
      else if (key == "aggregator.beta") c.agg_beta = d();
      else if (key == "aggregator.group_size") c.agg_group_size = i();
      else if (key == "aggregator.step_size") c.agg_step_size = d();
      else if (key == "aggregator.epochs") c.agg_epochs = i();
      else if (key == "aggregator.batch_size") c.agg_batch_size = i();
      else if (key == "aggregator.intra_per_user") c.agg_intra_per_user = i();
      else if (key == "aggregator.behavioral_per_user") c.agg_behavioral_per_user = i();
      else if (key == "aggregator.seed") c.agg_seed = u();
      else if (key == "aggregator.holdout_fraction") c.agg_holdout_fraction = d();
      else if (key == "eval.enumeration_budget") c.enumeration_budget = static_cast<std::size_t>(u());
      else throw Error(Errc::kConfig, "unknown config key '" + key + "'");
    } catch (const Error& e) {
      if (e.code() == Errc::kParse) throw Error(Errc::kConfig, "bad value for '" + key + "': " + e.what());
      throw;
    }
  }
  c.world = WorldParams::from_map(world_kv);
  c.validate();
  return c;
}

void RunConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw Error(Errc::kConfig, what);
  };
  need(embed_dim >= 1, "generator.embed_dim must be >= 1");
  need(epochs >= 0, "train.epochs must be >= 0");
  need(batch_size >= 1, "train.batch_size must be >= 1");
  need(step_size > 0, "train.step_size must be > 0");
  need(group_size >= 2, "train.group_size must be >= 2");
  need(delta > 0, "train.delta must be > 0");
  need(beta_gen >= 0, "train.beta_gen must be >= 0");
  need(p >= 0 && p <= 1, "train.p must lie in [0, 1]");
  need(refresh_interval >= 1, "train.refresh_interval must be >= 1");
  need(inner_epochs >= 1, "train.inner_epochs must be >= 1");
  need(test_fraction > 0 && test_fraction < 1, "train.test_fraction must lie in (0, 1)");
  need(eval_every >= 0 && checkpoint_every >= 0, "eval_every and checkpoint_every must be >= 0");
  need(agg_max_level >= 1, "aggregator.max_level must be >= 1");
  need(agg_beta >= 0, "aggregator.beta must be >= 0");
  need(agg_group_size >= 2, "aggregator.group_size must be >= 2");
  need(agg_step_size > 0, "aggregator.step_size must be > 0");
  need(agg_epochs >= 0 && agg_batch_size >= 1, "aggregator.epochs >= 0 and batch_size >= 1");
  need(agg_holdout_fraction > 0 && agg_holdout_fraction < 1, "aggregator.holdout_fraction must lie in (0, 1)");
  fusion.validate();
  business.validate();
}

std::map<std::string, std::string> parse_config_text(const std::string& text, const std::string& origin) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = textio::trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (t.front() == '[') {
      if (t.back() != ']') throw Error(Errc::kConfig, where + ": unterminated section header");
      section = std::string(textio::trim(t.substr(1, t.size() - 2)));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) throw Error(Errc::kConfig, where + ": expected key = value");
    std::string key(textio::trim(t.substr(0, eq)));
    if (key.empty()) throw Error(Errc::kConfig, where + ": empty key");
    if (!section.empty()) key = section + "." + key;
    if (!kv.emplace(key, std::string(textio::trim(t.substr(eq + 1)))).second)
      throw Error(Errc::kConfig, where + ": duplicate key '" + key + "'");
  }
  return kv;
}

std::string format_config_text(const std::map<std::string, std::string>& kv) {
  std::string out, section;
  for (const auto& [key, value] : kv) {
    const auto dot = key.find('.');
    const std::string sec = dot == std::string::npos ? "" : key.substr(0, dot);
    const std::string name = dot == std::string::npos ? key : key.substr(dot + 1);
    if (sec != section) {
      out += (out.empty() ? "[" : "\n[") + sec + "]\n";
      section = sec;
    }
    out += name + " = " + value + "\n";
  }
  return out;
}

std::pair<std::string, std::string> parse_override(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw Error(Errc::kConfig, "override must look like key=value: " + text);
  return {std::string(textio::trim(std::string_view(text).substr(0, eq))),
          std::string(textio::trim(std::string_view(text).substr(eq + 1)))};
}

RunConfig load_run_config(const std::optional<fs::path>& file, const std::vector<std::string>& overrides) {
  std::map<std::string, std::string> kv;
  if (file) {
    if (!fs::exists(*file)) throw Error(Errc::kIo, "config file not found: " + file->string());
    kv = parse_config_text(textio::read_file(*file), file->string());
  }
  for (const auto& o : overrides) {
    auto [k, v] = parse_override(o);
    kv[k] = v;
  }
  return RunConfig::from_map(kv);
}

World generate_and_save_world(const RunConfig& config, const fs::path& dir) {
  World w = generate_world(config.world);
  w.save(dir);
  return w;
}

EpisodeSplit split_episodes(const World& world, double test_fraction, std::uint64_t seed) {
  EpisodeSplit s;
  for (const Episode& e : world.episodes) {
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(e.context.user_id)});
    (uniform01(rng) < test_fraction ? s.test : s.train).push_back(&e);
  }
  if (s.train.empty() || s.test.empty()) throw Error(Errc::kEmptyDataset, "split left an empty side");
  return s;
}

// ---------------------------------------------------------------------------

namespace {

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

AggregatorResult train_aggregator(const World& world, const RunConfig& config, const std::optional<fs::path>& out_dir) {
  const ContextIndex contexts(world);
  const OracleScorer scorer(world.catalog, world.rules, world.params.interest);
  JudgeCache cache;

  const auto pairs_all = build_preference_pairs(
      world, world.episodes, scorer,
      {config.agg_intra_per_user, config.agg_behavioral_per_user, 32}, derive_seed(config.agg_seed, {0x9a1}));
  auto is_holdout = [&](UserId u) {
    Rng rng = make_rng(config.agg_seed, {0x401d, static_cast<std::uint64_t>(u)});
    return uniform01(rng) < config.agg_holdout_fraction;
  };
  std::vector<PreferencePair> train, holdout_intra;
  for (const auto& p : pairs_all) {
    if (!is_holdout(p.user)) train.push_back(p);
    else if (p.source == PairSource::kIntra) holdout_intra.push_back(p);
  }
  if (train.empty()) throw Error(Errc::kEmptyDataset, "no preference pairs to train the aggregator on");
  if (holdout_intra.empty()) throw Error(Errc::kEmptyDataset, "no held-out preference pairs");

  AggregatorResult res;
  res.train_pairs = train.size();
  res.holdout_pairs = holdout_intra.size();
  res.policy = AggregatorPolicy(world.params.aspect_dims(), config.agg_max_level, contexts.spec().size());
  res.reference_accuracy = pairwise_accuracy(res.policy, holdout_intra, contexts, world.catalog, scorer, &cache);

  AggregatorStepConfig sc;
  sc.group_size = config.agg_group_size;
  sc.beta = config.agg_beta;
  sc.step_size = config.agg_step_size;
  sc.std_guard = config.fusion.std_guard;

  std::ostringstream log;
  log << "epoch, mean_reward, kl, grad_norm, holdout_accuracy\n";
  int step = 0;
  for (int epoch = 0; epoch < config.agg_epochs; ++epoch) {
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng = make_rng(config.agg_seed, {0x0de7, static_cast<std::uint64_t>(epoch)});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    double reward = 0.0, kl = 0.0, gn = 0.0;
    int n_steps = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(config.agg_batch_size)) {
      std::vector<PreferencePair> batch;
      for (std::size_t i = b; i < std::min(order.size(), b + static_cast<std::size_t>(config.agg_batch_size)); ++i)
        batch.push_back(train[order[i]]);
      const auto d = aggregator_train_step(res.policy, batch, contexts, world.catalog, scorer, &cache, sc,
                                           derive_seed(config.agg_seed, {0x57e9, static_cast<std::uint64_t>(step++)}));
      reward += d.mean_reward;
      kl += d.kl;
      gn += d.grad_norm;
      ++n_steps;
    }
    const double acc = pairwise_accuracy(res.policy, holdout_intra, contexts, world.catalog, scorer, &cache);
    log << epoch << ", " << textio::format_double(reward / n_steps) << ", " << textio::format_double(kl / n_steps)
        << ", " << textio::format_double(gn / n_steps) << ", " << textio::format_double(acc) << "\n";
  }
  res.holdout_accuracy = pairwise_accuracy(res.policy, holdout_intra, contexts, world.catalog, scorer, &cache);

  std::size_t users = 0, match = 0;
  for (const Episode& e : world.episodes) {
    if (!is_holdout(e.context.user_id)) continue;
    ++users;
    const auto w = res.policy.expected_weights(contexts.features(e.context.user_id));
    match += argmax(w.w) == argmax(e.context.latent_weights) ? 1 : 0;
  }
  res.argmax_match = users ? static_cast<double>(match) / static_cast<double>(users) : 0.0;

  if (out_dir) {
    std::ostringstream pol, pairs_out;
    res.policy.save(pol);
    write_pairs(pairs_out, pairs_all);
    textio::write_file(*out_dir / "aggregator.txt", pol.str());
    textio::write_file(*out_dir / "pairs.txt", pairs_out.str());
    log << "# final holdout_accuracy " << textio::format_double(res.holdout_accuracy) << " reference_accuracy "
        << textio::format_double(res.reference_accuracy) << " argmax_match " << textio::format_double(res.argmax_match)
        << "\n";
    textio::write_file(*out_dir / "logs" / "aggregator.log", log.str());
    textio::write_file(*out_dir / "config.txt", format_config_text(config.to_map()));
  }
  return res;
}

// ---------------------------------------------------------------------------

namespace {

std::string world_hashes(const fs::path& world_dir) {
  std::string out;
  std::istringstream in(textio::read_file(world_dir / "manifest.txt"));
  std::string line;
  while (std::getline(in, line))
    if (line.rfind("hash.", 0) == 0) out += "world." + line + "\n";
  return out;
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

}  // namespace

TrainResult run_training(const World& world, const fs::path& world_dir, const RunConfig& config,
                         const fs::path& run_dir, const TrainOptions& options) {
  config.validate();
  const std::string config_text = format_config_text(config.to_map());
  const fs::path ckpt_dir = run_dir / "checkpoints";
  const fs::path latest = ckpt_dir / "latest";

  bool resuming = false;
  if (options.resume && fs::exists(latest / "state.txt")) {
    if (!fs::exists(run_dir / "config.txt") || textio::read_file(run_dir / "config.txt") != config_text)
      throw Error(Errc::kResumeMismatch, "config differs from the one recorded in " + run_dir.string());
    resuming = true;
  } else {
    for (const char* sub : {"checkpoints", "logs", "reports"}) fs::remove_all(run_dir / sub);
    textio::write_file(run_dir / "config.txt", config_text);
    std::string manifest;
    manifest += "version = " + std::string(kVersion) + "\n";
    manifest += "created = " + timestamp() + "\n";
    manifest += "world_dir = " + fs::absolute(world_dir).string() + "\n";
    manifest += world_hashes(world_dir);
    manifest += "seed.world = " + std::to_string(config.world.seed) + "\n";
    manifest += "seed.train = " + std::to_string(config.seed) + "\n";
    manifest += "seed.split = " + std::to_string(config.split_seed) + "\n";
    manifest += "seed.aggregator = " + std::to_string(config.agg_seed) + "\n";
    manifest += "artifact.config = config.txt\n";
    manifest += "artifact.train_log = logs/train.log\n";
    manifest += "artifact.eval_log = logs/eval.log\n";
    manifest += "artifact.checkpoint = checkpoints/final\n";
    manifest += "artifact.report = reports/report.csv\n";
    textio::write_file(run_dir / "manifest.txt", manifest);
  }

  const auto split = split_episodes(world, config.test_fraction, config.split_seed);
  const ContextIndex contexts(world);
  const OracleScorer scorer(world.catalog, world.rules, world.params.interest);
  JudgeCache cache;

  std::optional<AggregatorPolicy> aggregator;
  if (config.mode != TrainMode::kBusinessOnly && config.weights == WeightSource::kAggregator) {
    if (!config.aggregator_path.empty()) {
      std::ifstream in(config.aggregator_path);
      if (!in) throw Error(Errc::kIo, "cannot open aggregator checkpoint " + config.aggregator_path);
      aggregator = AggregatorPolicy::load(in);
    } else {
      aggregator = train_aggregator(world, config, std::nullopt).policy;
    }
  }
  SemanticReward semantic(scorer, world.catalog, contexts, aggregator ? &*aggregator : nullptr, &cache);
  if (config.weights == WeightSource::kLatent)
    for (const Episode& e : world.episodes) semantic.set_weights(e.context.user_id, WeightVector{e.context.latent_weights});

  GeneratorPolicy policy(world.codebook, contexts.spec().size(), config.embed_dim, derive_seed(config.seed, {0x6e0}),
                         config.init_scale);
  Optimizer optimizer(config.optimizer, policy.num_params(), config.step_size);

  TrainerConfig tc;
  tc.step.mode = config.mode;
  tc.step.fusion = config.fusion;
  if (auto fm = fusion_mode_of(config.mode)) tc.step.fusion.mode = *fm;
  tc.step.group_size = config.group_size;
  tc.step.surrogate = {config.delta, config.beta_gen};
  tc.step.business = config.business;
  tc.step.inner_epochs = config.inner_epochs;
  tc.epochs = config.epochs;
  tc.batch_size = config.batch_size;
  tc.p = config.mode == TrainMode::kBusinessOnly ? 0.0 : config.p;
  tc.refresh_interval = config.refresh_interval;
  tc.seed = config.seed;
  A2poTrainer trainer(world, contexts, split.train, &semantic, std::move(policy), std::move(optimizer), tc);

  std::vector<std::string> train_log{log_header()};
  std::vector<std::string> eval_log{"epoch, hr@10, ndcg@10"};
  if (resuming) {
    trainer.load_checkpoint(latest);
    auto keep = [&](const fs::path& file, std::vector<std::string>& lines, int limit) {
      if (!fs::exists(file)) return;
      std::istringstream in(textio::read_file(file));
      std::string line;
      std::getline(in, line);  // header
      while (std::getline(in, line)) {
        if (textio::trim(line).empty()) continue;
        const auto f = textio::split(line, ',');
        if (textio::parse_int(f[0]) < limit) lines.push_back(line);
      }
    };
    keep(run_dir / "logs" / "train.log", train_log, trainer.step_index());
    keep(run_dir / "logs" / "eval.log", eval_log, trainer.step_index() / trainer.steps_per_epoch() + 1);
  }

  auto flush_logs = [&] {
    std::string t, e;
    for (const auto& l : train_log) t += l + "\n";
    for (const auto& l : eval_log) e += l + "\n";
    textio::write_file(run_dir / "logs" / "train.log", t);
    textio::write_file(run_dir / "logs" / "eval.log", e);
  };
  const int spe = trainer.steps_per_epoch();
  const int ckpt_every = config.checkpoint_every > 0 ? config.checkpoint_every : spe;
  auto checkpoint = [&](const fs::path& dir) {
    trainer.save_checkpoint(dir);
    flush_logs();
  };

  TrainResult result;
  int executed = 0;
  while (!trainer.done()) {
    if (options.stop_after_steps >= 0 && executed >= options.stop_after_steps) {
      checkpoint(latest);
      result.steps = trainer.step_index();
      return result;
    }
    const int s = trainer.step_index();
    const auto d = trainer.step();
    ++executed;
    train_log.push_back(format_log_line(s, d));
    const int done_steps = trainer.step_index();
    if (config.eval_every > 0 && done_steps % spe == 0 && (done_steps / spe) % config.eval_every == 0) {
      const auto rep = evaluate(trainer.policy(), world.codebook, contexts, split.test,
                                {config.enumeration_budget, true, 4096, config.seed});
      eval_log.push_back(std::to_string(done_steps / spe) + ", " + textio::format_double(rep.overall_hr(2)) + ", " +
                         textio::format_double(rep.overall_ndcg(2)));
    }
    if (done_steps % ckpt_every == 0) checkpoint(latest);
  }
  checkpoint(latest);
  trainer.save_checkpoint(ckpt_dir / "final");

  result.completed = true;
  result.steps = trainer.step_index();
  result.report = evaluate(trainer.policy(), world.codebook, contexts, split.test,
                           {config.enumeration_budget, true, 4096, config.seed});
  double cons = 0.0, judged = 0.0;
  std::size_t n_cons = 0;
  for (std::size_t i = 1; i < train_log.size(); ++i) {
    const auto f = textio::split(train_log[i], ',');
    if (f[4] != "nan") {
      cons += textio::parse_double(f[4]);
      ++n_cons;
    }
    judged += textio::parse_double(f[5]);
  }
  if (n_cons) result.mean_consistency = cons / static_cast<double>(n_cons);
  if (train_log.size() > 1) result.mean_judged_fraction = judged / static_cast<double>(train_log.size() - 1);

  std::ostringstream csv;
  write_report_csv(csv, result.report);
  textio::write_file(run_dir / "reports" / "report.csv", csv.str());
  textio::write_file(run_dir / "reports" / "report.json", report_json(result.report));
  return result;
}

// ---------------------------------------------------------------------------

namespace {

std::string p_label(double p) { return textio::format_double(p); }

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

SweepSummary run_sweep_p(const World& world, const fs::path& world_dir, const RunConfig& config,
                         const std::vector<double>& p_values, const std::vector<std::uint64_t>& seeds,
                         const fs::path& out_dir) {
  if (p_values.empty() || seeds.empty()) throw Error(Errc::kConfig, "sweep needs at least one p and one seed");
  RunConfig base = config;
  if (base.weights == WeightSource::kAggregator && base.aggregator_path.empty()) {
    train_aggregator(world, base, out_dir / "aggregator");
    base.aggregator_path = (out_dir / "aggregator" / "aggregator.txt").string();
  }
  SweepSummary sum;
  for (const auto seed : seeds) {
    RunConfig c = base;
    c.mode = TrainMode::kBusinessOnly;
    c.seed = seed;
    const auto r = run_training(world, world_dir, c, out_dir / "baseline" / ("seed_" + std::to_string(seed)));
    sum.baseline.push_back({0.0, seed, r.report.overall_hr(2), r.report.overall_ndcg(2)});
  }
  for (const double p : p_values) {
    for (const auto seed : seeds) {
      RunConfig c = base;
      c.mode = TrainMode::kFull;
      c.p = p;
      c.seed = seed;
      const fs::path dir = out_dir / ("p_" + p_label(p)) / ("seed_" + std::to_string(seed));
      const auto r = run_training(world, world_dir, c, dir);
      sum.rows.push_back({p, seed, r.report.overall_hr(2), r.report.overall_ndcg(2)});
      if (p == 0.0) {
        const fs::path b = out_dir / "baseline" / ("seed_" + std::to_string(seed));
        const bool same = textio::read_file(dir / "checkpoints" / "final" / "generator.txt") ==
                              textio::read_file(b / "checkpoints" / "final" / "generator.txt") &&
                          textio::read_file(dir / "logs" / "train.log") == textio::read_file(b / "logs" / "train.log") &&
                          textio::read_file(dir / "reports" / "report.csv") ==
                              textio::read_file(b / "reports" / "report.csv");
        sum.p0_matches_baseline = sum.p0_matches_baseline && same;
      }
    }
  }

  std::string rows = "p, seed, hr@10, ndcg@10\n";
  for (const auto& r : sum.baseline)
    rows += "baseline, " + std::to_string(r.seed) + ", " + textio::format_double(r.hr10) + ", " +
            textio::format_double(r.ndcg10) + "\n";
  for (const auto& r : sum.rows)
    rows += p_label(r.p) + ", " + std::to_string(r.seed) + ", " + textio::format_double(r.hr10) + ", " +
            textio::format_double(r.ndcg10) + "\n";
  textio::write_file(out_dir / "sweep.csv", rows);

  std::vector<double> bh, bn;
  for (const auto& r : sum.baseline) {
    bh.push_back(r.hr10);
    bn.push_back(r.ndcg10);
  }
  const double base_hr = mean_of(bh), base_ndcg = mean_of(bn);
  std::optional<double> full_hr, full_ndcg;
  std::vector<std::pair<double, std::pair<double, double>>> means;
  for (const double p : p_values) {
    std::vector<double> h, n;
    for (const auto& r : sum.rows)
      if (r.p == p) {
        h.push_back(r.hr10);
        n.push_back(r.ndcg10);
      }
    means.push_back({p, {mean_of(h), mean_of(n)}});
    if (p == 1.0) {
      full_hr = mean_of(h);
      full_ndcg = mean_of(n);
    }
  }
  auto frac = [](double v, double b, const std::optional<double>& full) -> std::string {
    if (!full || *full == b) return "NA";
    return textio::format_double((v - b) / (*full - b));
  };
  std::string summary = "p, hr@10, ndcg@10, hr_fraction_of_full_lift, ndcg_fraction_of_full_lift\n";
  summary += "baseline, " + textio::format_double(base_hr) + ", " + textio::format_double(base_ndcg) + ", 0, 0\n";
  for (const auto& [p, m] : means)
    summary += p_label(p) + ", " + textio::format_double(m.first) + ", " + textio::format_double(m.second) + ", " +
               frac(m.first, base_hr, full_hr) + ", " + frac(m.second, base_ndcg, full_ndcg) + "\n";
  textio::write_file(out_dir / "sweep_summary.csv", summary);
  return sum;
}

void consolidate_reports(const std::vector<fs::path>& run_dirs, const std::optional<fs::path>& baseline,
                         const fs::path& out_dir) {
  if (run_dirs.empty()) throw Error(Errc::kInvalidArgument, "no run directories given");
  auto load = [](const fs::path& dir) {
    const fs::path f = dir / "reports" / "report.csv";
    if (!fs::exists(f)) throw Error(Errc::kIo, "run has no report: " + dir.string());
    std::istringstream in(textio::read_file(f));
    return read_report_csv(in);
  };
  std::optional<StratifiedReport> base;
  if (baseline) base = load(*baseline);

  std::string table = "run,level,metric,k,value\n";
  nlohmann::ordered_json runs = nlohmann::ordered_json::array();
  std::string lift_rows = "run,level,metric,k,lift\n";
  for (const auto& dir : run_dirs) {
    const auto rep = load(dir);
    std::ostringstream csv;
    write_report_csv(csv, rep);
    std::istringstream rows(csv.str());
    std::string line;
    while (std::getline(rows, line))
      if (!line.empty() && line[0] != '#' && line.rfind("level,", 0) != 0) table += dir.string() + "," + line + "\n";
    nlohmann::ordered_json entry;
    entry["run"] = dir.string();
    std::optional<LiftTable> lift;
    if (base) {
      lift = stratified_lift(rep, *base);
      std::ostringstream lt;
      write_lift_table(lt, *lift);
      std::istringstream lrows(lt.str());
      std::getline(lrows, line);
      while (std::getline(lrows, line)) lift_rows += dir.string() + "," + line + "\n";
    }
    entry["report"] = nlohmann::ordered_json::parse(report_json(rep, lift ? &*lift : nullptr));
    runs.push_back(entry);
  }
  nlohmann::ordered_json j;
  if (baseline) j["baseline"] = baseline->string();
  j["runs"] = runs;
  textio::write_file(out_dir / "report.csv", table);
  textio::write_file(out_dir / "report.json", j.dump(2) + "\n");
  if (base) textio::write_file(out_dir / "lift.csv", lift_rows);
}

}  // namespace semrl
