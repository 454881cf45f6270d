// Command-line front end: world generation, training, sweeps and reports.
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "semrl/errors.hpp"
#include "semrl/experiment.hpp"
#include "semrl/selftest.hpp"
#include "semrl/textio.hpp"

namespace fs = std::filesystem;
using namespace semrl;

namespace {

struct ConfigArgs {
  std::string file;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("-c,--config", file, "Config file (INI-style key = value)");
    cmd->add_option("--set", overrides, "Override, key=value (repeatable)");
  }
  RunConfig load() const {
    return load_run_config(file.empty() ? std::nullopt : std::optional<fs::path>(file), overrides);
  }
};

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  for (auto f : textio::split(s, ',')) out.push_back(textio::parse_double(f));
  return out;
}

void print_report(const StratifiedReport& r) {
  std::cout << "level  count   hr@3    hr@5    hr@10   ndcg@10\n";
  for (int l = 0; l < kNoveltyLevels; ++l)
    std::printf("%5d %6zu  %.4f  %.4f  %.4f  %.4f\n", l, r.counts[static_cast<std::size_t>(l)], r.hr_at(l, 3),
                r.hr_at(l, 5), r.hr_at(l, 10), r.ndcg_at(l, 10));
  std::printf("  all %6zu  %.4f  %.4f  %.4f  %.4f\n", r.total(), r.overall_hr(0), r.overall_hr(1), r.overall_hr(2),
              r.overall_ndcg(2));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic-aware generative recommendation training toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  // gen-world
  ConfigArgs gw_cfg;
  std::string gw_out;
  auto* gen = app.add_subcommand("gen-world", "Generate a synthetic world");
  gw_cfg.attach(gen);
  gen->add_option("-o,--out", gw_out, "World directory")->required();

  // train
  ConfigArgs tr_cfg;
  std::string tr_world, tr_run, tr_mode;
  bool tr_resume = false;
  int tr_stop = -1;
  auto* train = app.add_subcommand("train", "Train the generator with A2PO or an ablation");
  tr_cfg.attach(train);
  train->add_option("-w,--world", tr_world, "World directory")->required();
  train->add_option("-r,--run", tr_run, "Run directory")->required();
  train->add_option("-m,--mode", tr_mode,
                    "business_only | reward_sum | adv_sum | gate_only | magnitude_only | full");
  train->add_flag("--resume", tr_resume, "Continue from the run's latest checkpoint");
  train->add_option("--stop-after", tr_stop, "Stop after this many steps (checkpointed)");

  // train-aggregator
  ConfigArgs ag_cfg;
  std::string ag_world, ag_out;
  auto* agg = app.add_subcommand("train-aggregator", "Train the user-conditional aspect weight policy");
  ag_cfg.attach(agg);
  agg->add_option("-w,--world", ag_world, "World directory")->required();
  agg->add_option("-o,--out", ag_out, "Output directory")->required();

  // sweep-p
  ConfigArgs sw_cfg;
  std::string sw_world, sw_out, sw_p = "0,0.05,1", sw_seeds = "1,2,3,4,5";
  auto* sweep = app.add_subcommand("sweep-p", "Paired runs over the semantic sampling ratio");
  sw_cfg.attach(sweep);
  sweep->add_option("-w,--world", sw_world, "World directory")->required();
  sweep->add_option("-o,--out", sw_out, "Sweep directory")->required();
  sweep->add_option("--p", sw_p, "Comma-separated p values");
  sweep->add_option("--seeds", sw_seeds, "Comma-separated training seeds");

  // report
  std::vector<std::string> rp_runs;
  std::string rp_baseline, rp_out;
  auto* report = app.add_subcommand("report", "Consolidate run reports and stratified lift");
  report->add_option("runs", rp_runs, "Run directories")->required();
  report->add_option("-b,--baseline", rp_baseline, "Baseline run directory for lift");
  report->add_option("-o,--out", rp_out, "Output directory")->required();

  auto* selftest = app.add_subcommand("selftest", "Run the invariant suite");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto config = gw_cfg.load();
      const auto world = generate_and_save_world(config, gw_out);
      std::array<std::size_t, kNoveltyLevels> counts{};
      for (const auto& e : world.episodes) ++counts[static_cast<std::size_t>(e.novelty_level)];
      std::cout << "world written to " << gw_out << ": " << world.catalog.size() << " items, "
                << world.episodes.size() << " episodes, levels " << counts[0] << "/" << counts[1] << "/"
                << counts[2] << "/" << counts[3] << "\n";
    } else if (*train) {
      auto config = tr_cfg.load();
      if (!tr_mode.empty()) config.mode = parse_train_mode(tr_mode);
      const auto world = World::load(tr_world);
      const auto r = run_training(world, tr_world, config, tr_run, {tr_resume, tr_stop});
      if (!r.completed) {
        std::cout << "stopped at step " << r.steps << "; resume with --resume\n";
        return 0;
      }
      std::cout << "mode " << to_string(config.mode) << ", " << r.steps << " steps\n";
      print_report(r.report);
    } else if (*agg) {
      const auto config = ag_cfg.load();
      const auto world = World::load(ag_world);
      const auto r = train_aggregator(world, config, fs::path(ag_out));
      std::cout << "pairs: " << r.train_pairs << " train, " << r.holdout_pairs << " held-out\n"
                << "held-out pairwise accuracy " << r.holdout_accuracy << " (reference " << r.reference_accuracy
                << ")\nargmax match " << r.argmax_match << "\n";
    } else if (*sweep) {
      const auto config = sw_cfg.load();
      const auto world = World::load(sw_world);
      std::vector<std::uint64_t> seeds;
      for (double s : parse_list(sw_seeds)) seeds.push_back(static_cast<std::uint64_t>(s));
      const auto s = run_sweep_p(world, sw_world, config, parse_list(sw_p), seeds, sw_out);
      std::cout << textio::read_file(fs::path(sw_out) / "sweep_summary.csv");
      if (!s.p0_matches_baseline) {
        std::cerr << "p = 0 runs do not reproduce the business_only baseline\n";
        return 1;
      }
    } else if (*report) {
      std::vector<fs::path> runs(rp_runs.begin(), rp_runs.end());
      consolidate_reports(runs, rp_baseline.empty() ? std::nullopt : std::optional<fs::path>(rp_baseline), rp_out);
      std::cout << "report written to " << rp_out << "\n";
    } else if (*selftest) {
      return run_selftest(std::cout) ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
