#pragma once

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ee/common/error.hpp"
#include "ee/pipeline/config.hpp"
#include "ee/pipeline/dataset.hpp"
#include "ee/pipeline/estimate.hpp"
#include "ee/pipeline/evaluate.hpp"
#include "ee/pipeline/landscape.hpp"
#include "ee/pipeline/trainer.hpp"

namespace ee::pipeline {

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kNumericalError = 3 };

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
  bool deterministic = false;
  std::string out = "run";

  void attach(CLI::App& app) {
    app.add_option("--config", config, "Run config (JSON); defaults apply when omitted");
    app.add_option("--seed", seed, "Override the config seed");
    app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--deterministic", deterministic, "Serial execution (byte-identical outputs)");
    app.add_option("--out", out, "Run directory");
  }

  RunConfig load() const {
    RunConfig c = config.empty() ? config_from_json(nlohmann::json::object()) : load_config(config);
    if (seed) c.seed = *seed;
    return c;
  }

  std::size_t worker_threads() const { return deterministic ? 1 : threads; }
};

/// Parses argv and runs one subcommand. Returns the process exit code:
/// 0 ok, 2 config error, 3 numerical failure, 1 anything else.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Parameter estimation for chaotic systems: simulate, embed, emulate, invert"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string stage = "all", mode, checkpoint, observation, objective, pair;
  bool probe = false;
  std::optional<std::size_t> instance;

  auto* gen = app.add_subcommand("gen-data", "Simulate and filter the train and test sets");
  flags.attach(*gen);
  gen->add_option("--stage", stage, "train, test or all")->check(CLI::IsMember({"train", "test", "all"}));

  auto* tr = app.add_subcommand("train", "Train encoder, regression head and emulator");
  flags.attach(*tr);

  auto* est = app.add_subcommand("estimate", "Estimate parameters of the test set or one observation");
  flags.attach(*est);
  est->add_option("--mode", mode, "baseline, embed-emulate or head-only (default: config)");
  est->add_option("--checkpoint", checkpoint, "Checkpoint (default: <out>/checkpoints/best.ckpt)");
  est->add_option("--observation", observation, "Single trajectory file instead of the test set");

  auto* ev = app.add_subcommand("evaluate", "MAPE, MdAPE and CRPS of a mode's estimates");
  flags.attach(*ev);
  ev->add_option("--mode", mode, "baseline, embed-emulate or head-only (default: config)");
  ev->add_flag("--probe", probe, "Also fit the affine probe from embeddings to parameters");
  ev->add_option("--checkpoint", checkpoint, "Checkpoint for --probe");

  auto* hm = app.add_subcommand("heatmap", "Objective landscape over two free parameters");
  flags.attach(*hm);
  hm->add_option("--objective", objective, "moment or emulator (default: config)");
  hm->add_option("--pair", pair, "Free components as i,j (default: config)");
  hm->add_option("--instance", instance, "Test-set instance (default: config)");
  hm->add_option("--checkpoint", checkpoint, "Checkpoint for the emulator objective");
  hm->add_option("--observation", observation, "Single trajectory file instead of a test instance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  auto opt_path = [](const std::string& s) { return s.empty() ? std::optional<fs::path>{} : fs::path(s); };
  try {
    RunConfig c = flags.load();
    const fs::path dir = flags.out;
    const std::size_t threads = flags.worker_threads();
    if (!mode.empty()) c.estimate.mode = estimate_mode_from_string(mode);
    if (!objective.empty()) c.heatmap.objective = objective;
    if (instance) c.heatmap.instance = *instance;
    if (!pair.empty()) {
      const auto comma = pair.find(',');
      if (comma == std::string::npos) throw ConfigError("--pair expects i,j");
      try {
        c.heatmap.p1 = std::stoul(pair.substr(0, comma));
        c.heatmap.p2 = std::stoul(pair.substr(comma + 1));
      } catch (const std::exception&) {
        throw ConfigError("--pair expects two indexes i,j");
      }
    }
    c.validate();
    fs::create_directories(dir);

    if (*gen) {
      for (Stage s : {Stage::train, Stage::test}) {
        if (stage != "all" && stage != to_string(s)) continue;
        const auto ds = generate_dataset(c, s, dir, threads, err);
        out << to_string(s) << ": " << ds.accepted().size() << " of " << ds.requested << " accepted after "
            << ds.records.size() << " simulations (" << c.label << ")\n";
      }
    } else if (*tr) {
      const auto r = train(c, dir, out);
      out << "best validation MAPE " << r.best_val_mape << "% at epoch " << r.best_epoch << " (untrained "
          << r.untrained_val_mape << "%)\n";
    } else if (*est) {
      EstimateOptions o;
      o.mode = c.estimate.mode;
      o.checkpoint = opt_path(checkpoint);
      o.observation = opt_path(observation);
      o.threads = threads;
      const auto res = estimate(c, dir, o);
      out << to_string(o.mode) << ": " << res.size() << " estimates written to " << estimate_dir(dir, o.mode).string()
          << '\n';
    } else if (*ev) {
      const auto rep = evaluate(c, dir, c.estimate.mode);
      for (std::size_t j = 0; j < rep.names.size(); ++j)
        out << rep.method << ' ' << rep.names[j] << ": MAPE " << rep.errors[j].mape << "% MdAPE " << rep.errors[j].mdape
            << "% CRPS " << (*rep.crps)[j] << '\n';
      if (probe) {
        const auto p = probe_report(c, dir, opt_path(checkpoint).value_or(best_checkpoint(dir)));
        for (std::size_t j = 0; j < p.r2.size(); ++j) out << "probe R2 " << rep.names[j] << ": " << p.r2[j] << '\n';
      }
    } else if (*hm) {
      HeatmapOptions o;
      o.checkpoint = opt_path(checkpoint);
      o.observation = opt_path(observation);
      o.threads = threads;
      const auto g = heatmap(c, dir, o);
      out << c.heatmap.objective << " heatmap: argmin at (" << g.grid_i[g.argmin_a] << ", " << g.grid_j[g.argmin_b]
          << ")\n";
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumericalError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}

}  // namespace ee::pipeline
