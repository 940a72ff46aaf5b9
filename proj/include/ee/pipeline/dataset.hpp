#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "ee/common/parallel.hpp"
#include "ee/common/random.hpp"
#include "ee/dynamics/simulator.hpp"
#include "ee/dynamics/trajectory_io.hpp"
#include "ee/pipeline/config.hpp"

namespace ee::pipeline {

namespace fs = std::filesystem;

enum class Stage { train, test };

inline std::string to_string(Stage s) { return s == Stage::train ? "train" : "test"; }

/// One simulation attempt. Only accepted records own a trajectory file.
struct DatasetRecord {
  std::size_t attempt = 0;
  ParamVector params;
  std::string file;  ///< relative to the manifest directory; empty when rejected
  bool accepted = false;
  std::string verdict;
  double std_dev = 0.0;
};

struct Dataset {
  Stage stage = Stage::train;
  fs::path dir;  ///< where the manifest lives
  std::string config_hash, label;
  std::size_t requested = 0;
  std::vector<DatasetRecord> records;

  std::vector<const DatasetRecord*> accepted() const {
    std::vector<const DatasetRecord*> out;
    for (const auto& r : records)
      if (r.accepted) out.push_back(&r);
    return out;
  }

  dynamics::Trajectory load(const DatasetRecord& r) const { return dynamics::load_trajectory(dir / r.file); }
};

inline fs::path data_dir(const fs::path& out, Stage s) { return out / "data" / to_string(s); }
inline fs::path manifest_file(const fs::path& out, Stage s) { return data_dir(out, s) / "manifest.json"; }

inline const DataSpec& stage_spec(const RunConfig& c, Stage s) { return s == Stage::train ? c.train : c.test; }

/// Parameter point and initial condition for one attempt, drawn from the
/// attempt's own stream so that the thread count does not matter.
inline ParamVector draw_params(const DataSpec& d, Rng& rng) {
  if (d.fixed) return *d.fixed;
  ParamVector phi(d.min.size());
  for (std::size_t l = 0; l < phi.size(); ++l) phi[l] = std::uniform_real_distribution<double>(d.min[l], d.max[l])(rng);
  return phi;
}

inline std::uint64_t attempt_seed(const RunConfig& c, Stage s, std::size_t attempt) {
  return derive_seed(c.seed, {static_cast<std::uint64_t>(s == Stage::train ? Stream::train_data : Stream::test_data),
                              attempt});
}

struct Attempt {
  DatasetRecord record;
  dynamics::Trajectory traj;
};

inline Attempt run_attempt(const RunConfig& c, Stage s, std::size_t a) {
  const DataSpec& d = stage_spec(c, s);
  const std::uint64_t seed = attempt_seed(c, s, a);
  Rng rng(seed);
  Attempt out;
  out.record.attempt = a;
  out.record.params = draw_params(d, rng);
  const Vector ic = dynamics::sample_initial_condition(c.system.kind, c.system.state_dim(), rng);
  try {
    out.traj = dynamics::simulate(c.system, out.record.params, {ic.data(), static_cast<std::size_t>(ic.size())},
                                  d.length, c.integration);
  } catch (const NumericalError&) {
    out.traj.meta.integration_failed = true;
  }
  out.traj.meta.seed = seed;
  const auto v = dynamics::validate_trajectory(out.traj);
  out.record.accepted = v.accepted();
  out.record.verdict = dynamics::to_string(v.verdict);
  out.record.std_dev = v.std_dev;
  if (out.record.accepted && d.noise_r > 0) {
    Rng noise = make_rng(c.seed, Stream::obs_noise, {a});
    out.traj = dynamics::add_observation_noise(out.traj, d.noise_r, noise);
  }
  return out;
}

inline nlohmann::json to_json(const Dataset& ds) {
  nlohmann::json j;
  j["stage"] = to_string(ds.stage);
  j["label"] = ds.label;
  j["config_hash"] = ds.config_hash;
  j["requested"] = ds.requested;
  j["accepted"] = ds.accepted().size();
  j["attempts"] = ds.records.size();
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& r : ds.records)
    recs.push_back({{"attempt", r.attempt}, {"params", r.params}, {"file", r.file}, {"accepted", r.accepted},
                    {"verdict", r.verdict}, {"std", r.std_dev}});
  j["records"] = recs;
  return j;
}

inline Dataset load_dataset(const fs::path& manifest) {
  std::ifstream is(manifest);
  if (!is) throw ConfigError("cannot open dataset manifest " + manifest.string() + " (run gen-data first)");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(manifest.string() + ": " + e.what());
  }
  Dataset ds;
  ds.dir = manifest.parent_path();
  ds.stage = j.at("stage") == "train" ? Stage::train : Stage::test;
  ds.label = j.value("label", "");
  ds.config_hash = j.value("config_hash", "");
  ds.requested = j.at("requested");
  for (const auto& r : j.at("records")) {
    DatasetRecord rec;
    rec.attempt = r.at("attempt");
    rec.params = r.at("params").get<ParamVector>();
    rec.file = r.at("file");
    rec.accepted = r.at("accepted");
    rec.verdict = r.at("verdict");
    rec.std_dev = r.at("std");
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

/// Stage 1 draws parameters and simulates, stage 2 filters; attempts run in
/// rounds of the still-missing count and are accepted in attempt order, so
/// the result is the same for any thread count.
inline Dataset generate_dataset(const RunConfig& c, Stage s, const fs::path& out, std::size_t threads,
                                std::ostream& log = std::cerr) {
  const DataSpec& d = stage_spec(c, s);
  const fs::path dir = data_dir(out, s);
  fs::create_directories(dir);
  Dataset ds;
  ds.stage = s;
  ds.dir = dir;
  ds.config_hash = config_hash(c);
  ds.label = c.label;
  ds.requested = d.n;
  const std::size_t budget = d.n * d.max_attempts_factor;
  std::size_t accepted = 0, next = 0;
  while (accepted < d.n && next < budget) {
    const std::size_t round = std::min(d.n - accepted, budget - next);
    std::vector<Attempt> results(round);
    parallel_for(round, threads, [&](std::size_t i) { results[i] = run_attempt(c, s, next + i); });
    for (auto& a : results) {
      if (a.record.accepted) {
        char name[32];
        std::snprintf(name, sizeof name, "%06zu.bin", accepted);
        a.record.file = name;
        dynamics::save_trajectory(dir / name, a.traj, true);
        ++accepted;
      }
      ds.records.push_back(std::move(a.record));
    }
    next += round;
  }
  if (accepted < d.n)
    log << "warning: " << to_string(s) << " stage accepted only " << accepted << " of " << d.n << " requested samples after "
        << next << " simulations\n";
  std::ofstream os(manifest_file(out, s));
  if (!os) throw Error("cannot write " + manifest_file(out, s).string());
  os << to_json(ds).dump(2) << '\n';
  return ds;
}

/// Accepted trajectories and their parameters, in manifest order.
struct LoadedSet {
  std::vector<dynamics::Trajectory> trajs;
  std::vector<ParamVector> params;
};

inline LoadedSet load_accepted(const Dataset& ds) {
  LoadedSet out;
  for (const auto* r : ds.accepted()) {
    out.trajs.push_back(ds.load(*r));
    out.params.push_back(r->params);
  }
  return out;
}

}  // namespace ee::pipeline
