#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>

#include "json.hpp"

#include "ee/enki/objectives.hpp"
#include "ee/metrics/heatmap.hpp"
#include "ee/pipeline/estimate.hpp"

namespace ee::pipeline {

struct HeatmapOptions {
  std::optional<fs::path> checkpoint;
  std::optional<fs::path> observation;
  std::size_t threads = 1;
};

/// Objective over a grid of two free components with the others held at
/// the truth; writes heatmaps/<objective>_<p1>_<p2>.csv and a JSON sidecar.
inline metrics::HeatmapGrid heatmap(const RunConfig& c, const fs::path& out, const HeatmapOptions& opt) {
  const auto& h = c.heatmap;
  Observation o;
  if (opt.observation) {
    o = observation_from_file(*opt.observation);
  } else {
    auto all = test_observations(out);
    if (h.instance >= all.size()) throw ConfigError("heatmap.instance is beyond the accepted test set");
    o = std::move(all[h.instance]);
  }
  if (o.truth.size() != c.system.param_dim())
    throw ConfigError("heatmap: the observation's parameters are unknown; the free components are set around them");

  metrics::HeatmapSpec spec;
  spec.i = h.p1;
  spec.j = h.p2;
  spec.range_i = h.range1.value_or(std::pair{c.test.min[h.p1], c.test.max[h.p1]});
  spec.range_j = h.range2.value_or(std::pair{c.test.min[h.p2], c.test.max[h.p2]});
  spec.resolution = h.resolution;
  spec.clip = h.objective == "moment" ? h.clip : std::nullopt;
  spec.threads = opt.threads;

  metrics::HeatmapGrid grid;
  if (h.objective == "moment") {
    const MomentData md = moment_data(c, o);
    // Every cell simulates from the same initial condition.
    const enki::MomentForward fm(c.system, c.integration, o.traj.length(), o.traj, instance_seed(c, o.index));
    auto sim = [&](std::span<const double> phi) { return fm.evaluate_one(ParamVector(phi.begin(), phi.end()), 0, 0); };
    grid = metrics::heatmap_grid([&](const ParamVector& phi) { return enki::moment_objective(phi, md.y, md.R, sim); },
                                 o.truth, spec);
  } else {
    const auto model = load_model(opt.checkpoint.value_or(best_checkpoint(out)), EstimateMode::embed_emulate);
    Rng rng = crop_rng(c.seed, kTestCropTag, o.index);
    const Vector f = summarize_crops(model->encoder, o.traj, c.estimate.head_crops, rng).embedding;
    const enki::EmulatorForward fm(model->emulator);
    grid = metrics::heatmap_grid(
        [&](const ParamVector& phi) { return enki::emulator_objective(*fm.evaluate({phi}, 0, 1).front(), f); }, o.truth,
        spec);
  }

  const fs::path dir = out / "heatmaps";
  fs::create_directories(dir);
  const std::string stem = h.objective + "_" + std::to_string(h.p1) + "_" + std::to_string(h.p2);
  metrics::write_heatmap_csv(dir / (stem + ".csv"), grid);
  nlohmann::json j;
  j["label"] = c.label;
  j["config_hash"] = config_hash(c);
  j["objective"] = h.objective;
  const auto names = c.system.param_names();
  j["p1"] = names[h.p1];
  j["p2"] = names[h.p2];
  j["truth"] = o.truth;
  j["argmin"] = {grid.grid_i[grid.argmin_a], grid.grid_j[grid.argmin_b]};
  j["truth_cell"] = {grid.grid_i[grid.truth_a], grid.grid_j[grid.truth_b]};
  j["resolution"] = spec.resolution;
  j["clip"] = spec.clip ? nlohmann::json(*spec.clip) : nlohmann::json(nullptr);
  std::ofstream os(dir / (stem + ".json"));
  os << j.dump(2) << '\n';
  return grid;
}

}  // namespace ee::pipeline
