#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ee/common/parallel.hpp"
#include "ee/enki/enki.hpp"
#include "ee/enki/forward_model.hpp"
#include "ee/enki/prior.hpp"
#include "ee/features/moment_variance.hpp"
#include "ee/features/moments.hpp"
#include "ee/nn/checkpoint.hpp"
#include "ee/pipeline/config.hpp"
#include "ee/pipeline/dataset.hpp"
#include "ee/pipeline/inference.hpp"
#include "ee/pipeline/trainer.hpp"

namespace ee::pipeline {

inline constexpr std::uint64_t kTestCropTag = 200;
inline constexpr std::uint64_t kInstanceSeedTag = 400;

inline enki::Prior fixed_prior(const RunConfig& c) {
  return c.system.kind == dynamics::SystemKind::l96 ? enki::l96_fixed_prior() : enki::kse_fixed_prior();
}

inline ParamVector empb_variances(const RunConfig& c) {
  return c.system.kind == dynamics::SystemKind::l96 ? enki::l96_empb_variances() : enki::kse_empb_variances();
}

/// An observation to invert, with its truth when known.
struct Observation {
  std::size_t index = 0;
  dynamics::Trajectory traj;
  ParamVector truth;  ///< empty when unknown
};

inline std::vector<Observation> test_observations(const fs::path& out) {
  const Dataset ds = load_dataset(manifest_file(out, Stage::test));
  std::vector<Observation> obs;
  for (const auto* r : ds.accepted()) {
    Observation o;
    o.index = obs.size();
    o.traj = ds.load(*r);
    o.truth = r->params;
    obs.push_back(std::move(o));
  }
  return obs;
}

inline Observation observation_from_file(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("observation " + path.string() + " does not exist");
  Observation o;
  o.traj = dynamics::load_trajectory(path);
  o.truth = o.traj.meta.params;
  return o;
}

inline std::uint64_t instance_seed(const RunConfig& c, std::size_t index) {
  return derive_seed(c.seed, {kInstanceSeedTag, index});
}

/// Moment vector of the observation and the diagonal of R for it.
struct MomentData {
  Vector y, R;
};

inline MomentData moment_data(const RunConfig& c, const Observation& o) {
  MomentData m;
  m.y = features::moments(c.system, o.traj.states);
  if (c.estimate.variance_source == "observation") {
    m.R = features::observation_moment_variance(c.system, o.traj.states, c.estimate.variance_blocks);
  } else {
    if (o.truth.empty()) throw ConfigError("estimate.variance_source = truth needs an observation with known parameters");
    features::MomentVarianceConfig mv;
    mv.blocks = c.estimate.variance_blocks;
    mv.block_length = o.traj.length();
    mv.integration = c.integration;
    Rng rng = make_rng(c.seed, Stream::moment_var, {o.index});
    m.R = features::moment_variance(c.system, o.truth, mv, rng);
  }
  const double top = m.R.maxCoeff();
  if (!(top > 0) || !m.R.allFinite()) throw NumericalError("moment variance estimate is degenerate");
  // Entries that are exactly constant over the blocks would make R singular.
  for (auto& v : m.R) v = std::max(v, 1e-12 * top);
  return m;
}

struct InstanceEstimate {
  std::size_t index = 0;
  ParamVector truth, estimate;
  std::optional<ParamVector> head;
  bool prior_clamped = false;
  std::vector<ParamVector> final_ensemble;  ///< physical space
  std::vector<enki::IterationDiagnostics> diagnostics;
  std::vector<enki::Ensemble> history;
  std::optional<enki::Prior> prior;
};

inline std::vector<ParamVector> physical_particles(const enki::Ensemble& e, const enki::Prior& prior) {
  std::vector<ParamVector> out;
  for (Eigen::Index m = 0; m < e.particles.rows(); ++m) out.push_back(prior.to_physical(e.particles.row(m).transpose()));
  return out;
}

/// One observation under the given mode. `model` may be null for the baseline.
inline InstanceEstimate estimate_instance(const RunConfig& c, EstimateMode mode, const nn::Model* model,
                                          const Observation& o, std::size_t enki_threads, bool keep_history) {
  InstanceEstimate r;
  r.index = o.index;
  r.truth = o.truth;
  const std::uint64_t seed = instance_seed(c, o.index);
  enki::EnkiConfig ecfg = c.enki_config();
  ecfg.threads = enki_threads;
  ecfg.keep_history = keep_history;

  if (mode == EstimateMode::baseline) {
    const MomentData md = moment_data(c, o);
    const enki::MomentForward fm(c.system, c.integration, o.traj.length(), o.traj, seed);
    const enki::Prior prior = fixed_prior(c);
    auto res = enki::run_enki(md.y, fm, prior, md.R, ecfg, seed);
    r.estimate = res.estimate();
    r.final_ensemble = physical_particles(res.ensemble, prior);
    r.diagnostics = std::move(res.diagnostics);
    r.history = std::move(res.history);
    r.prior = prior;
    return r;
  }

  Rng rng = crop_rng(c.seed, kTestCropTag, o.index);
  const CropSummary s = summarize_crops(model->encoder, o.traj, c.estimate.head_crops, rng);
  r.head = s.head;
  if (mode == EstimateMode::head_only) {
    r.estimate = s.head;
    r.final_ensemble = {s.head};
    return r;
  }

  enki::Prior prior = fixed_prior(c);
  if (c.estimate.prior == "empB") {
    const auto eb = enki::empirical_bayes_prior(s.head, prior, empb_variances(c));
    prior = eb.prior;
    r.prior_clamped = eb.clamped;
  }
  const enki::EmulatorForward fm(model->emulator);
  const Vector R = Vector::Ones(s.embedding.size());
  auto res = enki::run_enki(s.embedding, fm, prior, R, ecfg, seed);
  r.estimate = res.estimate();
  r.final_ensemble = physical_particles(res.ensemble, prior);
  r.diagnostics = std::move(res.diagnostics);
  r.history = std::move(res.history);
  r.prior = prior;
  return r;
}

inline fs::path estimate_dir(const fs::path& out, EstimateMode mode) { return out / "estimates" / to_string(mode); }

inline std::unique_ptr<nn::Model> load_model(const fs::path& ckpt, EstimateMode mode) {
  if (!fs::exists(ckpt))
    throw ConfigError("mode " + to_string(mode) + " needs a checkpoint; " + ckpt.string() +
                      " does not exist (run train or pass --checkpoint)");
  return std::move(nn::load_checkpoint(ckpt).model);
}

struct EstimateOptions {
  EstimateMode mode = EstimateMode::embed_emulate;
  std::optional<fs::path> checkpoint;   ///< default: <out>/checkpoints/best.ckpt
  std::optional<fs::path> observation;  ///< default: the test set
  std::size_t threads = 1;
};

inline nlohmann::json to_json(const InstanceEstimate& e) {
  nlohmann::json j;
  j["index"] = e.index;
  j["truth"] = e.truth;
  j["estimate"] = e.estimate;
  j["head"] = e.head ? nlohmann::json(*e.head) : nlohmann::json(nullptr);
  j["prior_clamped"] = e.prior_clamped;
  j["final_ensemble"] = e.final_ensemble;
  nlohmann::json diag = nlohmann::json::array();
  for (const auto& d : e.diagnostics)
    diag.push_back({{"iteration", d.iteration}, {"mean", d.mean}, {"spread", d.spread},
                    {"objective", std::isfinite(d.objective) ? nlohmann::json(d.objective) : nlohmann::json(nullptr)},
                    {"valid", d.valid}});
  j["diagnostics"] = diag;
  return j;
}

/// Runs one mode over the test set (or a single observation) and writes
/// estimates.json, estimates.csv and per-instance ensemble CSVs.
inline std::vector<InstanceEstimate> estimate(const RunConfig& c, const fs::path& out, const EstimateOptions& opt) {
  std::unique_ptr<nn::Model> model;
  if (opt.mode != EstimateMode::baseline) model = load_model(opt.checkpoint.value_or(best_checkpoint(out)), opt.mode);
  if (model && (model->encoder.spec().channels != c.system.state_dim() || model->encoder.spec().out != c.system.param_dim()))
    throw ConfigError("checkpoint does not match the configured system");

  std::vector<Observation> obs;
  if (opt.observation)
    obs.push_back(observation_from_file(*opt.observation));
  else
    obs = test_observations(out);
  if (obs.empty()) throw ConfigError("estimate: no observations (the test set is empty)");
  for (const auto& o : obs)
    if (!dynamics::validate_trajectory(o.traj).accepted() || o.traj.dim() != c.system.state_dim())
      throw ConfigError("estimate: observation " + std::to_string(o.index) + " is invalid for this system");

  // Instances run in parallel; a single instance gets the threads for its ensemble instead.
  const std::size_t outer = obs.size() > 1 ? opt.threads : 1;
  const std::size_t inner = obs.size() > 1 ? 1 : opt.threads;
  std::vector<InstanceEstimate> res(obs.size());
  parallel_for(obs.size(), outer,
               [&](std::size_t i) { res[i] = estimate_instance(c, opt.mode, model.get(), obs[i], inner, true); });

  const fs::path dir = estimate_dir(out, opt.mode);
  fs::create_directories(dir / "ensembles");
  const auto names = c.system.param_names();
  nlohmann::json j;
  j["label"] = c.label;
  j["config_hash"] = config_hash(c);
  j["mode"] = to_string(opt.mode);
  j["prior"] = opt.mode == EstimateMode::embed_emulate ? c.estimate.prior
               : opt.mode == EstimateMode::baseline    ? "fixed"
                                                       : "none";
  j["names"] = names;
  j["instances"] = nlohmann::json::array();
  for (const auto& r : res) j["instances"].push_back(to_json(r));
  {
    std::ofstream os(dir / "estimates.json");
    os << j.dump(1) << '\n';
  }
  std::ofstream csv(dir / "estimates.csv");
  csv.precision(17);
  csv << "index";
  for (const auto& n : names) csv << ",truth_" << n;
  for (const auto& n : names) csv << ",estimate_" << n;
  for (const auto& n : names) csv << ",head_" << n;
  csv << '\n';
  for (const auto& r : res) {
    csv << r.index;
    for (std::size_t l = 0; l < names.size(); ++l) {
      csv << ',';
      if (!r.truth.empty()) csv << r.truth[l];
    }
    for (double v : r.estimate) csv << ',' << v;
    for (std::size_t l = 0; l < names.size(); ++l) {
      csv << ',';
      if (r.head) csv << (*r.head)[l];
    }
    csv << '\n';
    if (r.prior) {
      char name[32];
      std::snprintf(name, sizeof name, "%06zu.csv", r.index);
      std::vector<enki::Ensemble> kept;
      for (std::size_t k = 0; k < r.history.size(); ++k)
        if (k % c.estimate.history_stride == 0 || k + 1 == r.history.size()) kept.push_back(r.history[k]);
      enki::write_ensemble_csv(dir / "ensembles" / name, kept, *r.prior);
    }
  }
  return res;
}

}  // namespace ee::pipeline
