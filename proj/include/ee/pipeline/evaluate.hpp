#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ee/metrics/affine_probe.hpp"
#include "ee/metrics/report.hpp"
#include "ee/pipeline/estimate.hpp"

namespace ee::pipeline {

inline constexpr std::uint64_t kProbeCropTag = 300;

inline fs::path report_dir(const fs::path& out) { return out / "reports"; }

/// Point-estimate errors and ensemble CRPS of one mode against the test-set
/// truths. Writes reports/<mode>.json and reports/<mode>.csv.
inline metrics::EvalReport evaluate(const RunConfig& c, const fs::path& out, EstimateMode mode) {
  const fs::path path = estimate_dir(out, mode) / "estimates.json";
  std::ifstream is(path);
  if (!is) throw ConfigError("no estimates at " + path.string() + " (run estimate --mode " + to_string(mode) + ")");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
  const Dataset test = load_dataset(manifest_file(out, Stage::test));
  const auto records = test.accepted();
  const auto& inst = j.at("instances");
  if (inst.size() != records.size())
    throw ConfigError("evaluate: " + std::to_string(inst.size()) + " estimates for a test set of " +
                      std::to_string(records.size()));
  std::vector<ParamVector> est, truth;
  std::vector<std::vector<ParamVector>> ens;
  for (std::size_t i = 0; i < inst.size(); ++i) {
    const std::size_t idx = inst[i].at("index");
    if (idx != i) throw ConfigError("evaluate: estimates are not in test-set order");
    est.push_back(inst[i].at("estimate").get<ParamVector>());
    ens.push_back(inst[i].at("final_ensemble").get<std::vector<ParamVector>>());
    truth.push_back(records[i]->params);
  }
  auto rep = metrics::make_report(to_string(mode), c.system.param_names(), est, truth, &ens);
  rep.label = c.label;
  rep.config_hash = config_hash(c);
  fs::create_directories(report_dir(out));
  metrics::write_report_json(report_dir(out) / (to_string(mode) + ".json"), rep);
  metrics::write_report_csv(report_dir(out) / (to_string(mode) + ".csv"), rep);
  return rep;
}

/// Crop-averaged embeddings of every trajectory, one row each.
inline Matrix embed_all(const nn::Encoder& enc, const std::vector<dynamics::Trajectory>& trajs, std::size_t crops,
                        std::uint64_t seed, std::uint64_t tag) {
  Matrix E(static_cast<Eigen::Index>(trajs.size()), static_cast<Eigen::Index>(enc.spec().embed));
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    Rng rng = crop_rng(seed, tag, i);
    E.row(static_cast<Eigen::Index>(i)) = summarize_crops(enc, trajs[i], crops, rng).embedding.transpose();
  }
  return E;
}

inline Matrix param_matrix(const std::vector<ParamVector>& ps) {
  Matrix P(static_cast<Eigen::Index>(ps.size()), static_cast<Eigen::Index>(ps.front().size()));
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (std::size_t j = 0; j < ps[i].size(); ++j) P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = ps[i][j];
  return P;
}

/// Affine map from embeddings to parameters fitted on the train stage and
/// scored (R^2 per component) on the test stage. Writes reports/affine_probe.json.
inline metrics::AffineProbe probe_report(const RunConfig& c, const fs::path& out, const fs::path& ckpt) {
  const auto model = load_model(ckpt, EstimateMode::head_only);
  const LoadedSet tr = load_accepted(load_dataset(manifest_file(out, Stage::train)));
  const LoadedSet te = load_accepted(load_dataset(manifest_file(out, Stage::test)));
  if (tr.trajs.empty() || te.trajs.empty()) throw ConfigError("affine probe: empty train or test set");
  const std::size_t crops = c.estimate.head_crops;
  const Matrix Etr = embed_all(model->encoder, tr.trajs, crops, c.seed, kProbeCropTag);
  const Matrix Ete = embed_all(model->encoder, te.trajs, crops, c.seed, kTestCropTag);
  auto probe = metrics::affine_probe(Etr, param_matrix(tr.params), Ete, param_matrix(te.params));
  nlohmann::json j;
  j["label"] = c.label;
  j["config_hash"] = config_hash(c);
  j["names"] = c.system.param_names();
  j["r2_heldout"] = probe.r2;
  j["rank_deficient"] = probe.rank_deficient;
  j["train_count"] = tr.trajs.size();
  j["test_count"] = te.trajs.size();
  fs::create_directories(report_dir(out));
  std::ofstream os(report_dir(out) / "affine_probe.json");
  os << j.dump(2) << '\n';
  return probe;
}

}  // namespace ee::pipeline
