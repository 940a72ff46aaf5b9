#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "json.hpp"

#include "ee/pipeline/commands.hpp"
#include "files.hpp"

using namespace ee;
using namespace ee::pipeline;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::absolute("pipeline_work");

json smoke_json() {
  return json::parse(R"js({
    "label": "smoke test (not paper-scale)",
    "seed": 7,
    "system": {"kind": "l96", "K": 8, "J": 4},
    "train_data": {"length": 150, "n": 64},
    "test_data": {"length": 200, "n": 3},
    "model": {"crop_len": 50},
    "training": {"epochs": 50, "batch_size": 16, "bank_capacity": 64,
                 "optimizer": {"lr": 0.002, "warmup_epochs": 2}},
    "estimate": {"M": 20, "N": 5, "head_crops": 4, "variance_blocks": 4},
    "heatmap": {"resolution": 5}
  })js");
}

RunConfig smoke_config() { return config_from_json(smoke_json()); }

fs::path write_config(const json& j, const std::string& name) {
  fs::create_directories(kWork);
  const fs::path p = kWork / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

json read_json(const fs::path& p) {
  std::ifstream is(p);
  return json::parse(is);
}

// Data plus a 50-epoch training run, shared across tests and reused when
// an earlier test process already produced it for the same config.
const fs::path& smoke_run() {
  static const fs::path dir = [] {
    const fs::path d = kWork / "smoke";
    const RunConfig c = smoke_config();
    const fs::path summary = d / "train_summary.json";
    if (fs::exists(summary) && read_json(summary).value("config_hash", "") == config_hash(c) &&
        fs::exists(best_checkpoint(d)))
      return d;
    ee::testing::fresh_dir(d);
    std::ostringstream sink;
    generate_dataset(c, Stage::train, d, 1, sink);
    generate_dataset(c, Stage::test, d, 1, sink);
    train(c, d, sink);
    return d;
  }();
  return dir;
}

std::string cli() { return EE_CLI_PATH; }

}  // namespace

TEST(Config, DefaultsAreValid) {
  const RunConfig c = config_from_json(json::object());
  EXPECT_EQ(c.system.state_dim(), 40u);
  EXPECT_EQ(c.training.validation_size, 5u);
  EXPECT_EQ(c.estimate.head_crops, 8u);
  EXPECT_EQ(c.estimate.prior, "empB");
  EXPECT_NE(c.label.find("not paper-scale"), std::string::npos);
  EXPECT_EQ(c.training.temperature.total_epochs, c.training.epochs);
}

TEST(Config, HashIsStableAndSensitive) {
  const RunConfig a = smoke_config(), b = smoke_config();
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  RunConfig c = a;
  c.seed += 1;
  EXPECT_NE(config_hash(a), config_hash(c));
}

TEST(Config, RoundTripKeepsHash) {
  const RunConfig a = smoke_config();
  const RunConfig b = config_from_json(to_json(a));
  EXPECT_EQ(to_json(a), to_json(b));
  EXPECT_EQ(config_hash(a), config_hash(b));
}

TEST(Config, RejectsTestRangeOutsideTrainRange) {
  json j = smoke_json();
  j["test_data"]["max"] = {21, 4.5, 23, 23};
  EXPECT_THROW(config_from_json(j), ConfigError);
}

TEST(Config, BatchMustBeBelowDatasetSizeOrEqual) {
  json j = smoke_json();
  j["training"]["batch_size"] = 65;
  EXPECT_THROW(config_from_json(j), ConfigError);
  j["training"]["batch_size"] = 64;
  EXPECT_NO_THROW(config_from_json(j));
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  json j = smoke_json();
  j["training"]["epoch"] = 3;
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = smoke_json();
  j["estimate"]["mode"] = "magic";
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = smoke_json();
  j["estimate"]["prior"] = "flat";
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = smoke_json();
  j["system"]["kind"] = "lorenz63";
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = smoke_json();
  j["model"]["crop_len"] = 500;
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = smoke_json();
  j["train_data"]["min"] = {-5, 0, 0.0, 0};
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = smoke_json();
  j["seed"] = "seven";
  EXPECT_THROW(config_from_json(j), ConfigError);
}

TEST(Config, ShippedConfigsLoad) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(fs::path(EE_SOURCE_DIR) / "configs")) {
    if (e.path().extension() != ".json") continue;
    SCOPED_TRACE(e.path().string());
    EXPECT_NO_THROW(load_config(e.path()));
    ++n;
  }
  EXPECT_GE(n, 2u);
}

TEST(Config, DeskConfigIsTheDocumentedScale) {
  const RunConfig c = load_config(fs::path(EE_SOURCE_DIR) / "configs" / "l96_desk.json");
  EXPECT_EQ(c.system.K, 8u);
  EXPECT_EQ(c.system.J, 4u);
  EXPECT_EQ(c.train.n, 256u);
  EXPECT_EQ(c.training.epochs, 200u);
  EXPECT_EQ(c.train.min, (ParamVector{-5, 0, 0.1, 0}));
  EXPECT_EQ(c.train.max, (ParamVector{20, 5, 25, 25}));
  EXPECT_EQ(c.test.min, (ParamVector{-3, 0.5, 2, 2}));
  EXPECT_EQ(c.test.max, (ParamVector{18, 4.5, 23, 23}));
  EXPECT_EQ(c.test.length, 1000u);
  EXPECT_DOUBLE_EQ(c.integration.dt, 0.1);
  EXPECT_NE(c.label.find("not paper-scale"), std::string::npos);
}

TEST(Config, KseDefaults) {
  const RunConfig c = config_from_json(json{{"system", {{"kind", "kse"}}}});
  EXPECT_EQ(c.system.param_dim(), 3u);
  EXPECT_DOUBLE_EQ(c.integration.dt, 0.5);
  EXPECT_EQ(c.train.n, 500u);
  EXPECT_EQ(c.train.length, 400u);
  EXPECT_EQ(c.test.length, 800u);
  EXPECT_EQ(c.train.min, (ParamVector{0.1, 0.1, 0.1}));
  EXPECT_EQ(c.test.max, (ParamVector{9.5, 9.5, 9.5}));
}

TEST(Dataset, AcceptedRecordsRevalidateFromDisk) {
  const fs::path& d = smoke_run();
  const Dataset ds = load_dataset(manifest_file(d, Stage::train));
  EXPECT_EQ(ds.requested, 64u);
  EXPECT_EQ(ds.accepted().size(), 64u);
  EXPECT_EQ(ds.config_hash, config_hash(smoke_config()));
  for (const auto* r : ds.accepted()) {
    const auto z = ds.load(*r);
    EXPECT_TRUE(dynamics::validate_trajectory(z).accepted());
    EXPECT_EQ(z.length(), 150u);
    EXPECT_EQ(z.dim(), 40u);
    EXPECT_EQ(z.meta.params, r->params);
    for (std::size_t l = 0; l < 4; ++l) {
      EXPECT_GE(r->params[l], smoke_config().train.min[l]);
      EXPECT_LE(r->params[l], smoke_config().train.max[l]);
    }
  }
  for (const auto& r : ds.records) {
    if (!r.accepted) {
      EXPECT_TRUE(r.file.empty());
    }
  }
}

TEST(Dataset, ThreadCountDoesNotChangeOutput) {
  json j = smoke_json();
  j["train_data"]["n"] = 12;
  j["training"]["batch_size"] = 8;
  const RunConfig c = config_from_json(j);
  const fs::path a = ee::testing::fresh_dir(kWork / "threads_a"), b = ee::testing::fresh_dir(kWork / "threads_b");
  std::ostringstream sink;
  generate_dataset(c, Stage::train, a, 1, sink);
  generate_dataset(c, Stage::train, b, 3, sink);
  EXPECT_TRUE(ee::testing::tree_differences(a, b).empty());
}

TEST(Dataset, FixedParametersAndObservationNoise) {
  json j = smoke_json();
  j["test_data"]["fixed"] = {10, 1, 10, 10};
  j["test_data"]["n"] = 2;
  const RunConfig clean = config_from_json(j);
  j["test_data"]["noise_r"] = 0.1;
  const RunConfig noisy = config_from_json(j);
  const fs::path a = ee::testing::fresh_dir(kWork / "noise_a"), b = ee::testing::fresh_dir(kWork / "noise_b");
  std::ostringstream sink;
  const auto da = generate_dataset(clean, Stage::test, a, 1, sink);
  const auto db = generate_dataset(noisy, Stage::test, b, 1, sink);
  ASSERT_EQ(da.accepted().size(), 2u);
  ASSERT_EQ(db.accepted().size(), 2u);
  for (const auto* r : db.accepted()) EXPECT_EQ(r->params, (ParamVector{10, 1, 10, 10}));
  const auto za = da.load(*da.accepted()[0]);
  const auto zb = db.load(*db.accepted()[0]);
  EXPECT_DOUBLE_EQ(zb.meta.noise_r, 0.1);
  // Same simulation, plus noise of variance r * Var_t per channel.
  const Vector gamma = dynamics::temporal_variance(za);
  const Vector noise_var = dynamics::temporal_variance(dynamics::Trajectory{zb.states - za.states, 0.1, {}});
  const double ratio = noise_var.sum() / gamma.sum();
  EXPECT_GT(ratio, 0.08);
  EXPECT_LT(ratio, 0.12);
}

TEST(Training, SmokeRunLossDecreasesAndCheckpoints) {
  const fs::path& d = smoke_run();
  const json s = read_json(d / "train_summary.json");
  EXPECT_LT(s.at("best_val_mape_percent").get<double>(), s.at("untrained_val_mape_percent").get<double>());
  EXPECT_NE(s.at("label").get<std::string>().find("not paper-scale"), std::string::npos);
  EXPECT_EQ(s.at("validation_records").size(), 5u);

  std::ifstream log(d / "train_log.csv");
  std::string header, line, first, last;
  std::getline(log, header);
  EXPECT_EQ(header, "epoch,lr,tau,tau_prime,loss_zz,loss_pp,loss_zp,loss_mape,loss_total,val_mape_percent");
  std::size_t rows = 0;
  while (std::getline(log, line)) {
    if (rows == 0) first = line;
    last = line;
    ++rows;
  }
  EXPECT_EQ(rows, 50u);
  auto col = [](const std::string& row, int k) {
    std::stringstream ss(row);
    std::string cell;
    for (int i = 0; i <= k; ++i) std::getline(ss, cell, ',');
    return std::stod(cell);
  };
  EXPECT_LT(col(last, 8), col(first, 8));  // total
  EXPECT_LT(col(last, 7), col(first, 7));  // regression MAPE term

  const auto ck = nn::load_checkpoint(best_checkpoint(d));
  EXPECT_EQ(ck.config_hash, config_hash(smoke_config()));
  EXPECT_EQ(ck.epoch, s.at("best_epoch").get<std::size_t>());
  EXPECT_TRUE(fs::exists(checkpoint_dir(d) / "last.ckpt"));
  EXPECT_TRUE(fs::exists(nn::manifest_path(best_checkpoint(d))));
}

TEST(Training, NeverNeedsTheTestSet) {
  json j = smoke_json();
  j["training"]["epochs"] = 2;
  const RunConfig c = config_from_json(j);
  const fs::path d = ee::testing::fresh_dir(kWork / "train_only");
  std::ostringstream sink;
  generate_dataset(c, Stage::train, d, 1, sink);
  ASSERT_FALSE(fs::exists(data_dir(d, Stage::test)));
  const auto r = train(c, d, sink);
  EXPECT_EQ(r.log.size(), 2u);
  EXPECT_FALSE(fs::exists(data_dir(d, Stage::test)));
}

TEST(Training, MissingDataIsConfigError) {
  const fs::path d = ee::testing::fresh_dir(kWork / "no_data");
  std::ostringstream sink;
  EXPECT_THROW(train(smoke_config(), d, sink), ConfigError);
}

TEST(Training, SplitIsDisjointAndSeeded) {
  const auto [v, t] = split_indices(40, 5, 3);
  EXPECT_EQ(v.size(), 5u);
  EXPECT_EQ(t.size(), 35u);
  for (auto i : v) EXPECT_EQ(std::count(t.begin(), t.end(), i), 0);
  EXPECT_EQ(split_indices(40, 5, 3).first, v);
  EXPECT_NE(split_indices(40, 5, 4).first, v);
}

TEST(Estimate, HeadOnlyIsCropAveragedRegression) {
  const fs::path& d = smoke_run();
  const RunConfig c = smoke_config();
  EstimateOptions o;
  o.mode = EstimateMode::head_only;
  const auto res = estimate(c, d, o);
  const auto obs = test_observations(d);
  ASSERT_EQ(res.size(), obs.size());
  const auto model = load_model(best_checkpoint(d), o.mode);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    // Independent evaluation: run the encoder on the same crops one at a time.
    Rng rng = crop_rng(c.seed, kTestCropTag, i);
    ParamVector mean(4, 0.0);
    for (std::size_t k = 0; k < c.estimate.head_crops; ++k) {
      const auto w = features::crop(obs[i].traj, c.encoder.crop_len, rng).states;
      const StateMatrix* p[] = {&w};
      nn::Graph g;
      const auto out = model->encoder.forward(g, p);
      for (std::size_t l = 0; l < 4; ++l) mean[l] += out.regression.value().data[l] / c.estimate.head_crops;
    }
    for (std::size_t l = 0; l < 4; ++l) EXPECT_NEAR(res[i].estimate[l], mean[l], 1e-9 * (1 + std::abs(mean[l])));
    EXPECT_EQ(res[i].final_ensemble.size(), 1u);
  }
}

TEST(Estimate, EmbedEmulateDefaultsToEmpiricalBayesPrior) {
  const fs::path& d = smoke_run();
  const RunConfig c = smoke_config();
  EstimateOptions o;
  o.mode = EstimateMode::embed_emulate;
  const auto res = estimate(c, d, o);
  const json j = read_json(estimate_dir(d, o.mode) / "estimates.json");
  EXPECT_EQ(j.at("prior"), "empB");
  EXPECT_EQ(j.at("config_hash"), config_hash(c));
  for (const auto& r : res) {
    ASSERT_TRUE(r.prior.has_value());
    ASSERT_TRUE(r.head.has_value());
    const auto eb = enki::empirical_bayes_prior(*r.head, enki::l96_fixed_prior(), enki::l96_empb_variances());
    for (std::size_t l = 0; l < 4; ++l) {
      EXPECT_DOUBLE_EQ(r.prior->components[l].mean, eb.prior.components[l].mean);
      EXPECT_DOUBLE_EQ(r.prior->components[l].variance, eb.prior.components[l].variance);
    }
    EXPECT_EQ(r.diagnostics.size(), c.estimate.N + 1);
    EXPECT_EQ(r.final_ensemble.size(), c.estimate.M);
    for (const auto& dg : r.diagnostics) EXPECT_TRUE(std::isfinite(dg.spread));
  }
  std::ifstream csv(estimate_dir(d, o.mode) / "ensembles" / "000000.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "iteration,particle,F,h,c,b");
}

TEST(Estimate, HistoryStrideKeepsEveryKthIterationAndTheLast) {
  const fs::path& d = smoke_run();
  json j = smoke_json();
  j["estimate"]["history_stride"] = 2;
  const RunConfig c = config_from_json(j);
  EstimateOptions o;
  o.mode = EstimateMode::embed_emulate;
  const fs::path out = ee::testing::fresh_dir(kWork / "stride");
  o.checkpoint = best_checkpoint(d);
  o.observation = data_dir(d, Stage::test) / "000000.bin";
  estimate(c, out, o);
  std::ifstream csv(estimate_dir(out, o.mode) / "ensembles" / "000000.csv");
  std::string line;
  std::getline(csv, line);
  std::map<int, std::size_t> rows;
  while (std::getline(csv, line)) ++rows[std::stoi(line.substr(0, line.find(',')))];
  EXPECT_EQ(rows, (std::map<int, std::size_t>{{0, 20}, {2, 20}, {4, 20}, {5, 20}}));
}

TEST(Estimate, FixedPriorOptionForEmbedEmulate) {
  const fs::path& d = smoke_run();
  json j = smoke_json();
  j["estimate"]["prior"] = "fixed";
  const RunConfig c = config_from_json(j);
  EstimateOptions o;
  o.mode = EstimateMode::embed_emulate;
  const auto res = estimate(c, d, o);
  const auto fixed = enki::l96_fixed_prior();
  for (std::size_t l = 0; l < 4; ++l) EXPECT_DOUBLE_EQ(res[0].prior->components[l].mean, fixed.components[l].mean);
}

TEST(Estimate, BaselineNeedsNoCheckpointAndIgnoresThreads) {
  const fs::path& d = smoke_run();
  const RunConfig c = smoke_config();
  EstimateOptions o;
  o.mode = EstimateMode::baseline;
  o.checkpoint = kWork / "does_not_exist.ckpt";
  const auto one = estimate(c, d, o);
  const std::string serial = ee::testing::read_file(estimate_dir(d, o.mode) / "estimates.json");
  o.threads = 3;
  estimate(c, d, o);
  EXPECT_EQ(serial, ee::testing::read_file(estimate_dir(d, o.mode) / "estimates.json"));
  for (const auto& r : one) {
    for (double v : r.estimate) EXPECT_TRUE(std::isfinite(v));
    EXPECT_GT(r.estimate[2], 0.0);  // c stays positive through the log-normal coordinate
  }
}

TEST(Estimate, CheckpointModesRequireCheckpoint) {
  const fs::path& d = smoke_run();
  for (auto m : {EstimateMode::embed_emulate, EstimateMode::head_only}) {
    EstimateOptions o;
    o.mode = m;
    o.checkpoint = kWork / "does_not_exist.ckpt";
    EXPECT_THROW(estimate(smoke_config(), d, o), ConfigError);
  }
}

TEST(Estimate, SingleObservationFile) {
  const fs::path& d = smoke_run();
  EstimateOptions o;
  o.mode = EstimateMode::head_only;
  o.observation = data_dir(d, Stage::test) / "000001.bin";
  const fs::path out = ee::testing::fresh_dir(kWork / "single_obs");
  o.checkpoint = best_checkpoint(d);
  const auto res = estimate(smoke_config(), out, o);
  ASSERT_EQ(res.size(), 1u);
  EXPECT_EQ(res[0].truth, load_dataset(manifest_file(d, Stage::test)).accepted()[1]->params);
}

TEST(Evaluate, ReportMatchesTestSetAndSingletonCrpsIsMae) {
  const fs::path& d = smoke_run();
  const RunConfig c = smoke_config();
  EstimateOptions o;
  o.mode = EstimateMode::head_only;
  const auto res = estimate(c, d, o);
  const auto rep = evaluate(c, d, o.mode);
  EXPECT_EQ(rep.count, res.size());
  ASSERT_TRUE(rep.crps.has_value());
  for (std::size_t l = 0; l < 4; ++l) {
    double mae = 0;
    for (const auto& r : res) mae += std::abs(r.estimate[l] - r.truth[l]) / static_cast<double>(res.size());
    EXPECT_NEAR((*rep.crps)[l], mae, 1e-12 * (1 + mae));
  }
  std::ifstream csv(report_dir(d) / "head-only.csv");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(csv, line)) ++lines;
  EXPECT_EQ(lines, 5u);
  const json j = read_json(report_dir(d) / "head-only.json");
  EXPECT_EQ(j.at("count"), res.size());
  EXPECT_EQ(j.at("label"), c.label);
}

TEST(Evaluate, PerfectEstimatesGiveZeros) {
  const fs::path& d = smoke_run();
  const fs::path out = ee::testing::fresh_dir(kWork / "perfect");
  fs::copy(d / "data", out / "data", fs::copy_options::recursive);
  const Dataset test = load_dataset(manifest_file(out, Stage::test));
  json j;
  j["instances"] = json::array();
  for (std::size_t i = 0; i < test.accepted().size(); ++i) {
    const auto& p = test.accepted()[i]->params;
    j["instances"].push_back({{"index", i}, {"estimate", p}, {"final_ensemble", {p}}});
  }
  fs::create_directories(estimate_dir(out, EstimateMode::baseline));
  std::ofstream(estimate_dir(out, EstimateMode::baseline) / "estimates.json") << j.dump();
  const auto rep = evaluate(smoke_config(), out, EstimateMode::baseline);
  for (std::size_t l = 0; l < 4; ++l) {
    EXPECT_EQ(rep.errors[l].mape, 0.0);
    EXPECT_EQ(rep.errors[l].mdape, 0.0);
    EXPECT_EQ((*rep.crps)[l], 0.0);
  }
}

TEST(Evaluate, MismatchedEstimatesAreRejected) {
  const fs::path& d = smoke_run();
  const fs::path out = ee::testing::fresh_dir(kWork / "mismatch");
  fs::copy(d / "data", out / "data", fs::copy_options::recursive);
  fs::create_directories(estimate_dir(out, EstimateMode::baseline));
  std::ofstream(estimate_dir(out, EstimateMode::baseline) / "estimates.json") << R"({"instances": []})";
  EXPECT_THROW(evaluate(smoke_config(), out, EstimateMode::baseline), ConfigError);
}

TEST(Evaluate, AffineProbeReport) {
  const fs::path& d = smoke_run();
  const auto p = probe_report(smoke_config(), d, best_checkpoint(d));
  EXPECT_EQ(p.r2.size(), 4u);
  for (double r : p.r2) EXPECT_LE(r, 1.0);
  const json j = read_json(report_dir(d) / "affine_probe.json");
  EXPECT_EQ(j.at("r2_heldout").size(), 4u);
  EXPECT_EQ(j.at("test_count"), 3u);
}

TEST(Heatmap, EmulatorObjectiveStaysWithinBounds) {
  const fs::path& d = smoke_run();
  json j = smoke_json();
  j["heatmap"] = {{"objective", "emulator"}, {"pair", {0, 3}}, {"resolution", 7}, {"range1", {-5, 20}}};
  const RunConfig c = config_from_json(j);
  const auto g = heatmap(c, d, {});
  EXPECT_EQ(g.grid_i.size(), 7u);
  EXPECT_DOUBLE_EQ(g.grid_i.front(), -5.0);
  EXPECT_DOUBLE_EQ(g.grid_j.back(), 23.0);
  for (Eigen::Index i = 0; i < g.values.size(); ++i) {
    EXPECT_GE(g.values.data()[i], 0.0);
    EXPECT_LE(g.values.data()[i], 4.0);
  }
  EXPECT_TRUE(fs::exists(d / "heatmaps" / "emulator_0_3.csv"));
}

TEST(Heatmap, MomentObjectiveCsvIsClippedGrid) {
  const fs::path& d = smoke_run();
  const RunConfig c = smoke_config();
  const auto g = heatmap(c, d, {});
  std::ifstream csv(d / "heatmaps" / "moment_1_2.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "p1,p2,value,clipped");
  std::size_t rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 25u);
  for (Eigen::Index i = 0; i < g.values.size(); ++i) EXPECT_LE(g.values.data()[i], 100.0);
  const json side = read_json(d / "heatmaps" / "moment_1_2.json");
  EXPECT_EQ(side.at("p1"), "h");
  EXPECT_EQ(side.at("p2"), "c");
}

TEST(Cli, ExitCodes) {
  const fs::path log = kWork / "cli.log";
  fs::create_directories(kWork);
  EXPECT_EQ(ee::testing::run_cli(cli(), "--help", log), 0);
  EXPECT_EQ(ee::testing::run_cli(cli(), "", log), 2);
  EXPECT_EQ(ee::testing::run_cli(cli(), "frobnicate", log), 2);
  EXPECT_EQ(ee::testing::run_cli(cli(), "train --config " + (kWork / "missing.json").string(), log), 2);

  json bad = smoke_json();
  bad["training"]["batch_size"] = 1000;
  const auto bad_path = write_config(bad, "bad.json");
  EXPECT_EQ(ee::testing::run_cli(cli(), "gen-data --config " + bad_path.string() + " --out " + (kWork / "x").string(), log), 2);
  EXPECT_NE(ee::testing::read_file(log).find("batch_size"), std::string::npos);

  const auto smoke_path = write_config(smoke_json(), "smoke.json");
  const fs::path empty = ee::testing::fresh_dir(kWork / "cli_empty");
  EXPECT_EQ(ee::testing::run_cli(cli(), "estimate --mode head-only --config " + smoke_path.string() + " --out " + empty.string(), log), 2);
  EXPECT_EQ(ee::testing::run_cli(cli(), "estimate --mode sideways --config " + smoke_path.string() + " --out " + empty.string(), log), 2);

  // A learning rate this large drives the weights to infinity within a few steps.
  json blowup = smoke_json();
  blowup["training"]["optimizer"]["lr"] = 1e300;
  blowup["training"]["optimizer"]["warmup_epochs"] = 0;
  blowup["training"]["epochs"] = 3;
  const auto blowup_path = write_config(blowup, "blowup.json");
  const fs::path bdir = ee::testing::fresh_dir(kWork / "cli_blowup");
  fs::copy(smoke_run() / "data", bdir / "data", fs::copy_options::recursive);
  EXPECT_EQ(ee::testing::run_cli(cli(), "train --config " + blowup_path.string() + " --out " + bdir.string(), log), 3);
  EXPECT_NE(ee::testing::read_file(log).find("numerical failure"), std::string::npos);
}

TEST(Cli, DeterministicRunsAreByteIdentical) {
  json j = smoke_json();
  j["train_data"]["n"] = 24;
  j["training"]["epochs"] = 3;
  j["training"]["batch_size"] = 8;
  const auto cfg = write_config(j, "repro.json");
  std::vector<fs::path> dirs;
  for (const char* name : {"repro_a", "repro_b"}) {
    const fs::path d = ee::testing::fresh_dir(kWork / name);
    const std::string common = " --config " + cfg.string() + " --seed 11 --deterministic --out " + d.string();
    const fs::path log = kWork / (std::string(name) + ".log");
    for (const std::string cmd : {"gen-data", "train", "estimate --mode head-only", "evaluate --mode head-only --probe",
                                  "estimate --mode embed-emulate", "heatmap --objective emulator"})
      ASSERT_EQ(ee::testing::run_cli(cli(), cmd + common, log), 0) << cmd << ": " << ee::testing::read_file(log);
    dirs.push_back(d);
  }
  EXPECT_EQ(ee::testing::tree_differences(dirs[0], dirs[1]), std::vector<std::string>{});
  EXPECT_GT(ee::testing::snapshot(dirs[0]).size(), 20u);
}
