#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ee/common/error.hpp"
#include "ee/dynamics/simulator.hpp"
#include "ee/enki/enki.hpp"
#include "ee/features/positive.hpp"
#include "ee/losses/contrastive.hpp"
#include "ee/losses/temperature.hpp"
#include "ee/nn/adamw.hpp"
#include "ee/nn/emulator.hpp"
#include "ee/nn/encoder.hpp"

namespace ee::pipeline {

using nlohmann::json;

/// One dataset stage (train or test). `length` counts recorded rows.
struct DataSpec {
  ParamVector min, max;
  std::size_t length = 100;
  std::size_t n = 256;
  std::size_t max_attempts_factor = 4;  ///< stop after n * factor simulations
  std::optional<ParamVector> fixed;     ///< every instance at this point instead of uniform draws
  double noise_r = 0.0;                 ///< observation noise scale (test stage only)
};

struct OptimizerSpec {
  double lr = 1e-3;
  std::size_t warmup_epochs = 10;
  double min_lr = 0.0;
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
};

struct TrainingSpec {
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  std::size_t validation_size = 5;
  std::size_t bank_capacity = 512;
  losses::LossWeights weights;
  losses::TemperatureSchedule temperature;
  OptimizerSpec optimizer;
};

enum class EstimateMode { baseline, embed_emulate, head_only };

inline std::string to_string(EstimateMode m) {
  switch (m) {
    case EstimateMode::baseline: return "baseline";
    case EstimateMode::embed_emulate: return "embed-emulate";
    case EstimateMode::head_only: return "head-only";
  }
  return "?";
}

inline EstimateMode estimate_mode_from_string(const std::string& s) {
  if (s == "baseline") return EstimateMode::baseline;
  if (s == "embed-emulate") return EstimateMode::embed_emulate;
  if (s == "head-only") return EstimateMode::head_only;
  throw ConfigError("unknown estimate mode '" + s + "' (expected baseline, embed-emulate or head-only)");
}

struct EstimateSpec {
  EstimateMode mode = EstimateMode::embed_emulate;
  std::string prior = "empB";  ///< embed-emulate only; the baseline always uses the fixed prior
  std::size_t head_crops = 8;
  std::size_t M = 100, N = 50;
  double alpha = 0.3;
  std::string variance_source = "observation";  ///< "observation" or "truth"
  std::size_t variance_blocks = 20;
  std::size_t history_stride = 1;  ///< ensembles/ keeps every k-th iteration plus the last
};

struct HeatmapConfig {
  std::string objective = "moment";  ///< "moment" or "emulator"
  std::size_t p1 = 1, p2 = 2;
  std::size_t resolution = 21;
  std::optional<double> clip = 100.0;
  std::size_t instance = 0;
  std::optional<std::pair<double, double>> range1, range2;  ///< default: the test range
};

struct RunConfig {
  std::string label = "desk-scale (not paper-scale)";
  std::uint64_t seed = 0;
  dynamics::SystemSpec system;
  dynamics::IntegrationSpec integration;
  DataSpec train, test;
  nn::EncoderSpec encoder;
  std::size_t emulator_component = 16;
  std::size_t emulator_blocks = 3;
  features::PositivePairRule positive;
  TrainingSpec training;
  EstimateSpec estimate;
  HeatmapConfig heatmap;

  nn::EncoderSpec encoder_spec() const {
    nn::EncoderSpec s = encoder;
    s.channels = system.state_dim();
    s.out = system.param_dim();
    return s;
  }

  nn::EmulatorSpec emulator_spec() const {
    return {system.param_dim(), emulator_component, emulator_blocks, encoder.embed};
  }

  features::PositivePairRule positive_rule() const {
    auto r = positive;
    r.crop_len = encoder.crop_len;
    return r;
  }

  nn::AdamWConfig adamw(std::size_t steps_per_epoch) const {
    nn::AdamWConfig c;
    const auto& o = training.optimizer;
    c.beta1 = o.beta1;
    c.beta2 = o.beta2;
    c.weight_decay = o.weight_decay;
    c.schedule = {o.lr, o.warmup_epochs * steps_per_epoch, training.epochs * steps_per_epoch, o.min_lr};
    return c;
  }

  enki::EnkiConfig enki_config() const {
    enki::EnkiConfig c;
    c.M = estimate.M;
    c.N = estimate.N;
    c.alpha = estimate.alpha;
    return c;
  }

  void validate() const;
};

namespace detail {

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline void read_data(const json& j, DataSpec& d, const std::string& where) {
  check_keys(j, where, {"min", "max", "length", "n", "max_attempts_factor", "fixed", "noise_r"});
  read(j, "min", d.min, where);
  read(j, "max", d.max, where);
  read(j, "length", d.length, where);
  read(j, "n", d.n, where);
  read(j, "max_attempts_factor", d.max_attempts_factor, where);
  read(j, "noise_r", d.noise_r, where);
  if (j.contains("fixed") && !j.at("fixed").is_null()) {
    ParamVector f;
    read(j, "fixed", f, where);
    d.fixed = f;
  }
}

inline json data_json(const DataSpec& d) {
  json j{{"min", d.min}, {"max", d.max}, {"length", d.length}, {"n", d.n},
         {"max_attempts_factor", d.max_attempts_factor}, {"noise_r", d.noise_r}};
  j["fixed"] = d.fixed ? json(*d.fixed) : json(nullptr);
  return j;
}

}  // namespace detail

/// Fills a RunConfig from JSON; absent keys keep their defaults, unknown
/// keys are rejected.
inline RunConfig config_from_json(const json& j) {
  using detail::check_keys;
  using detail::read;
  RunConfig c;
  // The system-specific defaults come first so that explicit keys override them.
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  std::string kind = "l96";
  if (j.contains("system")) read(j.at("system"), "kind", kind, "system");
  c.system.kind = dynamics::system_from_string(kind);
  if (c.system.kind == dynamics::SystemKind::l96) {
    c.train.min = {-5, 0, 0.1, 0};
    c.train.max = {20, 5, 25, 25};
    c.test.min = {-3, 0.5, 2, 2};
    c.test.max = {18, 4.5, 23, 23};
    c.train.length = 400;
    c.test.length = 1000;
    c.test.n = 20;
  } else {
    c.integration.dt = 0.5;
    c.integration.substeps = 0;
    c.train.min = {0.1, 0.1, 0.1};
    c.train.max = {10, 10, 10};
    c.test.min = {0.5, 0.5, 0.5};
    c.test.max = {9.5, 9.5, 9.5};
    c.train.length = 400;
    c.train.n = 500;
    c.test.length = 800;
    c.test.n = 100;
    c.estimate.variance_blocks = 20;
  }

  check_keys(j, "config", {"label", "seed", "system", "integration", "train_data", "test_data", "model", "positive",
                           "training", "estimate", "heatmap"});
  read(j, "label", c.label, "config");
  read(j, "seed", c.seed, "config");
  if (j.contains("system")) {
    const auto& s = j.at("system");
    check_keys(s, "system", {"kind", "K", "J", "d", "L"});
    read(s, "K", c.system.K, "system");
    read(s, "J", c.system.J, "system");
    read(s, "d", c.system.d, "system");
    read(s, "L", c.system.L, "system");
  }
  if (j.contains("integration")) {
    const auto& s = j.at("integration");
    check_keys(s, "integration", {"dt", "substeps", "burn_in"});
    read(s, "dt", c.integration.dt, "integration");
    read(s, "substeps", c.integration.substeps, "integration");
    read(s, "burn_in", c.integration.burn_in, "integration");
  }
  if (j.contains("train_data")) detail::read_data(j.at("train_data"), c.train, "train_data");
  if (j.contains("test_data")) detail::read_data(j.at("test_data"), c.test, "test_data");
  if (j.contains("model")) {
    const auto& s = j.at("model");
    check_keys(s, "model", {"crop_len", "widths", "kernels", "hidden", "embed", "emulator_component", "emulator_blocks"});
    read(s, "crop_len", c.encoder.crop_len, "model");
    read(s, "widths", c.encoder.widths, "model");
    read(s, "kernels", c.encoder.kernels, "model");
    read(s, "hidden", c.encoder.hidden, "model");
    read(s, "embed", c.encoder.embed, "model");
    read(s, "emulator_component", c.emulator_component, "model");
    read(s, "emulator_blocks", c.emulator_blocks, "model");
  }
  if (j.contains("positive")) {
    const auto& s = j.at("positive");
    check_keys(s, "positive", {"threshold", "perturb_prob", "perturb_std", "eps"});
    read(s, "threshold", c.positive.threshold, "positive");
    read(s, "perturb_prob", c.positive.perturb_prob, "positive");
    read(s, "perturb_std", c.positive.perturb_std, "positive");
    read(s, "eps", c.positive.eps, "positive");
  }
  bool hold_given = false;
  if (j.contains("training")) {
    const auto& s = j.at("training");
    check_keys(s, "training",
               {"epochs", "batch_size", "validation_size", "bank_capacity", "loss_weights", "temperature", "optimizer"});
    auto& t = c.training;
    read(s, "epochs", t.epochs, "training");
    read(s, "batch_size", t.batch_size, "training");
    read(s, "validation_size", t.validation_size, "training");
    read(s, "bank_capacity", t.bank_capacity, "training");
    if (s.contains("loss_weights")) {
      const auto& w = s.at("loss_weights");
      check_keys(w, "training.loss_weights", {"zz", "pp", "zp", "mape"});
      read(w, "zz", t.weights.zz, "training.loss_weights");
      read(w, "pp", t.weights.pp, "training.loss_weights");
      read(w, "zp", t.weights.zp, "training.loss_weights");
      read(w, "mape", t.weights.mape, "training.loss_weights");
    }
    if (s.contains("temperature")) {
      const auto& w = s.at("temperature");
      const std::string where = "training.temperature";
      check_keys(w, where,
                 {"tau0", "tau_max", "hold_epochs", "tau_prime", "prime_ramp", "prime_max", "prime_start", "prime_end"});
      read(w, "tau0", t.temperature.tau0, where);
      read(w, "tau_max", t.temperature.tau_max, where);
      read(w, "hold_epochs", t.temperature.hold_epochs, where);
      read(w, "tau_prime", t.temperature.tau_prime, where);
      read(w, "prime_ramp", t.temperature.prime_ramp, where);
      read(w, "prime_max", t.temperature.prime_max, where);
      read(w, "prime_start", t.temperature.prime_start, where);
      read(w, "prime_end", t.temperature.prime_end, where);
      hold_given = w.contains("hold_epochs");
    }
    if (s.contains("optimizer")) {
      const auto& w = s.at("optimizer");
      const std::string where = "training.optimizer";
      check_keys(w, where, {"lr", "warmup_epochs", "min_lr", "weight_decay", "beta1", "beta2"});
      read(w, "lr", t.optimizer.lr, where);
      read(w, "warmup_epochs", t.optimizer.warmup_epochs, where);
      read(w, "min_lr", t.optimizer.min_lr, where);
      read(w, "weight_decay", t.optimizer.weight_decay, where);
      read(w, "beta1", t.optimizer.beta1, where);
      read(w, "beta2", t.optimizer.beta2, where);
    }
  }
  // The ramp always ends at the last epoch; without an explicit hold the
  // first half is held, as in the 500-of-1000 full-scale schedule.
  c.training.temperature.total_epochs = c.training.epochs;
  if (!hold_given) c.training.temperature.hold_epochs = c.training.epochs / 2;

  if (j.contains("estimate")) {
    const auto& s = j.at("estimate");
    check_keys(s, "estimate", {"mode", "prior", "head_crops", "M", "N", "alpha", "variance_source", "variance_blocks",
                             "history_stride"});
    std::string mode = to_string(c.estimate.mode);
    read(s, "mode", mode, "estimate");
    c.estimate.mode = estimate_mode_from_string(mode);
    read(s, "prior", c.estimate.prior, "estimate");
    read(s, "head_crops", c.estimate.head_crops, "estimate");
    read(s, "M", c.estimate.M, "estimate");
    read(s, "N", c.estimate.N, "estimate");
    read(s, "alpha", c.estimate.alpha, "estimate");
    read(s, "variance_source", c.estimate.variance_source, "estimate");
    read(s, "variance_blocks", c.estimate.variance_blocks, "estimate");
    read(s, "history_stride", c.estimate.history_stride, "estimate");
  }
  if (j.contains("heatmap")) {
    const auto& s = j.at("heatmap");
    check_keys(s, "heatmap", {"objective", "pair", "resolution", "clip", "instance", "range1", "range2"});
    auto& h = c.heatmap;
    read(s, "objective", h.objective, "heatmap");
    if (s.contains("pair")) {
      std::vector<std::size_t> pair;
      read(s, "pair", pair, "heatmap");
      if (pair.size() != 2) throw ConfigError("heatmap.pair: expected two component indexes");
      h.p1 = pair[0];
      h.p2 = pair[1];
    }
    read(s, "resolution", h.resolution, "heatmap");
    read(s, "instance", h.instance, "heatmap");
    if (s.contains("clip")) {
      if (s.at("clip").is_null())
        h.clip.reset();
      else
        h.clip = s.at("clip").get<double>();
    }
    for (auto [key, dst] : {std::pair{"range1", &h.range1}, std::pair{"range2", &h.range2}}) {
      if (!s.contains(key) || s.at(key).is_null()) continue;
      std::vector<double> r;
      read(s, key, r, "heatmap");
      if (r.size() != 2) throw ConfigError(std::string("heatmap.") + key + ": expected [lo, hi]");
      *dst = std::pair{r[0], r[1]};
    }
  }
  c.validate();
  return c;
}

/// The fully resolved config; this is what gets hashed.
inline json to_json(const RunConfig& c) {
  json j;
  j["label"] = c.label;
  j["seed"] = c.seed;
  if (c.system.kind == dynamics::SystemKind::l96)
    j["system"] = {{"kind", "l96"}, {"K", c.system.K}, {"J", c.system.J}};
  else
    j["system"] = {{"kind", "kse"}, {"d", c.system.d}, {"L", c.system.L}};
  j["integration"] = {{"dt", c.integration.dt}, {"substeps", c.integration.substeps}, {"burn_in", c.integration.burn_in}};
  j["train_data"] = detail::data_json(c.train);
  j["test_data"] = detail::data_json(c.test);
  j["model"] = {{"crop_len", c.encoder.crop_len}, {"widths", c.encoder.widths}, {"kernels", c.encoder.kernels},
                {"hidden", c.encoder.hidden}, {"embed", c.encoder.embed},
                {"emulator_component", c.emulator_component}, {"emulator_blocks", c.emulator_blocks}};
  j["positive"] = {{"threshold", c.positive.threshold}, {"perturb_prob", c.positive.perturb_prob},
                   {"perturb_std", c.positive.perturb_std}, {"eps", c.positive.eps}};
  const auto& t = c.training;
  const auto& ts = t.temperature;
  const auto& o = t.optimizer;
  j["training"] = {
      {"epochs", t.epochs},
      {"batch_size", t.batch_size},
      {"validation_size", t.validation_size},
      {"bank_capacity", t.bank_capacity},
      {"loss_weights", {{"zz", t.weights.zz}, {"pp", t.weights.pp}, {"zp", t.weights.zp}, {"mape", t.weights.mape}}},
      {"temperature",
       {{"tau0", ts.tau0}, {"tau_max", ts.tau_max}, {"hold_epochs", ts.hold_epochs}, {"tau_prime", ts.tau_prime},
        {"prime_ramp", ts.prime_ramp}, {"prime_max", ts.prime_max}, {"prime_start", ts.prime_start},
        {"prime_end", ts.prime_end}}},
      {"optimizer",
       {{"lr", o.lr}, {"warmup_epochs", o.warmup_epochs}, {"min_lr", o.min_lr}, {"weight_decay", o.weight_decay},
        {"beta1", o.beta1}, {"beta2", o.beta2}}}};
  const auto& e = c.estimate;
  j["estimate"] = {{"mode", to_string(e.mode)}, {"prior", e.prior}, {"head_crops", e.head_crops}, {"M", e.M},
                   {"N", e.N}, {"alpha", e.alpha}, {"variance_source", e.variance_source},
                   {"variance_blocks", e.variance_blocks}, {"history_stride", e.history_stride}};
  const auto& h = c.heatmap;
  j["heatmap"] = {{"objective", h.objective}, {"pair", {h.p1, h.p2}}, {"resolution", h.resolution},
                  {"instance", h.instance}};
  j["heatmap"]["clip"] = h.clip ? json(*h.clip) : json(nullptr);
  j["heatmap"]["range1"] = h.range1 ? json({h.range1->first, h.range1->second}) : json(nullptr);
  j["heatmap"]["range2"] = h.range2 ? json({h.range2->first, h.range2->second}) : json(nullptr);
  return j;
}

inline void RunConfig::validate() const {
  using ee::detail::require_config;
  const std::size_t k = system.param_dim();
  if (system.kind == dynamics::SystemKind::l96) {
    require_config(system.K >= 4 && system.J >= 1, "system: L96 needs K >= 4 and J >= 1");
  } else {
    require_config(system.d >= 4 && (system.d & (system.d - 1)) == 0, "system: KSE d must be a power of two >= 4");
    require_config(system.L > 0, "system: KSE L must be > 0");
  }
  require_config(integration.dt > 0, "integration.dt must be > 0");
  for (const auto* d : {&train, &test}) {
    const std::string w = d == &train ? "train_data" : "test_data";
    require_config(d->min.size() == k && d->max.size() == k, w + ": min/max must have " + std::to_string(k) + " entries");
    for (std::size_t l = 0; l < k; ++l)
      require_config(std::isfinite(d->min[l]) && std::isfinite(d->max[l]) && d->min[l] <= d->max[l],
                     w + ": need finite min <= max componentwise");
    require_config(d->length >= 2, w + ".length must be >= 2");
    require_config(d->n >= 1, w + ".n must be >= 1");
    require_config(d->max_attempts_factor >= 1, w + ".max_attempts_factor must be >= 1");
    require_config(d->noise_r >= 0, w + ".noise_r must be >= 0");
    if (d->fixed) require_config(d->fixed->size() == k, w + ".fixed must have " + std::to_string(k) + " entries");
    require_config(d->length >= encoder.crop_len, w + ".length must be >= model.crop_len");
  }
  require_config(train.noise_r == 0, "train_data.noise_r: observation noise applies to the test stage only");
  for (std::size_t l = 0; l < k; ++l)
    require_config(train.min[l] <= test.min[l] && test.max[l] <= train.max[l],
                   "test range must lie inside the train range componentwise");
  if (system.kind == dynamics::SystemKind::l96)
    require_config(train.min[2] > 0 && test.min[2] > 0, "L96 c must be > 0 over the sampling ranges");
  else
    require_config(train.min[1] > 0 && test.min[1] > 0, "KSE lambda4 must be > 0 over the sampling ranges");

  encoder_spec().validate();
  emulator_spec().validate();
  positive_rule().validate();
  const auto& t = training;
  require_config(t.epochs >= 1, "training.epochs must be >= 1");
  require_config(t.batch_size >= 2, "training.batch_size must be >= 2");
  require_config(t.validation_size >= 1 && t.validation_size < train.n,
                 "training.validation_size must be in [1, train_data.n)");
  require_config(train.n > t.batch_size || t.batch_size == train.n,
                 "training.batch_size must be < train_data.n or equal to it");
  require_config(t.bank_capacity >= 1, "training.bank_capacity must be >= 1");
  t.weights.validate();
  t.temperature.validate();
  require_config(t.optimizer.lr > 0 && t.optimizer.min_lr >= 0 && t.optimizer.min_lr <= t.optimizer.lr,
                 "training.optimizer: need lr > 0 and 0 <= min_lr <= lr");
  require_config(t.optimizer.warmup_epochs <= t.epochs, "training.optimizer.warmup_epochs must be <= epochs");
  require_config(t.optimizer.weight_decay >= 0, "training.optimizer.weight_decay must be >= 0");
  require_config(t.optimizer.beta1 >= 0 && t.optimizer.beta1 < 1 && t.optimizer.beta2 >= 0 && t.optimizer.beta2 < 1,
                 "training.optimizer: betas must be in [0, 1)");

  const auto& e = estimate;
  require_config(e.prior == "empB" || e.prior == "fixed", "estimate.prior must be empB or fixed");
  require_config(e.head_crops >= 1, "estimate.head_crops must be >= 1");
  enki_config().validate();
  require_config(e.N >= 1, "estimate.N must be >= 1");
  require_config(e.variance_source == "observation" || e.variance_source == "truth",
                 "estimate.variance_source must be observation or truth");
  require_config(e.history_stride >= 1, "estimate.history_stride must be >= 1");
  require_config(e.variance_blocks >= 2, "estimate.variance_blocks must be >= 2");
  require_config(e.variance_source != "observation" || test.length / e.variance_blocks >= 1,
                 "estimate.variance_blocks exceeds the test length");

  const auto& h = heatmap;
  require_config(h.objective == "moment" || h.objective == "emulator", "heatmap.objective must be moment or emulator");
  require_config(h.p1 != h.p2 && h.p1 < k && h.p2 < k, "heatmap.pair: need two distinct component indexes below " +
                                                           std::to_string(k));
  require_config(h.resolution >= 2, "heatmap.resolution must be >= 2");
  require_config(h.instance < test.n, "heatmap.instance must index the test set");
}

/// FNV-1a 64 of the resolved config's compact dump, as 16 hex digits.
inline std::string config_hash(const RunConfig& c) {
  const std::string s = to_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace ee::pipeline
