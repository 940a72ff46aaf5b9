#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"

#include "ee/features/crop.hpp"
#include "ee/features/positive.hpp"
#include "ee/losses/contrastive.hpp"
#include "ee/losses/memory_bank.hpp"
#include "ee/losses/temperature.hpp"
#include "ee/metrics/scores.hpp"
#include "ee/nn/adamw.hpp"
#include "ee/nn/checkpoint.hpp"
#include "ee/nn/model.hpp"
#include "ee/pipeline/config.hpp"
#include "ee/pipeline/dataset.hpp"
#include "ee/pipeline/inference.hpp"

namespace ee::pipeline {

inline constexpr std::uint64_t kValidationCropTag = 100;

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0, tau = 0, tau_prime = 0;
  double zz = 0, pp = 0, zp = 0, mape = 0, total = 0;
  double val_mape = 0;  ///< percent, averaged over components
};

struct TrainResult {
  double untrained_val_mape = 0;
  double best_val_mape = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;  ///< 1-based count of completed epochs
  std::vector<std::size_t> validation_records;
  std::size_t train_count = 0;
  std::vector<EpochLog> log;
};

inline fs::path checkpoint_dir(const fs::path& out) { return out / "checkpoints"; }
inline fs::path best_checkpoint(const fs::path& out) { return checkpoint_dir(out) / "best.ckpt"; }

/// Training/validation split of the accepted records: `v` indexes drawn
/// from the split stream; the rest train.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, std::size_t v,
                                                                                  std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng = make_rng(seed, Stream::split);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::size_t> val(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(v));
  std::vector<std::size_t> tr(perm.begin() + static_cast<std::ptrdiff_t>(v), perm.end());
  std::sort(val.begin(), val.end());
  std::sort(tr.begin(), tr.end());
  return {val, tr};
}

/// Mean over components of the per-component MAPE (percent) of crop-averaged
/// head estimates.
inline double validation_mape(const nn::Encoder& enc, const std::vector<dynamics::Trajectory>& trajs,
                              const std::vector<ParamVector>& truths, std::size_t crops, std::uint64_t seed) {
  std::vector<ParamVector> est;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    Rng rng = crop_rng(seed, kValidationCropTag, i);
    est.push_back(summarize_crops(enc, trajs[i], crops, rng).head);
  }
  const auto errs = metrics::mape_mdape(est, truths);
  double s = 0;
  for (const auto& e : errs) s += e.mape;
  return s / static_cast<double>(errs.size());
}

/// Per-channel mean and std over every row of every trajectory.
inline std::pair<std::vector<double>, std::vector<double>> channel_stats(const std::vector<dynamics::Trajectory>& trajs) {
  const std::size_t d = trajs.front().dim();
  std::vector<double> mean(d, 0.0), sq(d, 0.0);
  double rows = 0;
  for (const auto& z : trajs) {
    for (Eigen::Index t = 0; t < z.states.rows(); ++t)
      for (std::size_t c = 0; c < d; ++c) mean[c] += z.states(t, static_cast<Eigen::Index>(c));
    rows += static_cast<double>(z.states.rows());
  }
  for (auto& m : mean) m /= rows;
  for (const auto& z : trajs)
    for (Eigen::Index t = 0; t < z.states.rows(); ++t)
      for (std::size_t c = 0; c < d; ++c) {
        const double dv = z.states(t, static_cast<Eigen::Index>(c)) - mean[c];
        sq[c] += dv * dv;
      }
  for (auto& s : sq) s = std::sqrt(s / rows);
  return {mean, sq};
}

inline std::pair<std::vector<double>, std::vector<double>> param_stats(const std::vector<ParamVector>& ps) {
  const std::size_t k = ps.front().size();
  std::vector<double> mean(k, 0.0), sd(k, 0.0);
  for (const auto& p : ps)
    for (std::size_t j = 0; j < k; ++j) mean[j] += p[j];
  for (auto& m : mean) m /= static_cast<double>(ps.size());
  for (const auto& p : ps)
    for (std::size_t j = 0; j < k; ++j) sd[j] += (p[j] - mean[j]) * (p[j] - mean[j]);
  for (auto& s : sd) s = std::max(std::sqrt(s / static_cast<double>(ps.size())), 1e-8);
  return {mean, sd};
}

inline void write_train_log(const fs::path& path, const std::vector<EpochLog>& log) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os.precision(17);
  os << "epoch,lr,tau,tau_prime,loss_zz,loss_pp,loss_zp,loss_mape,loss_total,val_mape_percent\n";
  for (const auto& e : log)
    os << e.epoch << ',' << e.lr << ',' << e.tau << ',' << e.tau_prime << ',' << e.zz << ',' << e.pp << ',' << e.zp << ','
       << e.mape << ',' << e.total << ',' << e.val_mape << '\n';
}

/// Joint training of encoder, head and emulator on the train stage only.
/// Writes checkpoints/best.ckpt (lowest validation MAPE), checkpoints/last.ckpt,
/// train_log.csv and train_summary.json under `out`.
inline TrainResult train(const RunConfig& c, const fs::path& out, std::ostream& log = std::cout) {
  const Dataset ds = load_dataset(manifest_file(out, Stage::train));
  const std::string hash = config_hash(c);
  if (ds.config_hash != hash)
    log << "note: training data was generated with config " << ds.config_hash << ", training with " << hash << '\n';
  LoadedSet all = load_accepted(ds);
  const std::size_t n = all.trajs.size();
  const auto& tc = c.training;
  if (n < tc.batch_size || n < tc.validation_size + 2)
    throw ConfigError("train: " + std::to_string(n) + " accepted samples, need at least batch_size (" +
                      std::to_string(tc.batch_size) + ") and validation_size + 2");
  for (const auto& z : all.trajs)
    if (z.dim() != c.system.state_dim() || z.length() < c.encoder.crop_len)
      throw ConfigError("train: dataset trajectories do not match the configured system or crop length");

  TrainResult res;
  const auto [val_idx, tr_idx] = split_indices(n, tc.validation_size, c.seed);
  res.validation_records = val_idx;
  std::vector<dynamics::Trajectory> trajs, val_trajs;
  std::vector<ParamVector> params, val_params;
  for (auto i : tr_idx) trajs.push_back(std::move(all.trajs[i])), params.push_back(all.params[i]);
  for (auto i : val_idx) val_trajs.push_back(std::move(all.trajs[i])), val_params.push_back(all.params[i]);
  res.train_count = trajs.size();

  Rng init = make_rng(c.seed, Stream::init);
  auto model = std::make_unique<nn::Model>(c.encoder_spec(), c.emulator_spec(), init);
  {
    auto [m, s] = channel_stats(trajs);
    model->encoder.set_input_stats(m, s);
    auto [pm, ps] = param_stats(params);
    model->emulator.set_param_stats(pm, ps);
    model->encoder.set_head_bias(pm);
  }
  const std::size_t batch = std::min(tc.batch_size, trajs.size());
  const std::size_t steps = (trajs.size() + batch - 1) / batch;
  nn::AdamW opt(model->parameters(), c.adamw(steps));
  const features::PositiveSelector selector(trajs, params, c.positive_rule());
  const std::size_t p = c.encoder.embed, L = c.encoder.crop_len;
  losses::MemoryBank zbank(tc.bank_capacity, p), pbank(tc.bank_capacity, p);

  const std::size_t head_crops = c.estimate.head_crops;
  res.untrained_val_mape = validation_mape(model->encoder, val_trajs, val_params, head_crops, c.seed);
  log << c.label << ": training on " << trajs.size() << " samples, validating on " << val_trajs.size() << ", "
      << steps << " steps/epoch, " << model->parameter_count() << " parameters\n";
  log << "untrained validation MAPE " << res.untrained_val_mape << "%\n";

  fs::create_directories(checkpoint_dir(out));
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    const auto temps = losses::temperature_at(epoch, tc.temperature);
    Rng rng = make_rng(c.seed, Stream::training, {epoch});
    std::vector<std::size_t> order(trajs.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog e;
    e.epoch = epoch;
    e.lr = opt.current_lr();
    e.tau = temps.tau;
    e.tau_prime = temps.tau_prime;
    for (std::size_t s = 0; s < steps; ++s) {
      const std::size_t lo = s * batch, hi = std::min(lo + batch, trajs.size());
      if (hi - lo < 2) continue;  // a contrastive batch needs a negative
      std::vector<StateMatrix> a_crops, p_crops;
      std::vector<ParamVector> a_phi, p_phi;
      for (std::size_t b = lo; b < hi; ++b) {
        const std::size_t i = order[b];
        a_crops.push_back(features::crop(trajs[i], L, rng).states);
        a_phi.push_back(params[i]);
        auto pos = selector.select(i, rng);
        p_crops.push_back(std::move(pos.crop.states));
        p_phi.push_back(std::move(pos.phi));
      }
      std::vector<const StateMatrix*> ap, pp;
      for (std::size_t b = 0; b < a_crops.size(); ++b) ap.push_back(&a_crops[b]), pp.push_back(&p_crops[b]);

      nn::Graph g;
      const auto fa = model->encoder.forward(g, ap);
      const auto fb = model->encoder.forward(g, pp);
      const auto ga = model->emulator.forward(g, a_phi);
      const auto gb = model->emulator.forward(g, p_phi);
      losses::LossComponents lc;
      lc.zz = losses::info_nce_zz(fa.embedding, fb.embedding, zbank, temps.tau);
      lc.pp = losses::info_nce_pp(ga, gb, pbank, temps.tau);
      lc.zp = losses::clip_loss(fa.embedding, ga, zbank, pbank, temps.tau_prime);
      lc.mape = losses::mape_loss(fa.regression, a_phi);
      const auto total = losses::total_loss(lc, tc.weights);
      const double vals[] = {lc.zz.value().item(), lc.pp.value().item(), lc.zp.value().item(),
                             lc.mape.value().item(), total.value().item()};
      auto diagnostics = [&] {
        return "epoch " + std::to_string(epoch) + " step " + std::to_string(s) + " (zz " + std::to_string(vals[0]) +
               ", pp " + std::to_string(vals[1]) + ", zp " + std::to_string(vals[2]) + ", mape " +
               std::to_string(vals[3]) + ", lr " + std::to_string(opt.current_lr()) + ")";
      };
      if (!std::isfinite(vals[4])) throw NumericalError("train: non-finite loss at " + diagnostics());
      try {
        opt.zero_grad();
        g.backward(total);
        opt.step();
      } catch (const NumericalError& err) {
        throw NumericalError(std::string(err.what()) + " at " + diagnostics());
      }
      zbank.push_rows(fa.embedding.value().matrix());
      pbank.push_rows(ga.value().matrix());
      const double w = static_cast<double>(hi - lo) / static_cast<double>(trajs.size());
      e.zz += w * vals[0], e.pp += w * vals[1], e.zp += w * vals[2], e.mape += w * vals[3], e.total += w * vals[4];
    }
    e.val_mape = validation_mape(model->encoder, val_trajs, val_params, head_crops, c.seed);
    if (!std::isfinite(e.val_mape)) throw NumericalError("train: non-finite validation MAPE at epoch " + std::to_string(epoch));
    res.log.push_back(e);
    if (e.val_mape < res.best_val_mape) {
      res.best_val_mape = e.val_mape;
      res.best_epoch = epoch + 1;
      nn::save_checkpoint(best_checkpoint(out), *model, &opt, epoch + 1, hash);
    }
    log << "epoch " << epoch + 1 << "/" << tc.epochs << " loss " << e.total << " (zz " << e.zz << ", pp " << e.pp
        << ", zp " << e.zp << ", mape " << e.mape << ") val MAPE " << e.val_mape << "%\n";
  }
  nn::save_checkpoint(checkpoint_dir(out) / "last.ckpt", *model, &opt, tc.epochs, hash);
  write_train_log(out / "train_log.csv", res.log);

  nlohmann::json s;
  s["label"] = c.label;
  s["config_hash"] = hash;
  s["epochs"] = tc.epochs;
  s["train_count"] = res.train_count;
  s["validation_records"] = res.validation_records;
  s["untrained_val_mape_percent"] = res.untrained_val_mape;
  s["best_val_mape_percent"] = res.best_val_mape;
  s["best_epoch"] = res.best_epoch;
  s["final_val_mape_percent"] = res.log.empty() ? res.untrained_val_mape : res.log.back().val_mape;
  s["parameter_count"] = model->parameter_count();
  std::ofstream os(out / "train_summary.json");
  os << s.dump(2) << '\n';
  return res;
}

}  // namespace ee::pipeline
