#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "ee/dynamics/simulator.hpp"
#include "ee/enki/enki.hpp"
#include "ee/enki/forward_model.hpp"
#include "ee/enki/objectives.hpp"
#include "ee/enki/prior.hpp"
#include "ee/nn/model.hpp"

using namespace ee;
using namespace ee::enki;

namespace {

/// g(phi) = A phi, optionally failing for chosen particle indexes.
class LinearForward : public ForwardModel {
 public:
  explicit LinearForward(Matrix A, std::vector<std::size_t> fail = {}) : A_(std::move(A)), fail_(std::move(fail)) {}
  std::size_t output_dim() const override { return static_cast<std::size_t>(A_.rows()); }
  std::vector<std::optional<Vector>> evaluate(const std::vector<ParamVector>& phys, std::size_t,
                                              std::size_t) const override {
    std::vector<std::optional<Vector>> out;
    for (std::size_t m = 0; m < phys.size(); ++m) {
      if (std::find(fail_.begin(), fail_.end(), m) != fail_.end()) {
        out.emplace_back(std::nullopt);
        continue;
      }
      out.emplace_back(A_ * Eigen::Map<const Vector>(phys[m].data(), static_cast<Eigen::Index>(phys[m].size())));
    }
    return out;
  }

 private:
  Matrix A_;
  std::vector<std::size_t> fail_;
};

Prior normal_prior(std::vector<double> mean, std::vector<double> var) {
  Prior p;
  for (std::size_t j = 0; j < mean.size(); ++j)
    p.components.push_back({"x" + std::to_string(j), PriorKind::normal, mean[j], var[j]});
  return p;
}

}  // namespace

// ------------------------------------------------------------- prior

TEST(Prior, FixedL96Values) {
  const Prior p = l96_fixed_prior();
  ASSERT_EQ(p.dim(), 4u);
  EXPECT_EQ(p.components[0].mean, 7.5);
  EXPECT_EQ(p.components[0].variance, 36.0);
  EXPECT_EQ(p.components[1].mean, 2.5);
  EXPECT_EQ(p.components[1].variance, 2.25);
  EXPECT_EQ(p.components[2].kind, PriorKind::lognormal);
  EXPECT_DOUBLE_EQ(p.components[2].mean, std::log(11.5));
  EXPECT_EQ(p.components[2].variance, 0.15);
  EXPECT_EQ(p.components[3].mean, 12.5);
  EXPECT_EQ(p.components[3].variance, 36.0);
}

TEST(Prior, LogNormalPhysicalMean) {
  const Prior p = l96_fixed_prior();
  Rng rng(1);
  const Ensemble e = sample_prior(p, 200000, rng);
  double s = 0;
  for (Eigen::Index m = 0; m < e.particles.rows(); ++m) s += p.to_physical(e.particles.row(m).transpose())[2];
  const double mean = s / static_cast<double>(e.size());
  const double expect = 11.5 * std::exp(0.075);
  EXPECT_NEAR(expect, 12.4, 0.01);
  // sd of exp(N(mu, 0.15)) is about 4.9, so the MC error is about 0.011
  EXPECT_NEAR(mean, expect, 0.05);
  // Normal components: sample moments match
  EXPECT_NEAR(e.particles.col(0).mean(), 7.5, 0.05);
  const double var_b = (e.particles.col(3).array() - e.particles.col(3).mean()).square().mean();
  EXPECT_NEAR(var_b, 36.0, 0.5);
}

TEST(Prior, TinyVarianceCollapsesToMean) {
  Prior p = l96_fixed_prior();
  for (auto& c : p.components) c.variance = 1e-14;
  Rng rng(2);
  const Ensemble e = sample_prior(p, 50, rng);
  for (Eigen::Index m = 0; m < 50; ++m) {
    const auto x = p.to_physical(e.particles.row(m).transpose());
    EXPECT_NEAR(x[0], 7.5, 1e-5);
    EXPECT_NEAR(x[2], 11.5, 1e-5);
  }
}

TEST(Prior, Validation) {
  Prior p = l96_fixed_prior();
  p.components[1].variance = 0.0;
  EXPECT_THROW(p.validate(), ConfigError);
  Rng rng(3);
  EXPECT_THROW(sample_prior(l96_fixed_prior(), 1, rng), ConfigError);
  EXPECT_THROW(l96_fixed_prior().to_working(std::vector<double>{1, 1, -1, 1}), NumericalError);
}

TEST(EmpiricalBayes, L96Variances) {
  const auto v = l96_empb_variances();
  EXPECT_EQ(v, (ParamVector{18.0, 1.125, 0.075, 18.0}));
  const Prior fixed = l96_fixed_prior();
  const auto eb = empirical_bayes_prior(std::vector<double>{9.0, 1.5, 8.0, 11.0}, fixed, v);
  EXPECT_FALSE(eb.clamped);
  EXPECT_EQ(eb.prior.components[0].mean, 9.0);
  EXPECT_DOUBLE_EQ(eb.prior.components[2].mean, std::log(8.0));
  EXPECT_EQ(eb.prior.variances(), v);
}

TEST(EmpiricalBayes, FixedMeansChangeOnlyVariances) {
  const Prior fixed = l96_fixed_prior();
  const auto eb = empirical_bayes_prior(std::vector<double>{7.5, 2.5, 11.5, 12.5}, fixed, l96_empb_variances());
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_NEAR(eb.prior.components[j].mean, fixed.components[j].mean, 1e-15);
    EXPECT_EQ(eb.prior.components[j].kind, fixed.components[j].kind);
  }
}

TEST(EmpiricalBayes, NonPositiveLogNormalEstimateIsClampedAndFlagged) {
  const auto eb = empirical_bayes_prior(std::vector<double>{7.5, 2.5, -3.0, 12.5}, l96_fixed_prior(), l96_empb_variances());
  EXPECT_TRUE(eb.clamped);
  EXPECT_DOUBLE_EQ(eb.prior.components[2].mean, std::log(1e-3));
}

TEST(EmpiricalBayes, KseKeepsVariance) {
  const auto eb = empirical_bayes_prior(std::vector<double>{2.0, 3.0, 4.0}, kse_fixed_prior(), kse_empb_variances());
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(eb.prior.components[j].variance, 6.25);
    EXPECT_EQ(kse_fixed_prior().components[j].variance, 6.25);
  }
  EXPECT_EQ(eb.prior.components[1].mean, 3.0);
}

// -------------------------------------------------------------- gain

TEST(KalmanGain, ScalarCase) {
  Matrix C(1, 1), S(1, 1);
  C << 2.0;
  S << 3.0 + 1.0 / 1.0;  // C_gg + R / alpha
  EXPECT_DOUBLE_EQ(kalman_gain(C, S)(0, 0), 0.5);
}

TEST(KalmanGain, JitterRescuesSemidefinite) {
  Matrix S(2, 2), C(1, 2);
  S << 1, 1, 1, 1;
  C << 1, 1;
  const Matrix K = kalman_gain(C, S);
  EXPECT_TRUE(K.allFinite());
  EXPECT_THROW(kalman_gain(C, Matrix::Zero(2, 2)), NumericalError);
}

// -------------------------------------------------------------- step

TEST(EnkiStep, IdenticalParticlesDoNotMove) {
  const Prior prior = normal_prior({0, 0}, {1, 1});
  Matrix A(3, 2);
  A << 1, 2, -1, 0.5, 0.3, 1;
  LinearForward fm(A);
  Ensemble e;
  e.particles = Matrix::Constant(20, 2, 0.7);
  const Ensemble before = e;
  EnkiConfig cfg;
  cfg.M = 20;
  enki_step(e, prior, fm, Vector::Ones(3), Vector::Ones(3), cfg, 9);
  EXPECT_EQ(e.particles, before.particles);
  EXPECT_EQ(e.iteration, 1u);
}

TEST(EnkiStep, LinearGaussianMatchesConjugatePosterior) {
  const std::vector<double> m0{1.0, -2.0}, v0{4.0, 1.0};
  const Prior prior = normal_prior(m0, v0);
  Matrix A(3, 2);
  A << 1.0, 0.5, -0.3, 2.0, 0.7, 0.7;
  Vector y(3), R(3);
  y << 3.0, -1.0, 2.5;
  R << 0.5, 1.0, 0.25;
  // posterior mean m0 + S0 A^T (A S0 A^T + R)^-1 (y - A m0)
  Matrix S0 = Matrix::Zero(2, 2);
  S0.diagonal() << 4.0, 1.0;
  Vector mu0(2);
  mu0 << 1.0, -2.0;
  Matrix Rm = R.asDiagonal();
  const Vector post = mu0 + S0 * A.transpose() * (A * S0 * A.transpose() + Rm).ldlt().solve(y - A * mu0);

  LinearForward fm(A);
  EnkiConfig cfg;
  cfg.M = 10000;
  cfg.N = 1;
  cfg.alpha = 1.0;
  const auto res = run_enki(y, fm, prior, R, cfg, 2024);
  ASSERT_EQ(res.diagnostics.size(), 2u);
  const auto est = res.estimate();
  for (int j = 0; j < 2; ++j) EXPECT_LT(std::abs(est[j] - post(j)) / std::abs(post(j)), 0.05) << j;
  const Matrix post_cov = S0 - S0 * A.transpose() * (A * S0 * A.transpose() + Rm).ldlt().solve(A * S0);
  const Matrix c = res.ensemble.particles.rowwise() - res.ensemble.particles.colwise().mean();
  const Matrix ens_cov = c.transpose() * c / static_cast<double>(cfg.M);
  EXPECT_LT((ens_cov - post_cov).norm() / post_cov.norm(), 0.15);
  // the prior mean itself is not within tolerance, so the step did the work
  EXPECT_GT(std::abs(m0[0] - post(0)) / std::abs(post(0)), 0.05);
}

TEST(EnkiStep, FailedParticlesKeepTheirValue) {
  const Prior prior = normal_prior({0, 0}, {1, 1});
  Matrix A(2, 2);
  A << 1, 0, 0, 1;
  LinearForward fm(A, {0, 3});
  Rng rng(5);
  Ensemble e = sample_prior(prior, 8, rng);
  const Ensemble before = e;
  EnkiConfig cfg;
  cfg.M = 8;
  const auto r = enki_step(e, prior, fm, Vector::Ones(2), Vector::Ones(2), cfg, 1);
  EXPECT_EQ(r.valid, 6u);
  EXPECT_EQ(e.particles.row(0), before.particles.row(0));
  EXPECT_EQ(e.particles.row(3), before.particles.row(3));
  EXPECT_NE(e.particles.row(1), before.particles.row(1));

  LinearForward all_fail(A, {0, 1, 2, 3, 4, 5, 6});
  EXPECT_THROW(enki_step(e, prior, all_fail, Vector::Ones(2), Vector::Ones(2), cfg, 1), NumericalError);
}

TEST(EnkiStep, RejectsBadInputs) {
  const Prior prior = normal_prior({0, 0}, {1, 1});
  LinearForward fm(Matrix::Identity(2, 2));
  Rng rng(6);
  Ensemble e = sample_prior(prior, 5, rng);
  EnkiConfig cfg;
  EXPECT_THROW(enki_step(e, prior, fm, Vector::Ones(3), Vector::Ones(3), cfg, 1), ShapeError);
  EXPECT_THROW(enki_step(e, prior, fm, Vector::Ones(2), Vector::Zero(2), cfg, 1), ConfigError);
  cfg.alpha = 0.0;
  EXPECT_THROW(enki_step(e, prior, fm, Vector::Ones(2), Vector::Ones(2), cfg, 1), ConfigError);
}

// --------------------------------------------------------------- run

TEST(RunEnki, ZeroIterationsReturnsPrior) {
  const Prior prior = l96_fixed_prior();
  LinearForward fm(Matrix::Identity(4, 4));
  EnkiConfig cfg;
  cfg.M = 30;
  cfg.N = 0;
  const auto res = run_enki(Vector::Ones(4), fm, prior, Vector::Ones(4), cfg, 77);
  Rng rng = make_rng(77, Stream::prior);
  EXPECT_EQ(res.ensemble.particles, sample_prior(prior, 30, rng).particles);
  ASSERT_EQ(res.diagnostics.size(), 1u);
  EXPECT_EQ(res.diagnostics[0].iteration, 0u);
}

TEST(RunEnki, Defaults) {
  EnkiConfig cfg;
  EXPECT_EQ(cfg.M, 100u);
  EXPECT_EQ(cfg.N, 50u);
  EXPECT_EQ(cfg.alpha, 0.3);
}

TEST(RunEnki, LargeEnsembleAblationSupported) {
  const Prior prior = l96_fixed_prior();
  Matrix A = Matrix::Identity(4, 4);
  LinearForward fm(A);
  EnkiConfig cfg;
  cfg.M = 10000;
  cfg.N = 100;
  Vector y(4);
  y << 8, 1, 10, 10;
  const auto res = run_enki(y, fm, prior, Vector::Constant(4, 0.01), cfg, 3);
  EXPECT_EQ(res.diagnostics.size(), 101u);
  for (const auto& d : res.diagnostics) EXPECT_TRUE(std::isfinite(d.spread));
  EXPECT_NEAR(res.estimate()[0], 8.0, 0.05);
}

namespace {

struct SmallL96 {
  dynamics::SystemSpec sys{dynamics::SystemKind::l96};
  dynamics::IntegrationSpec integ;
  dynamics::Trajectory obs;
  SmallL96() {
    Rng rng(42);
    const ParamVector truth{10, 1, 10, 10};
    auto ic = dynamics::sample_initial_condition(sys.kind, sys.state_dim(), rng);
    obs = dynamics::simulate(sys, truth, {ic.data(), static_cast<std::size_t>(ic.size())}, 150, integ);
  }
};

}  // namespace

TEST(RunEnki, MomentForwardIsDeterministicAndThreadIndependent) {
  SmallL96 s;
  MomentForward fm(s.sys, s.integ, 150, s.obs, 11);
  const Vector y = features::moments(s.sys, s.obs.states);
  const Vector R = Vector::Ones(y.size());
  EnkiConfig cfg;
  cfg.M = 12;
  cfg.N = 2;
  cfg.keep_history = true;
  const auto a = run_enki(y, fm, l96_fixed_prior(), R, cfg, 5);
  const auto b = run_enki(y, fm, l96_fixed_prior(), R, cfg, 5);
  cfg.threads = 3;
  const auto c = run_enki(y, fm, l96_fixed_prior(), R, cfg, 5);
  EXPECT_EQ(a.ensemble.particles, b.ensemble.particles);
  EXPECT_EQ(a.ensemble.particles, c.ensemble.particles);
  ASSERT_EQ(a.history.size(), 3u);
  for (const auto& e : a.history)
    for (Eigen::Index m = 0; m < e.particles.rows(); ++m) {
      const auto p = l96_fixed_prior().to_physical(e.particles.row(m).transpose());
      EXPECT_GT(p[2], 0.0);
      EXPECT_TRUE(e.particles.row(m).allFinite());
    }
  for (const auto& d : a.diagnostics) EXPECT_TRUE(std::isfinite(d.spread));
}

TEST(RunEnki, EnsembleCsvExport) {
  const Prior prior = l96_fixed_prior();
  LinearForward fm(Matrix::Identity(4, 4));
  EnkiConfig cfg;
  cfg.M = 5;
  cfg.N = 2;
  cfg.keep_history = true;
  const auto res = run_enki(Vector::Ones(4), fm, prior, Vector::Ones(4), cfg, 1);
  const auto path = std::filesystem::temp_directory_path() / "ee_ensemble.csv";
  write_ensemble_csv(path, res.history, prior);
  std::ifstream is(path);
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "iteration,particle,F,h,c,b");
  std::size_t n = 0;
  while (std::getline(is, line)) ++n;
  EXPECT_EQ(n, 15u);
}

// -------------------------------------------------------- objectives

TEST(Objectives, MomentObjectiveValues) {
  Vector y(2), var = Vector::Ones(2), sim(2);
  y << 3, 4;
  sim << 0, 0;
  auto fixed = [&](std::span<const double>) -> std::optional<Vector> { return sim; };
  const std::vector<double> phi{1, 2};
  EXPECT_DOUBLE_EQ(moment_objective(phi, y, var, fixed), 12.5);
  sim = y;
  EXPECT_EQ(moment_objective(phi, y, var, fixed), 0.0);
  auto fail = [](std::span<const double>) -> std::optional<Vector> { return std::nullopt; };
  EXPECT_TRUE(std::isinf(moment_objective(phi, y, var, fail)));
  EXPECT_THROW(moment_objective(phi, y, Vector::Zero(2), fixed), ConfigError);
}

TEST(Objectives, MomentObjectiveMatchesLoop) {
  Rng rng(8);
  std::normal_distribution<double> n(0, 2);
  std::uniform_real_distribution<double> u(0.1, 3.0);
  for (int rep = 0; rep < 20; ++rep) {
    Vector y(7), var(7), sim(7);
    for (int j = 0; j < 7; ++j) y(j) = n(rng), var(j) = u(rng), sim(j) = n(rng);
    double loop = 0;
    for (int j = 0; j < 7; ++j) loop += (y(j) - sim(j)) * (y(j) - sim(j)) / (2 * var(j));
    const std::vector<double> phi{0};
    EXPECT_NEAR(moment_objective(phi, y, var, [&](std::span<const double>) { return std::optional<Vector>(sim); }),
                loop, 1e-12);
  }
}

TEST(Objectives, EmulatorObjectiveRange) {
  Vector a(3), b(3);
  a << 1, 0, 0;
  EXPECT_EQ(emulator_objective(a, a), 0.0);
  EXPECT_DOUBLE_EQ(emulator_objective(a, -a), 4.0);
  Rng rng(9);
  std::normal_distribution<double> n(0, 1);
  for (int rep = 0; rep < 1000; ++rep) {
    for (int j = 0; j < 3; ++j) a(j) = n(rng), b(j) = n(rng);
    a.normalize();
    b.normalize();
    const double v = emulator_objective(a, b);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 4.0 + 1e-12);
  }
}

TEST(Objectives, EmulatorForwardOutputsUnitVectors) {
  Rng rng(10);
  nn::Emulator emu(nn::EmulatorSpec{}, rng);
  EmulatorForward fm(emu);
  EXPECT_EQ(fm.output_dim(), 32u);
  const auto out = fm.evaluate({{8, 1, 10, 10}, {3, 2, 5, 1}}, 0, 1);
  ASSERT_EQ(out.size(), 2u);
  for (const auto& v : out) EXPECT_NEAR(v->norm(), 1.0, 1e-9);
}
