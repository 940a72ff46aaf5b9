#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "ee/common/error.hpp"
#include "ee/common/types.hpp"

namespace ee::dynamics {

/// Coefficients of V_t + l2 V_xx + l4 V_xxxx + lnl V V_x = 0.
struct KseParams {
  double lambda2 = 1.0;
  double lambda4 = 1.0;
  double lambda_nl = 1.0;

  static KseParams from_vector(std::span<const double> phi) {
    detail::require_shape(phi.size() == 3, "KSE expects 3 parameters [l2, l4, lnl]");
    return {phi[0], phi[1], phi[2]};
  }
  ParamVector to_vector() const { return {lambda2, lambda4, lambda_nl}; }

  void validate() const {
    if (!(std::isfinite(lambda2) && std::isfinite(lambda4) && std::isfinite(lambda_nl)))
      throw ConfigError("KSE parameters must be finite");
    if (!(lambda4 > 0.0)) throw ConfigError("KSE parameter lambda4 must be > 0");
  }
};

inline bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

/// Pseudo-spectral right-hand side on the periodic grid x_n = n * 2L / d.
/// Owns its FFT workspace, so one instance must not be shared across threads.
class KseRhs {
 public:
  KseRhs(std::size_t d, double half_period, KseParams p) : d_(d), L_(half_period), p_(p) {
    detail::require_shape(is_power_of_two(d) && d >= 4, "KSE grid size d must be a power of two >= 4");
    detail::require_shape(half_period > 0.0, "KSE half-period L must be > 0");
    q_.resize(d);
    const double base = std::numbers::pi / L_;  // 2*pi / (2L)
    for (std::size_t m = 0; m < d; ++m) {
      const long mm = m <= d / 2 ? static_cast<long>(m) : static_cast<long>(m) - static_cast<long>(d);
      q_[m] = base * static_cast<double>(mm);
    }
    spec_.resize(d);
    tmp_.resize(d);
    lin_.resize(d);
    vx_.resize(d);
    real_.resize(d);
  }

  std::size_t dim() const { return d_; }

  /// Largest resolved wavenumber, pi * d / (2L).
  double q_max() const { return std::numbers::pi / L_ * static_cast<double>(d_ / 2); }

  /// Linear growth rate of the mode with wavenumber q.
  double linear_rate(double q) const { return p_.lambda2 * q * q - p_.lambda4 * q * q * q * q; }

  void operator()(std::span<const double> v, std::span<double> dv) const {
    detail::require_shape(v.size() == d_ && dv.size() == d_, "KSE state dimension must be d");
    for (double x : v)
      if (!std::isfinite(x)) throw NumericalError("kse_rhs: non-finite state");

    real_.assign(v.begin(), v.end());
    fft_.fwd(spec_, real_);

    const std::size_t nyquist = d_ / 2;
    for (std::size_t m = 0; m < d_; ++m) {
      const double q = q_[m];
      tmp_[m] = spec_[m] * (p_.lambda2 * q * q - p_.lambda4 * q * q * q * q);
    }
    fft_.inv(lin_, tmp_);

    for (std::size_t m = 0; m < d_; ++m)
      tmp_[m] = m == nyquist ? std::complex<double>(0.0) : spec_[m] * std::complex<double>(0.0, q_[m]);
    fft_.inv(vx_, tmp_);

    for (std::size_t n = 0; n < d_; ++n) dv[n] = lin_[n] - p_.lambda_nl * v[n] * vx_[n];
  }

  const KseParams& params() const { return p_; }

 private:
  std::size_t d_;
  double L_;
  KseParams p_;
  std::vector<double> q_;
  mutable Eigen::FFT<double> fft_;
  mutable std::vector<std::complex<double>> spec_, tmp_;
  mutable std::vector<double> lin_, vx_, real_;
};

inline Vector kse_rhs(std::span<const double> state, const KseParams& params, double half_period) {
  KseRhs rhs(state.size(), half_period, params);
  Vector out(static_cast<Eigen::Index>(state.size()));
  rhs(state, {out.data(), static_cast<std::size_t>(out.size())});
  return out;
}

/// Internal RK4 substeps per recording interval from the explicit stability
/// bound. The stiff part is l4 * q_max^4; the advective term is estimated from
/// the amplitude of the initial condition.
inline std::size_t kse_stable_substeps(const KseRhs& rhs, double dt, double amplitude) {
  const double q = rhs.q_max();
  const auto& p = rhs.params();
  const double rho = std::abs(p.lambda2) * q * q + std::abs(p.lambda4) * q * q * q * q +
                     std::abs(p.lambda_nl) * std::max(amplitude, 1.0) * 2.0 * q;
  // RK4 stability interval on the negative real axis is about 2.78.
  const double h_max = 2.5 / rho;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(dt / h_max)));
}

}  // namespace ee::dynamics
