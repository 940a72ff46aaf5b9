#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "ee/common/error.hpp"
#include "ee/common/types.hpp"

namespace ee::dynamics {

/// Parameters of the two-scale Lorenz-96 system.
struct L96Params {
  double F = 10.0;  ///< forcing
  double h = 1.0;   ///< coupling strength
  double c = 10.0;  ///< time-scale ratio, > 0
  double b = 10.0;  ///< fast amplitude factor

  static L96Params from_vector(std::span<const double> phi) {
    detail::require_shape(phi.size() == 4, "L96 expects 4 parameters [F, h, c, b]");
    return {phi[0], phi[1], phi[2], phi[3]};
  }
  ParamVector to_vector() const { return {F, h, c, b}; }

  void validate() const {
    if (!(std::isfinite(F) && std::isfinite(h) && std::isfinite(c) && std::isfinite(b)))
      throw ConfigError("L96 parameters must be finite");
    if (!(c > 0.0)) throw ConfigError("L96 parameter c must be > 0");
  }
};

/// Right-hand side of the multiscale L96 system for a state z = [X (K), Y (K*J)].
///
/// The fast variables are treated as one flattened cyclic vector of length
/// K*J, so Y^{j+1,k} for j = J-1 is the first fast variable of block k+1.
class L96Rhs {
 public:
  L96Rhs(std::size_t K, std::size_t J, L96Params p) : K_(K), J_(J), p_(p) {
    detail::require_shape(K >= 4, "L96 needs K >= 4");
    detail::require_shape(J >= 1, "L96 needs J >= 1");
  }

  std::size_t dim() const { return K_ * (J_ + 1); }

  void operator()(std::span<const double> z, std::span<double> dz) const {
    detail::require_shape(z.size() == dim() && dz.size() == dim(),
                          "L96 state dimension must be K(J+1)");
    const std::size_t K = K_, J = J_, N = K * J;
    const double* X = z.data();
    const double* Y = z.data() + K;
    double* dX = dz.data();
    double* dY = dz.data() + K;
    const double hc = p_.h * p_.c;

    for (std::size_t k = 0; k < K; ++k) {
      double ybar = 0.0;
      for (std::size_t j = 0; j < J; ++j) ybar += Y[k * J + j];
      ybar /= static_cast<double>(J);
      const double xm1 = X[(k + K - 1) % K];
      const double xm2 = X[(k + K - 2) % K];
      const double xp1 = X[(k + 1) % K];
      dX[k] = -xm1 * (xm2 - xp1) - X[k] + p_.F - hc * ybar;
    }

    const double coupling = p_.h / static_cast<double>(J);
    for (std::size_t n = 0; n < N; ++n) {
      const double yp1 = Y[(n + 1) % N];
      const double yp2 = Y[(n + 2) % N];
      const double ym1 = Y[(n + N - 1) % N];
      dY[n] = p_.c * (-p_.b * yp1 * (yp2 - ym1) - Y[n] + coupling * X[n / J]);
    }
  }

  const L96Params& params() const { return p_; }

 private:
  std::size_t K_, J_;
  L96Params p_;
};

/// One-shot evaluation; allocates the output.
inline Vector l96_rhs(std::span<const double> state, const L96Params& params, std::size_t K,
                      std::size_t J) {
  L96Rhs rhs(K, J, params);
  if (state.size() != rhs.dim())
    throw ShapeError("l96_rhs: state has " + std::to_string(state.size()) +
                     " entries, expected K(J+1) = " + std::to_string(rhs.dim()));
  Vector out(static_cast<Eigen::Index>(rhs.dim()));
  rhs(state, {out.data(), static_cast<std::size_t>(out.size())});
  return out;
}

}  // namespace ee::dynamics
