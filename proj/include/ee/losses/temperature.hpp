#pragma once

#include <cstddef>

#include "ee/common/error.hpp"

namespace ee::losses {

/// tau is held at tau0 for `hold_epochs`, then heated linearly to tau_max at
/// `total_epochs`. tau' is constant unless `prime_ramp` is set, in which case
/// it rises linearly from tau_prime to prime_max between prime_start and
/// prime_end.
struct TemperatureSchedule {
  double tau0 = 0.15;
  double tau_max = 0.5;
  std::size_t hold_epochs = 500;
  std::size_t total_epochs = 1000;
  double tau_prime = 0.15;
  bool prime_ramp = false;
  double prime_max = 0.6;
  std::size_t prime_start = 500;
  std::size_t prime_end = 900;

  void validate() const {
    ee::detail::require_config(tau0 > 0.0 && tau_prime > 0.0, "temperature: tau0 and tau_prime must be > 0");
    ee::detail::require_config(tau_max >= tau0, "temperature: tau_max must be >= tau0");
    ee::detail::require_config(hold_epochs <= total_epochs, "temperature: hold_epochs must be <= total_epochs");
    ee::detail::require_config(!prime_ramp || (prime_start <= prime_end && prime_max >= tau_prime),
                           "temperature: invalid tau' ramp");
  }
};

struct Temperatures {
  double tau;
  double tau_prime;
};

namespace detail {
inline double ramp(double from, double to, std::size_t start, std::size_t end, std::size_t epoch) {
  if (epoch <= start) return from;
  if (epoch >= end) return to;
  return from + (to - from) * static_cast<double>(epoch - start) / static_cast<double>(end - start);
}
}  // namespace detail

inline Temperatures temperature_at(std::size_t epoch, const TemperatureSchedule& s) {
  Temperatures t{};
  t.tau = detail::ramp(s.tau0, s.tau_max, s.hold_epochs, s.total_epochs, epoch);
  t.tau_prime = s.prime_ramp ? detail::ramp(s.tau_prime, s.prime_max, s.prime_start, s.prime_end, epoch) : s.tau_prime;
  return t;
}

}  // namespace ee::losses
