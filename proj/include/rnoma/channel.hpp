#pragma once

// Per-packet SNR abstraction of the Rayleigh block-fading uplink and the
// SIC decodability conditions built on it.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "rnoma/config.hpp"
#include "rnoma/random.hpp"

namespace rnoma {

struct Thresholds {
  double rho_th;

  static Thresholds from_rate(double rate) {
    if (!(rate > 0.0)) throw parameter_error("encoding rate must be > 0");
    return {rate_threshold(rate)};
  }
};

// Inverse CDF of the exponential law with mean `mean_snr`; u in (0, 1].
inline double exponential_from_uniform(double u, double mean_snr) {
  return -mean_snr * std::log(u);
}

// Received SNR of one packet copy: |h|^2 of a unit CN(0,1) coefficient is
// unit-mean exponential, scaled by the mean SNR.
inline double sample_snr(Rng& rng, double mean_snr) {
  if (!(mean_snr > 0.0)) throw parameter_error("mean SNR must be > 0");
  return exponential_from_uniform(rng.uniform_open0(), mean_snr);
}

namespace detail {

// Prefix scan over SNRs already sorted in descending order.
inline int sorted_prefix_length(std::span<const double> sorted, double rho_th) {
  const auto n = sorted.size();
  // Interference seen by position k is the sum of every weaker packet,
  // accumulated from the weakest upward.
  constexpr std::size_t kInline = 64;
  std::array<double, kInline> inline_suffix;
  std::vector<double> heap_suffix;
  double* suffix = inline_suffix.data();
  if (n > kInline) {
    heap_suffix.resize(n);
    suffix = heap_suffix.data();
  }
  double acc = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    suffix[k] = acc;
    acc += sorted[k];
  }
  int m = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (sorted[k] >= rho_th * (1.0 + suffix[k]))
      ++m;
    else
      break;
  }
  return m;
}

}  // namespace detail

/// Largest m such that the m strongest packets can be peeled off one after
/// another, each decoded against the noise plus every weaker packet still
/// present. The scan stops at the first failure.
inline int sic_prefix_length(std::span<const double> snrs, double rho_th) {
  for (double b : snrs)
    if (!(b >= 0.0)) throw parameter_error("received SNR must be nonnegative");
  std::vector<double> sorted(snrs.begin(), snrs.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  return detail::sorted_prefix_length(sorted, rho_th);
}

// A buffered copy is potential when it would decode once every other copy in
// its slot has been cancelled.
inline bool is_potential(double b, double rho_th) { return b > rho_th; }

}  // namespace rnoma
