#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rnoma {

// Thrown when a parameter lies outside the model's domain (p outside (0,1],
// nonpositive SNR, negative received SNR, ...).
class parameter_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Thrown by the closed-form analysis when asked to evaluate outside the
// region where the event integrals were derived (rate below 1 bit/symbol).
class analytical_domain_error : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Numerical failure with enough context to diagnose it.
class numerical_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class io_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Scheme { cross_slot, intra_only };

inline std::string_view to_string(Scheme s) {
  return s == Scheme::cross_slot ? "cross-slot" : "intra-only";
}

inline Scheme parse_scheme(std::string_view s) {
  if (s == "cross-slot") return Scheme::cross_slot;
  if (s == "intra-only") return Scheme::intra_only;
  throw parameter_error("unknown scheme '" + std::string(s) +
                        "' (expected cross-slot or intra-only)");
}

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

// SINR threshold 2^R - 1 for a packet encoded at R bits/symbol.
inline double rate_threshold(double rate) { return std::exp2(rate) - 1.0; }

/// Everything a simulation run needs. Transmit power is normalized to one,
/// so the only physical parameter is the mean received SNR B.
struct SystemConfig {
  int users = 2;
  double snr_db = 25.0;
  double p = 0.59;
  double rate = 6.129;
  long n_slots = 200;
  long n_experiments = 1000;
  std::uint64_t seed = 1;
  Scheme scheme = Scheme::cross_slot;

  double mean_snr() const { return db_to_linear(snr_db); }
  double rho_th() const { return rate_threshold(rate); }

  void validate() const {
    if (users < 1) throw parameter_error("user count must be >= 1");
    if (!(p > 0.0 && p <= 1.0))
      throw parameter_error("transmission probability must lie in (0, 1]");
    if (!(rate > 0.0)) throw parameter_error("encoding rate must be > 0");
    if (!std::isfinite(snr_db)) throw parameter_error("SNR must be finite");
    if (n_slots < 1) throw parameter_error("slot count must be >= 1");
    if (n_experiments < 1)
      throw parameter_error("experiment count must be >= 1");
  }
};

}  // namespace rnoma
