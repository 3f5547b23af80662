#pragma once

// Closed-form throughput analysis of two-user random NOMA with cross-slot
// SIC: per-slot event probabilities, the transition polynomial matrix of the
// buffer-state Markov chain, its stationary law, and the sum rate.

#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "rnoma/channel.hpp"
#include "rnoma/config.hpp"
#include "rnoma/random.hpp"

namespace rnoma {

/// Probabilities of the per-slot events of the two-user system.
///
/// Activity events `eN_M` mean N active users of which M are decoded by
/// intra-slot SIC. `col_J` splits `e2_0` by the number J of potential packets
/// in the resulting 2-collision. The remaining four are conditioned on the
/// buffer holding one potential packet: `rec_nop`/`rec_pot` say whether the
/// packet decoded this slot belongs to the non-potential or potential owner,
/// `col_new`/`col_old` whether a fresh 2-collision adds a potential packet
/// for the other user.
struct EventProbabilities {
  double e0_0 = 0, e1_1 = 0, e1_0 = 0, e2_2 = 0, e2_1 = 0, e2_0 = 0;
  double col_0 = 0, col_1 = 0, col_2 = 0;
  double rec_nop = 0, rec_pot = 0, col_new = 0, col_old = 0;

  static constexpr std::size_t kFields = 13;

  static constexpr std::array<const char*, kFields> names() {
    return {"E0_0", "E1_1", "E1_0", "E2_2", "E2_1", "E2_0", "ECol_0",
            "ECol_1", "ECol_2", "Erec_nop", "Erec_pot", "ECol_new", "ECol_old"};
  }

  std::array<double, kFields> values() const {
    return {e0_0, e1_1, e1_0, e2_2, e2_1, e2_0, col_0, col_1, col_2, rec_nop, rec_pot,
            col_new, col_old};
  }

  /// Empty when every field is a probability and the partition identities
  /// hold to `tol`; otherwise a description of the first violation.
  std::string check(double tol = 1e-12) const {
    const auto v = values();
    const auto n = names();
    for (std::size_t i = 0; i < kFields; ++i)
      if (!(v[i] >= -tol && v[i] <= 1.0 + tol)) return std::string(n[i]) + " is not a probability";
    auto near = [tol](double a, double b) { return std::abs(a - b) <= tol; };
    if (!near(e0_0 + e1_1 + e1_0 + e2_2 + e2_1 + e2_0, 1.0)) return "activity events do not sum to 1";
    if (!near(col_0 + col_1 + col_2, e2_0)) return "2-collision events do not partition E2_0";
    if (!near(rec_pot, (e1_1 + e2_1) / 2)) return "Erec_pot inconsistent with E1_1, E2_1";
    if (!near(rec_nop, (e1_1 + e2_1) / 2 + e2_2)) return "Erec_nop inconsistent with E1_1, E2_1, E2_2";
    if (!near(col_new, col_1 / 2 + col_2)) return "ECol_new inconsistent with ECol_1, ECol_2";
    if (!near(col_old, col_1 / 2 + col_0)) return "ECol_old inconsistent with ECol_0, ECol_1";
    return {};
  }
};

inline void check_analytical_domain(double p, double rate, double mean_snr) {
  if (!(p > 0.0 && p <= 1.0)) throw parameter_error("transmission probability must lie in (0, 1]");
  if (!(mean_snr > 0.0)) throw parameter_error("mean SNR must be > 0");
  if (!(rate >= 1.0))
    throw analytical_domain_error(
        "closed-form event probabilities assume an encoding rate R >= 1 (threshold 2^R-1 >= 1); "
        "use the simulator for R < 1");
}

/// Closed-form event probabilities for transmission probability `p`, rate
/// `rate` (bits/symbol) and linear mean SNR `mean_snr`.
inline EventProbabilities event_probabilities(double p, double rate, double mean_snr) {
  check_analytical_domain(p, rate, mean_snr);
  const double rho = rate_threshold(rate);
  const double q = 1.0 - p;
  const double pp = p * p;
  // Exponents are formed as ratios first so tiny B cannot overflow.
  const double e1 = std::exp(-(rho / mean_snr));
  const double e2 = std::exp(-(2.0 * rho / mean_snr));
  const double e_both = std::exp(-(rho * (2.0 + rho) / mean_snr));
  const double pair = 2.0 * pp / (1.0 + rho);

  EventProbabilities ev;
  ev.e0_0 = q * q;
  ev.e1_1 = 2.0 * p * q * e1;
  ev.e1_0 = 2.0 * p * q * (1.0 - e1);
  ev.e2_2 = pair * e_both;
  ev.e2_1 = pair * (e1 - e_both);
  ev.e2_0 = pp - pair * e1;
  ev.col_2 = pp * e2 - pair * e_both;
  ev.col_1 = pair * rho * e1 - 2.0 * pp * e2 + pair * e_both;
  ev.col_0 = pp * (1.0 - e1) * (1.0 - e1);
  ev.rec_pot = (ev.e1_1 + ev.e2_1) / 2.0;
  ev.rec_nop = (ev.e1_1 + ev.e2_1) / 2.0 + ev.e2_2;
  ev.col_new = ev.col_1 / 2.0 + ev.col_2;
  ev.col_old = ev.col_1 / 2.0 + ev.col_0;
  return ev;
}

/// Monte Carlo estimate of the same events from `n_samples` independent
/// two-user slots. For the buffer-conditioned events a fair coin picks which
/// user owns the buffered potential packet. Valid for any R > 0.
inline EventProbabilities event_probabilities_mc(double p, double rate, double mean_snr,
                                                 std::int64_t n_samples, Rng& rng) {
  if (n_samples < 1) throw parameter_error("sample count must be >= 1");
  if (!(p >= 0.0 && p <= 1.0)) throw parameter_error("transmission probability must lie in [0, 1]");
  if (!(mean_snr > 0.0)) throw parameter_error("mean SNR must be > 0");
  const double rho = Thresholds::from_rate(rate).rho_th;

  std::array<std::int64_t, EventProbabilities::kFields> hits{};
  enum { E00, E11, E10, E22, E21, E20, C0, C1, C2, RNOP, RPOT, CNEW, COLD };
  for (std::int64_t s = 0; s < n_samples; ++s) {
    std::array<double, 2> snr{};
    std::array<int, 2> who{};
    int n = 0;
    for (int k = 0; k < 2; ++k)
      if (rng.uniform_open0() <= p) {
        snr[static_cast<std::size_t>(n)] = sample_snr(rng, mean_snr);
        who[static_cast<std::size_t>(n)] = k;
        ++n;
      }
    const int owner = rng.uniform_open0() <= 0.5 ? 0 : 1;

    if (n == 0) {
      ++hits[E00];
      continue;
    }
    if (n == 1) {
      if (snr[0] >= rho) {
        ++hits[E11];
        ++hits[who[0] == owner ? RPOT : RNOP];
      } else {
        ++hits[E10];
      }
      continue;
    }
    const std::size_t strong = snr[0] >= snr[1] ? 0 : 1;
    const int m = sic_prefix_length(std::span<const double>(snr.data(), 2), rho);
    if (m == 2) {
      ++hits[E22];
      ++hits[RNOP];
    } else if (m == 1) {
      ++hits[E21];
      ++hits[who[strong] == owner ? RPOT : RNOP];
    } else {
      ++hits[E20];
      const bool pot0 = is_potential(snr[0], rho);
      const bool pot1 = is_potential(snr[1], rho);
      const int j = int(pot0) + int(pot1);
      ++hits[static_cast<std::size_t>(C0 + j)];
      if (j == 2) {
        ++hits[CNEW];
      } else if (j == 0) {
        ++hits[COLD];
      } else {
        const int pot_user = pot0 ? who[0] : who[1];
        ++hits[pot_user == owner ? COLD : CNEW];
      }
    }
  }
  const double n = static_cast<double>(n_samples);
  auto f = [&](int i) { return static_cast<double>(hits[static_cast<std::size_t>(i)]) / n; };
  EventProbabilities ev;
  ev.e0_0 = f(E00);
  ev.e1_1 = f(E11);
  ev.e1_0 = f(E10);
  ev.e2_2 = f(E22);
  ev.e2_1 = f(E21);
  ev.e2_0 = f(E20);
  ev.col_0 = f(C0);
  ev.col_1 = f(C1);
  ev.col_2 = f(C2);
  ev.rec_nop = f(RNOP);
  ev.rec_pot = f(RPOT);
  ev.col_new = f(CNEW);
  ev.col_old = f(COLD);
  return ev;
}

/// Polynomial in x whose coefficient of x^k is the probability of a
/// transition that decodes k packets.
struct TransitionPolynomial {
  std::array<double, 3> coeff{};  // powers 0, 1, 2

  double at(double x) const { return coeff[0] + coeff[1] * x + coeff[2] * x * x; }
  // d/dx at x = 1: expected decoded packets carried by this transition.
  double derivative_at_one() const { return coeff[1] + 2.0 * coeff[2]; }

  bool operator==(const TransitionPolynomial&) const = default;
};

// Where an idle slot (and a 2-collision adding no new potential packet) sends
// the chain from S2_1. `corrected` keeps it in S2_1. `as_printed` swaps the two
// entries and sends it to S2_2; it is kept only for comparison.
enum class Row3Layout { corrected, as_printed };

using Matrix3 = std::array<std::array<double, 3>, 3>;
using Vector3 = std::array<double, 3>;

/// 3x3 polynomial matrix over the states [S0, S2_2, S2_1].
struct TransitionModel {
  std::array<std::array<TransitionPolynomial, 3>, 3> entries{};

  Matrix3 at(double x) const {
    Matrix3 m{};
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) m[i][j] = entries[i][j].at(x);
    return m;
  }
  Matrix3 stochastic() const { return at(1.0); }
};

inline TransitionModel build_transition_model(const EventProbabilities& ev,
                                              Row3Layout layout = Row3Layout::corrected) {
  if (auto why = ev.check(1e-9); !why.empty())
    throw parameter_error("invalid event probabilities: " + why);
  TransitionModel m;
  auto& e = m.entries;
  // From S0: anything short of a 2-collision with a potential packet keeps
  // the buffer free of potential packets.
  e[0][0].coeff = {ev.e0_0 + ev.e1_0 + ev.col_0, ev.e1_1 + ev.e2_1, ev.e2_2};
  e[0][1].coeff = {ev.col_2, 0, 0};
  e[0][2].coeff = {ev.col_1, 0, 0};
  // From S2_2: any decoded packet releases the other through cancellation.
  e[1][0].coeff = {0, 0, ev.e1_1 + ev.e2_2 + ev.e2_1};
  e[1][1].coeff = {ev.e0_0 + ev.e1_0 + ev.e2_0, 0, 0};
  // From S2_1.
  e[2][0].coeff = {0, ev.rec_pot, ev.rec_nop};
  const double stay = ev.e0_0 + ev.e1_0 + ev.col_old;
  if (layout == Row3Layout::corrected) {
    e[2][1].coeff = {ev.col_new, 0, 0};
    e[2][2].coeff = {stay, 0, 0};
  } else {
    e[2][1].coeff = {stay, 0, 0};
    e[2][2].coeff = {ev.col_new, 0, 0};
  }
  return m;
}

/// Expected packets decoded on each transition: entrywise derivative of the
/// polynomial matrix at x = 1.
inline Matrix3 throughput_matrix(const TransitionModel& model) {
  Matrix3 m{};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) m[i][j] = model.entries[i][j].derivative_at_one();
  return m;
}

namespace detail {

inline std::string format_matrix(const Matrix3& p) {
  std::ostringstream os;
  os.precision(17);
  for (const auto& row : p) os << "[" << row[0] << ", " << row[1] << ", " << row[2] << "]";
  return os.str();
}

}  // namespace detail

/// Stationary distribution of the row-stochastic `p` as seen from S0 (the
/// chain always starts with an empty buffer): the states reachable from S0
/// must contain exactly one closed class, on which the distribution is
/// computed by GTH elimination. GTH works with off-diagonal mass only, so
/// nearly absorbing chains lose no accuracy to 1 - p_ii cancellation.
inline Vector3 steady_state(const Matrix3& p) {
  for (std::size_t i = 0; i < 3; ++i) {
    const double row = p[i][0] + p[i][1] + p[i][2];
    if (std::abs(row - 1.0) > 1e-9)
      throw numerical_error("transition matrix row " + std::to_string(i) +
                            " does not sum to 1: " + detail::format_matrix(p));
  }
  // reach[i][j]: j reachable from i in zero or more steps.
  std::array<std::array<bool, 3>, 3> reach{};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) reach[i][j] = i == j || p[i][j] > 0.0;
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) reach[i][j] = reach[i][j] || (reach[i][k] && reach[k][j]);

  // A reachable state is recurrent iff everything it reaches reaches it back.
  std::vector<std::size_t> closed;
  for (std::size_t i = 0; i < 3; ++i) {
    if (!reach[0][i]) continue;
    bool recurrent = true;
    for (std::size_t j = 0; j < 3; ++j)
      if (reach[i][j] && !reach[j][i]) recurrent = false;
    if (recurrent) closed.push_back(i);
  }
  for (std::size_t a = 0; a < closed.size(); ++a)
    for (std::size_t b = 0; b < closed.size(); ++b)
      if (!reach[closed[a]][closed[b]])
        throw numerical_error("stationary distribution is not unique (several closed classes "
                              "reachable from S0): " + detail::format_matrix(p));

  const std::size_t n = closed.size();
  std::array<std::array<double, 3>, 3> q{};
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) q[a][b] = p[closed[a]][closed[b]];
  for (std::size_t k = n; k-- > 1;) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += q[k][j];
    if (!(s > 0.0))
      throw numerical_error("GTH elimination broke down: " + detail::format_matrix(p));
    for (std::size_t i = 0; i < k; ++i) q[i][k] /= s;
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j)
        if (i != j) q[i][j] += q[i][k] * q[k][j];
  }
  std::array<double, 3> x{1.0, 0.0, 0.0};
  double total = 1.0;
  for (std::size_t k = 1; k < n; ++k) {
    for (std::size_t i = 0; i < k; ++i) x[k] += x[i] * q[i][k];
    total += x[k];
  }
  Vector3 v{};
  for (std::size_t a = 0; a < n; ++a) v[closed[a]] = x[a] / total;
  return v;
}

inline Vector3 steady_state(const TransitionModel& model) { return steady_state(model.stochastic()); }

struct SumRate {
  double throughput = 0.0;  // expected packets decoded per slot
  double sum_rate = 0.0;    // rate * throughput, bits per symbol
};

/// Long-run throughput of the two-user chain and the resulting sum rate.
inline SumRate analytical_sum_rate(double p, double rate, double mean_snr,
                                   Row3Layout layout = Row3Layout::corrected) {
  const auto model = build_transition_model(event_probabilities(p, rate, mean_snr), layout);
  const auto pi = steady_state(model);
  const auto tt = throughput_matrix(model);
  double t = 0.0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) t += pi[i] * tt[i][j];
  return {t, rate * t};
}

}  // namespace rnoma
