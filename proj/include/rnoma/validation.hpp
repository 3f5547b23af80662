#pragma once

// Cross-checks of the closed-form two-user analysis against independent
// routes: Monte Carlo event frequencies, power iteration, hand-transcribed
// throughput entries and the slot simulator.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "rnoma/markov.hpp"
#include "rnoma/random.hpp"
#include "rnoma/simulator.hpp"

namespace rnoma {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  std::map<std::string, double> stats;
};

using EventModel = std::function<EventProbabilities(double p, double rate, double mean_snr)>;

struct ParameterTriple {
  double p;
  double rate;
  double snr_db;
};

// p in {0.1, 0.4, 0.7, 1.0} x R in {1, 3, 6} x B in {15, 25} dB.
inline std::vector<ParameterTriple> default_validation_triples() {
  std::vector<ParameterTriple> out;
  for (double p : {0.1, 0.4, 0.7, 1.0})
    for (double r : {1.0, 3.0, 6.0})
      for (double db : {15.0, 25.0}) out.push_back({p, r, db});
  return out;
}

namespace detail {

// Two-sided tail probability of observing `count` successes out of `n` when
// the success probability is `q`, by exact binomial summation from the mode
// outward. Used where the expected count is too small for the normal law.
inline double binomial_two_sided_tail(std::int64_t count, std::int64_t n, double q) {
  if (q <= 0.0) return count == 0 ? 1.0 : 0.0;
  if (q >= 1.0) return count == n ? 1.0 : 0.0;
  auto log_pmf = [&](std::int64_t k) {
    return std::lgamma(double(n) + 1) - std::lgamma(double(k) + 1) - std::lgamma(double(n - k) + 1) +
           double(k) * std::log(q) + double(n - k) * std::log1p(-q);
  };
  const double mean = double(n) * q;
  double lower = 0.0, upper = 0.0;
  if (double(count) <= mean) {
    for (std::int64_t k = count; k >= 0; --k) {
      const double t = std::exp(log_pmf(k));
      lower += t;
      if (t < lower * 1e-17) break;
    }
    return std::min(1.0, 2.0 * lower);
  }
  for (std::int64_t k = count; k <= n; ++k) {
    const double t = std::exp(log_pmf(k));
    upper += t;
    if (t < upper * 1e-17) break;
  }
  return std::min(1.0, 2.0 * upper);
}

// Inverse of erfc on (0, 1] by bisection; ample for reporting.
inline double erfc_inverse(double y) {
  double lo = 0.0, hi = 30.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (std::erfc(mid) > y ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Two-sided mass outside +-z standard deviations of a normal law.
inline double normal_two_sided(double z) { return std::erfc(z / std::sqrt(2.0)); }

}  // namespace detail

/// Every closed-form event probability against a Monte Carlo frequency from
/// `n_samples` slots (triple i seeded with experiment_seed(seed, i)), within
/// `z_max` binomial standard deviations. When fewer than 30 hits or misses
/// are expected the band is applied as the equivalent exact binomial tail
/// probability instead of the normal approximation.
inline CheckResult check_events_against_monte_carlo(const EventModel& model,
                                                    const std::vector<ParameterTriple>& triples,
                                                    std::int64_t n_samples, std::uint64_t seed,
                                                    double z_max = 3.0) {
  CheckResult r{"closed_form_vs_monte_carlo_events", true, {}, {}};
  double worst_z = 0.0;
  int comparisons = 0;
  int failures = 0;
  int exact_tests = 0;
  const double alpha = detail::normal_two_sided(z_max);
  const auto names = EventProbabilities::names();
  const double n = static_cast<double>(n_samples);
  for (std::size_t ti = 0; ti < triples.size(); ++ti) {
    const auto& t = triples[ti];
    const double b = db_to_linear(t.snr_db);
    Rng rng(experiment_seed(seed, ti));
    const auto exact = model(t.p, t.rate, b).values();
    const auto mc = event_probabilities_mc(t.p, t.rate, b, n_samples, rng).values();
    for (std::size_t i = 0; i < exact.size(); ++i) {
      const double q = std::clamp(exact[i], 0.0, 1.0);
      const double sigma = std::sqrt(q * (1.0 - q) / n);
      const double diff = std::abs(mc[i] - exact[i]);
      double z = sigma > 0.0 ? diff / sigma : (diff > 1e-12 ? INFINITY : 0.0);
      bool ok = z <= z_max;
      if (sigma > 0.0 && (n * q < 30.0 || n * (1.0 - q) < 30.0)) {
        ++exact_tests;
        const auto hits = static_cast<std::int64_t>(std::llround(mc[i] * n));
        const double tail = detail::binomial_two_sided_tail(hits, n_samples, q);
        ok = tail >= alpha;
        // Report the normal-equivalent deviation of the exact tail.
        z = tail >= 1.0 ? 0.0 : std::sqrt(2.0) * detail::erfc_inverse(tail);
      }
      ++comparisons;
      worst_z = std::max(worst_z, z);
      if (!ok) {
        ++failures;
        if (r.detail.empty()) {
          char buf[200];
          std::snprintf(buf, sizeof buf, "%s at p=%g R=%g B=%gdB: closed %.6g, MC %.6g (z=%.2f)",
                        names[i], t.p, t.rate, t.snr_db, exact[i], mc[i], z);
          r.detail = buf;
        }
      }
    }
  }
  r.passed = failures == 0;
  r.stats = {{"triples", double(triples.size())}, {"samples_per_triple", double(n_samples)},
             {"comparisons", double(comparisons)}, {"failures", double(failures)},
             {"exact_binomial_comparisons", double(exact_tests)},
             {"max_z", worst_z}, {"sigma_band", z_max}};
  return r;
}

/// Partition identities of the closed forms.
inline CheckResult check_partition_identities(const EventModel& model,
                                              const std::vector<ParameterTriple>& triples,
                                              double tol = 1e-14) {
  CheckResult r{"partition_identities", true, {}, {}};
  double worst = 0.0;
  for (const auto& t : triples) {
    const auto ev = model(t.p, t.rate, db_to_linear(t.snr_db));
    worst = std::max({worst, std::abs(ev.e0_0 + ev.e1_1 + ev.e1_0 + ev.e2_2 + ev.e2_1 + ev.e2_0 - 1.0),
                      std::abs(ev.col_0 + ev.col_1 + ev.col_2 - ev.e2_0)});
    if (auto why = ev.check(tol); !why.empty() && r.passed) {
      r.passed = false;
      r.detail = why;
    }
  }
  r.stats = {{"triples", double(triples.size())}, {"max_residual", worst}, {"tolerance", tol}};
  return r;
}

/// Throughput entries written out term by term, independent of the
/// polynomial representation.
inline Matrix3 transcribed_throughput_matrix(const EventProbabilities& ev) {
  return {{{ev.e1_1 + ev.e2_1 + 2 * ev.e2_2, 0, 0},
           {2 * ev.e1_1 + 2 * ev.e2_2 + 2 * ev.e2_1, 0, 0},
           {2 * ev.rec_nop + ev.rec_pot, 0, 0}}};
}

/// Distribution after `iterations` steps of v <- v P from S0.
inline Vector3 power_iteration(const Matrix3& p, int iterations) {
  Vector3 v{1.0, 0.0, 0.0};
  for (int it = 0; it < iterations; ++it) {
    Vector3 next{};
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) next[j] += v[i] * p[i][j];
    v = next;
  }
  return v;
}

/// Distribution after 2^squarings steps from S0, by repeated squaring of P.
inline Vector3 power_limit(Matrix3 p, int squarings = 64) {
  for (int s = 0; s < squarings; ++s) {
    Matrix3 q{};
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t j = 0; j < 3; ++j) q[i][j] += p[i][k] * p[k][j];
    // Renormalize rows so rounding cannot compound over 2^64 steps.
    for (auto& row : q) {
      const double sum = row[0] + row[1] + row[2];
      for (auto& x : row) x /= sum;
    }
    p = q;
  }
  return p[0];
}

/// Row sums, stationarity, agreement with power iteration and the
/// derivative-vs-transcription identity, over random valid parameters.
inline CheckResult check_markov_structure(const EventModel& model, int n_random, std::uint64_t seed) {
  CheckResult r{"markov_structure", true, {}, {}};
  Rng rng(seed);
  double row_err = 0, stat_err = 0, power_err = 0, tt_err = 0;
  for (int n = 0; n < n_random; ++n) {
    const double p = 0.05 + 0.95 * rng.uniform_open0();
    const double db = 5.0 + 25.0 * rng.uniform_open0();
    const double rate_max = std::log2(1.0 + db_to_linear(db)) + 3.0;
    const double rate = 1.0 + (rate_max - 1.0) * rng.uniform_open0();
    const auto ev = model(p, rate, db_to_linear(db));
    const auto m = build_transition_model(ev);
    const auto ps = m.stochastic();
    for (const auto& row : ps) row_err = std::max(row_err, std::abs(row[0] + row[1] + row[2] - 1.0));
    const auto pi = steady_state(ps);
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0;
      for (std::size_t i = 0; i < 3; ++i) s += pi[i] * ps[i][j];
      stat_err = std::max(stat_err, std::abs(s - pi[j]));
    }
    const auto pw = power_limit(ps);
    for (std::size_t j = 0; j < 3; ++j) power_err = std::max(power_err, std::abs(pw[j] - pi[j]));
    const auto a = throughput_matrix(m);
    const auto b = transcribed_throughput_matrix(ev);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) tt_err = std::max(tt_err, std::abs(a[i][j] - b[i][j]));
  }
  r.passed = row_err <= 1e-12 && stat_err <= 1e-10 && power_err <= 1e-10 && tt_err <= 1e-15;
  if (!r.passed) r.detail = "structural tolerance exceeded";
  r.stats = {{"random_points", double(n_random)}, {"max_row_sum_error", row_err},
             {"max_stationarity_error", stat_err}, {"max_power_iteration_gap", power_err},
             {"max_throughput_matrix_gap", tt_err}};
  return r;
}

/// Batch-means estimate over one long run: the mean of the per-batch means
/// and its standard error.
inline Estimate batch_means(const std::vector<double>& per_slot, std::size_t batches) {
  const std::size_t per = per_slot.size() / batches;
  std::vector<double> means(batches, 0.0);
  for (std::size_t b = 0; b < batches; ++b) {
    double s = 0;
    for (std::size_t i = b * per; i < (b + 1) * per; ++i) s += per_slot[i];
    means[b] = s / static_cast<double>(per);
  }
  return Estimate::of(means);
}

struct StateOccupancy {
  std::array<Estimate, 3> states;  // S0, S2_2, S2_1
  Estimate throughput;
};

/// Long single two-user run from an empty buffer, with batch-means standard
/// errors for the state occupancy and the per-slot decoded count.
inline StateOccupancy simulate_state_occupancy(double p, double rate, double snr_db,
                                               std::int64_t n_slots, std::uint64_t seed,
                                               std::size_t batches = 100) {
  SystemConfig cfg;
  cfg.users = 2;
  cfg.p = p;
  cfg.rate = rate;
  cfg.snr_db = snr_db;
  cfg.n_slots = n_slots;
  const double rho = cfg.rho_th();
  std::array<std::vector<double>, 3> ind;
  for (auto& v : ind) v.reserve(static_cast<std::size_t>(n_slots));
  std::vector<double> dec;
  dec.reserve(static_cast<std::size_t>(n_slots));
  run_experiment(cfg, seed, [&](const SlotReport& rep, const SimState& st) {
    const auto s = static_cast<std::size_t>(classify_buffer_state(st.buffer, rho));
    for (std::size_t j = 0; j < 3; ++j) ind[j].push_back(j == s ? 1.0 : 0.0);
    dec.push_back(static_cast<double>(rep.recovered()));
  });
  StateOccupancy out;
  for (std::size_t j = 0; j < 3; ++j) out.states[j] = batch_means(ind[j], batches);
  out.throughput = batch_means(dec, batches);
  return out;
}

/// Empirical buffer-state occupancy against the corrected chain (must agree
/// within `z_max` standard errors per state) and the as-printed chain (must
/// be rejected in at least one state).
inline CheckResult check_state_histogram(const EventModel& model, double p, double rate,
                                         double snr_db, std::int64_t n_slots, std::uint64_t seed,
                                         double z_max = 3.0) {
  CheckResult r{"chain_vs_simulator_state_histogram", true, {}, {}};
  const auto ev = model(p, rate, db_to_linear(snr_db));
  const auto fixed = steady_state(build_transition_model(ev, Row3Layout::corrected));
  const auto printed = steady_state(build_transition_model(ev, Row3Layout::as_printed));
  const auto occ = simulate_state_occupancy(p, rate, snr_db, n_slots, seed);
  double worst_fixed = 0, worst_printed = 0;
  const char* label[3] = {"S0", "S2_2", "S2_1"};
  for (std::size_t j = 0; j < 3; ++j) {
    const double se = occ.states[j].std_error;
    const double zf = std::abs(occ.states[j].mean - fixed[j]) / se;
    const double zp = std::abs(occ.states[j].mean - printed[j]) / se;
    worst_fixed = std::max(worst_fixed, zf);
    worst_printed = std::max(worst_printed, zp);
    r.stats[std::string("empirical_") + label[j]] = occ.states[j].mean;
    r.stats[std::string("stderr_") + label[j]] = se;
    r.stats[std::string("chain_") + label[j]] = fixed[j];
    r.stats[std::string("printed_chain_") + label[j]] = printed[j];
  }
  r.stats["slots"] = double(n_slots);
  r.stats["max_z_corrected"] = worst_fixed;
  r.stats["max_z_as_printed"] = worst_printed;
  r.stats["sigma_band"] = z_max;
  const bool agrees = worst_fixed <= z_max;
  const bool rejects = worst_printed > z_max;
  r.passed = agrees && rejects;
  if (!agrees) r.detail = "simulator occupancy departs from the chain's steady state";
  else if (!rejects) r.detail = "as-printed transition layout not distinguishable";
  return r;
}

/// Long-run simulated throughput against the closed form at several points.
inline CheckResult check_throughput_agreement(const std::vector<ParameterTriple>& points,
                                              std::int64_t n_slots, std::uint64_t seed,
                                              double z_max = 3.0) {
  CheckResult r{"simulated_vs_analytical_throughput", true, {}, {}};
  double worst = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& t = points[i];
    const double exact = analytical_sum_rate(t.p, t.rate, db_to_linear(t.snr_db)).throughput;
    const auto occ = simulate_state_occupancy(t.p, t.rate, t.snr_db, n_slots, experiment_seed(seed, i));
    const double z = std::abs(occ.throughput.mean - exact) / occ.throughput.std_error;
    worst = std::max(worst, z);
    if (z > z_max && r.passed) {
      r.passed = false;
      char buf[160];
      std::snprintf(buf, sizeof buf, "p=%g R=%g B=%gdB: analytical T %.5f, simulated %.5f (z=%.2f)",
                    t.p, t.rate, t.snr_db, exact, occ.throughput.mean, z);
      r.detail = buf;
    }
  }
  r.stats = {{"points", double(points.size())}, {"slots_per_point", double(n_slots)},
             {"max_z", worst}, {"sigma_band", z_max}};
  return r;
}

inline std::vector<ParameterTriple> default_agreement_points() {
  return {{0.59, 6.129, 25.0}, {1.0, 1.263, 15.0}, {0.3, 2.0, 15.0}, {0.8, 4.0, 25.0},
          {0.5, 1.0, 20.0}};
}

}  // namespace rnoma
