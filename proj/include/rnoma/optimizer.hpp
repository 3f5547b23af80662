#pragma once

// Joint (p, R) sum-rate maximization by exhaustive coarse-to-fine grid
// search, with the closed-form two-user model or the simulator as backend.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "rnoma/config.hpp"
#include "rnoma/markov.hpp"
#include "rnoma/simulator.hpp"

namespace rnoma {

struct GridSpec {
  double p_min = 0.01, p_max = 1.0, p_step = 0.01;
  double rate_min = 1.0, rate_max = 10.0, rate_step = 0.05;
  int refinement_rounds = 2;
  double refinement_shrink = 0.1;

  void validate() const {
    if (!(p_min > 0.0 && p_min <= p_max && p_max <= 1.0))
      throw parameter_error("grid needs 0 < p_min <= p_max <= 1");
    if (!(rate_min > 0.0 && rate_min <= rate_max))
      throw parameter_error("grid needs 0 < R_min <= R_max");
    if (!(p_step > 0.0 && rate_step > 0.0)) throw parameter_error("grid steps must be > 0");
    if (refinement_rounds < 0) throw parameter_error("refinement rounds must be >= 0");
    if (!(refinement_shrink > 0.0 && refinement_shrink < 1.0))
      throw parameter_error("refinement shrink factor must lie in (0, 1)");
  }

  // Upper rate bound: three bits above the single-user capacity at the mean
  // SNR, past which the sum rate only decays.
  static double default_rate_max(double mean_snr) { return std::log2(1.0 + mean_snr) + 3.0; }

  static GridSpec analytical_default(double mean_snr) {
    GridSpec g;
    g.rate_min = 1.0;
    g.rate_max = default_rate_max(mean_snr);
    return g;
  }

  static GridSpec simulated_default(double mean_snr) {
    GridSpec g;
    g.rate_min = 0.05;
    g.rate_max = default_rate_max(mean_snr);
    return g;
  }

  // Single point; useful for evaluating a known operating point.
  static GridSpec point(double p, double rate) {
    GridSpec g;
    g.p_min = g.p_max = p;
    g.rate_min = g.rate_max = rate;
    g.refinement_rounds = 0;
    return g;
  }
};

enum class Method { analytical, simulated };

inline std::string_view to_string(Method m) {
  return m == Method::analytical ? "analytical" : "simulated";
}

struct OptimizationResult {
  double p_star = 0.0;
  double rate_star = 0.0;
  double sum_rate_star = 0.0;
  Method method = Method::analytical;
  GridSpec grid;
  std::optional<double> std_error;  // simulated backend only
  std::int64_t evaluations = 0;
};

struct GridPoint {
  double p = 0.0;
  double rate = 0.0;
  double sum_rate = 0.0;
  double std_error = 0.0;
};

namespace detail {

// Values lo, lo+step, ... up to hi; the last value snaps to hi when it lands
// within rounding distance.
inline std::vector<double> axis(double lo, double hi, double step) {
  std::vector<double> v;
  const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
  for (long i = 0; i <= n; ++i) {
    double x = lo + static_cast<double>(i) * step;
    if (std::abs(x - hi) < 1e-9 * step) x = hi;
    v.push_back(std::min(x, hi));
  }
  return v;
}

// Points center + j*step for |j| <= half_span, kept inside [lo, hi].
inline std::vector<double> centered_axis(double center, double half_width, double step,
                                         double lo, double hi) {
  std::vector<double> v;
  const auto n = static_cast<long>(std::llround(half_width / step));
  for (long j = -n; j <= n; ++j) {
    const double x = center + static_cast<double>(j) * step;
    if (x >= lo - 1e-12 && x <= hi + 1e-12) v.push_back(std::clamp(x, lo, hi));
  }
  return v;
}

// Strictly larger sum rate wins; ties go to smaller R, then smaller p.
inline bool better(const GridPoint& a, const GridPoint& b) {
  if (a.sum_rate != b.sum_rate) return a.sum_rate > b.sum_rate;
  if (a.rate != b.rate) return a.rate < b.rate;
  return a.p < b.p;
}

}  // namespace detail

// Sum rate (and its standard error, 0 for exact backends) at one (p, R).
using Evaluator = std::function<GridPoint(double p, double rate)>;

/// Exhaustive search over the grid, then `refinement_rounds` re-grids on a
/// window of one previous step around the incumbent with the step shrunk by
/// `refinement_shrink`. Points within a round are evaluated independently
/// (across `threads` workers) and reduced in grid order.
inline OptimizationResult grid_search(const Evaluator& eval, const GridSpec& grid, Method method,
                                      unsigned threads = 1,
                                      std::vector<GridPoint>* trace = nullptr) {
  grid.validate();
  OptimizationResult result;
  result.method = method;
  result.grid = grid;

  auto run_round = [&](const std::vector<double>& ps, const std::vector<double>& rs) {
    std::vector<GridPoint> pts;
    pts.reserve(ps.size() * rs.size());
    for (double r : rs)
      for (double p : ps) pts.push_back({p, r, 0.0, 0.0});
    auto work = [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) pts[i] = eval(pts[i].p, pts[i].rate);
    };
    const unsigned t = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(pts.size())));
    if (t == 1) {
      work(0, pts.size());
    } else {
      std::vector<std::jthread> pool;
      const std::size_t chunk = (pts.size() + t - 1) / t;
      for (std::size_t b = 0; b < pts.size(); b += chunk)
        pool.emplace_back(work, b, std::min(pts.size(), b + chunk));
    }
    result.evaluations += static_cast<std::int64_t>(pts.size());
    if (trace) trace->insert(trace->end(), pts.begin(), pts.end());
    return pts;
  };

  std::optional<GridPoint> best;
  auto absorb = [&](const std::vector<GridPoint>& pts) {
    for (const auto& pt : pts)
      if (!best || detail::better(pt, *best)) best = pt;
  };

  absorb(run_round(detail::axis(grid.p_min, grid.p_max, grid.p_step),
                   detail::axis(grid.rate_min, grid.rate_max, grid.rate_step)));
  double p_step = grid.p_step;
  double r_step = grid.rate_step;
  for (int round = 0; round < grid.refinement_rounds; ++round) {
    const double np = p_step * grid.refinement_shrink;
    const double nr = r_step * grid.refinement_shrink;
    absorb(run_round(detail::centered_axis(best->p, p_step, np, grid.p_min, grid.p_max),
                     detail::centered_axis(best->rate, r_step, nr, grid.rate_min, grid.rate_max)));
    p_step = np;
    r_step = nr;
  }
  result.p_star = best->p;
  result.rate_star = best->rate;
  result.sum_rate_star = best->sum_rate;
  if (method == Method::simulated) result.std_error = best->std_error;
  return result;
}

/// Two-user optimum from the closed-form chain. The grid must stay in the
/// analytical domain R >= 1.
inline OptimizationResult grid_search_analytical(double snr_db, const GridSpec& grid,
                                                 std::vector<GridPoint>* trace = nullptr) {
  if (grid.rate_min < 1.0)
    throw analytical_domain_error("analytical search needs R_min >= 1");
  const double b = db_to_linear(snr_db);
  Evaluator eval = [b](double p, double rate) {
    return GridPoint{p, rate, analytical_sum_rate(p, rate, b).sum_rate, 0.0};
  };
  return grid_search(eval, grid, Method::analytical, 1, trace);
}

/// Optimum of the Monte Carlo sum rate for the users, SNR, horizon, scheme
/// and seed in `base`. Every grid point reuses the same seed.
inline OptimizationResult grid_search_simulated(const SystemConfig& base, const GridSpec& grid,
                                                unsigned threads = 1,
                                                std::vector<GridPoint>* trace = nullptr) {
  base.validate();
  Evaluator eval = [base](double p, double rate) {
    SystemConfig cfg = base;
    cfg.p = p;
    cfg.rate = rate;
    const auto s = run_monte_carlo(cfg);
    return GridPoint{p, rate, s.sum_rate.mean, s.sum_rate.std_error};
  };
  return grid_search(eval, grid, Method::simulated, threads, trace);
}

// Schemes compared in a K sweep: the proposed scheme, the same random access
// without cross-slot cancellation, and the proposed scheme with every user
// transmitting in every slot.
enum class SweepVariant { cross_slot, intra_only, deterministic };

inline std::string_view to_string(SweepVariant v) {
  switch (v) {
    case SweepVariant::cross_slot: return "cross-slot";
    case SweepVariant::intra_only: return "intra-only";
    case SweepVariant::deterministic: return "p=1";
  }
  return "?";
}

struct SweepRow {
  int users = 0;
  SweepVariant variant = SweepVariant::cross_slot;
  OptimizationResult result;
};

inline std::vector<SweepRow> sweep_k(const SystemConfig& base, std::span<const int> user_counts,
                                     std::span<const SweepVariant> variants, const GridSpec& grid,
                                     unsigned threads = 1) {
  std::vector<SweepRow> rows;
  for (int k : user_counts)
    for (auto v : variants) {
      SystemConfig cfg = base;
      cfg.users = k;
      GridSpec g = grid;
      cfg.scheme = v == SweepVariant::intra_only ? Scheme::intra_only : Scheme::cross_slot;
      if (v == SweepVariant::deterministic) g.p_min = g.p_max = 1.0;
      rows.push_back({k, v, grid_search_simulated(cfg, g, threads)});
    }
  return rows;
}

struct LookupRow {
  int users = 0;
  double snr_db = 0.0;
  OptimizationResult result;
};

inline constexpr const char* kLookupHeader = "K,B_dB,p_star,R_star,Rs_star,method,stderr";

/// Offline optimum per (K, B). Two-user cells use the closed form on
/// `analytical_grid` (or its default); others run the simulator on
/// `simulated_grid` (or its default) with the horizon and seed in `base`.
inline std::vector<LookupRow> build_lookup_table(std::span<const double> snr_db_list,
                                                 std::span<const int> user_counts,
                                                 const SystemConfig& base,
                                                 std::optional<GridSpec> analytical_grid = {},
                                                 std::optional<GridSpec> simulated_grid = {},
                                                 unsigned threads = 1) {
  std::vector<LookupRow> rows;
  for (int k : user_counts)
    for (double db : snr_db_list) {
      const double b = db_to_linear(db);
      if (k == 2) {
        rows.push_back({k, db, grid_search_analytical(db, analytical_grid.value_or(GridSpec::analytical_default(b)))});
      } else {
        SystemConfig cfg = base;
        cfg.users = k;
        cfg.snr_db = db;
        rows.push_back({k, db, grid_search_simulated(cfg, simulated_grid.value_or(GridSpec::simulated_default(b)), threads)});
      }
    }
  return rows;
}

inline std::string format_lookup_row(const LookupRow& row) {
  char buf[256];
  std::string err;
  if (row.result.std_error) {
    char e[64];
    std::snprintf(e, sizeof e, "%.6f", *row.result.std_error);
    err = e;
  }
  std::snprintf(buf, sizeof buf, "%d,%g,%.6f,%.6f,%.6f,%s,%s", row.users, row.snr_db,
                row.result.p_star, row.result.rate_star, row.result.sum_rate_star,
                std::string(to_string(row.result.method)).c_str(), err.c_str());
  return buf;
}

inline std::string format_lookup_table(std::span<const LookupRow> rows) {
  std::string out = std::string(kLookupHeader) + "\n";
  for (const auto& r : rows) out += format_lookup_row(r) + "\n";
  return out;
}

inline void write_lookup_table(const std::string& path, std::span<const LookupRow> rows) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw io_error("cannot open lookup table for writing: " + path);
  os << format_lookup_table(rows);
  if (!os.flush()) throw io_error("failed writing lookup table: " + path);
}

}  // namespace rnoma
