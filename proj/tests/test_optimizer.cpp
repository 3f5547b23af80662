#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "rnoma/optimizer.hpp"

using namespace rnoma;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

SystemConfig small_sim(int users, double snr_db) {
  SystemConfig cfg;
  cfg.users = users;
  cfg.snr_db = snr_db;
  cfg.n_experiments = 40;
  cfg.n_slots = 200;
  cfg.seed = 3;
  return cfg;
}

GridSpec coarse(double p_lo, double p_hi, double p_step, double r_lo, double r_hi, double r_step) {
  GridSpec g;
  g.p_min = p_lo;
  g.p_max = p_hi;
  g.p_step = p_step;
  g.rate_min = r_lo;
  g.rate_max = r_hi;
  g.rate_step = r_step;
  g.refinement_rounds = 0;
  return g;
}

}  // namespace

TEST(GridSpec, Validation) {
  GridSpec g;
  EXPECT_NO_THROW(g.validate());
  g.p_min = 0.0;
  EXPECT_THROW(g.validate(), parameter_error);
  g = {};
  g.p_max = 1.5;
  EXPECT_THROW(g.validate(), parameter_error);
  g = {};
  g.rate_step = 0.0;
  EXPECT_THROW(g.validate(), parameter_error);
  g = {};
  g.refinement_shrink = 1.0;
  EXPECT_THROW(g.validate(), parameter_error);
}

TEST(GridAxes, EndpointsAndWindows) {
  const auto a = detail::axis(0.01, 1.0, 0.01);
  ASSERT_EQ(a.size(), 100u);
  EXPECT_EQ(a.front(), 0.01);
  EXPECT_EQ(a.back(), 1.0);
  const auto w = detail::centered_axis(0.995, 0.01, 0.001, 0.01, 1.0);
  EXPECT_EQ(w.back(), 1.0);
  EXPECT_EQ(w.size(), 16u);
}

TEST(GridSearchAnalytical, FifteenDb) {
  const auto r = grid_search_analytical(15.0, GridSpec::analytical_default(db_to_linear(15.0)));
  EXPECT_NEAR(r.p_star, 1.0, 0.01);
  EXPECT_NEAR(r.rate_star, 1.263, 0.02);
  EXPECT_NEAR(r.sum_rate_star, 1.933, 0.01);
  EXPECT_EQ(r.method, Method::analytical);
  EXPECT_FALSE(r.std_error.has_value());
}

TEST(GridSearchAnalytical, TwentyFiveDb) {
  const auto r = grid_search_analytical(25.0, GridSpec::analytical_default(db_to_linear(25.0)));
  EXPECT_NEAR(r.p_star, 0.59, 0.02);
  EXPECT_NEAR(r.rate_star, 6.129, 0.05);
  EXPECT_NEAR(r.sum_rate_star, 3.431, 0.01);
}

TEST(GridSearchAnalytical, SinglePointGrid) {
  const auto r = grid_search_analytical(15.0, GridSpec::point(1.0, 1.263));
  EXPECT_EQ(r.p_star, 1.0);
  EXPECT_EQ(r.rate_star, 1.263);
  EXPECT_NEAR(r.sum_rate_star, 1.933, 0.005);
  EXPECT_EQ(r.evaluations, 1);
}

TEST(GridSearchAnalytical, RejectsRatesBelowOne) {
  EXPECT_THROW(grid_search_analytical(15.0, GridSpec::simulated_default(db_to_linear(15.0))),
               analytical_domain_error);
}

TEST(GridSearchAnalytical, IncumbentIsBestEvaluatedPoint) {
  std::vector<GridPoint> trace;
  const auto r = grid_search_analytical(20.0, GridSpec::analytical_default(100.0), &trace);
  ASSERT_EQ(std::int64_t(trace.size()), r.evaluations);
  bool found = false;
  for (const auto& pt : trace) {
    ASSERT_LE(pt.sum_rate, r.sum_rate_star);
    found = found || (pt.p == r.p_star && pt.rate == r.rate_star && pt.sum_rate == r.sum_rate_star);
  }
  EXPECT_TRUE(found);
}

TEST(GridSearchAnalytical, RefinementNeverWorse) {
  for (double db : {5.0, 15.0, 25.0, 35.0}) {
    auto g = GridSpec::analytical_default(db_to_linear(db));
    g.refinement_rounds = 0;
    const auto base = grid_search_analytical(db, g);
    g.refinement_rounds = 2;
    EXPECT_GE(grid_search_analytical(db, g).sum_rate_star, base.sum_rate_star);
  }
}

// A denser grid around the incumbent can only gain what the local slope
// allows over half a final step.
TEST(GridSearchAnalytical, DensifyingChangesLittle) {
  const double db = 25.0, b = db_to_linear(db);
  const auto g = GridSpec::analytical_default(b);
  const auto r = grid_search_analytical(db, g);
  const double step = g.rate_step * g.refinement_shrink * g.refinement_shrink;
  double slope = 0.0;
  for (double d : {-step, step})
    slope = std::max(slope, std::abs(analytical_sum_rate(r.p_star, r.rate_star + d, b).sum_rate -
                                     r.sum_rate_star) / step);
  auto dense = g;
  dense.refinement_rounds = 4;
  const auto d = grid_search_analytical(db, dense);
  EXPECT_GE(d.sum_rate_star, r.sum_rate_star);
  EXPECT_LE(d.sum_rate_star - r.sum_rate_star, slope * step + 1e-12);
}

TEST(GridSearch, TiesPreferSmallerRateThenSmallerP) {
  Evaluator flat = [](double p, double r) { return GridPoint{p, r, 1.0, 0.0}; };
  const auto r = grid_search(flat, coarse(0.1, 1.0, 0.1, 1.0, 3.0, 0.5), Method::analytical);
  EXPECT_EQ(r.p_star, 0.1);
  EXPECT_EQ(r.rate_star, 1.0);
  Evaluator ridge = [](double p, double r) { return GridPoint{p, r, p < 0.5 ? 0.0 : 1.0, 0.0}; };
  const auto s = grid_search(ridge, coarse(0.1, 1.0, 0.1, 1.0, 3.0, 0.5), Method::analytical);
  EXPECT_NEAR(s.p_star, 0.5, 1e-12);
  EXPECT_EQ(s.rate_star, 1.0);
}

TEST(GridSearchSimulated, TwoUsersAgreeWithAnalysis) {
  auto cfg = small_sim(2, 25.0);
  cfg.n_experiments = 1000;
  auto g = coarse(0.5, 0.7, 0.05, 5.5, 6.5, 0.25);
  g.refinement_rounds = 1;
  g.refinement_shrink = 0.4;
  const auto r = grid_search_simulated(cfg, g);
  ASSERT_TRUE(r.std_error.has_value());
  EXPECT_LE(std::abs(r.sum_rate_star - 3.431), 3.0 * *r.std_error + 0.05);
}

TEST(GridSearchSimulated, DeterministicAndThreadIndependent) {
  const auto cfg = small_sim(3, 20.0);
  const auto g = coarse(0.2, 1.0, 0.2, 0.5, 4.0, 0.5);
  const auto a = grid_search_simulated(cfg, g, 1);
  const auto b = grid_search_simulated(cfg, g, 4);
  EXPECT_EQ(a.p_star, b.p_star);
  EXPECT_EQ(a.rate_star, b.rate_star);
  EXPECT_EQ(a.sum_rate_star, b.sum_rate_star);
  EXPECT_EQ(a.std_error, b.std_error);
}

TEST(SweepK, CrossSlotDominatesAndDeterministicFixesP) {
  const auto cfg = small_sim(2, 25.0);
  const std::vector<int> ks{3, 4};
  const std::vector<SweepVariant> vs{SweepVariant::cross_slot, SweepVariant::intra_only,
                                     SweepVariant::deterministic};
  const auto rows = sweep_k(cfg, ks, vs, coarse(0.1, 1.0, 0.15, 1.0, 8.0, 1.0));
  ASSERT_EQ(rows.size(), 6u);
  for (std::size_t i = 0; i < rows.size(); i += 3) {
    EXPECT_EQ(rows[i].variant, SweepVariant::cross_slot);
    EXPECT_GE(rows[i].result.sum_rate_star, rows[i + 1].result.sum_rate_star);
    EXPECT_EQ(rows[i + 2].result.p_star, 1.0);
  }
}

TEST(LookupTable, FormatAndDelegation) {
  const std::vector<double> dbs{25.0};
  const std::vector<int> ks{2};
  const auto rows = build_lookup_table(dbs, ks, SystemConfig{});
  ASSERT_EQ(rows.size(), 1u);
  const auto direct = grid_search_analytical(25.0, GridSpec::analytical_default(db_to_linear(25.0)));
  EXPECT_EQ(rows[0].result.sum_rate_star, direct.sum_rate_star);
  char expect[200];
  std::snprintf(expect, sizeof expect, "K,B_dB,p_star,R_star,Rs_star,method,stderr\n2,25,%.6f,%.6f,%.6f,analytical,\n",
                direct.p_star, direct.rate_star, direct.sum_rate_star);
  EXPECT_EQ(format_lookup_table(rows), expect);
}

TEST(LookupTable, KnownOptimaAndByteIdenticalRerun) {
  const std::vector<double> dbs{15.0, 25.0};
  const std::vector<int> ks{2, 3};
  const auto sim = coarse(0.25, 1.0, 0.25, 1.0, 7.0, 1.5);
  const auto dir = std::filesystem::temp_directory_path() / "rnoma_lookup_test";
  std::filesystem::create_directories(dir);
  const auto f1 = dir / "a.csv", f2 = dir / "b.csv";
  const auto cfg = small_sim(2, 25.0);
  const auto rows = build_lookup_table(dbs, ks, cfg, std::nullopt, sim);
  write_lookup_table(f1.string(), rows);
  write_lookup_table(f2.string(), build_lookup_table(dbs, ks, cfg, std::nullopt, sim));
  EXPECT_EQ(slurp(f1), slurp(f2));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_NEAR(rows[0].result.sum_rate_star, 1.933, 0.01);
  EXPECT_NEAR(rows[1].result.sum_rate_star, 3.431, 0.01);
  EXPECT_EQ(rows[2].result.method, Method::simulated);
  const auto text = slurp(f1);
  EXPECT_EQ(text.back(), '\n');
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
  std::filesystem::remove_all(dir);
}

TEST(LookupTable, UnwritableDestination) {
  EXPECT_THROW(write_lookup_table("/nonexistent-dir/x/table.csv", {}), io_error);
}
