#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "rnoma/rnoma.hpp"

namespace rnoma::cli {
namespace {

using json = nlohmann::ordered_json;

std::string fixed(double x, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_seed(const std::string& s) {
  std::size_t pos = 0;
  const auto v = std::stoull(s, &pos, 0);
  if (pos != s.size()) throw parameter_error("seed must be an unsigned integer: " + s);
  return v;
}

// Flags shared by every command that builds a SystemConfig.
struct SystemFlags {
  std::string config_path;
  int users = 0;
  double snr_db = 0, p = 0, rate = 0;
  long slots = 0, experiments = 0;
  std::string seed;
  std::string scheme;
  std::map<std::string, CLI::Option*> opts;

  void attach(CLI::App* app, bool with_population) {
    opts["config"] = app->add_option("--config", config_path, "config file of key = value lines");
    if (with_population) opts["users"] = app->add_option("--users,-K", users, "number of users K");
    opts["snr"] = app->add_option("--snr-db", snr_db, "average received SNR B in dB");
    opts["p"] = app->add_option("--p", p, "transmission probability in (0, 1]");
    opts["rate"] = app->add_option("--rate,-R", rate, "encoding rate R in bits/symbol");
    if (with_population) {
      opts["slots"] = app->add_option("--slots", slots, "slots per experiment");
      opts["experiments"] = app->add_option("--experiments", experiments, "Monte Carlo experiments");
      opts["seed"] = app->add_option("--seed", seed, "master seed (default: $RNOMA_SEED or 1)");
      opts["scheme"] = app->add_option("--scheme", scheme, "cross-slot or intra-only");
    }
  }

  bool given(const std::string& key) const {
    auto it = opts.find(key);
    return it != opts.end() && it->second->count() > 0;
  }

  // Built-in default < environment seed < config file < command line.
  SystemConfig resolve(const Environment& env) const {
    SystemConfig cfg;
    if (env.seed) cfg.seed = parse_seed(*env.seed);
    if (given("config")) {
      std::ifstream is(config_path);
      if (!is) throw parameter_error("cannot read config file: " + config_path);
      std::stringstream ss;
      ss << is.rdbuf();
      apply_config_entries(cfg, parse_config_text(ss.str()));
    }
    if (given("users")) cfg.users = users;
    if (given("snr")) cfg.snr_db = snr_db;
    if (given("p")) cfg.p = p;
    if (given("rate")) cfg.rate = rate;
    if (given("slots")) cfg.n_slots = slots;
    if (given("experiments")) cfg.n_experiments = experiments;
    if (given("seed")) cfg.seed = parse_seed(seed);
    if (given("scheme")) cfg.scheme = parse_scheme(scheme);
    return cfg;
  }
};

struct GridFlags {
  double p_min = 0, p_max = 0, p_step = 0, rate_min = 0, rate_max = 0, rate_step = 0, shrink = 0;
  int refine = 0;
  std::map<std::string, CLI::Option*> opts;

  void attach(CLI::App* app) {
    opts["p_min"] = app->add_option("--p-min", p_min, "grid: smallest p");
    opts["p_max"] = app->add_option("--p-max", p_max, "grid: largest p");
    opts["p_step"] = app->add_option("--p-step", p_step, "grid: p spacing");
    opts["rate_min"] = app->add_option("--rate-min", rate_min, "grid: smallest R");
    opts["rate_max"] = app->add_option("--rate-max", rate_max, "grid: largest R");
    opts["rate_step"] = app->add_option("--rate-step", rate_step, "grid: R spacing");
    opts["refine"] = app->add_option("--refine", refine, "refinement rounds");
    opts["shrink"] = app->add_option("--shrink", shrink, "refinement step shrink factor");
  }

  GridSpec apply(GridSpec g) const {
    auto set = [&](const char* k, auto& field, auto value) {
      if (opts.at(k)->count() > 0) field = value;
    };
    set("p_min", g.p_min, p_min);
    set("p_max", g.p_max, p_max);
    set("p_step", g.p_step, p_step);
    set("rate_min", g.rate_min, rate_min);
    set("rate_max", g.rate_max, rate_max);
    set("rate_step", g.rate_step, rate_step);
    set("refine", g.refinement_rounds, refine);
    set("shrink", g.refinement_shrink, shrink);
    g.validate();
    return g;
  }
};

struct OutputFlags {
  std::string format = "text";
  std::string out_path;

  void attach(CLI::App* app, const std::string& default_format = "text") {
    format = default_format;
    app->add_option("--format", format, "stdout format")
        ->check(CLI::IsMember({"text", "csv", "json"}));
    app->add_option("--out", out_path, "also write machine-readable output (and a manifest) here");
  }
};

json config_json(const SystemConfig& c) {
  return {{"K", c.users}, {"snr_db", c.snr_db}, {"p", c.p}, {"R", c.rate},
          {"n_slots", c.n_slots}, {"n_experiments", c.n_experiments}, {"seed", c.seed},
          {"scheme", std::string(to_string(c.scheme))}};
}

json grid_json(const GridSpec& g) {
  return {{"p_min", g.p_min}, {"p_max", g.p_max}, {"p_step", g.p_step},
          {"R_min", g.rate_min}, {"R_max", g.rate_max}, {"R_step", g.rate_step},
          {"refinement_rounds", g.refinement_rounds}, {"refinement_shrink", g.refinement_shrink}};
}

json estimate_json(const Estimate& e) {
  json j = {{"mean", e.mean}};
  j["stderr"] = e.std_error_defined ? json(e.std_error) : json(nullptr);
  return j;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw io_error("cannot open output file: " + path);
  os << content;
  if (!os.flush()) throw io_error("failed writing output file: " + path);
}

// Manifest written next to an output file; it is the only artifact carrying
// wall-clock timings.
void write_manifest(const std::string& output_path, const std::string& command,
                    const std::vector<std::string>& args, const json& config, double seconds) {
  json m = {{"command", command},
            {"arguments", args},
            {"configuration", config},
            {"version", kVersion},
            {"outputs", json::array({output_path})},
            {"timings", {{"wall_seconds", seconds}}}};
  write_file(output_path + ".manifest.json", m.dump(2) + "\n");
}

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Emits `text` or a machine form to stdout per --format and, with --out, the
// machine form to the file (JSON when --format json, CSV otherwise).
void emit(std::ostream& out, const OutputFlags& of, const std::string& text, const std::string& csv,
          const json& js) {
  if (of.format == "json")
    out << js.dump(2) << "\n";
  else if (of.format == "csv")
    out << csv;
  else
    out << text;
  if (!of.out_path.empty()) write_file(of.out_path, of.format == "json" ? js.dump(2) + "\n" : csv);
}

// ---------------------------------------------------------------- analyze

struct AnalyzeCmd {
  SystemFlags sys;
  GridFlags grid;
  OutputFlags output;
  bool surface = false;
  bool as_printed = false;
};

int do_analyze(const AnalyzeCmd& c, const std::vector<std::string>& args, std::ostream& out,
               const Environment& env) {
  Timer timer;
  SystemConfig cfg = c.sys.resolve(env);
  const double b = cfg.mean_snr();
  const auto layout = c.as_printed ? Row3Layout::as_printed : Row3Layout::corrected;
  json manifest_cfg = {{"snr_db", cfg.snr_db}, {"layout", c.as_printed ? "as-printed" : "corrected"}};

  if (c.surface) {
    GridSpec g = GridSpec::analytical_default(b);
    g.refinement_rounds = 0;
    g = c.grid.apply(g);
    if (g.rate_min < 1.0)
      throw analytical_domain_error(
          "closed-form analysis assumes R >= 1 (threshold 2^R-1 >= 1); raise --rate-min");
    std::string csv = "p,R,T,Rs\n";
    json rows = json::array();
    for (double r : detail::axis(g.rate_min, g.rate_max, g.rate_step))
      for (double p : detail::axis(g.p_min, g.p_max, g.p_step)) {
        const auto s = analytical_sum_rate(p, r, b, layout);
        csv += fixed(p) + "," + fixed(r) + "," + fixed(s.throughput, 9) + "," + fixed(s.sum_rate, 9) + "\n";
        rows.push_back({{"p", p}, {"R", r}, {"T", s.throughput}, {"Rs", s.sum_rate}});
      }
    OutputFlags of = c.output;
    if (of.format == "text") of.format = "csv";
    emit(out, of, csv, csv, json{{"snr_db", cfg.snr_db}, {"grid", grid_json(g)}, {"points", rows}});
    manifest_cfg["grid"] = grid_json(g);
  } else {
    const auto s = analytical_sum_rate(cfg.p, cfg.rate, b, layout);
    const std::string text = "analytical two-user model  p " + fixed(cfg.p, 4) + "  R " +
                             fixed(cfg.rate, 4) + "  B " + fixed(cfg.snr_db, 2) + " dB\n" +
                             "T  " + fixed(s.throughput) + "\nRs " + fixed(s.sum_rate) + "\n";
    const std::string csv = "p,R,T,Rs\n" + fixed(cfg.p) + "," + fixed(cfg.rate) + "," +
                            fixed(s.throughput, 9) + "," + fixed(s.sum_rate, 9) + "\n";
    emit(out, c.output, text, csv,
         json{{"p", cfg.p}, {"R", cfg.rate}, {"snr_db", cfg.snr_db}, {"T", s.throughput},
              {"Rs", s.sum_rate}});
    manifest_cfg["p"] = cfg.p;
    manifest_cfg["R"] = cfg.rate;
  }
  if (!c.output.out_path.empty())
    write_manifest(c.output.out_path, "analyze", args, manifest_cfg, timer.seconds());
  return kSuccess;
}

// --------------------------------------------------------------- simulate

struct SimulateCmd {
  SystemFlags sys;
  OutputFlags output;
  unsigned threads = 1;
};

int do_simulate(const SimulateCmd& c, const std::vector<std::string>& args, std::ostream& out,
                const Environment& env) {
  Timer timer;
  const SystemConfig cfg = c.sys.resolve(env);
  cfg.validate();
  const auto s = run_monte_carlo(cfg, c.threads);

  std::ostringstream text;
  text << "K " << cfg.users << "  B " << fixed(cfg.snr_db, 2) << " dB  p " << fixed(cfg.p, 4)
       << "  R " << fixed(cfg.rate, 4) << "  slots " << cfg.n_slots << "  experiments "
       << cfg.n_experiments << "  seed " << cfg.seed << "  scheme " << to_string(cfg.scheme) << "\n";
  auto line = [&](const char* name, const Estimate& e) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-18s %12.6f  +- %s\n", name, e.mean,
                  e.std_error_defined ? fixed(e.std_error).c_str() : "n/a");
    text << buf;
  };
  line("throughput", s.throughput);
  line("sum_rate", s.sum_rate);
  line("buffer_occupancy", s.buffer_occupancy);
  line("recovered_packets", s.recovered_packets);
  if (s.state_histogram) {
    line("state_S0", (*s.state_histogram)[0]);
    line("state_S2_2", (*s.state_histogram)[1]);
    line("state_S2_1", (*s.state_histogram)[2]);
  }

  auto se = [](const Estimate& e) { return e.std_error_defined ? fixed(e.std_error) : std::string(); };
  std::string csv = "K,B_dB,p,R,slots,experiments,seed,scheme,T,T_stderr,Rs,Rs_stderr,buffer,buffer_stderr\n";
  csv += std::to_string(cfg.users) + "," + fixed(cfg.snr_db, 4) + "," + fixed(cfg.p) + "," +
         fixed(cfg.rate) + "," + std::to_string(cfg.n_slots) + "," +
         std::to_string(cfg.n_experiments) + "," + std::to_string(cfg.seed) + "," +
         std::string(to_string(cfg.scheme)) + "," + fixed(s.throughput.mean) + "," +
         se(s.throughput) + "," + fixed(s.sum_rate.mean) + "," + se(s.sum_rate) + "," +
         fixed(s.buffer_occupancy.mean) + "," + se(s.buffer_occupancy) + "\n";

  json js = {{"configuration", config_json(cfg)},
             {"throughput", estimate_json(s.throughput)},
             {"sum_rate", estimate_json(s.sum_rate)},
             {"buffer_occupancy", estimate_json(s.buffer_occupancy)},
             {"recovered_packets", estimate_json(s.recovered_packets)}};
  if (s.state_histogram)
    js["state_histogram"] = {{"S0", estimate_json((*s.state_histogram)[0])},
                             {"S2_2", estimate_json((*s.state_histogram)[1])},
                             {"S2_1", estimate_json((*s.state_histogram)[2])}};
  emit(out, c.output, text.str(), csv, js);
  if (!c.output.out_path.empty())
    write_manifest(c.output.out_path, "simulate", args, config_json(cfg), timer.seconds());
  return kSuccess;
}

// --------------------------------------------------------------- optimize

struct OptimizeCmd {
  SystemFlags sys;
  GridFlags grid;
  OutputFlags output;
  bool analytical = false;
  bool simulated = false;
  std::string table_path;
  unsigned threads = 1;
};

std::string result_text(const LookupRow& row) {
  std::string s = std::string(to_string(row.result.method)) + " optimum  K " +
                  std::to_string(row.users) + "  B " + fixed(row.snr_db, 2) + " dB\n";
  s += "p*  " + fixed(row.result.p_star, 4) + "\nR*  " + fixed(row.result.rate_star, 4) +
       "\nRs* " + fixed(row.result.sum_rate_star, 4);
  if (row.result.std_error) s += "  +- " + fixed(*row.result.std_error, 4);
  s += "\nevaluations " + std::to_string(row.result.evaluations) + "\n";
  return s;
}

json result_json(const LookupRow& row) {
  json j = {{"K", row.users},
            {"snr_db", row.snr_db},
            {"p_star", row.result.p_star},
            {"R_star", row.result.rate_star},
            {"Rs_star", row.result.sum_rate_star},
            {"method", std::string(to_string(row.result.method))},
            {"stderr", row.result.std_error ? json(*row.result.std_error) : json(nullptr)},
            {"evaluations", row.result.evaluations},
            {"grid", grid_json(row.result.grid)}};
  return j;
}

int do_optimize(const OptimizeCmd& c, const std::vector<std::string>& args, std::ostream& out,
                const Environment& env) {
  Timer timer;
  if (c.analytical && c.simulated)
    throw parameter_error("choose one of --analytical and --simulated");
  SystemConfig cfg = c.sys.resolve(env);
  const bool simulated = c.simulated;
  const double b = cfg.mean_snr();
  LookupRow row{cfg.users, cfg.snr_db, {}};
  json manifest_cfg;
  if (simulated) {
    cfg.validate();
    const GridSpec g = c.grid.apply(GridSpec::simulated_default(b));
    row.result = grid_search_simulated(cfg, g, c.threads);
    manifest_cfg = config_json(cfg);
  } else {
    if (c.sys.given("users") && cfg.users != 2)
      throw parameter_error("the analytical backend models exactly 2 users");
    row.users = 2;
    const GridSpec g = c.grid.apply(GridSpec::analytical_default(b));
    row.result = grid_search_analytical(cfg.snr_db, g);
    manifest_cfg = {{"K", 2}, {"snr_db", cfg.snr_db}};
  }
  manifest_cfg["grid"] = grid_json(row.result.grid);
  const std::vector<LookupRow> rows{row};
  emit(out, c.output, result_text(row), format_lookup_table(rows), result_json(row));
  if (!c.table_path.empty()) {
    write_lookup_table(c.table_path, rows);
    write_manifest(c.table_path, "optimize", args, manifest_cfg, timer.seconds());
  }
  if (!c.output.out_path.empty())
    write_manifest(c.output.out_path, "optimize", args, manifest_cfg, timer.seconds());
  return kSuccess;
}

// ------------------------------------------------------------------ table

struct TableCmd {
  SystemFlags sys;
  GridFlags grid;
  std::vector<double> snr_list;
  std::vector<int> users_list;
  std::string out_path;
  unsigned threads = 1;
};

int do_table(const TableCmd& c, const std::vector<std::string>& args, std::ostream& out,
             const Environment& env) {
  Timer timer;
  const SystemConfig cfg = c.sys.resolve(env);
  cfg.validate();
  std::vector<LookupRow> rows;
  for (int k : c.users_list)
    for (double db : c.snr_list) {
      const double b = db_to_linear(db);
      if (k == 2) {
        rows.push_back({k, db, grid_search_analytical(db, c.grid.apply(GridSpec::analytical_default(b)))});
      } else {
        SystemConfig one = cfg;
        one.users = k;
        one.snr_db = db;
        rows.push_back({k, db, grid_search_simulated(one, c.grid.apply(GridSpec::simulated_default(b)), c.threads)});
      }
    }
  write_lookup_table(c.out_path, rows);
  out << format_lookup_table(rows);
  json manifest_cfg = config_json(cfg);
  manifest_cfg["snr_db_list"] = c.snr_list;
  manifest_cfg["K_list"] = c.users_list;
  write_manifest(c.out_path, "table", args, manifest_cfg, timer.seconds());
  return kSuccess;
}

// ------------------------------------------------------------------ sweep

struct SweepCmd {
  SystemFlags sys;
  GridFlags grid;
  OutputFlags output;
  std::vector<int> users_list;
  std::vector<std::string> variants;
  unsigned threads = 1;
};

int do_sweep(const SweepCmd& c, const std::vector<std::string>& args, std::ostream& out,
             const Environment& env) {
  Timer timer;
  const SystemConfig cfg = c.sys.resolve(env);
  cfg.validate();
  std::vector<SweepVariant> vs;
  for (const auto& v : c.variants) {
    if (v == "cross-slot") vs.push_back(SweepVariant::cross_slot);
    else if (v == "intra-only") vs.push_back(SweepVariant::intra_only);
    else if (v == "p=1") vs.push_back(SweepVariant::deterministic);
    else throw parameter_error("unknown variant '" + v + "' (cross-slot, intra-only, p=1)");
  }
  const GridSpec g = c.grid.apply(GridSpec::simulated_default(cfg.mean_snr()));
  const auto rows = sweep_k(cfg, c.users_list, vs, g, c.threads);
  std::string csv = "K,scheme,p_star,R_star,Rs_star,stderr\n";
  json js = json::array();
  for (const auto& r : rows) {
    csv += std::to_string(r.users) + "," + std::string(to_string(r.variant)) + "," +
           fixed(r.result.p_star) + "," + fixed(r.result.rate_star) + "," +
           fixed(r.result.sum_rate_star) + "," + fixed(r.result.std_error.value_or(0.0)) + "\n";
    js.push_back({{"K", r.users}, {"scheme", std::string(to_string(r.variant))},
                  {"p_star", r.result.p_star}, {"R_star", r.result.rate_star},
                  {"Rs_star", r.result.sum_rate_star}, {"stderr", r.result.std_error.value_or(0.0)}});
  }
  OutputFlags of = c.output;
  if (of.format == "text") of.format = "csv";
  emit(out, of, csv, csv, js);
  if (!c.output.out_path.empty()) {
    json manifest_cfg = config_json(cfg);
    manifest_cfg["grid"] = grid_json(g);
    write_manifest(c.output.out_path, "sweep", args, manifest_cfg, timer.seconds());
  }
  return kSuccess;
}

// --------------------------------------------------------------- validate

struct ValidateCmd {
  OutputFlags output;
  long samples = 1000000;
  long slots = 1000000;
  int structural_points = 200;
  std::string seed;
  std::string inject;
};

// Deliberately broken closed form used to prove the Monte Carlo check bites.
EventProbabilities col2_sign_fault(double p, double rate, double b) {
  auto ev = event_probabilities(p, rate, b);
  const double rho = rate_threshold(rate);
  const double pair = 2.0 * p * p / (1.0 + rho);
  ev.col_2 += 2.0 * pair * std::exp(-(rho * (2.0 + rho) / b));
  ev.col_new = ev.col_1 / 2.0 + ev.col_2;
  return ev;
}

int do_validate(const ValidateCmd& c, const std::vector<std::string>& args, std::ostream& out,
                const Environment& env) {
  Timer timer;
  std::uint64_t seed = 1;
  if (env.seed) seed = parse_seed(*env.seed);
  if (!c.seed.empty()) seed = parse_seed(c.seed);
  if (c.samples < 1 || c.slots < 1000) throw parameter_error("sample sizes too small");

  EventModel model = [](double p, double r, double b) { return event_probabilities(p, r, b); };
  if (c.inject == "col2-sign") model = col2_sign_fault;
  else if (!c.inject.empty() && c.inject != "none")
    throw parameter_error("unknown fault '" + c.inject + "'");

  const auto triples = default_validation_triples();
  std::vector<CheckResult> results;
  // A model broken badly enough to throw still yields a failed check.
  auto guarded = [&](const char* name, auto&& check) {
    try {
      results.push_back(check());
    } catch (const std::exception& e) {
      results.push_back({name, false, e.what(), {}});
    }
  };
  guarded("closed_form_vs_monte_carlo_events", [&] {
    return check_events_against_monte_carlo(model, triples, c.samples, experiment_seed(seed, 0));
  });
  guarded("partition_identities", [&] { return check_partition_identities(model, triples); });
  guarded("markov_structure", [&] {
    return check_markov_structure(model, c.structural_points, experiment_seed(seed, 1));
  });
  guarded("chain_vs_simulator_state_histogram", [&] {
    return check_state_histogram(model, 0.59, 6.129, 25.0, c.slots, experiment_seed(seed, 2));
  });
  guarded("simulated_vs_analytical_throughput", [&] {
    return check_throughput_agreement(default_agreement_points(),
                                      std::max<long>(c.slots / 10, 1000), experiment_seed(seed, 3));
  });

  bool all = true;
  json checks = json::array();
  std::string text;
  std::string csv = "check,passed,detail\n";
  for (const auto& r : results) {
    all = all && r.passed;
    json stats = json::object();
    for (const auto& [k, v] : r.stats) stats[k] = v;
    checks.push_back({{"name", r.name}, {"passed", r.passed}, {"detail", r.detail}, {"statistics", stats}});
    text += std::string(r.passed ? "PASS " : "FAIL ") + r.name + (r.detail.empty() ? "" : "  (" + r.detail + ")") + "\n";
    for (const auto& [k, v] : r.stats) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "    %-28s %.6g\n", k.c_str(), v);
      text += buf;
    }
    csv += r.name + "," + (r.passed ? "true" : "false") + ",\"" + r.detail + "\"\n";
  }
  json js = {{"seed", seed}, {"fault", c.inject.empty() ? "none" : c.inject}, {"passed", all}, {"checks", checks}};
  emit(out, c.output, text, csv, js);
  if (!c.output.out_path.empty())
    write_manifest(c.output.out_path, "validate", args,
                   {{"seed", seed}, {"samples", c.samples}, {"slots", c.slots}}, timer.seconds());
  return all ? kSuccess : kCheckFailed;
}

}  // namespace

Environment Environment::current() {
  Environment e;
  if (const char* s = std::getenv("RNOMA_SEED"); s && *s) e.seed = s;
  return e;
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> entries;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw parameter_error("config line " + std::to_string(lineno) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw parameter_error("config line " + std::to_string(lineno) + ": empty key or value");
    entries[key] = value;
  }
  return entries;
}

void apply_config_entries(SystemConfig& cfg, const std::map<std::string, std::string>& entries) {
  for (const auto& [key, value] : entries) {
    try {
      if (key == "K" || key == "users") cfg.users = std::stoi(value);
      else if (key == "snr_db") cfg.snr_db = std::stod(value);
      else if (key == "p") cfg.p = std::stod(value);
      else if (key == "R" || key == "rate") cfg.rate = std::stod(value);
      else if (key == "n_slots") cfg.n_slots = std::stol(value);
      else if (key == "n_experiments") cfg.n_experiments = std::stol(value);
      else if (key == "seed") cfg.seed = parse_seed(value);
      else if (key == "scheme") cfg.scheme = parse_scheme(value);
      else throw parameter_error("unknown config key '" + key + "'");
    } catch (const std::logic_error& e) {
      if (dynamic_cast<const parameter_error*>(&e)) throw;
      throw parameter_error("config key '" + key + "': bad value '" + value + "'");
    }
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const Environment& env) {
  CLI::App app{"Random NOMA with cross-slot SIC: analysis, simulation and rate optimization", "rnoma"};
  app.require_subcommand(1);

  AnalyzeCmd analyze;
  auto* a = app.add_subcommand("analyze", "closed-form two-user throughput and sum rate");
  analyze.sys.attach(a, false);
  analyze.grid.attach(a);
  analyze.output.attach(a);
  a->add_flag("--grid,--surface", analyze.surface, "evaluate the whole (p, R) grid as p,R,T,Rs records");
  a->add_flag("--as-printed", analyze.as_printed, "swap the two stay/move entries of the S2_1 row (comparison only)");

  SimulateCmd simulate;
  auto* s = app.add_subcommand("simulate", "Monte Carlo simulation of K-user random NOMA");
  simulate.sys.attach(s, true);
  simulate.output.attach(s);
  s->add_option("--threads", simulate.threads, "worker threads")->check(CLI::PositiveNumber);

  OptimizeCmd optimize;
  auto* o = app.add_subcommand("optimize", "maximize the sum rate over (p, R)");
  optimize.sys.attach(o, true);
  optimize.grid.attach(o);
  optimize.output.attach(o);
  o->add_flag("--analytical", optimize.analytical, "closed-form two-user backend (default)");
  o->add_flag("--simulated", optimize.simulated, "Monte Carlo backend, any K");
  o->add_option("--table", optimize.table_path, "write the result as a lookup-table file");
  o->add_option("--threads", optimize.threads, "worker threads")->check(CLI::PositiveNumber);

  TableCmd table;
  auto* t = app.add_subcommand("table", "offline optimum lookup table over K and B");
  table.sys.attach(t, true);
  table.grid.attach(t);
  t->add_option("--snr-db-list", table.snr_list, "comma-separated B values in dB")
      ->delimiter(',')->required();
  t->add_option("--users-list", table.users_list, "comma-separated user counts")
      ->delimiter(',')->required();
  t->add_option("--out", table.out_path, "table file")->required();
  t->add_option("--threads", table.threads, "worker threads")->check(CLI::PositiveNumber);

  SweepCmd sweep;
  auto* w = app.add_subcommand("sweep", "optimized sum rate versus K for each scheme");
  sweep.sys.attach(w, true);
  sweep.grid.attach(w);
  sweep.output.attach(w);
  w->add_option("--users-list", sweep.users_list, "comma-separated user counts")
      ->delimiter(',')->required();
  sweep.variants = {"cross-slot", "intra-only", "p=1"};
  w->add_option("--variants", sweep.variants, "comma-separated: cross-slot, intra-only, p=1")
      ->delimiter(',');
  w->add_option("--threads", sweep.threads, "worker threads")->check(CLI::PositiveNumber);

  ValidateCmd validate;
  auto* v = app.add_subcommand("validate", "run the analysis cross-checks");
  validate.output.attach(v, "json");
  v->add_option("--samples", validate.samples, "Monte Carlo slots per parameter triple");
  v->add_option("--slots", validate.slots, "slots in the long chain-vs-simulator run");
  v->add_option("--structural-points", validate.structural_points, "random points for structural checks");
  v->add_option("--seed", validate.seed, "master seed (default: $RNOMA_SEED or 1)");
  v->add_option("--inject-fault", validate.inject, "test fixture: col2-sign");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsageError;
  }

  try {
    if (a->parsed()) return do_analyze(analyze, args, out, env);
    if (s->parsed()) return do_simulate(simulate, args, out, env);
    if (o->parsed()) return do_optimize(optimize, args, out, env);
    if (t->parsed()) return do_table(table, args, out, env);
    if (w->parsed()) return do_sweep(sweep, args, out, env);
    if (v->parsed()) return do_validate(validate, args, out, env);
  } catch (const analytical_domain_error& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kCheckFailed;
  }
  return kUsageError;
}

}  // namespace rnoma::cli
