#pragma once

// Slot-level Monte Carlo simulation of K-user random NOMA with cross-slot
// SIC packet recovery.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <thread>
#include <utility>
#include <vector>

#include "rnoma/channel.hpp"
#include "rnoma/config.hpp"
#include "rnoma/random.hpp"
#include "rnoma/sic.hpp"

namespace rnoma {

struct UserState {
  int user = 0;
  PacketId current_packet;
  bool backlogged = false;  // current packet has failed at least once
};

// Effective two-user buffer states, in the order used by the Markov chain.
enum class BufferState { s0 = 0, s22 = 1, s21 = 2 };

inline std::string_view to_string(BufferState s) {
  switch (s) {
    case BufferState::s0: return "S0";
    case BufferState::s22: return "S2_2";
    case BufferState::s21: return "S2_1";
  }
  return "?";
}

/// Two-user buffer state from the number of distinct users that own a
/// potential copy somewhere in the buffer.
inline BufferState classify_buffer_state(const CollisionBuffer& buffer, double rho_th,
                                         int users = 2) {
  if (users != 2) throw parameter_error("buffer state classification requires exactly 2 users");
  std::array<bool, 2> owner{false, false};
  for (const auto& s : buffer.slots())
    for (const auto& c : s.copies)
      if (is_potential(c.snr, rho_th)) {
        if (c.id.user < 0 || c.id.user > 1)
          throw parameter_error("packet owner outside the two-user system");
        owner[static_cast<std::size_t>(c.id.user)] = true;
      }
  const int n = int(owner[0]) + int(owner[1]);
  return n == 0 ? BufferState::s0 : n == 1 ? BufferState::s21 : BufferState::s22;
}

struct Transmission {
  int user = 0;
  double snr = 0.0;
};

struct SlotReport {
  std::int64_t slot_index = 0;
  int transmissions = 0;
  std::vector<PacketId> recovered_in_slot;
  std::vector<PacketId> recovered_from_buffer;

  std::size_t recovered() const { return recovered_in_slot.size() + recovered_from_buffer.size(); }
};

/// Mutable state of one simulated system: users, receiver buffer, clock.
struct SimState {
  std::vector<UserState> users;
  CollisionBuffer buffer;
  std::int64_t next_slot = 0;

  static SimState fresh(int n_users) {
    SimState s;
    s.users.resize(static_cast<std::size_t>(n_users));
    for (int k = 0; k < n_users; ++k) s.users[static_cast<std::size_t>(k)] = {k, {k, 0}, false};
    return s;
  }
};

/// Processes one slot given the realized transmissions: intra-slot SIC,
/// buffering of the residual, cross-slot recovery cascade, eviction and
/// ACK feedback. Under the intra-only scheme residuals are discarded.
inline SlotReport apply_slot(SimState& state, const SystemConfig& cfg,
                             std::span<const Transmission> txs) {
  const double rho = cfg.rho_th();
  SlotReport report;
  report.slot_index = state.next_slot++;
  report.transmissions = static_cast<int>(txs.size());

  std::vector<PacketCopy> copies;
  copies.reserve(txs.size());
  for (auto it = txs.begin(); it != txs.end(); ++it) {
    const auto& tx = *it;
    if (tx.user < 0 || static_cast<std::size_t>(tx.user) >= state.users.size())
      throw parameter_error("transmission from unknown user");
    if (std::any_of(txs.begin(), it, [&](const Transmission& o) { return o.user == tx.user; }))
      throw parameter_error("a user transmits at most once per slot");
    if (!(tx.snr >= 0.0)) throw parameter_error("received SNR must be nonnegative");
    copies.push_back({state.users[static_cast<std::size_t>(tx.user)].current_packet, tx.snr});
  }
  detail::detect_in_place(copies, rho, report.recovered_in_slot);

  if (cfg.scheme == Scheme::cross_slot) {
    auto& slots = state.buffer.mutable_slots();
    if (!copies.empty()) slots.push_back({report.slot_index, std::move(copies)});
    if (!report.recovered_in_slot.empty())
      cascade_in_place(state.buffer, report.recovered_in_slot, rho, report.recovered_from_buffer);
    std::erase_if(slots, [&](const BufferedSlot& s) { return !detail::has_potential(s, rho); });
  }

  for (const auto& tx : txs) state.users[static_cast<std::size_t>(tx.user)].backlogged = true;
  auto ack = [&](const PacketId& id) {
    auto& u = state.users[static_cast<std::size_t>(id.user)];
    if (u.current_packet == id) {
      u.current_packet.sequence += 1;
      u.backlogged = false;
    }
  };
  for (const auto& id : report.recovered_in_slot) ack(id);
  for (const auto& id : report.recovered_from_buffer) ack(id);
  return report;
}

// Draws this slot's activity and fading. Every user consumes one uniform for
// the activity decision and, if active, one for its SNR, so the draw sequence
// does not depend on protocol state.
inline void draw_transmissions(Rng& rng, const SystemConfig& cfg, double mean_snr,
                               std::vector<Transmission>& out) {
  out.clear();
  for (int k = 0; k < cfg.users; ++k) {
    if (rng.uniform_open0() <= cfg.p) out.push_back({k, sample_snr(rng, mean_snr)});
  }
}

inline SlotReport run_slot(SimState& state, const SystemConfig& cfg, Rng& rng) {
  std::vector<Transmission> txs;
  draw_transmissions(rng, cfg, cfg.mean_snr(), txs);
  return apply_slot(state, cfg, txs);
}

struct SimMetrics {
  std::int64_t n_slots = 0;
  std::int64_t recovered_packets = 0;    // distinct packets decoded
  std::int64_t transmitted_packets = 0;  // distinct packets sent at least once
  double throughput = 0.0;               // recovered packets per slot
  double sum_rate = 0.0;                 // rate * throughput
  double mean_buffer_occupancy = 0.0;    // time-averaged buffered slot count
  std::optional<std::array<double, 3>> state_histogram;  // two-user runs only

  bool operator==(const SimMetrics&) const = default;
};

/// One experiment of `cfg.n_slots` slots from an empty buffer. `observe` is
/// called after every slot with the slot report and the updated state.
template <class Observer>
SimMetrics run_experiment(const SystemConfig& cfg, std::uint64_t seed, Observer&& observe) {
  cfg.validate();
  Rng rng(seed);
  SimState state = SimState::fresh(cfg.users);
  const double mean_snr = cfg.mean_snr();
  const double rho = cfg.rho_th();
  const bool two_user = cfg.users == 2;

  SimMetrics m;
  m.n_slots = cfg.n_slots;
  std::array<std::int64_t, 3> visits{};
  std::int64_t occupancy = 0;
  std::vector<Transmission> txs;
  txs.reserve(static_cast<std::size_t>(cfg.users));
  for (std::int64_t t = 0; t < cfg.n_slots; ++t) {
    draw_transmissions(rng, cfg, mean_snr, txs);
    for (const auto& tx : txs)
      if (!state.users[static_cast<std::size_t>(tx.user)].backlogged) ++m.transmitted_packets;
    const auto report = apply_slot(state, cfg, txs);
    m.recovered_packets += static_cast<std::int64_t>(report.recovered());
    occupancy += static_cast<std::int64_t>(state.buffer.size());
    if (two_user) ++visits[static_cast<std::size_t>(classify_buffer_state(state.buffer, rho))];
    observe(report, std::as_const(state));
  }
  const auto n = static_cast<double>(cfg.n_slots);
  m.throughput = static_cast<double>(m.recovered_packets) / n;
  m.sum_rate = cfg.rate * m.throughput;
  m.mean_buffer_occupancy = static_cast<double>(occupancy) / n;
  if (two_user) {
    std::array<double, 3> h{};
    for (std::size_t i = 0; i < 3; ++i) h[i] = static_cast<double>(visits[i]) / n;
    m.state_histogram = h;
  }
  return m;
}

inline SimMetrics run_experiment(const SystemConfig& cfg, std::uint64_t seed) {
  return run_experiment(cfg, seed, [](const SlotReport&, const SimState&) {});
}

/// Sample mean with its standard error. With a single sample the standard
/// error is reported as 0 and flagged undefined.
struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;
  bool std_error_defined = false;

  static Estimate of(std::span<const double> xs) {
    Estimate e;
    const auto n = xs.size();
    if (n == 0) return e;
    double sum = 0.0;
    for (double x : xs) sum += x;
    e.mean = sum / static_cast<double>(n);
    if (n > 1) {
      double ss = 0.0;
      for (double x : xs) ss += (x - e.mean) * (x - e.mean);
      e.std_error = std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
      e.std_error_defined = true;
    }
    return e;
  }

  bool operator==(const Estimate&) const = default;
};

struct MonteCarloSummary {
  std::int64_t n_experiments = 0;
  Estimate throughput;
  Estimate sum_rate;
  Estimate buffer_occupancy;
  Estimate recovered_packets;
  std::optional<std::array<Estimate, 3>> state_histogram;

  bool operator==(const MonteCarloSummary&) const = default;
};

/// Runs `cfg.n_experiments` independent experiments. Experiment i uses
/// experiment_seed(cfg.seed, i); results are reduced in index order, so the
/// summary does not depend on `threads`.
inline MonteCarloSummary run_monte_carlo(const SystemConfig& cfg, unsigned threads = 1) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(cfg.n_experiments);
  std::vector<SimMetrics> runs(n);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) runs[i] = run_experiment(cfg, experiment_seed(cfg.seed, i));
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (threads == 1) {
    work(0, n);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (std::size_t b = 0; b < n; b += chunk) pool.emplace_back(work, b, std::min(n, b + chunk));
  }

  MonteCarloSummary s;
  s.n_experiments = cfg.n_experiments;
  std::vector<double> xs(n);
  auto collect = [&](auto&& field) {
    for (std::size_t i = 0; i < n; ++i) xs[i] = field(runs[i]);
    return Estimate::of(xs);
  };
  s.throughput = collect([](const SimMetrics& m) { return m.throughput; });
  s.sum_rate = collect([](const SimMetrics& m) { return m.sum_rate; });
  s.buffer_occupancy = collect([](const SimMetrics& m) { return m.mean_buffer_occupancy; });
  s.recovered_packets =
      collect([](const SimMetrics& m) { return static_cast<double>(m.recovered_packets); });
  if (cfg.users == 2) {
    std::array<Estimate, 3> h;
    for (std::size_t j = 0; j < 3; ++j)
      h[j] = collect([j](const SimMetrics& m) { return (*m.state_histogram)[j]; });
    s.state_histogram = h;
  }
  return s;
}

}  // namespace rnoma
