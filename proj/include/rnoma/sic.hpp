#pragma once

// Receiver side of the random NOMA uplink: intra-slot SIC, the collision
// buffer of residual signals, and cross-slot interference cancellation.

#include <algorithm>
#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <numeric>
#include <set>
#include <span>
#include <vector>

#include "rnoma/channel.hpp"
#include "rnoma/config.hpp"

namespace rnoma {

/// Identity of a logical packet. Every retransmitted copy carries the same id.
struct PacketId {
  int user = 0;
  std::int64_t sequence = 0;

  auto operator<=>(const PacketId&) const = default;
};

/// One received copy of a packet together with its SNR in that slot.
struct PacketCopy {
  PacketId id;
  double snr = 0.0;

  bool operator==(const PacketCopy&) const = default;
};

using PacketSet = std::set<PacketId>;

/// Residual signal of one slot: the copies that could not be decoded yet.
struct BufferedSlot {
  std::int64_t slot_index = 0;
  std::vector<PacketCopy> copies;

  bool operator==(const BufferedSlot&) const = default;
};

/// Residual signals kept by the receiver, ordered by slot index.
class CollisionBuffer {
 public:
  CollisionBuffer() = default;

  // Appends a residual. Slot indices must strictly increase and a slot may
  // not hold two copies of the same packet.
  void push(BufferedSlot slot) {
    if (!slots_.empty() && slot.slot_index <= slots_.back().slot_index)
      throw parameter_error("buffered slot indices must strictly increase");
    if (slot.copies.empty()) throw parameter_error("buffered slot must hold at least one copy");
    std::vector<PacketId> ids;
    ids.reserve(slot.copies.size());
    for (const auto& c : slot.copies) {
      if (!(c.snr >= 0.0)) throw parameter_error("received SNR must be nonnegative");
      ids.push_back(c.id);
    }
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
      throw parameter_error("a slot cannot hold two copies of one packet");
    slots_.push_back(std::move(slot));
  }

  std::span<const BufferedSlot> slots() const { return slots_; }
  std::vector<BufferedSlot>& mutable_slots() { return slots_; }
  std::size_t size() const { return slots_.size(); }
  bool empty() const { return slots_.empty(); }

  std::size_t copy_count() const {
    std::size_t n = 0;
    for (const auto& s : slots_) n += s.copies.size();
    return n;
  }

  PacketSet packet_ids() const {
    PacketSet ids;
    for (const auto& s : slots_)
      for (const auto& c : s.copies) ids.insert(c.id);
    return ids;
  }

  bool operator==(const CollisionBuffer&) const = default;

 private:
  std::vector<BufferedSlot> slots_;
};

struct SlotDetection {
  std::vector<PacketId> recovered;
  std::vector<PacketCopy> residual;
};

namespace detail {

// Strongest first; equal SNRs resolved by ascending user index.
inline void sort_by_power(std::vector<PacketCopy>& copies) {
  std::sort(copies.begin(), copies.end(), [](const PacketCopy& a, const PacketCopy& b) {
    if (a.snr != b.snr) return a.snr > b.snr;
    return a.id < b.id;
  });
}

// Runs SIC on `copies` in place. Decoded packets are appended to `out` and
// removed from `copies`; returns how many were decoded.
inline int detect_in_place(std::vector<PacketCopy>& copies, double rho_th,
                           std::vector<PacketId>& out) {
  if (copies.empty()) return 0;
  sort_by_power(copies);
  constexpr std::size_t kInline = 64;
  std::array<double, kInline> inline_snr;
  std::vector<double> heap_snr;
  double* snr = inline_snr.data();
  if (copies.size() > kInline) {
    heap_snr.resize(copies.size());
    snr = heap_snr.data();
  }
  for (std::size_t i = 0; i < copies.size(); ++i) snr[i] = copies[i].snr;
  const int m = sorted_prefix_length(std::span<const double>(snr, copies.size()), rho_th);
  for (int i = 0; i < m; ++i) out.push_back(copies[i].id);
  copies.erase(copies.begin(), copies.begin() + m);
  return m;
}

inline bool has_potential(const BufferedSlot& slot, double rho_th) {
  return std::any_of(slot.copies.begin(), slot.copies.end(),
                     [&](const PacketCopy& c) { return is_potential(c.snr, rho_th); });
}

// Removes the copies of `ids` from every slot and drops emptied slots.
template <class Contains>
void cancel_in_place(std::vector<BufferedSlot>& slots, Contains&& contains) {
  for (auto& s : slots)
    std::erase_if(s.copies, [&](const PacketCopy& c) { return contains(c.id); });
  std::erase_if(slots, [](const BufferedSlot& s) { return s.copies.empty(); });
}

}  // namespace detail

/// Intra-slot SIC on the copies received in one slot.
inline SlotDetection intra_slot_detect(std::span<const PacketCopy> copies, double rho_th) {
  SlotDetection result;
  result.residual.assign(copies.begin(), copies.end());
  for (const auto& c : result.residual)
    if (!(c.snr >= 0.0)) throw parameter_error("received SNR must be nonnegative");
  detail::detect_in_place(result.residual, rho_th, result.recovered);
  return result;
}

/// Cancels every copy of every recovered packet from the buffer.
inline CollisionBuffer cross_slot_cancel(CollisionBuffer buffer, const PacketSet& recovered) {
  if (recovered.empty()) return buffer;
  detail::cancel_in_place(buffer.mutable_slots(),
                          [&](const PacketId& id) { return recovered.contains(id); });
  return buffer;
}

/// Drops residuals with no potential copy. Cancellation only removes
/// interference, so such a slot can never decode anything.
inline CollisionBuffer evict_dead_slots(CollisionBuffer buffer, double rho_th) {
  std::erase_if(buffer.mutable_slots(),
                [&](const BufferedSlot& s) { return !detail::has_potential(s, rho_th); });
  return buffer;
}

// Permutation of [0, n) giving the order in which buffered slots are scanned
// during one cascade pass.
using ScanOrder = std::function<std::vector<std::size_t>(std::size_t)>;

/// Cancels the seed packets, then alternates intra-slot SIC over the
/// buffer with cross-slot cancellation of whatever it decodes, until a full
/// pass decodes nothing. Decoded ids are appended to `newly` in discovery
/// order. Operates on the buffer in place.
inline void cascade_in_place(CollisionBuffer& buffer, const std::vector<PacketId>& seed,
                             double rho_th, std::vector<PacketId>& newly,
                             const ScanOrder& order = {}) {
  auto& slots = buffer.mutable_slots();
  std::vector<PacketId> pending(seed.begin(), seed.end());
  std::vector<std::size_t> scan;
  while (true) {
    if (!pending.empty()) {
      std::sort(pending.begin(), pending.end());
      detail::cancel_in_place(slots, [&](const PacketId& id) {
        return std::binary_search(pending.begin(), pending.end(), id);
      });
      pending.clear();
    }
    if (order) {
      scan = order(slots.size());
    } else {
      scan.resize(slots.size());
      std::iota(scan.begin(), scan.end(), std::size_t{0});
    }
    for (std::size_t i : scan) {
      auto& copies = slots[i].copies;
      const auto before = pending.size();
      // Packets decoded earlier in this pass are cancelled before scanning.
      if (before > 0)
        std::erase_if(copies, [&](const PacketCopy& c) {
          return std::find(pending.begin(), pending.end(), c.id) != pending.end();
        });
      detail::detect_in_place(copies, rho_th, pending);
      newly.insert(newly.end(), pending.begin() + static_cast<std::ptrdiff_t>(before),
                   pending.end());
    }
    if (pending.empty()) break;
  }
}

struct CascadeResult {
  PacketSet all_recovered;
  CollisionBuffer buffer;
};

inline CascadeResult recovery_cascade(CollisionBuffer buffer, const PacketSet& seed_recovered,
                                      double rho_th, const ScanOrder& order = {}) {
  std::vector<PacketId> seed(seed_recovered.begin(), seed_recovered.end());
  std::vector<PacketId> newly;
  cascade_in_place(buffer, seed, rho_th, newly, order);
  CascadeResult result{seed_recovered, std::move(buffer)};
  result.all_recovered.insert(newly.begin(), newly.end());
  return result;
}

}  // namespace rnoma
