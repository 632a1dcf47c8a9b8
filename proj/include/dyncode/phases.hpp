#pragma once

// Phase partitioning.
//
// A phase is a maximal run of the trace in which no executed instruction
// occupies a byte written earlier in the same run. Partitioning is a single
// streaming pass: W collects the memory bytes written since the phase began,
// and an instruction whose bytes intersect W opens the next phase. W is
// updated after the check, so an instruction that overwrites itself stays in
// its phase and the next execution of those bytes starts a new one.

#include <cstdint>
#include <unordered_set>
#include <vector>

#include "dyncode/trace.hpp"

namespace dyncode {

struct Phase {
  std::uint64_t index = 0;
  std::uint64_t start = 0;  // inclusive
  std::uint64_t end = 0;    // inclusive

  std::uint64_t length() const { return end - start + 1; }
  bool contains(std::uint64_t pos) const { return pos >= start && pos <= end; }
  bool operator==(const Phase&) const = default;
};

// Memory bytes written since the current phase began.
class WrittenSet {
 public:
  void add_writes(const TraceRecord& rec) {
    for (const auto& r : rec.mem_writes)
      for (std::uint64_t i = 0; i < r.size; ++i) bytes_.insert(r.addr + i);
  }
  void insert(std::uint64_t addr) { bytes_.insert(addr); }
  bool contains(std::uint64_t addr) const { return bytes_.count(addr) != 0; }
  bool empty() const { return bytes_.empty(); }
  void clear() { bytes_.clear(); }

 private:
  std::unordered_set<std::uint64_t> bytes_;
};

inline bool instr_starts_new_phase(const TraceRecord& rec, const WrittenSet& written) {
  if (written.empty()) return false;
  for (std::uint64_t i = 0; i < rec.size; ++i)
    if (written.contains(rec.addr + i)) return true;
  return false;
}

// Set-based form. Register locations never intersect an instruction.
inline bool instr_starts_new_phase(const TraceRecord& rec, const LocationSet& written) {
  for (std::uint64_t i = 0; i < rec.size; ++i)
    if (written.count(Location::mem(rec.addr + i))) return true;
  return false;
}

// Incremental partitioner; feed records in trace order.
class PhaseTracker {
 public:
  // Returns true if `rec` opens a new phase. The first record never does.
  bool observe(const TraceRecord& rec) {
    bool fresh = instr_starts_new_phase(rec, written_);
    if (fresh) {
      ++phase_;
      written_.clear();
    }
    written_.add_writes(rec);
    ++seen_;
    return fresh;
  }

  std::uint64_t phase() const { return phase_; }
  std::uint64_t seen() const { return seen_; }

 private:
  WrittenSet written_;
  std::uint64_t phase_ = 0;
  std::uint64_t seen_ = 0;
};

inline std::vector<Phase> partition(const std::vector<TraceRecord>& records) {
  std::vector<Phase> out;
  if (records.empty()) return out;
  PhaseTracker tracker;
  out.push_back({0, 0, 0});
  for (std::uint64_t i = 0; i < records.size(); ++i) {
    if (tracker.observe(records[i])) {
      out.back().end = i - 1;
      out.push_back({tracker.phase(), i, i});
    }
  }
  out.back().end = records.size() - 1;
  return out;
}

inline std::vector<Phase> partition(const Trace& trace) { return partition(trace.records); }

// Phase index of every position.
inline std::vector<std::uint32_t> phase_of_positions(const std::vector<Phase>& phases, std::size_t n) {
  std::vector<std::uint32_t> out(n, 0);
  for (const auto& p : phases)
    for (auto i = p.start; i <= p.end; ++i) out[i] = static_cast<std::uint32_t>(p.index);
  return out;
}

}  // namespace dyncode
