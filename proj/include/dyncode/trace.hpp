#pragma once

// Execution-trace data model.
//
// A trace is a sequence of dynamic instruction records. Each record names the
// bytes the instruction occupied when it executed and the memory/register
// locations it read and wrote. Analyses only look at location sets; values
// appear solely in the encoded instruction bytes.

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dyncode/error.hpp"

namespace dyncode {

enum class Space : std::uint8_t { Mem, Reg };

// A byte of memory or a register. Registers live in their own index space.
struct Location {
  Space space = Space::Mem;
  std::uint64_t addr = 0;

  static constexpr Location mem(std::uint64_t a) { return {Space::Mem, a}; }
  static constexpr Location reg(std::uint64_t r) { return {Space::Reg, r}; }

  auto operator<=>(const Location&) const = default;
};

using LocationSet = std::set<Location>;

struct LocationHash {
  std::size_t operator()(const Location& l) const noexcept {
    return std::hash<std::uint64_t>{}(l.addr * 2 + static_cast<std::uint64_t>(l.space));
  }
};

enum class Kind : std::uint8_t { Fall, Jump, CondBr, Call, Ret, Halt };

constexpr std::string_view kind_name(Kind k) {
  switch (k) {
    case Kind::Fall: return "FALL";
    case Kind::Jump: return "JUMP";
    case Kind::CondBr: return "CONDBR";
    case Kind::Call: return "CALL";
    case Kind::Ret: return "RET";
    case Kind::Halt: return "HALT";
  }
  return "?";
}

inline std::optional<Kind> parse_kind(std::string_view s) {
  for (Kind k : {Kind::Fall, Kind::Jump, Kind::CondBr, Kind::Call, Kind::Ret, Kind::Halt})
    if (kind_name(k) == s) return k;
  return std::nullopt;
}

struct ByteRange {
  std::uint64_t addr = 0;
  std::uint64_t size = 0;

  bool contains(std::uint64_t a) const { return a >= addr && a - addr < size; }
  bool overlaps(const ByteRange& o) const {
    return addr < o.addr + o.size && o.addr < addr + size;
  }
  bool operator==(const ByteRange&) const = default;
};

struct TraceRecord {
  std::uint64_t pos = 0;
  std::uint64_t tid = 0;
  std::uint64_t addr = 0;
  std::uint64_t size = 0;
  std::vector<std::uint8_t> bytes;
  std::string mnemonic;
  Kind kind = Kind::Fall;
  std::optional<bool> taken;
  std::vector<ByteRange> mem_reads;
  std::vector<ByteRange> mem_writes;
  std::vector<std::uint32_t> reg_reads;
  std::vector<std::uint32_t> reg_writes;
  bool taint_source = false;

  ByteRange code_range() const { return {addr, size}; }
  bool is_control_transfer() const { return kind != Kind::Fall; }

  bool operator==(const TraceRecord&) const = default;
};

struct Trace {
  std::vector<TraceRecord> records;
  std::map<std::string, std::string> metadata;
  std::vector<std::uint64_t> markers;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  const TraceRecord& operator[](std::size_t i) const { return records[i]; }

  bool operator==(const Trace&) const = default;
};

// instr(I): the memory bytes the instruction occupied.
inline LocationSet instr_of(const TraceRecord& rec) {
  LocationSet out;
  for (std::uint64_t i = 0; i < rec.size; ++i) out.insert(Location::mem(rec.addr + i));
  return out;
}

// writes(I): every byte in mem_writes plus every written register.
inline LocationSet writes_of(const TraceRecord& rec) {
  LocationSet out;
  for (const auto& r : rec.mem_writes)
    for (std::uint64_t i = 0; i < r.size; ++i) out.insert(Location::mem(r.addr + i));
  for (auto r : rec.reg_writes) out.insert(Location::reg(r));
  return out;
}

inline LocationSet reads_of(const TraceRecord& rec) {
  LocationSet out;
  for (const auto& r : rec.mem_reads)
    for (std::uint64_t i = 0; i < r.size; ++i) out.insert(Location::mem(r.addr + i));
  for (auto r : rec.reg_reads) out.insert(Location::reg(r));
  return out;
}

// Calls f(Location) for every read location without building a set.
template <typename F>
void for_each_read(const TraceRecord& rec, F&& f) {
  for (const auto& r : rec.mem_reads)
    for (std::uint64_t i = 0; i < r.size; ++i) f(Location::mem(r.addr + i));
  for (auto r : rec.reg_reads) f(Location::reg(r));
}

template <typename F>
void for_each_write(const TraceRecord& rec, F&& f) {
  for (const auto& r : rec.mem_writes)
    for (std::uint64_t i = 0; i < r.size; ++i) f(Location::mem(r.addr + i));
  for (auto r : rec.reg_writes) f(Location::reg(r));
}

// Checks the per-record invariants. `expected_pos` is the index the record
// must carry.
inline void validate_record(const TraceRecord& rec, std::uint64_t expected_pos) {
  if (rec.pos != expected_pos)
    throw ValidationError("pos", "expected " + std::to_string(expected_pos) + ", got " +
                                     std::to_string(rec.pos));
  if (rec.size == 0) throw ValidationError("size", "must be at least 1");
  if (rec.bytes.size() != rec.size)
    throw ValidationError("bytes", "length " + std::to_string(rec.bytes.size()) +
                                       " does not match size " + std::to_string(rec.size));
  if (rec.addr + rec.size < rec.addr) throw ValidationError("addr", "range wraps around");
  if ((rec.kind == Kind::CondBr) != rec.taken.has_value())
    throw ValidationError("taken", rec.kind == Kind::CondBr ? "required for CONDBR"
                                                            : "only allowed for CONDBR");
  for (const auto& r : rec.mem_reads)
    if (r.size == 0) throw ValidationError("mem_reads", "empty byte range");
  for (const auto& r : rec.mem_writes)
    if (r.size == 0) throw ValidationError("mem_writes", "empty byte range");
}

inline void validate_trace(const Trace& t) {
  for (std::size_t i = 0; i < t.records.size(); ++i) validate_record(t.records[i], i);
  for (auto m : t.markers)
    if (m >= t.records.size())
      throw ValidationError("meta.markers", "marker " + std::to_string(m) + " out of range");
}

}  // namespace dyncode
