#pragma once

// Backward dynamic slicing as a closure over the dependence graph, with an
// optional codegen ablation and marker-based dicing.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dyncode/dcfg.hpp"
#include "dyncode/dependence.hpp"
#include "dyncode/error.hpp"
#include "dyncode/trace.hpp"

namespace dyncode {

struct SliceCriterion {
  std::uint64_t pos = 0;
  std::optional<LocationSet> locs;  // default: reads + instruction bytes of T[pos]

  SliceCriterion() = default;
  SliceCriterion(std::uint64_t p, std::optional<LocationSet> l = std::nullopt) : pos(p), locs(std::move(l)) {}
};

struct SliceMetrics {
  std::uint64_t n_instrs = 0;  // instructions in the DCFG
  std::uint64_t n_slice = 0;   // distinct (phase, addr) in the slice
  double delta_slice = 0.0;    // (n_instrs - n_slice) / n_instrs
};

struct SliceResult {
  std::vector<std::uint64_t> positions;  // ascending
  std::set<std::pair<std::uint64_t, std::uint64_t>> dcfg_instrs;
  SliceMetrics metrics;

  bool contains(std::uint64_t pos) const { return std::binary_search(positions.begin(), positions.end(), pos); }
};

namespace detail {

// Most recent writer of `loc` strictly before `pos`.
inline std::optional<std::uint64_t> last_writer_before(const Trace& t, std::uint64_t pos, const Location& loc) {
  for (std::uint64_t j = pos; j-- > 0;) {
    bool hit = false;
    for_each_write(t.records[j], [&](const Location& l) { hit = hit || l == loc; });
    if (hit) return j;
  }
  return std::nullopt;
}

inline SliceResult finish_slice(const Trace& trace, const Dcfg& dcfg, std::vector<char>& in) {
  SliceResult r;
  for (std::uint64_t i = 0; i < in.size(); ++i)
    if (in[i]) {
      r.positions.push_back(i);
      r.dcfg_instrs.insert({dcfg.phase_of(i), trace.records[i].addr});
    }
  r.metrics.n_instrs = dcfg.instr_count();
  r.metrics.n_slice = r.dcfg_instrs.size();
  if (r.metrics.n_instrs)
    r.metrics.delta_slice = static_cast<double>(r.metrics.n_instrs - r.metrics.n_slice) /
                            static_cast<double>(r.metrics.n_instrs);
  return r;
}

}  // namespace detail

inline SliceResult backward_slice(const Trace& trace, const Dcfg& dcfg, const DependenceGraph& deps,
                                  const SliceCriterion& crit, bool use_codegen = true) {
  if (crit.pos >= trace.size())
    throw RangeError("slice position " + std::to_string(crit.pos) + " out of range (trace has " +
                     std::to_string(trace.size()) + " records)");
  auto follows = [&](DepKind k) { return use_codegen || k != DepKind::Codegen; };

  std::vector<char> in(trace.size(), 0);
  std::vector<std::uint64_t> work;
  auto push = [&](std::uint64_t p) {
    if (!in[p]) {
      in[p] = 1;
      work.push_back(p);
    }
  };
  in[crit.pos] = 1;

  if (!crit.locs) {
    deps.for_each_source(crit.pos, [&](const DependenceGraph::Source& s) {
      if (follows(s.kind)) push(s.pos);
    });
  } else {
    const TraceRecord& rec = trace.records[crit.pos];
    if (auto c = deps.control_source(crit.pos)) push(*c);
    for (const auto& loc : *crit.locs) {
      bool code = loc.space == Space::Mem && rec.code_range().contains(loc.addr);
      if (code && !use_codegen) continue;
      if (auto w = detail::last_writer_before(trace, crit.pos, loc)) push(*w);
    }
  }

  while (!work.empty()) {
    auto p = work.back();
    work.pop_back();
    deps.for_each_source(p, [&](const DependenceGraph::Source& s) {
      if (follows(s.kind)) push(s.pos);
    });
  }
  return detail::finish_slice(trace, dcfg, in);
}

inline SliceResult backward_slice(const Trace& trace, const Dcfg& dcfg, const SliceCriterion& crit,
                                  bool use_codegen = true) {
  if (crit.pos >= trace.size())
    throw RangeError("slice position " + std::to_string(crit.pos) + " out of range (trace has " +
                     std::to_string(trace.size()) + " records)");
  DependenceGraph deps(trace, dcfg);
  return backward_slice(trace, dcfg, deps, crit, use_codegen);
}

// ---- dicing ----

// First marker of the trace: meta.markers if any, else the first MARK record.
inline std::uint64_t find_marker(const Trace& trace) {
  if (!trace.markers.empty()) return *std::min_element(trace.markers.begin(), trace.markers.end());
  for (const auto& r : trace.records)
    if (r.mnemonic == "MARK") return r.pos;
  throw Error("marker not found");
}

struct DicedTrace {
  Trace trace;            // suffix, positions renumbered from 0
  std::uint64_t base = 0;  // original position of the suffix's first record
};

inline DicedTrace dice(const Trace& trace, std::uint64_t marker_pos) {
  if (marker_pos >= trace.size())
    throw RangeError("marker " + std::to_string(marker_pos) + " out of range (trace has " +
                     std::to_string(trace.size()) + " records)");
  DicedTrace d;
  d.base = marker_pos;
  d.trace.metadata = trace.metadata;
  d.trace.records.assign(trace.records.begin() + static_cast<std::ptrdiff_t>(marker_pos), trace.records.end());
  for (auto& r : d.trace.records) r.pos -= marker_pos;
  for (auto m : trace.markers)
    if (m >= marker_pos) d.trace.markers.push_back(m - marker_pos);
  return d;
}

struct DiceMetrics {
  std::uint64_t dcfg_orig = 0;
  std::uint64_t dcfg_mk = 0;
  std::uint64_t slice_orig = 0;
  std::uint64_t slice_mk = 0;
  double delta_dcfg = 0.0;   // (dcfg_orig - dcfg_mk) / dcfg_orig
  double delta_slice = 0.0;  // (slice_orig - slice_mk) / slice_orig
  double delta_mk = 0.0;     // (dcfg_mk - slice_mk) / dcfg_mk
};

struct DiceResult {
  std::uint64_t marker = 0;
  SliceResult full;
  SliceResult diced;  // positions are in original numbering
  DiceMetrics metrics;
};

inline double ratio_drop(std::uint64_t a, std::uint64_t b) {
  return a ? (static_cast<double>(a) - static_cast<double>(b)) / static_cast<double>(a) : 0.0;
}

// Slices the full trace and the suffix from `marker_pos`, and compares them.
inline DiceResult dice_and_slice(const Trace& trace, const Dcfg& dcfg, std::uint64_t marker_pos,
                                 const SliceCriterion& crit, bool use_codegen = true) {
  if (crit.pos >= trace.size())
    throw RangeError("slice position " + std::to_string(crit.pos) + " out of range");
  if (marker_pos > crit.pos)
    throw RangeError("marker " + std::to_string(marker_pos) + " comes after criterion " + std::to_string(crit.pos));
  DiceResult out;
  out.marker = marker_pos;
  out.full = backward_slice(trace, dcfg, crit, use_codegen);

  DicedTrace d = dice(trace, marker_pos);
  Dcfg dd = build_dcfg(d.trace, dcfg.is_shared());
  out.diced = backward_slice(d.trace, dd, SliceCriterion{crit.pos - marker_pos, crit.locs}, use_codegen);
  for (auto& p : out.diced.positions) p += marker_pos;

  auto& m = out.metrics;
  m.dcfg_orig = out.full.metrics.n_instrs;
  m.dcfg_mk = out.diced.metrics.n_instrs;
  m.slice_orig = out.full.metrics.n_slice;
  m.slice_mk = out.diced.metrics.n_slice;
  m.delta_dcfg = ratio_drop(m.dcfg_orig, m.dcfg_mk);
  m.delta_slice = ratio_drop(m.slice_orig, m.slice_mk);
  m.delta_mk = ratio_drop(m.dcfg_mk, m.slice_mk);
  return out;
}

}  // namespace dyncode
