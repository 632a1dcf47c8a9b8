#pragma once

// Environmental trigger detection: forward taint from input records, then
// every codegen dependence whose writer is tainted is a finding.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string_view>
#include <tuple>
#include <unordered_set>
#include <vector>

#include "dyncode/dcfg.hpp"
#include "dyncode/dependence.hpp"
#include "dyncode/error.hpp"
#include "dyncode/trace.hpp"

namespace dyncode {

enum class TaintPolicy : std::uint8_t { DataOnly, DataAndControl };

constexpr std::string_view policy_name(TaintPolicy p) {
  return p == TaintPolicy::DataOnly ? "DATA_ONLY" : "DATA_AND_CONTROL";
}

struct TaintSources {
  std::vector<std::uint64_t> positions;
  LocationSet locations;  // tainted before the first record

  bool empty() const { return positions.empty() && locations.empty(); }
};

struct TaintState {
  std::unordered_set<Location, LocationHash> tainted;  // at the end of the trace
  std::vector<std::uint64_t> tainted_positions;        // ascending
  TaintPolicy policy = TaintPolicy::DataOnly;

  bool is_tainted(std::uint64_t pos) const {
    return std::binary_search(tainted_positions.begin(), tainted_positions.end(), pos);
  }
};

inline TaintSources default_sources(const Trace& trace) {
  TaintSources s;
  for (const auto& r : trace.records)
    if (r.taint_source) s.positions.push_back(r.pos);
  return s;
}

inline TaintState propagate_taint(const Trace& trace, const Dcfg& dcfg, const TaintSources& sources,
                                  TaintPolicy policy) {
  if (sources.empty()) throw ValidationError("sources", "no taint sources");
  for (auto p : sources.positions)
    if (p >= trace.size()) throw RangeError("taint source " + std::to_string(p) + " out of range");

  const std::size_t n = trace.size();
  std::vector<char> is_source(n, 0);
  for (auto p : sources.positions) is_source[p] = 1;

  std::vector<std::uint64_t> control;
  if (policy == TaintPolicy::DataAndControl) {
    control.assign(n, UINT64_MAX);
    scan_control_deps(trace, dcfg, [&](const DepEdge& e) { control[e.from_pos] = e.to_pos; });
  }

  TaintState st;
  st.policy = policy;
  st.tainted.insert(sources.locations.begin(), sources.locations.end());
  std::vector<char> hot(n, 0);
  for (std::uint64_t i = 0; i < n; ++i) {
    const TraceRecord& rec = trace.records[i];
    bool t = is_source[i];
    if (!t) for_each_read(rec, [&](const Location& l) { t = t || st.tainted.count(l); });
    if (!t && !control.empty() && control[i] != UINT64_MAX) t = hot[control[i]];
    hot[i] = t;
    if (t) {
      st.tainted_positions.push_back(i);
      for_each_write(rec, [&](const Location& l) { st.tainted.insert(l); });
    } else {
      for_each_write(rec, [&](const Location& l) { st.tainted.erase(l); });
    }
  }
  return st;
}

struct TriggerFinding {
  std::uint64_t writer_pos = 0;
  std::uint64_t dynamic_pos = 0;
  Location loc;

  auto operator<=>(const TriggerFinding&) const = default;
};

struct TriggerReport {
  TaintPolicy policy = TaintPolicy::DataOnly;
  std::vector<TriggerFinding> findings;  // by writer, then dynamic position
};

inline TriggerReport detect_triggers(const Trace& trace, const TaintState& taint) {
  TriggerReport rep;
  rep.policy = taint.policy;
  for (const auto& e : codegen_deps(trace))
    if (taint.is_tainted(e.to_pos)) rep.findings.push_back({e.to_pos, e.from_pos, *e.loc});
  std::sort(rep.findings.begin(), rep.findings.end());
  return rep;
}

inline TriggerReport detect_triggers(const Trace& trace, const Dcfg& dcfg, TaintPolicy policy,
                                     const std::optional<TaintSources>& sources = std::nullopt) {
  TaintState st = propagate_taint(trace, dcfg, sources ? *sources : default_sources(trace), policy);
  return detect_triggers(trace, st);
}

}  // namespace dyncode
