#pragma once

// Dynamic dependences between trace positions.
//
//  DATA     T[i] reads a location whose most recent writer is T[j].
//  CODEGEN  T[i] occupies a byte whose most recent writer is T[j].
//  CONTROL  T[j] is the nearest earlier conditional branch of the same thread
//           and phase whose block is not strictly postdominated by T[i]'s
//           block in the phase CFG. Scope ends at phase boundaries.
//
// A last-writer index is the same thing as tagging every write with a
// distinct taint label: looking up a byte yields the label of its writer.

#include <algorithm>
#include <cstdint>
#include <list>
#include <map>
#include <optional>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dyncode/dcfg.hpp"
#include "dyncode/postdom.hpp"
#include "dyncode/trace.hpp"

namespace dyncode {

enum class DepKind : std::uint8_t { Data, Control, Codegen };

constexpr std::string_view dep_kind_name(DepKind k) {
  switch (k) {
    case DepKind::Data: return "DATA";
    case DepKind::Control: return "CONTROL";
    case DepKind::Codegen: return "CODEGEN";
  }
  return "?";
}

struct DepEdge {
  std::uint64_t from_pos = 0;  // depender
  std::uint64_t to_pos = 0;    // source, to_pos < from_pos
  DepKind kind = DepKind::Data;
  std::optional<Location> loc;

  auto operator<=>(const DepEdge&) const = default;
};

class LastWriterIndex {
 public:
  std::optional<std::uint64_t> last_writer(const Location& l) const {
    auto it = map_.find(l);
    if (it == map_.end()) return std::nullopt;
    return it->second;
  }

  void record_writes(const TraceRecord& rec) {
    for_each_write(rec, [&](const Location& l) { map_[l] = rec.pos; });
  }

  std::size_t size() const { return map_.size(); }

 private:
  std::unordered_map<Location, std::uint64_t, LocationHash> map_;
};

namespace detail {

// Smallest witnessing location per distinct writer, ordered by writer.
class WriterWitnesses {
 public:
  void add(std::uint64_t writer, const Location& loc) {
    for (auto& [w, l] : items_)
      if (w == writer) {
        if (loc < l) l = loc;
        return;
      }
    items_.push_back({writer, loc});
  }
  template <typename F>
  void drain(F&& f) {
    std::sort(items_.begin(), items_.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [w, l] : items_) f(w, l);
    items_.clear();
  }

 private:
  std::vector<std::pair<std::uint64_t, Location>> items_;
};

}  // namespace detail

// Streams DATA and CODEGEN edges in position order. Either callback may be
// a no-op.
template <typename OnData, typename OnCodegen>
void scan_last_writer_deps(const std::vector<TraceRecord>& records, OnData&& on_data, OnCodegen&& on_codegen) {
  LastWriterIndex index;
  detail::WriterWitnesses wit;
  for (const auto& rec : records) {
    for_each_read(rec, [&](const Location& l) {
      if (auto w = index.last_writer(l)) wit.add(*w, l);
    });
    wit.drain([&](std::uint64_t w, const Location& l) { on_data(DepEdge{rec.pos, w, DepKind::Data, l}); });
    for (std::uint64_t b = 0; b < rec.size; ++b) {
      Location l = Location::mem(rec.addr + b);
      if (auto w = index.last_writer(l)) wit.add(*w, l);
    }
    wit.drain([&](std::uint64_t w, const Location& l) { on_codegen(DepEdge{rec.pos, w, DepKind::Codegen, l}); });
    index.record_writes(rec);
  }
}

inline std::vector<DepEdge> codegen_deps(const Trace& trace) {
  std::vector<DepEdge> out;
  scan_last_writer_deps(trace.records, [](const DepEdge&) {}, [&](const DepEdge& e) { out.push_back(e); });
  return out;
}

inline std::vector<DepEdge> data_deps(const Trace& trace) {
  std::vector<DepEdge> out;
  scan_last_writer_deps(trace.records, [&](const DepEdge& e) { out.push_back(e); }, [](const DepEdge&) {});
  return out;
}

// Streams CONTROL edges in position order.
//
// Each thread keeps its branch blocks in most-recent-first order, one entry
// per block: whether a branch qualifies depends only on its block, so an
// older instance of the same block can never be the nearest answer.
template <typename OnControl>
void scan_control_deps(const Trace& trace, const Dcfg& dcfg, OnControl&& on_control) {
  struct Entry {
    BlockId block;
    std::uint64_t pos;
  };
  for (const auto& phase : dcfg.phases()) {
    const PhaseCfg& cfg = dcfg.phase_cfg(phase.index);
    PostDominators pdom(cfg);
    std::map<std::uint64_t, std::list<Entry>> recent;
    std::map<std::uint64_t, std::unordered_map<BlockId, typename std::list<Entry>::iterator>> where;
    for (std::uint64_t i = phase.start; i <= phase.end; ++i) {
      const TraceRecord& rec = trace.records[i];
      BlockId bi = cfg.block_of(rec.addr);
      auto& lst = recent[rec.tid];
      for (const auto& e : lst) {
        if (e.block == bi || !pdom.postdominates(bi, e.block)) {
          on_control(DepEdge{i, e.pos, DepKind::Control, std::nullopt});
          break;
        }
      }
      if (rec.kind == Kind::CondBr) {
        auto& w = where[rec.tid];
        if (auto it = w.find(bi); it != w.end()) lst.erase(it->second);
        lst.push_front({bi, i});
        w[bi] = lst.begin();
      }
      if (rec.kind == Kind::Halt) {
        recent.erase(rec.tid);
        where.erase(rec.tid);
      }
    }
  }
}

inline std::vector<DepEdge> control_deps(const Trace& trace, const Dcfg& dcfg) {
  std::vector<DepEdge> out;
  scan_control_deps(trace, dcfg, [&](const DepEdge& e) { out.push_back(e); });
  return out;
}

inline std::vector<DepEdge> all_deps(const Trace& trace, const Dcfg& dcfg) {
  std::vector<DepEdge> out = data_deps(trace);
  auto c = control_deps(trace, dcfg);
  auto g = codegen_deps(trace);
  out.insert(out.end(), c.begin(), c.end());
  out.insert(out.end(), g.begin(), g.end());
  std::sort(out.begin(), out.end(), [](const DepEdge& a, const DepEdge& b) {
    return std::tie(a.from_pos, a.to_pos, a.kind) < std::tie(b.from_pos, b.to_pos, b.kind);
  });
  return out;
}

// Backward adjacency (depender -> sources) in compressed form.
class DependenceGraph {
 public:
  struct Source {
    std::uint64_t pos;
    DepKind kind;
  };

  DependenceGraph() = default;

  DependenceGraph(const Trace& trace, const Dcfg& dcfg) {
    const std::size_t n = trace.size();
    // Control edges arrive per phase, data/codegen per position; bucket first.
    std::vector<std::uint64_t> control(n, kNoSource);
    scan_control_deps(trace, dcfg, [&](const DepEdge& e) { control[e.from_pos] = e.to_pos; });
    offsets_.reserve(n + 1);
    offsets_.push_back(0);
    std::uint64_t cur = 0;
    auto flush_until = [&](std::uint64_t pos) {
      while (cur < pos) {
        if (control[cur] != kNoSource) sources_.push_back({control[cur], DepKind::Control});
        offsets_.push_back(sources_.size());
        ++cur;
      }
    };
    auto add = [&](const DepEdge& e) {
      flush_until(e.from_pos);
      sources_.push_back({e.to_pos, e.kind});
    };
    scan_last_writer_deps(trace.records, add, add);
    flush_until(n);
  }

  std::size_t size() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t edge_count() const { return sources_.size(); }

  template <typename F>
  void for_each_source(std::uint64_t pos, F&& f) const {
    for (auto k = offsets_[pos]; k < offsets_[pos + 1]; ++k) f(sources_[k]);
  }

  std::optional<std::uint64_t> control_source(std::uint64_t pos) const {
    for (auto k = offsets_[pos]; k < offsets_[pos + 1]; ++k)
      if (sources_[k].kind == DepKind::Control) return sources_[k].pos;
    return std::nullopt;
  }

 private:
  static constexpr std::uint64_t kNoSource = UINT64_MAX;
  std::vector<std::uint64_t> offsets_;
  std::vector<Source> sources_;
};

}  // namespace dyncode
