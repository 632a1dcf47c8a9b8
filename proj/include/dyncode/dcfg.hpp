#pragma once

// Dynamic control flow graph: one CFG per phase, linked by dynamic edges from
// the block of each phase's last record to the block of the next phase's
// first record.
//
// The optional shared layer stores blocks that are identical across phases
// (same instruction addresses and bytes) once, annotated with the set of
// phases they belong to. Edges carry phase sets too, and traversal only
// follows an edge under a phase it is annotated with.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "dyncode/cfg.hpp"
#include "dyncode/phases.hpp"
#include "dyncode/trace.hpp"

namespace dyncode {

struct DynamicEdge {
  std::uint64_t from_phase = 0;  // edge goes from from_phase to from_phase + 1
  BlockId from_block = 0;
  BlockId to_block = 0;
  std::uint64_t from_pos = 0;  // last record of from_phase
  std::uint64_t to_pos = 0;    // first record of from_phase + 1

  bool operator==(const DynamicEdge&) const = default;
};

// Identity of a block for sharing: every instruction's address, size and bytes.
inline std::string block_key(const BasicBlock& b) {
  std::string k;
  for (const auto& in : b.instrs) {
    k += std::to_string(in.addr);
    k += ':';
    for (auto byte : in.bytes) {
      static constexpr char d[] = "0123456789abcdef";
      k += d[byte >> 4];
      k += d[byte & 0xf];
    }
    k += ';';
  }
  return k;
}

struct SharedBlock {
  std::uint32_t id = 0;
  std::string key;
  std::vector<CfgInstr> instrs;
  std::set<std::uint64_t> phases;
  std::map<std::uint64_t, BlockId> local_id;  // phase -> block id in that phase's CFG
};

struct SharedEdge {
  std::uint32_t from = 0;
  std::uint32_t to = 0;
  EdgeKind kind = EdgeKind::Fall;
  std::set<std::uint64_t> phases;
};

// A (block, phase) pair in the shared graph. Only pairs whose block carries
// the phase are realizable.
struct SharedNodeRef {
  std::uint32_t block = 0;
  std::uint64_t phase = 0;
  auto operator<=>(const SharedNodeRef&) const = default;
};

class SharedDcfg {
 public:
  SharedDcfg() = default;

  SharedDcfg(const std::vector<PhaseCfg>& cfgs, const std::vector<DynamicEdge>& dyn) {
    std::unordered_map<std::string, std::uint32_t> by_key;
    for (const auto& cfg : cfgs) {
      for (const auto& b : cfg.blocks()) {
        std::string key = block_key(b);
        auto [it, fresh] = by_key.try_emplace(key, static_cast<std::uint32_t>(blocks_.size()));
        if (fresh) blocks_.push_back({it->second, key, b.instrs, {}, {}});
        blocks_[it->second].phases.insert(cfg.phase_index());
        blocks_[it->second].local_id[cfg.phase_index()] = b.id;
        to_shared_[{cfg.phase_index(), b.id}] = it->second;
      }
    }
    std::map<std::tuple<std::uint32_t, std::uint32_t, EdgeKind>, std::uint32_t> edge_ix;
    for (const auto& cfg : cfgs) {
      for (const auto& e : cfg.edges()) {
        auto s = to_shared_.at({cfg.phase_index(), e.from});
        auto t = to_shared_.at({cfg.phase_index(), e.to});
        auto [it, fresh] = edge_ix.try_emplace({s, t, e.kind}, static_cast<std::uint32_t>(edges_.size()));
        if (fresh) edges_.push_back({s, t, e.kind, {}});
        edges_[it->second].phases.insert(cfg.phase_index());
      }
    }
    for (const auto& d : dyn)
      dynamic_.push_back({to_shared_.at({d.from_phase, d.from_block}), to_shared_.at({d.from_phase + 1, d.to_block}),
                          d.from_phase});
  }

  struct SharedDynamicEdge {
    std::uint32_t from = 0;
    std::uint32_t to = 0;
    std::uint64_t from_phase = 0;
  };

  const std::vector<SharedBlock>& blocks() const { return blocks_; }
  const std::vector<SharedEdge>& edges() const { return edges_; }
  const std::vector<SharedDynamicEdge>& dynamic_edges() const { return dynamic_; }

  std::uint32_t shared_id(std::uint64_t phase, BlockId local) const { return to_shared_.at({phase, local}); }

  // Realizable successors of `n`: intra-phase edges annotated with n.phase,
  // plus the dynamic edge if n is the last block of its phase.
  std::vector<SharedNodeRef> successors(const SharedNodeRef& n) const {
    std::vector<SharedNodeRef> out;
    if (!blocks_.at(n.block).phases.count(n.phase)) return out;
    for (const auto& e : edges_)
      if (e.from == n.block && e.phases.count(n.phase)) out.push_back({e.to, n.phase});
    for (const auto& d : dynamic_)
      if (d.from == n.block && d.from_phase == n.phase) out.push_back({d.to, n.phase + 1});
    return out;
  }

 private:
  std::vector<SharedBlock> blocks_;
  std::vector<SharedEdge> edges_;
  std::vector<SharedDynamicEdge> dynamic_;
  std::map<std::pair<std::uint64_t, BlockId>, std::uint32_t> to_shared_;
};

class Dcfg;
inline Dcfg build_dcfg(const std::vector<TraceRecord>& records, bool shared);

class Dcfg {
 public:
  const std::vector<Phase>& phases() const { return phases_; }
  const std::vector<PhaseCfg>& phase_cfgs() const { return cfgs_; }
  const PhaseCfg& phase_cfg(std::uint64_t phi) const { return cfgs_.at(phi); }
  const std::vector<DynamicEdge>& dynamic_edges() const { return dyn_; }
  bool is_shared() const { return shared_.has_value(); }
  const SharedDcfg& shared() const { return shared_.value(); }

  std::uint32_t phase_of(std::uint64_t pos) const { return phase_of_pos_.at(pos); }

  // Block (in its phase's CFG) executing trace position `pos`.
  BlockId block_of(const Trace& trace, std::uint64_t pos) const {
    return cfgs_.at(phase_of(pos)).block_of(trace.records.at(pos).addr);
  }

  std::size_t instr_count() const {
    std::size_t n = 0;
    for (const auto& c : cfgs_) n += c.instr_count();
    return n;
  }

  // Phase-annotated successors in the unshared graph, with the same
  // realizability rule as SharedDcfg::successors.
  std::vector<std::pair<std::uint64_t, BlockId>> successors(std::uint64_t phase, BlockId b) const {
    std::vector<std::pair<std::uint64_t, BlockId>> out;
    for (const auto& e : cfgs_.at(phase).out_edges(b)) out.push_back({phase, e.to});
    for (const auto& d : dyn_)
      if (d.from_phase == phase && d.from_block == b) out.push_back({phase + 1, d.to_block});
    return out;
  }

  void make_shared() {
    if (!shared_) shared_.emplace(cfgs_, dyn_);
  }

 private:
  friend Dcfg build_dcfg(const std::vector<TraceRecord>& records, bool shared);

  std::vector<Phase> phases_;
  std::vector<PhaseCfg> cfgs_;
  std::vector<DynamicEdge> dyn_;
  std::vector<std::uint32_t> phase_of_pos_;
  std::optional<SharedDcfg> shared_;
};

// Streams the trace once: each record either continues the current phase or,
// when its bytes were written earlier in the phase, opens a new phase CFG.
// The dynamic edge is added after the new phase's first record is in its CFG.
inline Dcfg build_dcfg(const std::vector<TraceRecord>& records, bool shared) {
  Dcfg d;
  d.phase_of_pos_.resize(records.size());
  if (records.empty()) {
    if (shared) d.make_shared();
    return d;
  }

  PhaseTracker tracker;
  std::map<std::uint64_t, ThreadState> threads;
  d.cfgs_.emplace_back(0);
  d.phases_.push_back({0, 0, 0});
  for (std::uint64_t i = 0; i < records.size(); ++i) {
    const TraceRecord& rec = records[i];
    bool fresh = tracker.observe(rec);
    if (fresh) {
      d.cfgs_.back().finish(threads);
      threads.clear();
      d.phases_.back().end = i - 1;
      d.phases_.push_back({tracker.phase(), i, i});
      d.cfgs_.emplace_back(tracker.phase());
    }
    d.cfgs_.back().process_record(rec, threads);
    if (fresh) {
      const PhaseCfg& prev = d.cfgs_[d.cfgs_.size() - 2];
      const TraceRecord& last = records[i - 1];
      d.dyn_.push_back({tracker.phase() - 1, prev.block_of(last.addr), d.cfgs_.back().block_of(rec.addr), i - 1, i});
    }
    d.phase_of_pos_[i] = static_cast<std::uint32_t>(tracker.phase());
  }
  d.cfgs_.back().finish(threads);
  d.phases_.back().end = records.size() - 1;
  if (shared) d.make_shared();
  return d;
}

inline Dcfg build_dcfg(const Trace& trace, bool shared = false) { return build_dcfg(trace.records, shared); }

struct DcfgStats {
  std::uint64_t n_instrs = 0;
  std::uint64_t n_blocks = 0;
  std::uint64_t n_edges = 0;
  std::uint64_t n_phases = 0;
  std::uint64_t n_dyn_edges = 0;
  std::uint64_t blocks_unshared = 0;
  std::uint64_t blocks_shared = 0;
  double shared_savings = 0.0;  // 1 - blocks_shared / blocks_unshared

  bool operator==(const DcfgStats&) const = default;
};

// N_instrs always counts the unshared instructions (one per phase and
// address); N_blocks and N_edges follow the representation the DCFG was
// built with.
inline DcfgStats stats(const Dcfg& d) {
  DcfgStats s;
  s.n_phases = d.phases().size();
  s.n_dyn_edges = d.dynamic_edges().size();
  s.n_instrs = d.instr_count();
  std::uint64_t unshared_edges = 0;
  for (const auto& c : d.phase_cfgs()) {
    s.blocks_unshared += c.blocks().size();
    unshared_edges += c.edges().size();
  }
  if (d.is_shared()) {
    s.blocks_shared = d.shared().blocks().size();
    s.n_blocks = s.blocks_shared;
    s.n_edges = d.shared().edges().size();
  } else {
    std::set<std::string> keys;
    for (const auto& c : d.phase_cfgs())
      for (const auto& b : c.blocks()) keys.insert(block_key(b));
    s.blocks_shared = keys.size();
    s.n_blocks = s.blocks_unshared;
    s.n_edges = unshared_edges;
  }
  if (s.blocks_unshared)
    s.shared_savings = 1.0 - static_cast<double>(s.blocks_shared) / static_cast<double>(s.blocks_unshared);
  return s;
}

}  // namespace dyncode
