#pragma once

// Incremental CFG construction from a phase's subtrace.
//
// Records are processed in trace order. Each thread keeps its own previous
// record and call stack, so interleaved threads extend or split blocks
// without inventing edges between each other. A record that follows a
// control transfer (or is the first record of its thread in the phase) starts
// a block; if its instruction is already in the middle of a block, that block
// is split and its outgoing edges move to the new tail block.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dyncode/error.hpp"
#include "dyncode/trace.hpp"

namespace dyncode {

enum class EdgeKind : std::uint8_t { Fall, Taken, NotTaken, Call, Ret };

constexpr std::string_view edge_kind_name(EdgeKind k) {
  switch (k) {
    case EdgeKind::Fall: return "FALL";
    case EdgeKind::Taken: return "TAKEN";
    case EdgeKind::NotTaken: return "NOTTAKEN";
    case EdgeKind::Call: return "CALL";
    case EdgeKind::Ret: return "RET";
  }
  return "?";
}

// Edge label for the transfer out of `rec`. HALT has no successor.
inline std::optional<EdgeKind> edge_kind_after(const TraceRecord& rec) {
  switch (rec.kind) {
    case Kind::Fall: return EdgeKind::Fall;
    case Kind::Jump: return EdgeKind::Taken;
    case Kind::CondBr: return rec.taken.value_or(false) ? EdgeKind::Taken : EdgeKind::NotTaken;
    case Kind::Call: return EdgeKind::Call;
    case Kind::Ret: return EdgeKind::Ret;
    case Kind::Halt: return std::nullopt;
  }
  return std::nullopt;
}

using BlockId = std::uint32_t;

struct CfgInstr {
  std::uint64_t addr = 0;
  std::uint64_t size = 0;
  std::vector<std::uint8_t> bytes;
  std::string mnemonic;
  Kind kind = Kind::Fall;
  std::uint64_t first_seen_pos = 0;

  bool same_code(const CfgInstr& o) const {
    return addr == o.addr && size == o.size && bytes == o.bytes;
  }
};

struct BasicBlock {
  BlockId id = 0;
  std::vector<CfgInstr> instrs;
  std::set<std::uint64_t> phase_set;

  std::uint64_t start_addr() const { return instrs.front().addr; }
  const CfgInstr& last() const { return instrs.back(); }
};

struct CfgEdge {
  BlockId from = 0;
  BlockId to = 0;
  EdgeKind kind = EdgeKind::Fall;

  auto operator<=>(const CfgEdge&) const = default;
};

// The parts of a record the builder needs to remember per thread.
struct PrevInstr {
  std::uint64_t pos = 0;
  std::uint64_t addr = 0;
  std::uint64_t size = 0;
  Kind kind = Kind::Fall;
  bool taken = false;
};

inline std::optional<EdgeKind> edge_kind_after(const PrevInstr& p) {
  switch (p.kind) {
    case Kind::Fall: return EdgeKind::Fall;
    case Kind::Jump: return EdgeKind::Taken;
    case Kind::CondBr: return p.taken ? EdgeKind::Taken : EdgeKind::NotTaken;
    case Kind::Call: return EdgeKind::Call;
    case Kind::Ret: return EdgeKind::Ret;
    case Kind::Halt: return std::nullopt;
  }
  return std::nullopt;
}

struct ThreadState {
  std::uint64_t tid = 0;
  std::optional<PrevInstr> prev;  // last record of this thread in the phase
  std::vector<std::uint64_t> call_stack;
};

class PhaseCfg {
 public:
  explicit PhaseCfg(std::uint64_t phase_index = 0) : phase_index_(phase_index) {}

  std::uint64_t phase_index() const { return phase_index_; }
  const std::vector<BasicBlock>& blocks() const { return blocks_; }
  const BasicBlock& block(BlockId id) const { return blocks_.at(id); }
  const std::set<CfgEdge>& edges() const { return edges_; }
  std::optional<BlockId> entry() const { return entry_; }
  bool empty() const { return blocks_.empty(); }

  std::size_t instr_count() const {
    std::size_t n = 0;
    for (const auto& b : blocks_) n += b.instrs.size();
    return n;
  }

  bool contains(std::uint64_t addr) const { return where_.count(addr) != 0; }

  BlockId block_of(std::uint64_t addr) const {
    auto it = where_.find(addr);
    if (it == where_.end()) throw InternalError("address " + std::to_string(addr) + " not in phase CFG");
    return it->second.first;
  }

  const CfgInstr& instr_at(std::uint64_t addr) const {
    auto [b, i] = where_.at(addr);
    return blocks_[b].instrs[i];
  }

  std::vector<CfgEdge> out_edges(BlockId b) const {
    std::vector<CfgEdge> out;
    for (auto it = edges_.lower_bound({b, 0, EdgeKind::Fall}); it != edges_.end() && it->from == b; ++it)
      out.push_back(*it);
    return out;
  }

  // Blocks holding the final record of some thread in this phase.
  const std::set<BlockId>& thread_exit_blocks() const { return exit_blocks_; }

  // Folds one record into the graph.
  void process_record(const TraceRecord& rec, std::map<std::uint64_t, ThreadState>& threads) {
    auto tit = threads.try_emplace(rec.tid).first;
    ThreadState& ts = tit->second;
    ts.tid = rec.tid;
    const PrevInstr* prev = ts.prev ? &*ts.prev : nullptr;

    if (auto it = where_.find(rec.addr); it != where_.end()) {
      const CfgInstr& known = blocks_[it->second.first].instrs[it->second.second];
      if (known.size != rec.size || known.bytes != rec.bytes)
        throw InternalError("instruction at " + std::to_string(rec.addr) + " changed within phase " +
                            std::to_string(phase_index_) + " (pos " + std::to_string(rec.pos) + ")");
    } else {
      insert_instr(rec, prev);
    }

    if (!entry_) entry_ = where_.at(rec.addr).first;

    auto [rb, ri] = where_.at(rec.addr);
    bool adjacent = false;
    if (prev && prev->kind == Kind::Fall && prev->addr + prev->size == rec.addr) {
      auto [pb, pi] = where_.at(prev->addr);
      adjacent = pb == rb && pi + 1 == ri;
    }
    if (!adjacent) {
      if (ri != 0) rb = split(rb, ri);
      if (prev) {
        if (auto k = edge_kind_after(*prev)) edges_.insert({where_.at(prev->addr).first, rb, *k});
      }
    }

    if (rec.kind == Kind::Call) ts.call_stack.push_back(rec.addr + rec.size);
    if (rec.kind == Kind::Ret && !ts.call_stack.empty()) ts.call_stack.pop_back();

    if (rec.kind == Kind::Halt) {
      threads.erase(tit);  // retired; HALT's block has no successor
    } else {
      ts.prev = PrevInstr{rec.pos, rec.addr, rec.size, rec.kind, rec.taken.value_or(false)};
    }
  }

  // Records where each live thread stopped. Call once after the last record.
  void finish(const std::map<std::uint64_t, ThreadState>& threads) {
    exit_blocks_.clear();
    for (const auto& [tid, ts] : threads)
      if (ts.prev) exit_blocks_.insert(block_of(ts.prev->addr));
    for (const auto& b : blocks_)
      if (b.last().kind == Kind::Halt) exit_blocks_.insert(b.id);
  }

  void set_phase_annotation(std::uint64_t phi) {
    for (auto& b : blocks_) b.phase_set = {phi};
  }

 private:
  void insert_instr(const TraceRecord& rec, const PrevInstr* prev) {
    CfgInstr ins{rec.addr, rec.size, rec.bytes, rec.mnemonic, rec.kind, rec.pos};
    if (prev && prev->kind == Kind::Fall && prev->addr + prev->size == rec.addr) {
      auto [pb, pi] = where_.at(prev->addr);
      if (pi + 1 == blocks_[pb].instrs.size() && out_edges(pb).empty()) {
        where_[rec.addr] = {pb, static_cast<std::uint32_t>(blocks_[pb].instrs.size())};
        blocks_[pb].instrs.push_back(std::move(ins));
        return;
      }
    }
    BlockId id = static_cast<BlockId>(blocks_.size());
    BasicBlock b;
    b.id = id;
    b.phase_set = {phase_index_};
    b.instrs.push_back(std::move(ins));
    blocks_.push_back(std::move(b));
    where_[rec.addr] = {id, 0};
  }

  // Moves instrs [at, end) of `b` into a new block, which inherits b's
  // outgoing edges; b falls through to it. Returns the new block's id.
  BlockId split(BlockId b, std::uint32_t at) {
    BlockId nb = static_cast<BlockId>(blocks_.size());
    BasicBlock tail;
    tail.id = nb;
    tail.phase_set = blocks_[b].phase_set;
    auto& src = blocks_[b].instrs;
    tail.instrs.assign(std::make_move_iterator(src.begin() + at), std::make_move_iterator(src.end()));
    src.erase(src.begin() + at, src.end());
    for (std::uint32_t i = 0; i < tail.instrs.size(); ++i) where_[tail.instrs[i].addr] = {nb, i};
    blocks_.push_back(std::move(tail));

    std::vector<CfgEdge> moved = out_edges(b);
    for (const auto& e : moved) {
      edges_.erase(e);
      // A self-loop on the old block now leaves the tail and re-enters the head.
      edges_.insert({nb, e.to, e.kind});
    }
    edges_.insert({b, nb, EdgeKind::Fall});
    return nb;
  }

  std::uint64_t phase_index_;
  std::vector<BasicBlock> blocks_;
  std::set<CfgEdge> edges_;
  std::optional<BlockId> entry_;
  std::unordered_map<std::uint64_t, std::pair<BlockId, std::uint32_t>> where_;
  std::set<BlockId> exit_blocks_;
};

// Folds process_record over one phase's records.
inline PhaseCfg build_phase_cfg(const TraceRecord* first, const TraceRecord* last, std::uint64_t phase_index = 0) {
  PhaseCfg cfg(phase_index);
  std::map<std::uint64_t, ThreadState> threads;
  for (const TraceRecord* r = first; r != last; ++r) cfg.process_record(*r, threads);
  cfg.finish(threads);
  return cfg;
}

inline PhaseCfg build_phase_cfg(const std::vector<TraceRecord>& subtrace, std::uint64_t phase_index = 0) {
  return build_phase_cfg(subtrace.data(), subtrace.data() + subtrace.size(), phase_index);
}

}  // namespace dyncode
