#pragma once

// Postdominator tree of a phase CFG augmented with a virtual exit node.
//
// Uses the Cooper-Harvey-Kennedy iterative dominator algorithm on the reversed
// graph, then numbers the tree so "a postdominates b" is an interval test.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include "dyncode/cfg.hpp"

namespace dyncode {

class PostDominators {
 public:
  PostDominators() = default;

  // `succ[b]` lists successors of node b; nodes in `exits` get an edge to the
  // virtual exit (index succ.size()).
  PostDominators(const std::vector<std::vector<std::uint32_t>>& succ, const std::vector<std::uint32_t>& exits) {
    build(succ, exits);
  }

  explicit PostDominators(const PhaseCfg& cfg) {
    std::vector<std::vector<std::uint32_t>> succ(cfg.blocks().size());
    for (const auto& e : cfg.edges()) succ[e.from].push_back(e.to);
    std::vector<std::uint32_t> exits;
    for (std::uint32_t b = 0; b < succ.size(); ++b)
      if (succ[b].empty() || cfg.thread_exit_blocks().count(b)) exits.push_back(b);
    build(succ, exits);
  }

  std::uint32_t exit_node() const { return exit_; }

  // Immediate postdominator; nullopt for the exit and for nodes that cannot
  // reach it.
  std::optional<std::uint32_t> ipdom(std::uint32_t n) const {
    if (n == exit_ || idom_[n] == kNone) return std::nullopt;
    return idom_[n];
  }

  // True if every path from b to the exit passes through a (reflexive).
  bool postdominates(std::uint32_t a, std::uint32_t b) const {
    if (idom_[a] == kNone || idom_[b] == kNone) return a == b;
    return pre_[a] <= pre_[b] && post_[b] <= post_[a];
  }

 private:
  static constexpr std::uint32_t kNone = UINT32_MAX;

  void build(const std::vector<std::vector<std::uint32_t>>& succ, const std::vector<std::uint32_t>& exits) {
    const std::uint32_t n = static_cast<std::uint32_t>(succ.size());
    exit_ = n;
    // Reverse graph: rsucc = original predecessors (edges walked from the exit).
    std::vector<std::vector<std::uint32_t>> fwd(n + 1), rsucc(n + 1);
    for (std::uint32_t b = 0; b < n; ++b)
      for (auto s : succ[b]) {
        fwd[b].push_back(s);
        rsucc[s].push_back(b);
      }
    for (auto b : exits) {
      fwd[b].push_back(n);
      rsucc[n].push_back(b);
    }

    // Reverse postorder of the reversed graph from the exit.
    std::vector<std::uint32_t> order;
    std::vector<std::uint32_t> rpo_index(n + 1, kNone);
    {
      std::vector<char> seen(n + 1, 0);
      std::vector<std::pair<std::uint32_t, std::size_t>> stack{{n, 0}};
      seen[n] = 1;
      while (!stack.empty()) {
        auto& [v, i] = stack.back();
        if (i < rsucc[v].size()) {
          auto w = rsucc[v][i++];
          if (!seen[w]) {
            seen[w] = 1;
            stack.push_back({w, 0});
          }
        } else {
          order.push_back(v);
          stack.pop_back();
        }
      }
      std::reverse(order.begin(), order.end());
      for (std::uint32_t i = 0; i < order.size(); ++i) rpo_index[order[i]] = i;
    }

    idom_.assign(n + 1, kNone);
    idom_[n] = n;
    auto intersect = [&](std::uint32_t a, std::uint32_t b) {
      while (a != b) {
        while (rpo_index[a] > rpo_index[b]) a = idom_[a];
        while (rpo_index[b] > rpo_index[a]) b = idom_[b];
      }
      return a;
    };
    bool changed = true;
    while (changed) {
      changed = false;
      for (auto v : order) {
        if (v == n) continue;
        std::uint32_t nd = kNone;
        for (auto p : fwd[v]) {  // predecessors in the reversed graph
          if (idom_[p] == kNone) continue;
          nd = nd == kNone ? p : intersect(p, nd);
        }
        if (nd != idom_[v]) {
          idom_[v] = nd;
          changed = true;
        }
      }
    }

    // Pre/post numbering of the postdominator tree.
    std::vector<std::vector<std::uint32_t>> kids(n + 1);
    for (std::uint32_t v = 0; v < n; ++v)
      if (idom_[v] != kNone) kids[idom_[v]].push_back(v);
    pre_.assign(n + 1, 0);
    post_.assign(n + 1, 0);
    std::uint32_t clock = 0;
    std::vector<std::pair<std::uint32_t, std::size_t>> stack{{n, 0}};
    pre_[n] = clock++;
    while (!stack.empty()) {
      auto& [v, i] = stack.back();
      if (i < kids[v].size()) {
        auto w = kids[v][i++];
        pre_[w] = clock++;
        stack.push_back({w, 0});
      } else {
        post_[v] = clock++;
        stack.pop_back();
      }
    }
  }

  std::uint32_t exit_ = 0;
  std::vector<std::uint32_t> idom_;
  std::vector<std::uint32_t> pre_, post_;
};

}  // namespace dyncode
