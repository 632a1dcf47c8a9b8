#pragma once

// Graphviz rendering of a DCFG: one cluster per phase, node ids
// phi<i>_blk<j>, dashed dynamic edges between clusters. Blocks of a shared
// DCFG carry a phases="..." attribute listing every phase they belong to.

#include <cstdio>
#include <ostream>
#include <set>
#include <string>

#include "dyncode/dcfg.hpp"

namespace dyncode {

namespace detail {

inline std::string hex_addr(std::uint64_t a) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(a));
  return buf;
}

inline std::string join_phases(const std::set<std::uint64_t>& ps) {
  std::string s;
  for (auto p : ps) {
    if (!s.empty()) s += ',';
    s += std::to_string(p);
  }
  return s;
}

inline std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

}  // namespace detail

inline std::string dot_node_id(std::uint64_t phase, BlockId b) {
  return "phi" + std::to_string(phase) + "_blk" + std::to_string(b);
}

// `highlight` marks (phase, addr) pairs, e.g. the instructions of a slice.
inline void export_dot(const Dcfg& d, std::ostream& out,
                       const std::set<std::pair<std::uint64_t, std::uint64_t>>& highlight = {}) {
  out << "digraph dcfg {\n  node [shape=box fontname=\"monospace\"];\n";
  for (const auto& cfg : d.phase_cfgs()) {
    const auto phi = cfg.phase_index();
    out << "  subgraph cluster_phi" << phi << " {\n    label=\"phase " << phi << "\";\n";
    for (const auto& b : cfg.blocks()) {
      std::string label;
      bool hot = false;
      for (const auto& in : b.instrs) {
        label += detail::hex_addr(in.addr) + " " + detail::dot_escape(in.mnemonic) + "\\l";
        hot = hot || highlight.count({phi, in.addr});
      }
      out << "    " << dot_node_id(phi, b.id) << " [label=\"" << label << "\"";
      if (d.is_shared()) {
        const auto& sb = d.shared().blocks()[d.shared().shared_id(phi, b.id)];
        out << " phases=\"" << detail::join_phases(sb.phases) << "\"";
      }
      if (hot) out << " style=filled fillcolor=\"#ffd27f\"";
      out << "];\n";
    }
    for (const auto& e : cfg.edges())
      out << "    " << dot_node_id(phi, e.from) << " -> " << dot_node_id(phi, e.to) << " [label=\""
          << edge_kind_name(e.kind) << "\"];\n";
    out << "  }\n";
  }
  for (const auto& e : d.dynamic_edges())
    out << "  " << dot_node_id(e.from_phase, e.from_block) << " -> " << dot_node_id(e.from_phase + 1, e.to_block)
        << " [style=dashed color=red label=\"dynamic\"];\n";
  out << "}\n";
}

}  // namespace dyncode
