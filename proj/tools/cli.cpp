#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dyncode/dyncode.hpp"

namespace dyncode::cli {
namespace {

using json = nlohmann::ordered_json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr std::uint64_t kDefaultMaxSteps = 1'000'000;

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
  std::string_view v = s;
  int base = 10;
  if (v.size() > 2 && v[0] == '0' && (v[1] == 'x' || v[1] == 'X')) {
    v.remove_prefix(2);
    base = 16;
  }
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out, base);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty())
    throw UsageError("invalid " + what + " '" + s + "'");
  return out;
}

std::uint64_t max_steps() {
  const char* env = std::getenv("DYNCODE_LENS_MAX_STEPS");
  if (!env || !*env) return kDefaultMaxSteps;
  return parse_u64(env, "DYNCODE_LENS_MAX_STEPS");
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

toy::Assembly assemble_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return toy::assemble(in);
}

// A .s file is assembled and run; anything else is read as a JSONL trace.
Trace load_trace(const std::string& path) {
  if (ends_with(path, ".s")) return toy::run(assemble_file(path).program, max_steps());
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return read_trace(in);
}

json loc_json(const Location& l) {
  return json{{"space", l.space == Space::Mem ? "MEM" : "REG"}, {"addr", l.addr}};
}

std::string hex(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string hex_bytes(const std::vector<std::uint8_t>& b) {
  std::string s;
  detail::append_hex(s, b);
  return s;
}

// mem:<addr>, mem:<addr>:<size> or reg:<n>
void parse_loc(const std::string& spec, LocationSet& out) {
  auto colon = spec.find(':');
  if (colon == std::string::npos) throw UsageError("location '" + spec + "' needs a mem: or reg: prefix");
  std::string space = spec.substr(0, colon), rest = spec.substr(colon + 1);
  if (space == "reg") {
    out.insert(Location::reg(parse_u64(rest, "register")));
  } else if (space == "mem") {
    std::uint64_t size = 1;
    if (auto c = rest.find(':'); c != std::string::npos) {
      size = parse_u64(rest.substr(c + 1), "size");
      rest = rest.substr(0, c);
    }
    std::uint64_t a = parse_u64(rest, "address");
    for (std::uint64_t k = 0; k < size; ++k) out.insert(Location::mem(a + k));
  } else {
    throw UsageError("unknown location space '" + space + "'");
  }
}

json block_json(const std::vector<CfgInstr>& instrs) {
  json a = json::array();
  for (const auto& in : instrs)
    a.push_back({{"addr", in.addr}, {"size", in.size}, {"bytes", hex_bytes(in.bytes)}, {"mnemonic", in.mnemonic}});
  return a;
}

json dcfg_json(const Dcfg& d) {
  json phases = json::array();
  for (const auto& cfg : d.phase_cfgs()) {
    const Phase& ph = d.phases()[cfg.phase_index()];
    json blocks = json::array(), edges = json::array();
    for (const auto& b : cfg.blocks()) blocks.push_back({{"id", b.id}, {"instrs", block_json(b.instrs)}});
    for (const auto& e : cfg.edges())
      edges.push_back({{"from", e.from}, {"to", e.to}, {"kind", std::string(edge_kind_name(e.kind))}});
    phases.push_back({{"phi", ph.index},
                      {"start", ph.start},
                      {"end", ph.end},
                      {"blocks", std::move(blocks)},
                      {"edges", std::move(edges)}});
  }
  json dyn = json::array();
  for (const auto& e : d.dynamic_edges())
    dyn.push_back({{"from_phase", e.from_phase},
                   {"from_block", e.from_block},
                   {"to_block", e.to_block},
                   {"from_pos", e.from_pos},
                   {"to_pos", e.to_pos}});
  json out{{"phases", std::move(phases)}, {"dynamic_edges", std::move(dyn)}};
  if (d.is_shared()) {
    json blocks = json::array(), edges = json::array();
    for (const auto& b : d.shared().blocks())
      blocks.push_back({{"id", b.id}, {"phases", b.phases}, {"instrs", block_json(b.instrs)}});
    for (const auto& e : d.shared().edges())
      edges.push_back(
          {{"from", e.from}, {"to", e.to}, {"kind", std::string(edge_kind_name(e.kind))}, {"phases", e.phases}});
    out["shared"] = {{"blocks", std::move(blocks)}, {"edges", std::move(edges)}};
  }
  return out;
}

json stats_json(const Trace& t, const Dcfg& d) {
  DcfgStats s = stats(d);
  return json{{"representation", d.is_shared() ? "shared" : "unshared"},
              {"n_records", t.size()},
              {"N_instrs", s.n_instrs},
              {"N_blocks", s.n_blocks},
              {"N_edges", s.n_edges},
              {"N_phases", s.n_phases},
              {"N_dyn_edges", s.n_dyn_edges},
              {"blocks_unshared", s.blocks_unshared},
              {"blocks_shared", s.blocks_shared},
              {"shared_savings", s.shared_savings}};
}

json dep_json(const DepEdge& e) {
  return json{{"from_pos", e.from_pos},
              {"to_pos", e.to_pos},
              {"kind", std::string(dep_kind_name(e.kind))},
              {"loc", e.loc ? loc_json(*e.loc) : json(nullptr)}};
}

void write_dot_file(const std::string& path, const Dcfg& d,
                    const std::set<std::pair<std::uint64_t, std::uint64_t>>& highlight) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path);
  export_dot(d, f, highlight);
}

json slice_json(const SliceResult& r) {
  json instrs = json::array();
  for (const auto& [phi, addr] : r.dcfg_instrs) instrs.push_back({phi, addr});
  return json{{"positions", r.positions}, {"dcfg_instrs", std::move(instrs)}};
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Trace analysis for dynamically generated code", "dyncode-lens"};
  app.require_subcommand(1);
  std::string out_path;
  app.add_option("-o,--output", out_path, "Write results to this file instead of stdout");

  std::string input;
  auto add_input = [&](CLI::App* sc, const char* what) { sc->add_option("input", input, what)->required(); };

  auto* asm_cmd = app.add_subcommand("asm", "Assemble a toy program and print its listing");
  add_input(asm_cmd, "Assembly source");

  auto* run_cmd = app.add_subcommand("run", "Assemble and execute a toy program, emitting a JSONL trace");
  add_input(run_cmd, "Assembly source");

  auto* phases_cmd = app.add_subcommand("phases", "Partition a trace into phases");
  add_input(phases_cmd, "Trace (.jsonl) or toy program (.s)");

  bool shared = false, want_stats = false;
  std::string dot_path;
  auto* dcfg_cmd = app.add_subcommand("dcfg", "Build the dynamic control flow graph");
  add_input(dcfg_cmd, "Trace (.jsonl) or toy program (.s)");
  dcfg_cmd->add_flag("--shared", shared, "Store blocks shared across phases once");
  dcfg_cmd->add_option("--dot", dot_path, "Write Graphviz output");
  dcfg_cmd->add_flag("--stats", want_stats, "Print size statistics instead of the graph");

  std::string dep_kind = "all";
  auto* deps_cmd = app.add_subcommand("deps", "Emit dependence edges as JSONL");
  add_input(deps_cmd, "Trace (.jsonl) or toy program (.s)");
  deps_cmd->add_option("--kind", dep_kind, "data, control, codegen or all")
      ->check(CLI::IsMember({"data", "control", "codegen", "all"}));

  std::uint64_t at = 0;
  std::vector<std::string> locs;
  bool no_codegen = false, auto_marker = false, want_metrics = false;
  std::uint64_t marker = 0;
  auto* slice_cmd = app.add_subcommand("slice", "Backward dynamic slice");
  add_input(slice_cmd, "Trace (.jsonl) or toy program (.s)");
  slice_cmd->add_option("--at", at, "Criterion trace position")->required();
  slice_cmd->add_option("--locs", locs, "Criterion locations: mem:ADDR[:SIZE] or reg:N")->delimiter(',');
  slice_cmd->add_flag("--no-codegen", no_codegen, "Ignore codegen dependences");
  auto* marker_opt = slice_cmd->add_option("--marker", marker, "Dice from this trace position");
  auto* auto_opt = slice_cmd->add_flag("--auto-marker", auto_marker, "Dice from the trace's first marker");
  marker_opt->excludes(auto_opt);
  slice_cmd->add_option("--dot", dot_path, "Write Graphviz output with the slice highlighted");
  slice_cmd->add_flag("--metrics", want_metrics, "Include size metrics");

  std::string policy = "data";
  std::vector<std::uint64_t> sources;
  auto* trigger_cmd = app.add_subcommand("trigger", "Detect input-dependent dynamic code");
  add_input(trigger_cmd, "Trace (.jsonl) or toy program (.s)");
  trigger_cmd->add_option("--policy", policy, "data or data+control")
      ->check(CLI::IsMember({"data", "data+control"}));
  trigger_cmd->add_option("--sources", sources, "Taint source positions")->delimiter(',');

  auto* stats_cmd = app.add_subcommand("stats", "DCFG size statistics");
  add_input(stats_cmd, "Trace (.jsonl) or toy program (.s)");
  stats_cmd->add_flag("--shared", shared, "Report the shared representation");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  std::ostringstream body;
  try {
    if (asm_cmd->parsed()) {
      auto a = assemble_file(input);
      for (const auto& l : a.listing) {
        body << hex(l.addr) << "  " << hex_bytes(l.bytes) << "  " << l.source << "\n";
      }
    } else if (run_cmd->parsed()) {
      write_trace(toy::run(assemble_file(input).program, max_steps()), body);
    } else if (phases_cmd->parsed()) {
      for (const auto& p : partition(load_trace(input)))
        body << "phi=" << p.index << " start=" << p.start << " end=" << p.end << " ninstrs=" << p.length() << "\n";
    } else if (dcfg_cmd->parsed()) {
      Trace t = load_trace(input);
      Dcfg d = build_dcfg(t, shared);
      if (!dot_path.empty()) write_dot_file(dot_path, d, {});
      body << (want_stats ? stats_json(t, d) : dcfg_json(d)).dump(2) << "\n";
    } else if (deps_cmd->parsed()) {
      Trace t = load_trace(input);
      std::vector<DepEdge> edges;
      if (dep_kind == "data") {
        edges = data_deps(t);
      } else if (dep_kind == "codegen") {
        edges = codegen_deps(t);
      } else {
        Dcfg d = build_dcfg(t);
        edges = dep_kind == "control" ? control_deps(t, d) : all_deps(t, d);
      }
      for (const auto& e : edges) body << dep_json(e).dump() << "\n";
    } else if (slice_cmd->parsed()) {
      Trace t = load_trace(input);
      Dcfg d = build_dcfg(t);
      SliceCriterion crit{at, std::nullopt};
      if (!locs.empty()) {
        crit.locs.emplace();
        for (const auto& l : locs) parse_loc(l, *crit.locs);
      }
      json j{{"criterion", at}, {"use_codegen", !no_codegen}};
      if (*marker_opt || auto_marker) {
        std::uint64_t m = auto_marker ? find_marker(t) : marker;
        DiceResult r = dice_and_slice(t, d, m, crit, !no_codegen);
        j["marker"] = m;
        j.update(slice_json(r.diced));
        if (want_metrics) {
          const auto& dm = r.metrics;
          j["metrics"] = {{"N_instrs", r.diced.metrics.n_instrs},
                          {"N_slice", r.diced.metrics.n_slice},
                          {"delta_slice", r.diced.metrics.delta_slice},
                          {"DCFG_orig", dm.dcfg_orig},
                          {"DCFG_mk", dm.dcfg_mk},
                          {"slice_orig", dm.slice_orig},
                          {"slice_mk", dm.slice_mk},
                          {"delta_DCFG", dm.delta_dcfg},
                          {"delta_slice_mk", dm.delta_slice},
                          {"delta_mk", dm.delta_mk}};
        }
        if (!dot_path.empty()) {
          Dcfg dd = build_dcfg(dice(t, m).trace);
          write_dot_file(dot_path, dd, r.diced.dcfg_instrs);
        }
      } else {
        SliceResult r = backward_slice(t, d, crit, !no_codegen);
        j.update(slice_json(r));
        if (want_metrics)
          j["metrics"] = {{"N_instrs", r.metrics.n_instrs},
                          {"N_slice", r.metrics.n_slice},
                          {"delta_slice", r.metrics.delta_slice}};
        if (!dot_path.empty()) write_dot_file(dot_path, d, r.dcfg_instrs);
      }
      body << j.dump(2) << "\n";
    } else if (trigger_cmd->parsed()) {
      Trace t = load_trace(input);
      Dcfg d = build_dcfg(t);
      TaintPolicy pol = policy == "data" ? TaintPolicy::DataOnly : TaintPolicy::DataAndControl;
      TaintSources src;
      if (sources.empty()) {
        src = default_sources(t);
      } else {
        src.positions = sources;
      }
      TaintState st = propagate_taint(t, d, src, pol);
      TriggerReport rep = detect_triggers(t, st);
      json findings = json::array();
      for (const auto& f : rep.findings)
        findings.push_back({{"writer_pos", f.writer_pos}, {"dynamic_pos", f.dynamic_pos}, {"loc", loc_json(f.loc)}});
      json j{{"policy", std::string(policy_name(pol))},
             {"sources", src.positions},
             {"n_tainted_positions", st.tainted_positions.size()},
             {"findings", std::move(findings)}};
      body << j.dump(2) << "\n";
    } else if (stats_cmd->parsed()) {
      Trace t = load_trace(input);
      body << stats_json(t, build_dcfg(t, shared)).dump(2) << "\n";
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kAnalysisError;
  }

  if (out_path.empty()) {
    out << body.str();
  } else {
    std::ofstream f(out_path);
    if (!f || !(f << body.str())) {
      err << "error: cannot write " << out_path << "\n";
      return kAnalysisError;
    }
  }
  return kOk;
}

}  // namespace dyncode::cli
