#include <gtest/gtest.h>

#include <random>

#include "dyncode/assembler.hpp"
#include "dyncode/dependence.hpp"
#include "dyncode/postdom.hpp"
#include "support/oracles.hpp"
#include "support/programs.hpp"
#include "support/random_trace.hpp"

using namespace dyncode;

namespace {

using Triple = std::tuple<std::uint64_t, std::uint64_t, Location>;

std::vector<Triple> triples(const std::vector<DepEdge>& es) {
  std::vector<Triple> out;
  for (const auto& e : es) out.push_back({e.from_pos, e.to_pos, *e.loc});
  return out;
}

std::vector<Triple> triples(const std::vector<oracle::Edge>& es) {
  std::vector<Triple> out;
  for (const auto& e : es) out.push_back({e.from, e.to, e.loc});
  return out;
}

std::set<std::pair<std::uint64_t, std::uint64_t>> pairs(const std::vector<DepEdge>& es) {
  std::set<std::pair<std::uint64_t, std::uint64_t>> out;
  for (const auto& e : es) out.insert({e.from_pos, e.to_pos});
  return out;
}

Trace run_src(const std::string& src) { return toy::run(toy::assemble(src).program, 10000); }

}  // namespace

TEST(CodegenDeps, TwoPhaseTrace) {
  Trace t = testkit::two_phase();
  auto es = codegen_deps(t);
  ASSERT_EQ(es.size(), 2u);
  EXPECT_EQ(es[0], (DepEdge{4, 2, DepKind::Codegen, Location::mem(260)}));
  EXPECT_EQ(es[1], (DepEdge{7, 2, DepKind::Codegen, Location::mem(260)}));
}

TEST(CodegenDeps, NoCodeWritesNoEdges) {
  Trace t = run_src("CONST r1, 5\nADD r2, r1, r1\nHALT\n");
  EXPECT_TRUE(codegen_deps(t).empty());
}

TEST(CodegenDeps, Bench2SecondAddiOnPatchStore) {
  Trace t = testkit::run_program("bench2");
  auto es = codegen_deps(t);
  ASSERT_EQ(es.size(), 1u);
  EXPECT_EQ(es[0].from_pos, testkit::nth(t, "ADDI", 1));
  EXPECT_EQ(es[0].to_pos, testkit::nth(t, "STORE"));
  EXPECT_EQ(triples(es), triples(oracle::codegen_deps(t.records)));
}

TEST(CodegenDeps, OneEdgePerWriterWithSmallestWitness) {
  // pos0 writes bytes 0x12,0x13 of the instruction at 0x10; pos1 writes 0x10.
  std::vector<TraceRecord> rs(3);
  for (std::uint64_t i = 0; i < 3; ++i) {
    rs[i].pos = i;
    rs[i].addr = 0x100 + 4 * i;
    rs[i].size = 4;
    rs[i].bytes = {0, 0, 0, 0};
  }
  rs[0].mem_writes = {{0x13, 1}, {0x12, 1}};
  rs[1].mem_writes = {{0x10, 1}};
  rs[2].addr = 0x10;
  Trace t{rs, {}, {}};
  auto es = codegen_deps(t);
  ASSERT_EQ(es.size(), 2u);
  EXPECT_EQ(es[0], (DepEdge{2, 0, DepKind::Codegen, Location::mem(0x12)}));
  EXPECT_EQ(es[1], (DepEdge{2, 1, DepKind::Codegen, Location::mem(0x10)}));
}

TEST(DataDeps, RegisterChain) {
  Trace t = run_src("CONST r1, 5\nADD r2, r1, r1\nHALT\n");
  auto es = data_deps(t);
  ASSERT_EQ(es.size(), 1u);
  EXPECT_EQ(es[0], (DepEdge{1, 0, DepKind::Data, Location::reg(1)}));
}

TEST(DataDeps, NeverWrittenReadHasNoEdge) {
  Trace t = run_src("LOAD r1, [r2+0]\nHALT\n");
  EXPECT_TRUE(data_deps(t).empty());
}

TEST(DataDeps, ExplicitPatchStoreDependsOnTriggerAnd) {
  Trace t = testkit::run_program("trigger_explicit");
  auto store = testkit::nth(t, "STORE");
  auto and_pos = testkit::nth(t, "AND");
  auto es = data_deps(t);
  bool found = false;
  for (const auto& e : es)
    if (e.from_pos == store && e.to_pos == and_pos) {
      found = true;
      EXPECT_EQ(e.loc, std::optional<Location>(Location::reg(12)));
    }
  EXPECT_TRUE(found);
  EXPECT_EQ(triples(es), triples(oracle::data_deps(t.records)));
}

TEST(ControlDeps, TakenOnlyPathDependsOnBranch) {
  Trace t = run_src(R"(
    CONST r1, 0
    CALL f
    CONST r1, 1
    CALL f
    HALT
  f:
    OR r1, r1, r1
    JZ x
    NOP
    RET
  x:
    NOP
    RET
  )");
  Dcfg d = build_dcfg(t);
  auto es = control_deps(t, d);
  auto jz = testkit::nth(t, "JZ", 0);
  ASSERT_TRUE(t.records[jz].taken.value());
  // The NOP at x runs right after the taken JZ.
  EXPECT_TRUE(pairs(es).count({jz + 1, jz}));
  EXPECT_EQ(pairs(es), oracle::control_deps(t, d));
}

TEST(ControlDeps, StraightLineHasNone) {
  Trace t = run_src("CONST r1, 1\nADD r1, r1, r1\nNOP\nHALT\n");
  EXPECT_TRUE(control_deps(t, build_dcfg(t)).empty());
}

TEST(ControlDeps, JoinPointIsIndependent) {
  // Both arms of the JZ reach `join`, which postdominates the branch.
  Trace t = run_src(R"(
    CONST r1, 0
    CALL f
    CONST r1, 1
    CALL f
    HALT
  f:
    OR r1, r1, r1
    JZ other
    NOP
    JMP join
  other:
    NOP
  join:
    RET
  )");
  Dcfg d = build_dcfg(t);
  auto es = pairs(control_deps(t, d));
  for (std::uint64_t i = 0; i < t.size(); ++i)
    if (t.records[i].mnemonic == "RET") {
      for (const auto& [from, to] : es) EXPECT_NE(from, i);
    }
  EXPECT_EQ(es, oracle::control_deps(t, d));
}

TEST(ControlDeps, ImplicitAssignmentUnderBranch) {
  Trace t = testkit::run_program("trigger_implicit");
  auto a = testkit::assemble_program("trigger_implicit");
  Dcfg d = build_dcfg(t);
  auto es = pairs(control_deps(t, d));
  // Second call of flow: the JZ falls through into `x = 1` (CONST r2, 1).
  auto jz = testkit::nth(t, "JZ", 1);
  ASSERT_FALSE(t.records[jz].taken.value());
  ASSERT_EQ(t.records[jz + 1].addr, t.records[jz].addr + t.records[jz].size);
  EXPECT_TRUE(es.count({jz + 1, jz}));
  // z = 1 sits under the JNZ on x.
  auto jnz = testkit::nth(t, "JNZ", 1);
  ASSERT_TRUE(t.records[jnz].taken.value());
  EXPECT_EQ(t.records[jnz + 1].addr, a.label("flow_xnz"));
  EXPECT_TRUE(es.count({jnz + 1, jnz}));
  EXPECT_EQ(es, oracle::control_deps(t, d));
}

TEST(ControlDeps, LoopBodyDependsOnBackEdgeBranch) {
  Trace t = run_src(R"(
    CONST r1, 3
  top:
    ADDI r1, -1
    JNZ top
    HALT
  )");
  Dcfg d = build_dcfg(t);
  auto es = pairs(control_deps(t, d));
  // Second ADDI (pos 3) runs because the first JNZ (pos 2) was taken.
  EXPECT_TRUE(es.count({3, 2}));
  EXPECT_TRUE(es.count({5, 4}));
  EXPECT_EQ(es, oracle::control_deps(t, d));
}

TEST(ControlDeps, ScopeEndsAtPhaseBoundary) {
  Trace t = testkit::run_program("bench1");
  Dcfg d = build_dcfg(t);
  auto es = control_deps(t, d);
  for (const auto& e : es) EXPECT_EQ(d.phase_of(e.from_pos), d.phase_of(e.to_pos));
  for (const auto& ph : d.phases())
    for (const auto& e : es) EXPECT_NE(e.from_pos, ph.start);
}

TEST(ControlDeps, SameThreadOnly) {
  // Thread 1's branch must not govern thread 0's records.
  auto mk = [](std::uint64_t pos, std::uint64_t tid, std::uint64_t addr, Kind k, std::optional<bool> tk = {}) {
    TraceRecord r;
    r.pos = pos;
    r.tid = tid;
    r.addr = addr;
    r.size = 4;
    r.bytes = {1, 2, 3, 4};
    r.kind = k;
    r.taken = tk;
    return r;
  };
  Trace t;
  t.records = {mk(0, 1, 0x40, Kind::CondBr, true), mk(1, 0, 0x10, Kind::Fall), mk(2, 1, 0x80, Kind::Halt),
               mk(3, 0, 0x14, Kind::Halt)};
  Dcfg d = build_dcfg(t);
  EXPECT_TRUE(control_deps(t, d).empty());
}

TEST(EdgeInvariants, WitnessesAndOrdering) {
  for (const char* name : {"bench1", "bench2", "trigger_explicit", "trigger_implicit", "dice"}) {
    Trace t = testkit::run_program(name);
    Dcfg d = build_dcfg(t);
    for (const auto& e : all_deps(t, d)) {
      EXPECT_LT(e.to_pos, e.from_pos);
      if (e.kind == DepKind::Codegen) {
        EXPECT_TRUE(instr_of(t.records[e.from_pos]).count(*e.loc));
        EXPECT_TRUE(writes_of(t.records[e.to_pos]).count(*e.loc));
      } else if (e.kind == DepKind::Data) {
        EXPECT_TRUE(reads_of(t.records[e.from_pos]).count(*e.loc));
        EXPECT_TRUE(writes_of(t.records[e.to_pos]).count(*e.loc));
      } else {
        EXPECT_FALSE(e.loc.has_value());
        EXPECT_EQ(t.records[e.to_pos].kind, Kind::CondBr);
      }
    }
  }
}

TEST(DependenceGraph, MatchesEdgeLists) {
  testkit::TraceGen gen(77);
  for (int k = 0; k < 100; ++k) {
    testkit::GenOptions o;
    o.length = 1 + k * 3;
    o.threads = 1 + k % 2;
    Trace t = gen.generate(o);
    Dcfg d = build_dcfg(t);
    DependenceGraph g(t, d);
    ASSERT_EQ(g.size(), t.size());
    std::multiset<std::tuple<std::uint64_t, std::uint64_t, DepKind>> a, b;
    for (const auto& e : all_deps(t, d)) a.insert({e.from_pos, e.to_pos, e.kind});
    for (std::uint64_t i = 0; i < t.size(); ++i)
      g.for_each_source(i, [&](const DependenceGraph::Source& s) { b.insert({i, s.pos, s.kind}); });
    ASSERT_EQ(a, b) << "trace " << k;
  }
}

TEST(PostDominators, Diamond) {
  // 0 -> 1, 0 -> 2, 1 -> 3, 2 -> 3
  PostDominators pd({{1, 2}, {3}, {3}, {}}, {3});
  EXPECT_TRUE(pd.postdominates(3, 0));
  EXPECT_FALSE(pd.postdominates(1, 0));
  EXPECT_FALSE(pd.postdominates(2, 0));
  EXPECT_TRUE(pd.postdominates(0, 0));
  EXPECT_EQ(pd.ipdom(0), std::optional<std::uint32_t>(3));
  EXPECT_EQ(pd.ipdom(1), std::optional<std::uint32_t>(3));
  EXPECT_EQ(pd.ipdom(3), std::optional<std::uint32_t>(pd.exit_node()));
}

TEST(PostDominators, LoopWithThreadExit) {
  // 0 -> 1 -> 0 with no successor-free block; 1 is where the thread stopped.
  PostDominators pd({{1}, {0}}, {1});
  EXPECT_TRUE(pd.postdominates(1, 0));
  EXPECT_FALSE(pd.postdominates(0, 1));
}

TEST(PostDominators, RandomGraphsMatchReachabilityOracle) {
  std::mt19937_64 rng(17);
  for (int k = 0; k < 500; ++k) {
    const std::uint32_t n = 1 + rng() % 12;
    std::vector<std::vector<std::uint32_t>> succ(n);
    for (std::uint32_t v = 0; v < n; ++v) {
      auto deg = rng() % 3;
      for (std::uint64_t e = 0; e < deg; ++e) succ[v].push_back(static_cast<std::uint32_t>(rng() % n));
    }
    std::vector<std::uint32_t> exits;
    for (std::uint32_t v = 0; v < n; ++v)
      if (succ[v].empty() || rng() % 5 == 0) exits.push_back(v);
    PostDominators pd(succ, exits);
    auto want = oracle::postdominators(succ, exits);
    for (std::uint32_t a = 0; a < n; ++a)
      for (std::uint32_t b = 0; b < n; ++b)
        ASSERT_EQ(pd.postdominates(a, b), static_cast<bool>(want[a][b])) << "graph " << k << " a=" << a << " b=" << b;
  }
}

// Data and codegen edges match the quadratic definitional scans exactly.
TEST(Properties, DataAndCodegenMatchOracle) {
  testkit::TraceGen gen(31337);
  std::size_t codegen_total = 0;
  for (int k = 0; k < 500; ++k) {
    testkit::GenOptions o;
    o.length = 1 + gen.rng()() % 500;
    o.variable_size = k % 2 == 0;
    o.threads = 1 + k % 2;
    Trace t = gen.generate(o);
    auto cg = codegen_deps(t);
    ASSERT_EQ(triples(data_deps(t)), triples(oracle::data_deps(t.records))) << "trace " << k;
    ASSERT_EQ(triples(cg), triples(oracle::codegen_deps(t.records))) << "trace " << k;
    codegen_total += cg.size();
  }
  EXPECT_GT(codegen_total, 1000u);
}

TEST(Properties, ControlMatchesOracle) {
  testkit::TraceGen gen(4242);
  std::size_t total = 0;
  for (int k = 0; k < 300; ++k) {
    testkit::GenOptions o;
    o.length = 1 + gen.rng()() % 300;
    o.threads = 1 + k % 3;
    o.write_prob = 0.02 * (k % 4);
    Trace t = gen.generate(o);
    Dcfg d = build_dcfg(t);
    auto got = pairs(control_deps(t, d));
    ASSERT_EQ(got, oracle::control_deps(t, d)) << "trace " << k;
    total += got.size();
  }
  EXPECT_GT(total, 1000u);
}

// A single (i, j, loc) is never both DATA and CODEGEN when instructions do
// not read their own bytes.
TEST(Properties, DataCodegenDisjointByWitness) {
  testkit::TraceGen gen(8);
  for (int k = 0; k < 200; ++k) {
    Trace t = gen.generate({});
    auto d = triples(data_deps(t));
    std::set<Triple> ds(d.begin(), d.end());
    for (const auto& c : triples(codegen_deps(t))) ASSERT_FALSE(ds.count(c));
  }
}
