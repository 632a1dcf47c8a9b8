#include <gtest/gtest.h>

#include "dyncode/assembler.hpp"
#include "dyncode/slicer.hpp"
#include "dyncode/trigger.hpp"
#include "support/oracles.hpp"
#include "support/programs.hpp"
#include "support/random_trace.hpp"

using namespace dyncode;

namespace {

Trace run_src(const std::string& src) { return toy::run(toy::assemble(src).program, 10000); }

// Taint as reachability: a record is tainted iff a source lies in its
// closure over data edges (plus control edges when asked).
std::vector<std::uint64_t> taint_oracle(const Trace& t, const Dcfg& d, const std::vector<std::uint64_t>& sources,
                                        TaintPolicy policy) {
  std::vector<std::vector<std::uint64_t>> src(t.size());
  for (const auto& e : oracle::data_deps(t.records)) src[e.from].push_back(e.to);
  if (policy == TaintPolicy::DataAndControl)
    for (const auto& e : control_deps(t, d)) src[e.from_pos].push_back(e.to_pos);
  std::vector<char> hot(t.size(), 0);
  for (auto s : sources) hot[s] = 1;
  std::vector<std::uint64_t> out;
  for (std::uint64_t i = 0; i < t.size(); ++i) {
    for (auto s : src[i]) hot[i] = hot[i] || hot[s];
    if (hot[i]) out.push_back(i);
  }
  return out;
}

}  // namespace

TEST(Trigger, ExplicitPatchIsFoundWithDataOnly) {
  Trace t = testkit::run_program("trigger_explicit");
  auto a = testkit::assemble_program("trigger_explicit");
  Dcfg d = build_dcfg(t);
  auto rep = detect_triggers(t, d, TaintPolicy::DataOnly);
  ASSERT_EQ(rep.findings.size(), 1u);
  const auto& f = rep.findings[0];
  EXPECT_EQ(f.writer_pos, testkit::nth(t, "STORE"));
  EXPECT_EQ(f.dynamic_pos, testkit::nth(t, "CONST", 6));  // hide's CONST on the second call
  EXPECT_EQ(t.records[f.dynamic_pos].addr, a.label("hide"));
  EXPECT_EQ(f.loc, Location::mem(a.label("hide") + 2));
  EXPECT_EQ(rep.policy, TaintPolicy::DataOnly);
  EXPECT_EQ(detect_triggers(t, d, TaintPolicy::DataAndControl).findings, rep.findings);
}

TEST(Trigger, ImplicitPatchNeedsControlTaint) {
  Trace t = testkit::run_program("trigger_implicit");
  Dcfg d = build_dcfg(t);
  EXPECT_TRUE(detect_triggers(t, d, TaintPolicy::DataOnly).findings.empty());
  auto rep = detect_triggers(t, d, TaintPolicy::DataAndControl);
  ASSERT_EQ(rep.findings.size(), 1u);
  EXPECT_EQ(rep.findings[0].writer_pos, testkit::nth(t, "STORE"));
  EXPECT_EQ(rep.findings[0].dynamic_pos, testkit::nth(t, "STORE") + 2);  // CALL hide, then its CONST
}

TEST(Trigger, Bench2HasNoSources) {
  Trace t = testkit::run_program("bench2");
  Dcfg d = build_dcfg(t);
  EXPECT_TRUE(default_sources(t).empty());
  try {
    detect_triggers(t, d, TaintPolicy::DataOnly);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "sources");
  }
  // Tainting the patch's constant does flag the rewrite.
  TaintSources s;
  s.positions = {testkit::nth(t, "CONST", 2)};
  auto rep = detect_triggers(t, d, TaintPolicy::DataOnly, s);
  ASSERT_EQ(rep.findings.size(), 1u);
  EXPECT_EQ(rep.findings[0].dynamic_pos, testkit::nth(t, "ADDI", 1));
}

TEST(Taint, FlowsThroughArithmeticAndIsClearedByOverwrite) {
  Trace t = run_src(R"(
    .input 4
    IN r1
    ADD r2, r1, r1
    CONST r2, 0
    ADD r3, r2, r2
    HALT
  )");
  Dcfg d = build_dcfg(t);
  auto st = propagate_taint(t, d, default_sources(t), TaintPolicy::DataOnly);
  EXPECT_EQ(st.tainted_positions, (std::vector<std::uint64_t>{0, 1}));
  EXPECT_TRUE(st.tainted.count(Location::reg(1)));
  EXPECT_FALSE(st.tainted.count(Location::reg(2)));
  EXPECT_FALSE(st.tainted.count(Location::reg(3)));
}

TEST(Taint, InitialLocations) {
  Trace t = run_src("ADD r2, r1, r1\nHALT\n");
  Dcfg d = build_dcfg(t);
  TaintSources s;
  s.locations = {Location::reg(1)};
  auto st = propagate_taint(t, d, s, TaintPolicy::DataOnly);
  EXPECT_TRUE(st.is_tainted(0));
  EXPECT_FALSE(st.is_tainted(1));
}

TEST(Taint, SourceErrors) {
  Trace t = testkit::two_phase();
  Dcfg d = build_dcfg(t);
  EXPECT_THROW(propagate_taint(t, d, {}, TaintPolicy::DataOnly), ValidationError);
  EXPECT_THROW(propagate_taint(t, d, {{t.size()}, {}}, TaintPolicy::DataOnly), RangeError);
  EXPECT_EQ(policy_name(TaintPolicy::DataOnly), "DATA_ONLY");
  EXPECT_EQ(policy_name(TaintPolicy::DataAndControl), "DATA_AND_CONTROL");
}

TEST(Properties, TaintMatchesReachabilityOracle) {
  testkit::TraceGen gen(606);
  for (int k = 0; k < 300; ++k) {
    testkit::GenOptions o;
    o.length = 1 + gen.rng()() % 400;
    o.threads = 1 + k % 2;
    Trace t = gen.generate(o);
    Dcfg d = build_dcfg(t);
    TaintSources s;
    for (int q = 0; q < 3; ++q) s.positions.push_back(gen.rng()() % t.size());
    for (auto p : {TaintPolicy::DataOnly, TaintPolicy::DataAndControl}) {
      auto st = propagate_taint(t, d, s, p);
      ASSERT_EQ(st.tainted_positions, taint_oracle(t, d, s.positions, p)) << "trace " << k;
    }
  }
}

TEST(Properties, ControlPolicyOnlyAddsFindings) {
  testkit::TraceGen gen(707);
  std::size_t findings = 0;
  for (int k = 0; k < 300; ++k) {
    testkit::GenOptions o;
    o.length = 1 + gen.rng()() % 400;
    o.write_prob = 0.2;
    Trace t = gen.generate(o);
    Dcfg d = build_dcfg(t);
    TaintSources s;
    s.positions = {gen.rng()() % t.size()};
    auto data = detect_triggers(t, d, TaintPolicy::DataOnly, s);
    auto both = detect_triggers(t, d, TaintPolicy::DataAndControl, s);
    ASSERT_TRUE(std::includes(both.findings.begin(), both.findings.end(), data.findings.begin(),
                              data.findings.end()));
    findings += both.findings.size();

    // A flagged instruction's codegen slice reaches the source; the
    // writer's slice without codegen already does.
    for (const auto& f : both.findings) {
      auto sl = backward_slice(t, d, {f.writer_pos}, false);
      ASSERT_TRUE(sl.contains(s.positions[0]));
      ASSERT_TRUE(backward_slice(t, d, {f.dynamic_pos}, true).contains(s.positions[0]));
    }
  }
  EXPECT_GT(findings, 0u);
}
