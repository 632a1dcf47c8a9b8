#include <gtest/gtest.h>

#include <sstream>

#include "dyncode/trace.hpp"
#include "dyncode/trace_io.hpp"
#include "support/programs.hpp"
#include "support/random_trace.hpp"

using namespace dyncode;

namespace {

const char* kRecord =
    R"({"pos":0,"tid":0,"addr":100,"size":2,"bytes":"0102","mnemonic":"X","kind":"FALL","mem_reads":[],"mem_writes":[],"reg_reads":[],"reg_writes":[]})";

Trace parse(const std::string& s) {
  std::istringstream in(s);
  return read_trace(in);
}

std::string serialize(const Trace& t) {
  std::ostringstream out;
  write_trace(t, out);
  return out.str();
}

}  // namespace

TEST(Location, SpacesAreDistinct) {
  EXPECT_NE(Location::mem(3), Location::reg(3));
  EXPECT_EQ(Location::reg(3), Location::reg(3));
  EXPECT_EQ(Location::mem(100), Location::mem(100));
}

TEST(LocationSets, InstrOfIsTheOccupiedRange) {
  TraceRecord r;
  r.addr = 100;
  r.size = 4;
  r.bytes = {1, 2, 3, 4};
  LocationSet want{Location::mem(100), Location::mem(101), Location::mem(102), Location::mem(103)};
  EXPECT_EQ(instr_of(r), want);
  EXPECT_TRUE(writes_of(r).empty());
}

TEST(LocationSets, WritesOfCombinesMemoryAndRegisters) {
  TraceRecord r;
  r.mem_writes = {{200, 1}};
  r.reg_writes = {3};
  EXPECT_EQ(writes_of(r), (LocationSet{Location::mem(200), Location::reg(3)}));
}

TEST(LocationSets, PatchStoreHitsSecondAddtwo) {
  Trace t = testkit::run_program("bench2");
  auto store = testkit::nth(t, "STORE");
  auto dyn2 = testkit::nth(t, "ADDI", 1);
  LocationSet common;
  auto w = writes_of(t.records[store]);
  for (const auto& l : instr_of(t.records[dyn2]))
    if (w.count(l)) common.insert(l);
  EXPECT_EQ(common, LocationSet{Location::mem(t.records[dyn2].addr + 3)});
}

TEST(ReadTrace, TwoPhaseTraceHasNineRecords) {
  Trace t = testkit::two_phase();
  ASSERT_EQ(t.size(), 9u);
  EXPECT_EQ(t.metadata.at("name"), "two_phase");
  EXPECT_EQ(t.records[4].mnemonic, "J1");
  EXPECT_EQ(t.records[4].size, 2u);
  EXPECT_EQ(t.records[4].taken, std::optional<bool>(false));
  EXPECT_EQ(t.records[2].mem_writes, (std::vector<ByteRange>{{260, 2}}));
}

TEST(ReadTrace, EmptyInput) {
  EXPECT_EQ(parse("").size(), 0u);
  EXPECT_EQ(parse("\n\n").size(), 0u);
}

TEST(ReadTrace, SizeBytesMismatchNamesField) {
  std::string bad = kRecord;
  bad.replace(bad.find("\"0102\""), 6, "\"010203\"");
  try {
    parse(bad);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "bytes");
    EXPECT_EQ(e.line(), 1u);
  }
}

TEST(ReadTrace, MalformedLineReportsLineNumber) {
  std::string text = std::string(R"({"meta":{}})") + "\n" + "{not json\n";
  try {
    parse(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(ReadTrace, CondBrNeedsTaken) {
  std::string bad = kRecord;
  bad.replace(bad.find("FALL"), 4, "CONDBR");
  try {
    parse(bad);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "taken");
  }
}

TEST(ReadTrace, TakenOnlyForCondBr) {
  std::string bad = kRecord;
  bad.insert(bad.size() - 1, R"(,"taken":true)");
  EXPECT_THROW(parse(bad), ValidationError);
}

TEST(ReadTrace, PositionsMustBeSequential) {
  std::string bad = kRecord;
  bad.replace(bad.find("\"pos\":0"), 7, "\"pos\":1");
  try {
    parse(bad);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "pos");
  }
}

TEST(ReadTrace, MissingFieldAndBadKind) {
  std::string no_kind = kRecord;
  no_kind.replace(no_kind.find(R"("kind":"FALL",)"), 14, "");
  EXPECT_THROW(parse(no_kind), ValidationError);
  std::string bad_kind = kRecord;
  bad_kind.replace(bad_kind.find("FALL"), 4, "LEAP");
  EXPECT_THROW(parse(bad_kind), Error);
}

TEST(ReadTrace, OptionalListsDefault) {
  Trace t = parse(R"({"pos":0,"tid":1,"addr":5,"size":1,"bytes":"ff","mnemonic":"Y","kind":"HALT"})");
  ASSERT_EQ(t.size(), 1u);
  EXPECT_TRUE(t.records[0].mem_reads.empty());
  EXPECT_FALSE(t.records[0].taint_source);
  EXPECT_EQ(t.records[0].tid, 1u);
}

TEST(ReadTrace, MarkersOutOfRange) {
  std::string text = std::string(R"({"meta":{"markers":[3]}})") + "\n" + kRecord + "\n";
  EXPECT_THROW(parse(text), ValidationError);
}

TEST(RoundTrip, TwoPhaseTrace) {
  Trace t = testkit::two_phase();
  EXPECT_EQ(parse(serialize(t)), t);
}

TEST(RoundTrip, Empty) {
  Trace t;
  EXPECT_EQ(serialize(t), "");
  EXPECT_EQ(parse(serialize(t)), t);
}

TEST(RoundTrip, ToyTraceWithMarkers) {
  Trace t = testkit::run_program("dice");
  ASSERT_FALSE(t.markers.empty());
  Trace back = parse(serialize(t));
  EXPECT_EQ(back, t);
  Trace b2 = testkit::run_program("bench2");
  EXPECT_EQ(parse(serialize(b2)), b2);
}

TEST(RoundTrip, RandomTraces) {
  testkit::TraceGen gen(7);
  for (int k = 0; k < 100; ++k) {
    testkit::GenOptions o;
    o.length = 1 + k;
    o.variable_size = k % 2;
    o.threads = 1 + k % 3;
    Trace t = gen.generate(o);
    if (k % 5 == 0) t.metadata["k"] = std::to_string(k);
    ASSERT_EQ(parse(serialize(t)), t) << "trace " << k;
  }
}

TEST(Invariants, InstrOfContiguousOnRandomTraces) {
  testkit::TraceGen gen(11);
  for (int k = 0; k < 50; ++k) {
    testkit::GenOptions o;
    o.variable_size = true;
    Trace t = gen.generate(o);
    validate_trace(t);
    for (const auto& r : t.records) {
      auto s = instr_of(r);
      ASSERT_EQ(s.size(), r.size);
      EXPECT_EQ(s.begin()->addr, r.addr);
      EXPECT_EQ(s.rbegin()->addr, r.addr + r.size - 1);
    }
  }
}
