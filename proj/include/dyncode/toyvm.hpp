#pragma once

// A deterministic toy ISA whose instructions are fetched from mutable memory,
// so stores into code take effect the next time that code runs.
//
// Every instruction is 4 bytes: [opcode, a, b, c].
//
//   NOP                  01 -- -- --
//   CONST rd, imm16      02 rd lo hi
//   MOV   rd, rs         03 rd rs --
//   ADD/SUB/AND/OR/XOR/SHR rd, rs, rt
//                        04..09 rd rs rt      (set ZF)
//   ADDI  rd, imm8       0a rd -- imm         (imm is the last byte; sets ZF)
//   LOAD  rd, [rs+imm8]  0b rd rs imm         (one byte, zero-extended)
//   STORE [rs+imm8], rt  0c rs rt imm         (low byte of rt)
//   JMP/JZ/JNZ rel8      0d..0f rel -- --     (target = pc + 4 + rel)
//   IN    rd             10 rd -- --          (next input value)
//   MARK                 11 -- -- --
//   CALL  rel8           12 rel -- --         (pushes pc+4 as 8 bytes at r15-8)
//   RET                  13 -- -- --
//   HALT                 14 -- -- --
//
// The zero flag is exposed to the trace as register location 16 so branch
// conditions carry ordinary data dependences.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dyncode/error.hpp"
#include "dyncode/trace.hpp"

namespace dyncode::toy {

inline constexpr std::uint32_t kNumRegs = 16;
inline constexpr std::uint32_t kFlagReg = 16;
inline constexpr std::uint32_t kStackReg = 15;
inline constexpr std::uint64_t kInstrSize = 4;
inline constexpr std::uint64_t kDefaultStackTop = 0xF000;

enum class Op : std::uint8_t {
  Nop = 0x01,
  Const = 0x02,
  Mov = 0x03,
  Add = 0x04,
  Sub = 0x05,
  And = 0x06,
  Or = 0x07,
  Xor = 0x08,
  Shr = 0x09,
  Addi = 0x0a,
  Load = 0x0b,
  Store = 0x0c,
  Jmp = 0x0d,
  Jz = 0x0e,
  Jnz = 0x0f,
  In = 0x10,
  Mark = 0x11,
  Call = 0x12,
  Ret = 0x13,
  Halt = 0x14,
};

inline std::optional<Op> decode_op(std::uint8_t b) {
  if (b >= 0x01 && b <= 0x14) return static_cast<Op>(b);
  return std::nullopt;
}

constexpr std::string_view op_name(Op op) {
  switch (op) {
    case Op::Nop: return "NOP";
    case Op::Const: return "CONST";
    case Op::Mov: return "MOV";
    case Op::Add: return "ADD";
    case Op::Sub: return "SUB";
    case Op::And: return "AND";
    case Op::Or: return "OR";
    case Op::Xor: return "XOR";
    case Op::Shr: return "SHR";
    case Op::Addi: return "ADDI";
    case Op::Load: return "LOAD";
    case Op::Store: return "STORE";
    case Op::Jmp: return "JMP";
    case Op::Jz: return "JZ";
    case Op::Jnz: return "JNZ";
    case Op::In: return "IN";
    case Op::Mark: return "MARK";
    case Op::Call: return "CALL";
    case Op::Ret: return "RET";
    case Op::Halt: return "HALT";
  }
  return "?";
}

inline std::optional<Op> op_from_name(std::string_view name) {
  for (std::uint8_t b = 0x01; b <= 0x14; ++b)
    if (op_name(static_cast<Op>(b)) == name) return static_cast<Op>(b);
  return std::nullopt;
}

class VmFault : public Error {
 public:
  VmFault(std::uint64_t pc, const std::string& what)
      : Error("fault at pc " + std::to_string(pc) + ": " + what), pc_(pc) {}
  std::uint64_t pc() const noexcept { return pc_; }

 private:
  std::uint64_t pc_;
};

class BudgetExceeded : public Error {
 public:
  explicit BudgetExceeded(std::uint64_t steps)
      : Error("step budget of " + std::to_string(steps) + " exhausted"), steps_(steps) {}
  std::uint64_t steps() const noexcept { return steps_; }

 private:
  std::uint64_t steps_;
};

using Memory = std::unordered_map<std::uint64_t, std::uint8_t>;

struct ToyProgram {
  std::map<std::uint64_t, std::uint8_t> memory_image;
  std::uint64_t entry = 0;
  std::vector<std::uint64_t> input_values;
  std::uint64_t stack_top = kDefaultStackTop;
  std::string name;
};

struct ToyState {
  std::array<std::uint64_t, kNumRegs> regs{};
  bool zf = false;
  Memory mem;
  std::uint64_t pc = 0;
  bool halted = false;
  std::uint64_t step_count = 0;
  std::vector<std::uint64_t> inputs;
  std::size_t next_input = 0;

  std::uint8_t load8(std::uint64_t a) const {
    auto it = mem.find(a);
    return it == mem.end() ? 0 : it->second;
  }
  void store8(std::uint64_t a, std::uint8_t v) { mem[a] = v; }
};

inline ToyState initial_state(const ToyProgram& p) {
  ToyState s;
  s.mem.reserve(p.memory_image.size() * 2);
  for (auto [a, b] : p.memory_image) s.mem[a] = b;
  s.pc = p.entry;
  s.regs[kStackReg] = p.stack_top;
  s.inputs = p.input_values;
  return s;
}

// Executes one instruction in place and returns its trace record. The record's
// `pos` is the state's step count before the step.
inline TraceRecord step_in_place(ToyState& s) {
  if (s.halted) throw VmFault(s.pc, "machine is halted");
  const std::uint64_t pc = s.pc;
  std::array<std::uint8_t, 4> raw{};
  for (std::uint64_t i = 0; i < kInstrSize; ++i) raw[i] = s.load8(pc + i);
  auto op = decode_op(raw[0]);
  if (!op) throw VmFault(pc, "undecodable opcode " + std::to_string(raw[0]));

  auto reg = [&](std::uint8_t r) -> std::uint32_t {
    if (r >= kNumRegs) throw VmFault(pc, "register index " + std::to_string(r) + " out of range");
    return r;
  };
  auto rel = [&](std::uint8_t b) { return pc + kInstrSize + static_cast<std::int64_t>(static_cast<std::int8_t>(b)); };

  TraceRecord rec;
  rec.pos = s.step_count;
  rec.addr = pc;
  rec.size = kInstrSize;
  rec.bytes.assign(raw.begin(), raw.end());
  rec.mnemonic = std::string(op_name(*op));
  std::uint64_t next = pc + kInstrSize;

  auto alu = [&](std::uint32_t rd, std::uint64_t value) {
    s.regs[rd] = value;
    s.zf = value == 0;
    rec.reg_writes = {rd, kFlagReg};
  };

  switch (*op) {
    case Op::Nop:
    case Op::Mark:
      break;
    case Op::Const: {
      auto rd = reg(raw[1]);
      s.regs[rd] = static_cast<std::uint64_t>(raw[2]) | (static_cast<std::uint64_t>(raw[3]) << 8);
      rec.reg_writes = {rd};
      break;
    }
    case Op::Mov: {
      auto rd = reg(raw[1]), rs = reg(raw[2]);
      s.regs[rd] = s.regs[rs];
      rec.reg_reads = {rs};
      rec.reg_writes = {rd};
      break;
    }
    case Op::Add:
    case Op::Sub:
    case Op::And:
    case Op::Or:
    case Op::Xor:
    case Op::Shr: {
      auto rd = reg(raw[1]), rs = reg(raw[2]), rt = reg(raw[3]);
      std::uint64_t a = s.regs[rs], b = s.regs[rt], v = 0;
      switch (*op) {
        case Op::Add: v = a + b; break;
        case Op::Sub: v = a - b; break;
        case Op::And: v = a & b; break;
        case Op::Or: v = a | b; break;
        case Op::Xor: v = a ^ b; break;
        default: v = a >> (b & 63); break;
      }
      rec.reg_reads = rs == rt ? std::vector<std::uint32_t>{rs} : std::vector<std::uint32_t>{rs, rt};
      alu(rd, v);
      break;
    }
    case Op::Addi: {
      auto rd = reg(raw[1]);
      rec.reg_reads = {rd};
      alu(rd, s.regs[rd] + static_cast<std::uint64_t>(static_cast<std::int64_t>(static_cast<std::int8_t>(raw[3]))));
      break;
    }
    case Op::Load: {
      auto rd = reg(raw[1]), rs = reg(raw[2]);
      std::uint64_t a = s.regs[rs] + static_cast<std::uint64_t>(static_cast<std::int64_t>(static_cast<std::int8_t>(raw[3])));
      s.regs[rd] = s.load8(a);
      rec.reg_reads = {rs};
      rec.reg_writes = {rd};
      rec.mem_reads = {{a, 1}};
      break;
    }
    case Op::Store: {
      auto rs = reg(raw[1]), rt = reg(raw[2]);
      std::uint64_t a = s.regs[rs] + static_cast<std::uint64_t>(static_cast<std::int64_t>(static_cast<std::int8_t>(raw[3])));
      s.store8(a, static_cast<std::uint8_t>(s.regs[rt]));
      rec.reg_reads = rs == rt ? std::vector<std::uint32_t>{rs} : std::vector<std::uint32_t>{rs, rt};
      rec.mem_writes = {{a, 1}};
      break;
    }
    case Op::Jmp:
      rec.kind = Kind::Jump;
      next = rel(raw[1]);
      break;
    case Op::Jz:
    case Op::Jnz: {
      bool taken = (*op == Op::Jz) == s.zf;
      rec.kind = Kind::CondBr;
      rec.taken = taken;
      rec.reg_reads = {kFlagReg};
      if (taken) next = rel(raw[1]);
      break;
    }
    case Op::In: {
      auto rd = reg(raw[1]);
      if (s.next_input >= s.inputs.size()) throw VmFault(pc, "input exhausted");
      s.regs[rd] = s.inputs[s.next_input++];
      rec.reg_writes = {rd};
      rec.taint_source = true;
      break;
    }
    case Op::Call: {
      std::uint64_t sp = s.regs[kStackReg] - 8;
      for (int i = 0; i < 8; ++i) s.store8(sp + i, static_cast<std::uint8_t>(next >> (8 * i)));
      s.regs[kStackReg] = sp;
      rec.kind = Kind::Call;
      rec.reg_reads = {kStackReg};
      rec.reg_writes = {kStackReg};
      rec.mem_writes = {{sp, 8}};
      next = rel(raw[1]);
      break;
    }
    case Op::Ret: {
      std::uint64_t sp = s.regs[kStackReg], target = 0;
      for (int i = 0; i < 8; ++i) target |= static_cast<std::uint64_t>(s.load8(sp + i)) << (8 * i);
      s.regs[kStackReg] = sp + 8;
      rec.kind = Kind::Ret;
      rec.reg_reads = {kStackReg};
      rec.reg_writes = {kStackReg};
      rec.mem_reads = {{sp, 8}};
      next = target;
      break;
    }
    case Op::Halt:
      rec.kind = Kind::Halt;
      s.halted = true;
      next = pc;
      break;
  }
  s.pc = next;
  ++s.step_count;
  return rec;
}

inline std::pair<ToyState, TraceRecord> step(ToyState s) {
  TraceRecord r = step_in_place(s);
  return {std::move(s), std::move(r)};
}

// Runs to HALT. Throws BudgetExceeded if the program is still running after
// `max_steps` instructions. MARK positions are recorded as trace markers.
inline Trace run(const ToyProgram& program, std::uint64_t max_steps) {
  ToyState s = initial_state(program);
  Trace t;
  if (!program.name.empty()) t.metadata["program"] = program.name;
  t.metadata["isa"] = "toy4";
  while (!s.halted) {
    if (s.step_count >= max_steps) throw BudgetExceeded(max_steps);
    t.records.push_back(step_in_place(s));
    if (t.records.back().mnemonic == "MARK") t.markers.push_back(t.records.back().pos);
  }
  return t;
}

}  // namespace dyncode::toy
