#pragma once

// Two-pass assembler for the toy ISA.
//
// One statement per line; `;` or `#` start a comment.
//
//   label:                       defines a label at the current address
//   .org 0x100                   moves the location counter
//   .byte 1, 2, 0x0c             raw bytes
//   .entry main                  entry point (default: first emitted address)
//   .input 10, 8                 values consumed by IN
//   .stack 0xF000                initial r15
//   .name bench2                 program name recorded in trace metadata
//   CONST r1, label+4            instructions; branch operands are absolute
//   LOAD r4, [r2+1]              targets and are encoded as rel8

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dyncode/error.hpp"
#include "dyncode/toyvm.hpp"

namespace dyncode::toy {

struct ListingLine {
  std::uint64_t addr = 0;
  std::vector<std::uint8_t> bytes;
  std::string source;
};

struct Assembly {
  ToyProgram program;
  std::map<std::string, std::uint64_t> labels;
  std::vector<ListingLine> listing;

  std::uint64_t label(const std::string& name) const {
    auto it = labels.find(name);
    if (it == labels.end()) throw Error("unknown label '" + name + "'");
    return it->second;
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_operands(std::string_view s) {
  std::vector<std::string_view> out;
  if (trim(s).empty()) return out;
  std::size_t depth = 0, start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '[') ++depth;
    if (s[i] == ']' && depth) --depth;
    if (s[i] == ',' && depth == 0) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  out.push_back(trim(s.substr(start)));
  return out;
}

inline bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }
inline bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }

class LineAssembler {
 public:
  LineAssembler(std::size_t line, const std::map<std::string, std::uint64_t>* labels)
      : line_(line), labels_(labels) {}

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(line_, what); }

  std::optional<std::int64_t> number(std::string_view s) const {
    s = trim(s);
    bool neg = false;
    if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
      neg = s[0] == '-';
      s.remove_prefix(1);
    }
    if (s.empty()) return std::nullopt;
    int base = 10;
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
      base = 16;
      s.remove_prefix(2);
    }
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
    if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
    return neg ? -static_cast<std::int64_t>(v) : static_cast<std::int64_t>(v);
  }

  // term (('+'|'-') term)*, where a term is a number or a label. In the first
  // pass (labels_ == nullptr) unknown labels evaluate to 0.
  std::int64_t expr(std::string_view s) const {
    s = trim(s);
    if (s.empty()) fail("missing operand");
    std::int64_t total = 0;
    std::size_t i = 0;
    int sign = 1;
    bool expect_term = true;
    while (i < s.size()) {
      char c = s[i];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++i;
        continue;
      }
      if (expect_term) {
        if (c == '-' || c == '+') {
          if (c == '-') sign = -sign;
          ++i;
          continue;
        }
        std::size_t j = i;
        if (is_ident_start(c) && !(c == '0')) {
          while (j < s.size() && is_ident_char(s[j])) ++j;
          std::string name(s.substr(i, j - i));
          total += sign * label_value(name);
        } else {
          while (j < s.size() && std::isalnum(static_cast<unsigned char>(s[j]))) ++j;
          auto v = number(s.substr(i, j - i));
          if (!v) fail("bad number '" + std::string(s.substr(i, j - i)) + "'");
          total += sign * *v;
        }
        i = j;
        sign = 1;
        expect_term = false;
      } else {
        if (c != '+' && c != '-') fail("unexpected '" + std::string(1, c) + "' in expression");
        sign = c == '-' ? -1 : 1;
        expect_term = true;
        ++i;
      }
    }
    if (expect_term) fail("dangling operator in expression");
    return total;
  }

  std::int64_t label_value(const std::string& name) const {
    if (!labels_) return 0;
    auto it = labels_->find(name);
    if (it == labels_->end()) fail("unknown label '" + name + "'");
    return static_cast<std::int64_t>(it->second);
  }

  std::uint8_t reg(std::string_view s) const {
    s = trim(s);
    if (s == "sp") return kStackReg;
    if (s.size() >= 2 && (s[0] == 'r' || s[0] == 'R')) {
      auto v = number(s.substr(1));
      if (v && *v >= 0 && *v < static_cast<std::int64_t>(kNumRegs)) return static_cast<std::uint8_t>(*v);
    }
    fail("expected a register r0..r15, got '" + std::string(s) + "'");
  }

  // [rs], [rs+expr], [rs-expr]
  std::pair<std::uint8_t, std::int64_t> mem(std::string_view s) const {
    s = trim(s);
    if (s.size() < 3 || s.front() != '[' || s.back() != ']') fail("expected [reg+offset]");
    s = trim(s.substr(1, s.size() - 2));
    std::size_t k = s.find_first_of("+-");
    if (k == std::string_view::npos) return {reg(s), 0};
    std::int64_t off = expr(s.substr(k + 1));
    return {reg(s.substr(0, k)), s[k] == '-' ? -off : off};
  }

  std::uint8_t fit_signed8(std::int64_t v, const char* what) const {
    if (v < -128 || v > 127) fail(std::string(what) + " " + std::to_string(v) + " does not fit in a signed byte");
    return static_cast<std::uint8_t>(static_cast<std::int8_t>(v));
  }

  std::array<std::uint8_t, 4> encode(Op op, const std::vector<std::string_view>& ops, std::uint64_t pc) const {
    auto want = [&](std::size_t n) {
      if (ops.size() != n)
        fail(std::string(op_name(op)) + " takes " + std::to_string(n) + " operand(s), got " +
             std::to_string(ops.size()));
    };
    std::array<std::uint8_t, 4> b{static_cast<std::uint8_t>(op), 0, 0, 0};
    switch (op) {
      case Op::Nop:
      case Op::Mark:
      case Op::Ret:
      case Op::Halt:
        want(0);
        break;
      case Op::Const: {
        want(2);
        b[1] = reg(ops[0]);
        auto v = expr(ops[1]);
        if (v < 0 || v > 0xffff) fail("CONST immediate " + std::to_string(v) + " out of range 0..65535");
        b[2] = static_cast<std::uint8_t>(v & 0xff);
        b[3] = static_cast<std::uint8_t>(v >> 8);
        break;
      }
      case Op::Mov:
        want(2);
        b[1] = reg(ops[0]);
        b[2] = reg(ops[1]);
        break;
      case Op::Add:
      case Op::Sub:
      case Op::And:
      case Op::Or:
      case Op::Xor:
      case Op::Shr:
        want(3);
        b[1] = reg(ops[0]);
        b[2] = reg(ops[1]);
        b[3] = reg(ops[2]);
        break;
      case Op::Addi: {
        want(2);
        b[1] = reg(ops[0]);
        auto v = expr(ops[1]);
        if (v < -128 || v > 255) fail("ADDI immediate " + std::to_string(v) + " out of range");
        b[3] = static_cast<std::uint8_t>(v & 0xff);
        break;
      }
      case Op::Load: {
        want(2);
        b[1] = reg(ops[0]);
        auto [rs, off] = mem(ops[1]);
        b[2] = rs;
        b[3] = fit_signed8(off, "offset");
        break;
      }
      case Op::Store: {
        want(2);
        auto [rs, off] = mem(ops[0]);
        b[1] = rs;
        b[2] = reg(ops[1]);
        b[3] = fit_signed8(off, "offset");
        break;
      }
      case Op::Jmp:
      case Op::Jz:
      case Op::Jnz:
      case Op::Call: {
        want(1);
        std::int64_t target = expr(ops[0]);
        // First pass: labels are unresolved, so any displacement is fine.
        b[1] = labels_ ? fit_signed8(target - static_cast<std::int64_t>(pc + kInstrSize), "branch displacement") : 0;
        break;
      }
      case Op::In:
        want(1);
        b[1] = reg(ops[0]);
        break;
    }
    return b;
  }

 private:
  std::size_t line_;
  const std::map<std::string, std::uint64_t>* labels_;
};

inline std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::toupper(c); });
  return out;
}

}  // namespace detail

inline Assembly assemble(std::string_view source) {
  std::vector<std::string> lines;
  {
    std::string src(source);
    std::istringstream in(src);
    std::string l;
    while (std::getline(in, l)) lines.push_back(l);
  }

  Assembly out;
  std::optional<std::uint64_t> first_addr;
  std::optional<std::string> entry_expr;
  std::size_t entry_line = 0;

  for (int pass = 0; pass < 2; ++pass) {
    std::uint64_t pc = 0;
    out.program = ToyProgram{};
    out.listing.clear();
    for (std::size_t n = 0; n < lines.size(); ++n) {
      const std::size_t line_no = n + 1;
      std::string_view text = lines[n];
      if (auto c = text.find_first_of(";#"); c != std::string_view::npos) text = text.substr(0, c);
      text = detail::trim(text);
      detail::LineAssembler la(line_no, pass == 0 ? nullptr : &out.labels);

      // Leading labels.
      while (true) {
        auto colon = text.find(':');
        if (colon == std::string_view::npos) break;
        std::string_view name = detail::trim(text.substr(0, colon));
        if (name.empty() || !detail::is_ident_start(name[0]) ||
            !std::all_of(name.begin(), name.end(), detail::is_ident_char))
          break;
        if (pass == 0) {
          if (out.labels.count(std::string(name))) la.fail("duplicate label '" + std::string(name) + "'");
          out.labels[std::string(name)] = pc;
        }
        text = detail::trim(text.substr(colon + 1));
      }
      if (text.empty()) continue;

      auto sp = text.find_first_of(" \t");
      std::string head = detail::upper(text.substr(0, sp));
      std::string_view rest = sp == std::string_view::npos ? std::string_view{} : text.substr(sp + 1);
      auto ops = detail::split_operands(rest);

      if (head == ".ORG") {
        if (ops.size() != 1) la.fail(".org takes one address");
        pc = static_cast<std::uint64_t>(la.expr(ops[0]));
      } else if (head == ".BYTE") {
        if (ops.empty()) la.fail(".byte needs at least one value");
        ListingLine ll{pc, {}, std::string(detail::trim(lines[n]))};
        for (auto o : ops) {
          auto v = la.expr(o);
          if (v < -128 || v > 255) la.fail(".byte value " + std::to_string(v) + " out of range");
          if (!first_addr) first_addr = pc;
          out.program.memory_image[pc] = static_cast<std::uint8_t>(v & 0xff);
          ll.bytes.push_back(static_cast<std::uint8_t>(v & 0xff));
          ++pc;
        }
        out.listing.push_back(std::move(ll));
      } else if (head == ".ENTRY") {
        if (ops.size() != 1) la.fail(".entry takes one operand");
        entry_expr = std::string(ops[0]);
        entry_line = line_no;
      } else if (head == ".INPUT") {
        for (auto o : ops) out.program.input_values.push_back(static_cast<std::uint64_t>(la.expr(o)));
      } else if (head == ".STACK") {
        if (ops.size() != 1) la.fail(".stack takes one address");
        out.program.stack_top = static_cast<std::uint64_t>(la.expr(ops[0]));
      } else if (head == ".NAME") {
        out.program.name = std::string(detail::trim(rest));
      } else if (head[0] == '.') {
        la.fail("unknown directive " + head);
      } else {
        auto op = op_from_name(head);
        if (!op) la.fail("unknown mnemonic '" + head + "'");
        auto enc = la.encode(*op, ops, pc);
        if (!first_addr) first_addr = pc;
        for (std::uint64_t i = 0; i < kInstrSize; ++i) out.program.memory_image[pc + i] = enc[i];
        out.listing.push_back({pc, {enc.begin(), enc.end()}, std::string(detail::trim(lines[n]))});
        pc += kInstrSize;
      }
    }
  }

  if (entry_expr) {
    detail::LineAssembler la(entry_line, &out.labels);
    out.program.entry = static_cast<std::uint64_t>(la.expr(*entry_expr));
  } else {
    out.program.entry = first_addr.value_or(0);
  }
  return out;
}

inline Assembly assemble(std::istream& in) {
  std::ostringstream ss;
  ss << in.rdbuf();
  return assemble(ss.str());
}

}  // namespace dyncode::toy
