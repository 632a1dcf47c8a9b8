#pragma once

// JSON Lines trace format.
//
//   {"meta": {"program": "...", "markers": [12, 40]}}      (optional, first line)
//   {"pos":0,"tid":0,"addr":256,"size":4,"bytes":"0c010000","mnemonic":"JMP",
//    "kind":"JUMP","mem_reads":[],"mem_writes":[],"reg_reads":[],"reg_writes":[],
//    "taint_source":false}
//
// `taken` is present only on CONDBR records. Empty lines are ignored.

#include <istream>
#include <optional>
#include <ostream>
#include <string>

#include <json.hpp>

#include "dyncode/trace.hpp"

namespace dyncode {

namespace detail {

inline int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

inline std::vector<std::uint8_t> decode_hex(const std::string& s) {
  if (s.size() % 2 != 0) throw ValidationError("bytes", "odd number of hex digits");
  std::vector<std::uint8_t> out(s.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = hex_digit(s[2 * i]), lo = hex_digit(s[2 * i + 1]);
    if (hi < 0 || lo < 0) throw ValidationError("bytes", "not a hex string");
    out[i] = static_cast<std::uint8_t>(hi * 16 + lo);
  }
  return out;
}

inline void append_hex(std::string& out, const std::vector<std::uint8_t>& bytes) {
  static constexpr char digits[] = "0123456789abcdef";
  for (auto b : bytes) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0xf]);
  }
}

template <typename T>
T get_field(const nlohmann::json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end()) throw ValidationError(name, "missing");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(name, e.what());
  }
}

inline std::vector<ByteRange> get_ranges(const nlohmann::json& j, const char* name) {
  std::vector<ByteRange> out;
  auto it = j.find(name);
  if (it == j.end()) return out;
  if (!it->is_array()) throw ValidationError(name, "expected a list of [addr,size]");
  for (const auto& e : *it) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_unsigned() ||
        !e[1].is_number_unsigned())
      throw ValidationError(name, "expected [addr,size] pairs of unsigned integers");
    out.push_back({e[0].get<std::uint64_t>(), e[1].get<std::uint64_t>()});
  }
  return out;
}

inline std::vector<std::uint32_t> get_regs(const nlohmann::json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end()) return {};
  if (!it->is_array()) throw ValidationError(name, "expected a list of register indices");
  std::vector<std::uint32_t> out;
  for (const auto& e : *it) {
    if (!e.is_number_unsigned()) throw ValidationError(name, "register index must be unsigned");
    out.push_back(e.get<std::uint32_t>());
  }
  return out;
}

inline std::uint64_t get_u64(const nlohmann::json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end()) throw ValidationError(name, "missing");
  if (!it->is_number_unsigned()) throw ValidationError(name, "expected an unsigned integer");
  return it->get<std::uint64_t>();
}

inline TraceRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("record", "expected a JSON object");
  TraceRecord r;
  r.pos = get_u64(j, "pos");
  r.tid = get_u64(j, "tid");
  r.addr = get_u64(j, "addr");
  r.size = get_u64(j, "size");
  r.bytes = decode_hex(get_field<std::string>(j, "bytes"));
  r.mnemonic = get_field<std::string>(j, "mnemonic");
  auto kind = parse_kind(get_field<std::string>(j, "kind"));
  if (!kind) throw ValidationError("kind", "unknown control-flow kind");
  r.kind = *kind;
  if (auto it = j.find("taken"); it != j.end() && !it->is_null()) {
    if (!it->is_boolean()) throw ValidationError("taken", "expected a boolean");
    r.taken = it->get<bool>();
  }
  r.mem_reads = get_ranges(j, "mem_reads");
  r.mem_writes = get_ranges(j, "mem_writes");
  r.reg_reads = get_regs(j, "reg_reads");
  r.reg_writes = get_regs(j, "reg_writes");
  if (auto it = j.find("taint_source"); it != j.end()) {
    if (!it->is_boolean()) throw ValidationError("taint_source", "expected a boolean");
    r.taint_source = it->get<bool>();
  }
  return r;
}

}  // namespace detail

// Streams records one line at a time. The metadata line, if any, is consumed
// by the constructor.
class TraceReader {
 public:
  explicit TraceReader(std::istream& in) : in_(in) { read_header(); }

  const std::map<std::string, std::string>& metadata() const { return metadata_; }
  const std::vector<std::uint64_t>& markers() const { return markers_; }

  // Next validated record, or nullopt at end of stream.
  std::optional<TraceRecord> next() {
    std::string line;
    if (pending_) {
      line = std::move(*pending_);
      pending_.reset();
    } else if (!next_line(line)) {
      return std::nullopt;
    }
    nlohmann::json j = parse_line(line);
    if (j.contains("meta")) throw ParseError(line_no_, "metadata line must come first");
    try {
      TraceRecord r = detail::record_from_json(j);
      validate_record(r, count_);
      ++count_;
      return r;
    } catch (const ValidationError& e) {
      throw ValidationError(e.field(), e.detail(), line_no_);
    }
  }

 private:
  bool next_line(std::string& line) {
    while (std::getline(in_, line)) {
      ++line_no_;
      if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
  }

  nlohmann::json parse_line(const std::string& line) const {
    try {
      return nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line_no_, std::string("malformed JSON: ") + e.what());
    }
  }

  void read_header() {
    std::string line;
    if (!next_line(line)) return;
    nlohmann::json j = parse_line(line);
    auto it = j.is_object() ? j.find("meta") : j.end();
    if (it == j.end()) {
      pending_ = std::move(line);
      return;
    }
    if (!it->is_object()) throw ParseError(line_no_, "meta must be an object");
    for (const auto& [key, value] : it->items()) {
      if (key == "markers") {
        if (!value.is_array()) throw ParseError(line_no_, "meta.markers must be a list");
        for (const auto& m : value) {
          if (!m.is_number_unsigned())
            throw ParseError(line_no_, "meta.markers entries must be unsigned");
          markers_.push_back(m.get<std::uint64_t>());
        }
      } else {
        metadata_[key] = value.is_string() ? value.get<std::string>() : value.dump();
      }
    }
  }

  std::istream& in_;
  std::size_t line_no_ = 0;
  std::uint64_t count_ = 0;
  std::optional<std::string> pending_;
  std::map<std::string, std::string> metadata_;
  std::vector<std::uint64_t> markers_;
};

inline Trace read_trace(std::istream& in) {
  TraceReader reader(in);
  Trace t;
  while (auto r = reader.next()) t.records.push_back(std::move(*r));
  t.metadata = reader.metadata();
  t.markers = reader.markers();
  for (auto m : t.markers)
    if (m >= t.records.size())
      throw ValidationError("meta.markers", "marker " + std::to_string(m) + " out of range");
  return t;
}

inline void write_record(std::ostream& out, const TraceRecord& r) {
  std::string s;
  s.reserve(256);
  auto num = [&s](std::uint64_t v) { s += std::to_string(v); };
  auto ranges = [&](const char* name, const std::vector<ByteRange>& rs) {
    s += ",\"";
    s += name;
    s += "\":[";
    for (std::size_t i = 0; i < rs.size(); ++i) {
      if (i) s += ',';
      s += '[';
      num(rs[i].addr);
      s += ',';
      num(rs[i].size);
      s += ']';
    }
    s += ']';
  };
  auto regs = [&](const char* name, const std::vector<std::uint32_t>& rs) {
    s += ",\"";
    s += name;
    s += "\":[";
    for (std::size_t i = 0; i < rs.size(); ++i) {
      if (i) s += ',';
      num(rs[i]);
    }
    s += ']';
  };
  s += "{\"pos\":";
  num(r.pos);
  s += ",\"tid\":";
  num(r.tid);
  s += ",\"addr\":";
  num(r.addr);
  s += ",\"size\":";
  num(r.size);
  s += ",\"bytes\":\"";
  detail::append_hex(s, r.bytes);
  s += "\",\"mnemonic\":";
  s += nlohmann::json(r.mnemonic).dump();
  s += ",\"kind\":\"";
  s += kind_name(r.kind);
  s += '"';
  if (r.taken) s += *r.taken ? ",\"taken\":true" : ",\"taken\":false";
  ranges("mem_reads", r.mem_reads);
  ranges("mem_writes", r.mem_writes);
  regs("reg_reads", r.reg_reads);
  regs("reg_writes", r.reg_writes);
  s += r.taint_source ? ",\"taint_source\":true}\n" : ",\"taint_source\":false}\n";
  out << s;
}

inline void write_trace(const Trace& t, std::ostream& out) {
  if (!t.metadata.empty() || !t.markers.empty()) {
    nlohmann::json meta = nlohmann::json::object();
    for (const auto& [k, v] : t.metadata) meta[k] = v;
    if (!t.markers.empty()) meta["markers"] = t.markers;
    out << nlohmann::json{{"meta", meta}}.dump() << '\n';
  }
  for (const auto& r : t.records) write_record(out, r);
  out.flush();
  if (!out) throw Error("failed to write trace");
}

}  // namespace dyncode
