// Copyright 2026 The arcane-sim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "arcane/harness.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "arcane/errors.hpp"

namespace arcane {

namespace {

// ---- lexing ----------------------------------------------------------------------

struct Token {
  std::string text;
  std::size_t col = 1;  // 1-based
};

bool word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-' ||
         c == '+' || c == '/' || c == ':' || c == '~';
}

std::vector<Token> tokenize(std::string_view s, std::size_t line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == ',' || c == '[' || c == ']' || c == '=') {
      out.push_back({std::string(1, c), i + 1});
      ++i;
    } else if (word_char(c)) {
      const std::size_t start = i;
      while (i < s.size() && word_char(s[i])) ++i;
      out.push_back({std::string(s.substr(start, i - start)), start + 1});
    } else {
      throw ParseError(line, i + 1, fmt::format("unexpected character '{}'", c));
    }
  }
  return out;
}

std::string_view strip_comment(std::string_view s) {
  const auto p = s.find('#');
  return p == std::string_view::npos ? s : s.substr(0, p);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::optional<int64_t> to_int(std::string_view s) {
  bool neg = false;
  if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
    neg = s[0] == '-';
    s.remove_prefix(1);
  }
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    base = 16;
    s.remove_prefix(2);
  } else if (s.size() > 2 && s[0] == '0' && (s[1] == 'b' || s[1] == 'B')) {
    base = 2;
    s.remove_prefix(2);
  }
  if (s.empty()) return std::nullopt;
  uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  if (v > (uint64_t{1} << 33)) return std::nullopt;
  return neg ? -static_cast<int64_t>(v) : static_cast<int64_t>(v);
}

int64_t int_token(const Token& t, std::size_t line, int64_t lo, int64_t hi, const char* what) {
  const auto v = to_int(t.text);
  if (!v) throw ParseError(line, t.col, fmt::format("expected {} but found '{}'", what, t.text));
  if (*v < lo || *v > hi) {
    throw ParseError(line, t.col, fmt::format("{} {} outside {}..{}", what, *v, lo, hi));
  }
  return *v;
}

using Operand = std::vector<Token>;

// Splits tokens [from, end) at top-level commas.
std::vector<Operand> split_operands(const std::vector<Token>& toks, std::size_t from,
                                    std::size_t line) {
  std::vector<Operand> ops;
  if (from >= toks.size()) return ops;
  ops.emplace_back();
  int depth = 0;
  for (std::size_t i = from; i < toks.size(); ++i) {
    const auto& t = toks[i];
    if (t.text == "[") ++depth;
    if (t.text == "]") --depth;
    if (t.text == "," && depth == 0) {
      if (ops.back().empty()) throw ParseError(line, t.col, "empty operand");
      ops.emplace_back();
      continue;
    }
    ops.back().push_back(t);
  }
  if (ops.back().empty()) throw ParseError(line, toks.back().col, "trailing comma");
  return ops;
}

uint32_t matrix_reg(const Operand& op, std::size_t line) {
  if (op.size() != 1 || op[0].text.size() < 2 || op[0].text[0] != 'm') {
    throw ParseError(line, op.front().col,
                     fmt::format("expected a matrix register mN, found '{}'", op[0].text));
  }
  const auto v = to_int(std::string_view(op[0].text).substr(1));
  if (!v || *v < 0 || *v > 0xffff) {
    throw ParseError(line, op[0].col, fmt::format("bad matrix register '{}'", op[0].text));
  }
  return static_cast<uint32_t>(*v);
}

int64_t scalar(const Operand& op, std::size_t line, int64_t lo, int64_t hi, const char* what) {
  if (op.size() != 1) throw ParseError(line, op.front().col, fmt::format("expected {}", what));
  return int_token(op[0], line, lo, hi, what);
}

// NUMBER | NAME | NAME+NUMBER | NAME[r, c]
uint32_t address(const Operand& op, const SymbolTable& symbols, std::size_t line,
                 const isa::MatrixDescriptor** matched = nullptr) {
  const Token& head = op[0];
  if (auto v = to_int(head.text)) {
    if (op.size() != 1) throw ParseError(line, op[1].col, "unexpected tokens after address");
    if (*v < 0 || *v > 0xffffffffLL) throw ParseError(line, head.col, "address out of range");
    return static_cast<uint32_t>(*v);
  }
  std::string name = head.text;
  int64_t offset = 0;
  if (const auto plus = name.find('+'); plus != std::string::npos) {
    const auto v = to_int(std::string_view(name).substr(plus + 1));
    if (!v) throw ParseError(line, head.col + plus + 1, "bad address offset");
    offset = *v;
    name.resize(plus);
  }
  const auto it = symbols.find(name);
  if (it == symbols.end()) {
    throw ParseError(line, head.col, fmt::format("unknown matrix '{}'", name));
  }
  const isa::MatrixDescriptor& d = it->second;
  if (matched) *matched = &d;
  if (op.size() == 1) return static_cast<uint32_t>(d.base + offset);
  // NAME[r, c]
  if (op.size() != 6 || op[1].text != "[" || op[3].text != "," || op[5].text != "]" ||
      offset != 0) {
    throw ParseError(line, op[1].col, "expected NAME[row, col]");
  }
  const auto r = int_token(op[2], line, 0, d.rows - 1, "row");
  const auto c = int_token(op[4], line, 0, d.cols - 1, "column");
  if (matched) *matched = nullptr;
  return d.element_address(static_cast<uint32_t>(r), static_cast<uint32_t>(c));
}

unsigned width_of(char suffix) {
  switch (suffix) {
    case 'w': return 4;
    case 'h': return 2;
    case 'b': return 1;
  }
  return 0;
}

// Splits "name.s" into name and suffix character.
std::pair<std::string, char> split_suffix(const std::string& m) {
  const auto dot = m.rfind('.');
  if (dot == std::string::npos || dot + 2 != m.size()) return {m, 0};
  return {m.substr(0, dot), m[dot + 1]};
}

uint16_t half(int64_t v) { return static_cast<uint16_t>(static_cast<uint64_t>(v) & 0xffff); }

HostEvent assemble_xmk(uint32_t n, isa::ElementWidth eew, const std::vector<Operand>& ops,
                       std::size_t line, std::size_t col) {
  isa::OperandHalves h{};
  auto count = [&](std::size_t lo, std::size_t hi) {
    if (ops.size() < lo || ops.size() > hi) {
      throw ParseError(line, col,
                       lo == hi ? fmt::format("xmk{} takes {} operands", n, lo)
                                : fmt::format("xmk{} takes {} to {} operands", n, lo, hi));
    }
  };
  auto signed16 = [&](const Operand& o, const char* what) {
    return half(scalar(o, line, -32768, 65535, what));
  };
  switch (n) {
    case 0:  // md, ms1, ms2 [, ms3 [, alpha [, beta]]]
      count(3, 6);
      h[isa::kLoRs2] = half(matrix_reg(ops[0], line));
      h[isa::kHiRs3] = half(matrix_reg(ops[1], line));
      h[isa::kLoRs3] = half(matrix_reg(ops[2], line));
      h[isa::kHiRs2] = ops.size() > 3 ? half(matrix_reg(ops[3], line)) : 0;
      h[isa::kHiRs1] = ops.size() > 4 ? signed16(ops[4], "alpha") : 1;
      h[isa::kLoRs1] = ops.size() > 5 ? signed16(ops[5], "beta") : 0;
      break;
    case 1:  // md, ms1, alpha
      count(3, 3);
      h[isa::kLoRs2] = half(matrix_reg(ops[0], line));
      h[isa::kHiRs3] = half(matrix_reg(ops[1], line));
      h[isa::kHiRs1] = signed16(ops[2], "alpha");
      break;
    case 2:  // md, ms1, stride, win
      count(4, 4);
      h[isa::kLoRs2] = half(matrix_reg(ops[0], line));
      h[isa::kHiRs3] = half(matrix_reg(ops[1], line));
      h[isa::kHiRs1] = half(scalar(ops[2], line, 0, 0xffff, "stride"));
      h[isa::kLoRs1] = half(scalar(ops[3], line, 0, 0xffff, "window"));
      break;
    case 3:
    case 4:  // md, ms1, ms2
      count(3, 3);
      h[isa::kLoRs2] = half(matrix_reg(ops[0], line));
      h[isa::kHiRs3] = half(matrix_reg(ops[1], line));
      h[isa::kLoRs3] = half(matrix_reg(ops[2], line));
      break;
    default:  // six raw halves in table order
      count(6, 6);
      for (std::size_t i = 0; i < 6; ++i) {
        const Operand& o = ops[i];
        h[i] = o.size() == 1 && o[0].text.size() > 1 && o[0].text[0] == 'm' &&
                       !to_int(o[0].text)
                   ? half(matrix_reg(o, line))
                   : signed16(o, "operand half");
      }
      break;
  }
  return HostEvent::offload(isa::encode_xmk(n, eew, h));
}

}  // namespace

// ---- Lcg64 -----------------------------------------------------------------------

uint32_t Lcg64::next() {
  state_ = state_ * kMultiplier + kIncrement;
  return static_cast<uint32_t>(state_ >> 32);
}

int64_t Lcg64::uniform(int64_t lo, int64_t hi) {
  const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  return lo + static_cast<int64_t>(next() % span);
}

std::vector<int64_t> random_matrix(uint64_t seed, uint32_t rows, uint32_t cols,
                                   isa::ElementWidth eew,
                                   std::optional<std::pair<int64_t, int64_t>> range) {
  Lcg64 g(seed);
  std::vector<int64_t> v(std::size_t{rows} * cols);
  for (auto& x : v) {
    x = range ? g.uniform(range->first, range->second) : sign_extend(g.next(), isa::bits(eew));
  }
  return v;
}

// ---- configuration ---------------------------------------------------------------

bool set_config_key(SimConfig& cfg, std::string_view key, std::string_view value) {
  auto u32 = [&](uint32_t& field) {
    const auto v = to_int(value);
    if (!v || *v < 0 || *v > 0xffffffffLL) {
      throw Error(Errc::kParseError, fmt::format("{} needs an unsigned integer", key));
    }
    field = static_cast<uint32_t>(*v);
  };
  auto real = [&](double& field) {
    std::string s(value);
    std::size_t used = 0;
    try {
      field = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) {
      throw Error(Errc::kParseError, fmt::format("{} needs a number", key));
    }
  };
  if (key == "num_vpus") u32(cfg.num_vpus);
  else if (key == "vregs_per_vpu") u32(cfg.vregs_per_vpu);
  else if (key == "line_bytes") u32(cfg.line_bytes);
  else if (key == "lanes") u32(cfg.lanes);
  else if (key == "at_capacity") u32(cfg.at_capacity);
  else if (key == "queue_depth") u32(cfg.queue_depth);
  else if (key == "matrix_registers") u32(cfg.matrix_registers);
  else if (key == "dma_setup") u32(cfg.dma.setup_cycles);
  else if (key == "row_setup") u32(cfg.dma.row_setup_cycles);
  else if (key == "bus_bytes") u32(cfg.dma.bus_bytes);
  else if (key == "issue_cycles") u32(cfg.issue_cycles);
  else if (key == "decode_cycles") u32(cfg.decode_cycles);
  else if (key == "bridge_handshake") u32(cfg.bridge_handshake_cycles);
  else if (key == "cpi_scalar_mac") real(cfg.cpi_scalar_mac);
  else if (key == "simd_efficiency") real(cfg.simd_efficiency);
  else if (key == "memory_size") u32(cfg.memory_size);
  else if (key == "memory_base") u32(cfg.memory_base);
  else if (key == "data_base") u32(cfg.data_base);
  else if (key == "data_size") u32(cfg.data_size);
  else return false;
  return true;
}

namespace {

void config_line(std::string_view body, std::size_t line, SimConfig& cfg) {
  const auto toks = tokenize(body, line);
  if (toks.size() != 3 || toks[1].text != "=") {
    throw ParseError(line, toks.empty() ? 1 : toks[0].col, "expected 'key = value'");
  }
  try {
    if (!set_config_key(cfg, toks[0].text, toks[2].text)) {
      throw ParseError(line, toks[0].col, fmt::format("unknown configuration key '{}'", toks[0].text));
    }
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(line, toks[2].col, e.what());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kParseError, fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void apply_config_text(std::string_view text, SimConfig& cfg) {
  std::size_t line = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string_view raw = text.substr(pos, nl == std::string_view::npos ? nl : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line;
    const std::string_view body = trim(strip_comment(raw));
    if (body.empty() || body == "[config]") continue;
    config_line(strip_comment(raw), line, cfg);
  }
  cfg.validate();
}

SimConfig load_config(const std::filesystem::path& path, SimConfig base) {
  apply_config_text(read_file(path), base);
  return base;
}

// ---- assembly --------------------------------------------------------------------

HostEvent assemble_line(std::string_view text, const SymbolTable& symbols, std::size_t line) {
  const auto toks = tokenize(text, line);
  if (toks.empty()) throw ParseError(line, 1, "empty statement");
  const Token& mn = toks[0];
  const auto ops = split_operands(toks, 1, line);
  const auto [name, suffix] = split_suffix(mn.text);

  HostEvent ev;
  if (name == "busy" && suffix == 0) {
    if (ops.size() != 1) throw ParseError(line, mn.col, "busy takes one cycle count");
    ev = HostEvent::busy(static_cast<uint64_t>(scalar(ops[0], line, 0, int64_t{1} << 32, "cycles")));
  } else if (name == "barrier" && suffix == 0) {
    if (!ops.empty()) throw ParseError(line, ops[0][0].col, "barrier takes no operands");
    ev = HostEvent::barrier();
  } else if ((name == "load" || name == "store") && width_of(suffix) != 0) {
    const unsigned w = width_of(suffix);
    const bool st = name == "store";
    if (ops.size() != (st ? 2u : 1u)) {
      throw ParseError(line, mn.col, st ? "store takes an address and a value"
                                        : "load takes one address");
    }
    const uint32_t addr = address(ops[0], symbols, line);
    if (addr % w != 0) {
      throw ParseError(line, ops[0][0].col, fmt::format("address {:#x} is not {}-byte aligned", addr, w));
    }
    if (st) {
      const int64_t v = scalar(ops[1], line, -(int64_t{1} << 31), 0xffffffffLL, "value");
      ev = HostEvent::store(addr, w, static_cast<uint32_t>(v));
    } else {
      ev = HostEvent::load(addr, w);
    }
  } else if (name == "xmr" && suffix != 0) {
    const auto eew = isa::width_from_suffix(suffix);
    if (!eew) throw ParseError(line, mn.col, fmt::format("unknown width suffix '.{}'", suffix));
    if (ops.size() != 2 && ops.size() != 5) {
      throw ParseError(line, mn.col, "xmr takes md, address[, stride, rows, cols]");
    }
    const uint32_t md = matrix_reg(ops[0], line);
    const isa::MatrixDescriptor* sym = nullptr;
    isa::MatrixDescriptor d;
    d.base = address(ops[1], symbols, line, &sym);
    d.eew = *eew;
    if (ops.size() == 5) {
      d.stride = static_cast<uint32_t>(scalar(ops[2], line, 0, 0xffff, "stride"));
      d.rows = static_cast<uint32_t>(scalar(ops[3], line, 0, 0xffff, "rows"));
      d.cols = static_cast<uint32_t>(scalar(ops[4], line, 0, 0xffff, "cols"));
    } else {
      if (!sym) throw ParseError(line, ops[1][0].col, "xmr without a shape needs a matrix name");
      if (sym->eew != *eew) {
        throw ParseError(line, mn.col, fmt::format("matrix is .{} but the reserve is .{}",
                                                   isa::suffix(sym->eew), suffix));
      }
      d.stride = sym->stride;
      d.rows = sym->rows;
      d.cols = sym->cols;
    }
    try {
      ev = HostEvent::offload(isa::encode_xmr(md, d));
    } catch (const Error& e) {
      throw ParseError(line, mn.col, e.what());
    }
  } else if (name.rfind("xmk", 0) == 0 && suffix != 0) {
    const auto n = to_int(std::string_view(name).substr(3));
    if (!n || *n < 0) throw ParseError(line, mn.col, fmt::format("bad kernel mnemonic '{}'", name));
    const auto eew = isa::width_from_suffix(suffix);
    if (!eew) throw ParseError(line, mn.col, fmt::format("unknown width suffix '.{}'", suffix));
    if (*n > isa::kMaxKernelId) {
      throw ParseError(line, mn.col, fmt::format("kernel id {} outside 0..30", *n));
    }
    ev = assemble_xmk(static_cast<uint32_t>(*n), *eew, ops, line, mn.col);
  } else {
    throw ParseError(line, mn.col, fmt::format("unknown instruction '{}'", mn.text));
  }
  ev.text = std::string(trim(text));
  return ev;
}

isa::Encoded assemble_offload(std::string_view text) {
  const HostEvent ev = assemble_line(text, {}, 1);
  if (ev.kind != HostEvent::Kind::kOffload) {
    throw ParseError(1, 1, "only xmr and xmk statements can be encoded");
  }
  return {ev.word, ev.rs};
}

std::string disassemble(const isa::DecodedOp& op) {
  const auto h = op.halves();
  const char s = isa::suffix(op.eew);
  const auto sgn = [](uint16_t v) { return static_cast<int16_t>(v); };
  if (op.is_reserve()) {
    const auto f = isa::reserve_fields(op);
    return fmt::format("xmr.{} m{}, {:#x}, {}, {}, {}", s, f.md, f.desc.base, f.desc.stride,
                       f.desc.rows, f.desc.cols);
  }
  using isa::kHiRs1, isa::kLoRs1, isa::kHiRs2, isa::kLoRs2, isa::kHiRs3, isa::kLoRs3;
  switch (op.func5) {
    case 0:
      return fmt::format("xmk0.{} m{}, m{}, m{}, m{}, {}, {}", s, h[kLoRs2], h[kHiRs3],
                         h[kLoRs3], h[kHiRs2], sgn(h[kHiRs1]), sgn(h[kLoRs1]));
    case 1:
      return fmt::format("xmk1.{} m{}, m{}, {}", s, h[kLoRs2], h[kHiRs3], sgn(h[kHiRs1]));
    case 2:
      return fmt::format("xmk2.{} m{}, m{}, {}, {}", s, h[kLoRs2], h[kHiRs3], h[kHiRs1],
                         h[kLoRs1]);
    case 3:
    case 4:
      return fmt::format("xmk{}.{} m{}, m{}, m{}", op.func5, s, h[kLoRs2], h[kHiRs3], h[kLoRs3]);
    default:
      return fmt::format("xmk{}.{} {}, {}, {}, {}, {}, {}", op.func5, s, h[0], h[1], h[2], h[3],
                         h[4], h[5]);
  }
}

// ---- workloads -------------------------------------------------------------------

namespace {

std::optional<isa::ElementWidth> width_token(std::string_view t) {
  if (t == "w" || t == "32") return isa::ElementWidth::kWord;
  if (t == "h" || t == "16") return isa::ElementWidth::kHalf;
  if (t == "b" || t == "8") return isa::ElementWidth::kByte;
  return std::nullopt;
}

MatrixData matrix_line(const std::vector<Token>& t, std::size_t line, const SimConfig& cfg,
                       const std::filesystem::path& base_dir) {
  if (t.empty() || t[0].text != "matrix") {
    throw ParseError(line, t.empty() ? 1 : t[0].col, "expected 'matrix NAME addr rows cols eew ...'");
  }
  if (t.size() < 6) throw ParseError(line, t[0].col, "matrix needs NAME addr rows cols eew");
  MatrixData m;
  m.name = t[1].text;
  if (!std::isalpha(static_cast<unsigned char>(m.name[0])) || m.name.find('+') != std::string::npos) {
    throw ParseError(line, t[1].col, fmt::format("bad matrix name '{}'", m.name));
  }
  m.desc.base = static_cast<uint32_t>(int_token(t[2], line, 0, 0xffffffffLL, "address"));
  const auto rows = int_token(t[3], line, 0, 0xffff, "rows");
  const auto cols = int_token(t[4], line, 0, 0xffff, "cols");
  if (rows == 0 || cols == 0) {
    throw Error(Errc::kConfigInvariantViolated,
                fmt::format("line {}: matrix {} has a zero dimension", line, m.name));
  }
  m.desc.rows = static_cast<uint32_t>(rows);
  m.desc.cols = static_cast<uint32_t>(cols);
  const auto eew = width_token(t[5].text);
  if (!eew) throw ParseError(line, t[5].col, fmt::format("bad element width '{}'", t[5].text));
  m.desc.eew = *eew;

  std::size_t i = 6;
  // key=value options
  auto option = [&](const char* key) -> std::optional<std::pair<std::string, std::size_t>> {
    if (i + 2 < t.size() + 0 && t[i].text == key && t[i + 1].text == "=") {
      auto v = std::make_pair(t[i + 2].text, t[i + 2].col);
      i += 3;
      return v;
    }
    return std::nullopt;
  };
  if (auto s = option("stride")) {
    m.desc.stride = static_cast<uint32_t>(int_token({s->first, s->second}, line, 0, 0xffff, "stride"));
  }
  try {
    m.desc.validate();
  } catch (const Error& e) {
    throw Error(Errc::kConfigInvariantViolated, fmt::format("line {}: {}", line, e.what()));
  }
  if (m.desc.base % m.desc.element_bytes() != 0) {
    throw ParseError(line, t[2].col, "matrix base is not element aligned");
  }
  if (m.desc.base < cfg.data_base ||
      uint64_t{m.desc.base} + m.desc.byte_extent() > uint64_t{cfg.data_base} + cfg.data_size) {
    throw ParseError(line, t[2].col, fmt::format("matrix {} lies outside the data region", m.name));
  }

  const std::size_t n = std::size_t{m.desc.rows} * m.desc.cols;
  if (i == t.size()) {
    m.values.assign(n, 0);
    return m;
  }
  const Token& src = t[i++];
  if (src.text == "literal") {
    for (; i < t.size(); ++i) {
      if (t[i].text == ",") continue;
      m.values.push_back(int_token(t[i], line, -(int64_t{1} << 31), 0xffffffffLL, "value"));
    }
    if (m.values.size() != n) {
      throw ParseError(line, src.col, fmt::format("matrix {} needs {} literal values, found {}",
                                                  m.name, n, m.values.size()));
    }
  } else if (src.text == "random") {
    std::optional<int64_t> seed, lo, hi;
    while (i < t.size()) {
      if (auto s = option("seed")) {
        seed = int_token({s->first, s->second}, line, 0, int64_t{1} << 33, "seed");
      } else if (auto a = option("min")) {
        lo = int_token({a->first, a->second}, line, -(int64_t{1} << 31), 0xffffffffLL, "min");
      } else if (auto b = option("max")) {
        hi = int_token({b->first, b->second}, line, -(int64_t{1} << 31), 0xffffffffLL, "max");
      } else {
        throw ParseError(line, t[i].col, fmt::format("unexpected '{}'", t[i].text));
      }
    }
    if (!seed) throw ParseError(line, src.col, "random needs seed=K");
    if (lo.has_value() != hi.has_value() || (lo && *lo > *hi)) {
      throw ParseError(line, src.col, "random range needs min <= max");
    }
    std::optional<std::pair<int64_t, int64_t>> range;
    if (lo) range = std::make_pair(*lo, *hi);
    m.values = random_matrix(static_cast<uint64_t>(*seed), m.desc.rows, m.desc.cols, m.desc.eew,
                             range);
  } else if (src.text == "file") {
    if (i + 1 >= t.size() || t[i].text != "=") throw ParseError(line, src.col, "expected file=PATH");
    const std::filesystem::path p = base_dir / t[i + 1].text;
    std::string bytes;
    try {
      bytes = read_file(p);
    } catch (const Error& e) {
      throw ParseError(line, t[i + 1].col, e.what());
    }
    const unsigned eb = m.desc.element_bytes();
    if (bytes.size() < n * eb) {
      throw ParseError(line, t[i + 1].col,
                       fmt::format("{} holds {} bytes, {} needed", p.string(), bytes.size(), n * eb));
    }
    for (std::size_t k = 0; k < n; ++k) {
      uint64_t v = 0;
      for (unsigned b = 0; b < eb; ++b) v |= uint64_t{static_cast<uint8_t>(bytes[k * eb + b])} << (8 * b);
      m.values.push_back(sign_extend(v, 8 * eb));
    }
    if (i + 2 != t.size()) throw ParseError(line, t[i + 2].col, "unexpected tokens after file");
  } else if (src.text.rfind("file=", 0) == 0 || src.text.rfind("seed=", 0) == 0) {
    throw ParseError(line, src.col, "write options as key=value with no spaces dropped");
  } else {
    throw ParseError(line, src.col,
                     fmt::format("expected literal, random or file but found '{}'", src.text));
  }
  return m;
}

}  // namespace

Workload parse_workload(std::string_view text, const std::string& name,
                        const std::filesystem::path& base_dir, SimConfig base) {
  Workload w;
  w.name = name;
  w.config = base;
  enum class Section { kProgram, kConfig, kData } section = Section::kProgram;

  struct Pending {
    std::string text;
    std::size_t line;
  };
  std::vector<std::pair<std::vector<Token>, std::size_t>> data_lines;
  std::vector<Pending> program_lines;
  std::size_t line = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string_view raw = text.substr(pos, nl == std::string_view::npos ? nl : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line;
    const std::string_view code = strip_comment(raw);
    const std::string_view body = trim(code);
    if (body.empty()) continue;
    if (body.front() == '[' && body.back() == ']') {
      const std::string_view s = body.substr(1, body.size() - 2);
      if (s == "config") section = Section::kConfig;
      else if (s == "data") section = Section::kData;
      else if (s == "program") section = Section::kProgram;
      else throw ParseError(line, 1, fmt::format("unknown section [{}]", s));
      continue;
    }
    switch (section) {
      case Section::kConfig: config_line(code, line, w.config); break;
      case Section::kData: data_lines.emplace_back(tokenize(code, line), line); break;
      case Section::kProgram: program_lines.push_back({std::string(code), line}); break;
    }
  }
  w.config.validate();

  SymbolTable symbols;
  for (const auto& [toks, ln] : data_lines) {
    MatrixData m = matrix_line(toks, ln, w.config, base_dir);
    if (!symbols.emplace(m.name, m.desc).second) {
      throw ParseError(ln, toks[1].col, fmt::format("matrix {} defined twice", m.name));
    }
    w.matrices.push_back(std::move(m));
  }
  for (const auto& p : program_lines) {
    HostEvent ev = assemble_line(p.text, symbols, p.line);
    if (ev.kind == HostEvent::Kind::kLoad || ev.kind == HostEvent::Kind::kStore) {
      if (ev.addr < w.config.data_base ||
          uint64_t{ev.addr} + ev.width > uint64_t{w.config.data_base} + w.config.data_size) {
        throw ParseError(p.line, 1, fmt::format("access at {:#x} outside the data region", ev.addr));
      }
    }
    w.program.events.push_back(std::move(ev));
  }
  return w;
}

Workload load_workload(const std::filesystem::path& path, SimConfig base) {
  return parse_workload(read_file(path), path.stem().string(), path.parent_path(), base);
}

RunResult run_workload(const Workload& w, const RunOptions& opts) {
  Simulator sim(opts.config_override.value_or(w.config));
  for (const auto& m : w.matrices) sim.write_matrix(m.desc, m.values);
  sim.set_trace(opts.trace);
  RunResult r;
  auto dump = [&] {
    if (opts.ct_dump) sim.cache().dump_ct_csv(*opts.ct_dump);
    if (opts.at_dump) sim.cache().dump_at_csv(*opts.at_dump);
  };
  try {
    r.report = sim.run(w.program, w.name);
  } catch (...) {
    dump();
    throw;
  }
  dump();
  for (const auto& m : w.matrices) r.matrices[m.name] = sim.read_matrix(m.desc);
  r.loads = sim.loads();
  r.cache = sim.cache().stats();
  return r;
}

// ---- sweeps ----------------------------------------------------------------------

Workload conv_layer_workload(uint32_t size, uint32_t k, isa::ElementWidth eew,
                             const SimConfig& cfg, uint64_t seed) {
  Workload w;
  w.name = fmt::format("conv_layer3_{}x{}_k{}_{}b", size, size, k, isa::bits(eew));
  w.config = cfg;
  const uint32_t eb = isa::bytes(eew);
  const uint32_t line = cfg.line_bytes;
  auto align = [&](uint64_t a) { return static_cast<uint32_t>((a + line - 1) / line * line); };
  uint32_t next = cfg.data_base;
  auto place = [&](const std::string& name, uint32_t rows, uint32_t cols) {
    MatrixData m;
    m.name = name;
    m.desc.base = next;
    m.desc.rows = rows;
    m.desc.cols = cols;
    m.desc.eew = eew;
    next = align(uint64_t{next} + uint64_t{rows} * cols * eb);
    return m;
  };
  MatrixData a = place("A", 3 * size, size);
  MatrixData f = place("F", 3 * k, k);
  const uint32_t ph = (size - k + 1) / 2;
  const uint32_t pw = ph;
  MatrixData r = place("R", ph, pw);
  a.values = random_matrix(seed, a.desc.rows, a.desc.cols, eew);
  f.values = random_matrix(seed + 1, f.desc.rows, f.desc.cols, eew);
  r.values.assign(std::size_t{ph} * pw, 0);
  w.program.events.push_back(HostEvent::offload(isa::encode_xmr(0, a.desc)));
  w.program.events.push_back(HostEvent::offload(isa::encode_xmr(1, f.desc)));
  w.program.events.push_back(HostEvent::offload(isa::encode_xmr(2, r.desc)));
  isa::OperandHalves h{};
  h[isa::kLoRs2] = 2;
  h[isa::kHiRs3] = 0;
  h[isa::kLoRs3] = 1;
  w.program.events.push_back(HostEvent::offload(isa::encode_xmk(4, eew, h)));
  w.matrices = {std::move(a), std::move(f), std::move(r)};
  return w;
}

std::vector<OverheadPoint> sweep_overhead(const std::vector<uint32_t>& sizes,
                                          const std::vector<uint32_t>& lanes,
                                          isa::ElementWidth eew, const SimConfig& base) {
  std::vector<OverheadPoint> out;
  for (uint32_t l : lanes) {
    SimConfig cfg = base;
    cfg.lanes = l;
    for (uint32_t s : sizes) {
      const RunResult r = run_workload(conv_layer_workload(s, 3, eew, cfg));
      OverheadPoint p;
      p.size = s;
      p.lanes = l;
      p.eew = eew;
      p.report = r.report;
      p.phases = PhaseBreakdown::from(r.report);
      out.push_back(p);
    }
  }
  return out;
}

std::vector<SpeedupPoint> sweep_speedup(const std::vector<uint32_t>& sizes,
                                        const std::vector<uint32_t>& lanes,
                                        const std::vector<isa::ElementWidth>& eews,
                                        const std::vector<uint32_t>& filters,
                                        const SimConfig& base) {
  std::vector<SpeedupPoint> out;
  for (uint32_t k : filters) {
    for (isa::ElementWidth eew : eews) {
      for (uint32_t l : lanes) {
        SimConfig cfg = base;
        cfg.lanes = l;
        for (uint32_t s : sizes) {
          if (s < k + 1) continue;
          const RunResult r = run_workload(conv_layer_workload(s, k, eew, cfg));
          KernelShape shape;
          shape.kernel = isa::Kernel::kConvLayer3;
          shape.rows = s;
          shape.cols = s;
          shape.kh = k;
          shape.kw = k;
          SpeedupPoint p;
          p.size = s;
          p.lanes = l;
          p.eew = eew;
          p.filter = k;
          p.arcane_cycles = r.report.total_cycles;
          p.scalar_cycles = baseline_cycles(shape, eew, BaselineModel::kScalar, cfg);
          p.packed_cycles = baseline_cycles(shape, eew, BaselineModel::kPackedSimd, cfg);
          p.speedup_scalar = p.scalar_cycles / static_cast<double>(p.arcane_cycles);
          p.speedup_packed = p.packed_cycles / static_cast<double>(p.arcane_cycles);
          p.packed_over_scalar = p.scalar_cycles / p.packed_cycles;
          out.push_back(p);
        }
      }
    }
  }
  return out;
}

void write_overhead_csv(std::ostream& os, const std::vector<OverheadPoint>& pts) {
  os << "size,lanes,eew,total_cycles,preamble,allocation,compute,writeback,"
        "f_preamble,f_allocation,f_compute,f_writeback\n";
  for (const auto& p : pts) {
    os << fmt::format("{},{},{},{},{},{},{},{},{:.6f},{:.6f},{:.6f},{:.6f}\n", p.size, p.lanes,
                      isa::bits(p.eew), p.report.total_cycles, p.phases.preamble,
                      p.phases.allocation, p.phases.compute, p.phases.writeback,
                      p.phases.f_preamble, p.phases.f_allocation, p.phases.f_compute,
                      p.phases.f_writeback);
  }
}

void write_speedup_csv(std::ostream& os, const std::vector<SpeedupPoint>& pts) {
  os << "size,lanes,eew,filter,arcane_cycles,scalar_cycles,packed_cycles,speedup_scalar,"
        "speedup_packed,packed_over_scalar\n";
  for (const auto& p : pts) {
    os << fmt::format("{},{},{},{},{},{:.1f},{:.1f},{:.4f},{:.4f},{:.4f}\n", p.size, p.lanes,
                      isa::bits(p.eew), p.filter, p.arcane_cycles, p.scalar_cycles,
                      p.packed_cycles, p.speedup_scalar, p.speedup_packed, p.packed_over_scalar);
  }
}

void write_speedup_plot(std::ostream& os, const std::vector<SpeedupPoint>& pts) {
  std::vector<std::string> series;
  std::map<uint32_t, std::map<std::string, double>> table;
  for (const auto& p : pts) {
    const std::string key = fmt::format("l{}_{}b_k{}", p.lanes, isa::bits(p.eew), p.filter);
    if (std::find(series.begin(), series.end(), key) == series.end()) series.push_back(key);
    table[p.size][key] = p.speedup_scalar;
  }
  os << "size";
  for (const auto& s : series) os << ',' << s;
  os << '\n';
  for (const auto& [size, row] : table) {
    os << size;
    for (const auto& s : series) {
      os << ',';
      if (auto it = row.find(s); it != row.end()) os << fmt::format("{:.4f}", it->second);
    }
    os << '\n';
  }
}

}  // namespace arcane
