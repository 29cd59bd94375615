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

#include "arcane/isa.hpp"

#include <fmt/format.h>

#include "arcane/errors.hpp"

namespace arcane::isa {

namespace {

constexpr uint32_t kFunc5Shift = 27;
constexpr uint32_t kEewShift = 25;
constexpr uint32_t kRs2Shift = 20;
constexpr uint32_t kRs1Shift = 15;
constexpr uint32_t kRs3Shift = 7;

void check_field(uint32_t value, const char* name) {
  if (value > 0xffff) {
    throw Error(Errc::kFieldOverflow, fmt::format("{} = {} does not fit in 16 bits", name, value));
  }
}

}  // namespace

char suffix(ElementWidth eew) {
  switch (eew) {
    case ElementWidth::kWord: return 'w';
    case ElementWidth::kHalf: return 'h';
    case ElementWidth::kByte: return 'b';
  }
  return '?';
}

std::optional<ElementWidth> width_from_suffix(char c) {
  switch (c) {
    case 'w': return ElementWidth::kWord;
    case 'h': return ElementWidth::kHalf;
    case 'b': return ElementWidth::kByte;
    default: return std::nullopt;
  }
}

std::optional<ElementWidth> width_from_bits(unsigned b) {
  switch (b) {
    case 32: return ElementWidth::kWord;
    case 16: return ElementWidth::kHalf;
    case 8: return ElementWidth::kByte;
    default: return std::nullopt;
  }
}

OperandHalves DecodedOp::halves() const {
  return {hi(rs1_val), lo(rs1_val), hi(rs2_val), lo(rs2_val), hi(rs3_val), lo(rs3_val)};
}

uint64_t MatrixDescriptor::byte_extent() const {
  return (uint64_t{rows - 1} * row_pitch() + cols) * element_bytes();
}

void MatrixDescriptor::validate() const {
  if (rows == 0 || cols == 0) {
    throw Error(Errc::kShapeMismatch, fmt::format("empty matrix {}x{}", rows, cols));
  }
  if (row_pitch() < cols) {
    throw Error(Errc::kShapeMismatch,
                fmt::format("stride {} is smaller than cols {}", row_pitch(), cols));
  }
  if (uint64_t{base} + byte_extent() > (uint64_t{1} << 32)) {
    throw Error(Errc::kShapeMismatch,
                fmt::format("matrix at {:#x} spanning {} bytes wraps the address space", base,
                            byte_extent()));
  }
}

InstructionWord make_word(uint32_t func5, ElementWidth eew, RegisterIndices regs) {
  uint32_t raw = (func5 & 0x1f) << kFunc5Shift;
  raw |= (static_cast<uint32_t>(eew) & 0x3) << kEewShift;
  raw |= (uint32_t{regs.rs2} & 0x1f) << kRs2Shift;
  raw |= (uint32_t{regs.rs1} & 0x1f) << kRs1Shift;
  raw |= (uint32_t{regs.rs3} & 0x1f) << kRs3Shift;
  raw |= kOpcode;
  return InstructionWord{raw};
}

Encoded encode_xmr(uint32_t md, const MatrixDescriptor& desc, RegisterIndices regs) {
  check_field(md, "md");
  check_field(desc.stride, "stride");
  check_field(desc.rows, "rows");
  check_field(desc.cols, "cols");
  Encoded out;
  out.word = make_word(kReserveFunc5, desc.eew, regs);
  out.values[0] = desc.base;
  out.values[1] = (desc.stride << 16) | md;
  out.values[2] = (desc.cols << 16) | desc.rows;
  return out;
}

Encoded encode_xmk(uint32_t n, ElementWidth eew, const OperandHalves& halves,
                   RegisterIndices regs) {
  if (n > kMaxKernelId) {
    throw Error(Errc::kBadKernelId, fmt::format("kernel id {} outside 0..30", n));
  }
  Encoded out;
  out.word = make_word(n, eew, regs);
  out.values[0] = pack(halves[kHiRs1], halves[kLoRs1]);
  out.values[1] = pack(halves[kHiRs2], halves[kLoRs2]);
  out.values[2] = pack(halves[kHiRs3], halves[kLoRs3]);
  return out;
}

DecodedOp decode(InstructionWord word, uint32_t rs1_val, uint32_t rs2_val, uint32_t rs3_val) {
  if ((word.raw & 0x7f) != kOpcode) {
    throw Error(Errc::kNotXmnmc, fmt::format("opcode {:#04x} in word {:#010x}", word.raw & 0x7f,
                                             word.raw));
  }
  const uint32_t eew_code = (word.raw >> kEewShift) & 0x3;
  if (eew_code == 3) {
    throw Error(Errc::kInvalidEew, fmt::format("reserved width code in word {:#010x}", word.raw));
  }
  DecodedOp op;
  op.func5 = static_cast<uint8_t>(word.raw >> kFunc5Shift);
  op.eew = static_cast<ElementWidth>(eew_code);
  op.regs.rs2 = static_cast<uint8_t>((word.raw >> kRs2Shift) & 0x1f);
  op.regs.rs1 = static_cast<uint8_t>((word.raw >> kRs1Shift) & 0x1f);
  op.regs.rs3 = static_cast<uint8_t>((word.raw >> kRs3Shift) & 0x1f);
  op.rs1_val = rs1_val;
  op.rs2_val = rs2_val;
  op.rs3_val = rs3_val;
  return op;
}

ReserveFields reserve_fields(const DecodedOp& op) {
  ReserveFields f;
  f.md = lo(op.rs2_val);
  f.desc.base = op.rs1_val;
  f.desc.stride = hi(op.rs2_val);
  f.desc.cols = hi(op.rs3_val);
  f.desc.rows = lo(op.rs3_val);
  f.desc.eew = op.eew;
  return f;
}

}  // namespace arcane::isa
