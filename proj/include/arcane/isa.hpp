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

// Encoder/decoder for the xmnmc matrix extension (custom-2 major opcode).
//
// Word layout:
//
//   31     27 26 25 24   20 19   15 14  12 11    7 6       0
//  +---------+-----+-------+-------+------+-------+---------+
//  |  func5  | eew |  rs2  |  rs1  | 000  |  rs3  | 1011011 |
//  +---------+-----+-------+-------+------+-------+---------+
//
// eew: 00 = .w (32-bit), 01 = .h (16-bit), 10 = .b (8-bit), 11 reserved.
// func5 0..30 selects kernel xmkN, 31 is the matrix reserve xmr.
//
// Each register operand carries two 16-bit fields, hi = bits [31:16] and
// lo = bits [15:0]. Their meaning per instruction:
//
//   mnemonic  hi(rs1) lo(rs1) hi(rs2) lo(rs2) hi(rs3) lo(rs3)
//   xmr       hi(&A)  lo(&A)  stride  md      cols    rows
//   xmk0      alpha   beta    ms3     md      ms1     ms2      GeMM
//   xmk1      alpha   -       -       md      ms1     -        LeakyReLU
//   xmk2      stride  win     -       md      ms1     -        max pooling
//   xmk3      -       -       -       md      ms1     ms2      2D conv
//   xmk4      -       -       -       md      ms1     ms2      3-ch conv layer

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace arcane::isa {

inline constexpr uint32_t kOpcode = 0x5b;
inline constexpr uint32_t kReserveFunc5 = 31;
inline constexpr uint32_t kMaxKernelId = 30;

enum class ElementWidth : uint8_t { kWord = 0, kHalf = 1, kByte = 2 };

constexpr unsigned bits(ElementWidth eew) {
  switch (eew) {
    case ElementWidth::kWord: return 32;
    case ElementWidth::kHalf: return 16;
    case ElementWidth::kByte: return 8;
  }
  return 32;
}
constexpr unsigned bytes(ElementWidth eew) { return bits(eew) / 8; }

// ".w" / ".h" / ".b"
char suffix(ElementWidth eew);
std::optional<ElementWidth> width_from_suffix(char c);
std::optional<ElementWidth> width_from_bits(unsigned b);

// Well-known kernel ids.
enum class Kernel : uint8_t {
  kGemm = 0,
  kLeakyRelu = 1,
  kMaxPool = 2,
  kConv2d = 3,
  kConvLayer3 = 4,
};

struct InstructionWord {
  uint32_t raw = 0;
  friend bool operator==(InstructionWord, InstructionWord) = default;
};

struct RegisterIndices {
  uint8_t rs1 = 5;
  uint8_t rs2 = 6;
  uint8_t rs3 = 7;
  friend bool operator==(const RegisterIndices&, const RegisterIndices&) = default;
};

// Six 16-bit operand fields in table order:
// hi(rs1), lo(rs1), hi(rs2), lo(rs2), hi(rs3), lo(rs3).
using OperandHalves = std::array<uint16_t, 6>;

enum Half : std::size_t { kHiRs1 = 0, kLoRs1, kHiRs2, kLoRs2, kHiRs3, kLoRs3 };

constexpr uint16_t hi(uint32_t v) { return static_cast<uint16_t>(v >> 16); }
constexpr uint16_t lo(uint32_t v) { return static_cast<uint16_t>(v & 0xffff); }
constexpr uint32_t pack(uint16_t h, uint16_t l) { return (uint32_t{h} << 16) | l; }

struct DecodedOp {
  uint8_t func5 = 0;
  ElementWidth eew = ElementWidth::kWord;
  RegisterIndices regs;
  uint32_t rs1_val = 0;
  uint32_t rs2_val = 0;
  uint32_t rs3_val = 0;

  bool is_reserve() const { return func5 == kReserveFunc5; }
  OperandHalves halves() const;

  friend bool operator==(const DecodedOp&, const DecodedOp&) = default;
};

// A matrix bound by xmr. `stride` is the row pitch in elements; the values 0
// and 1 select a densely packed matrix (pitch == cols), which is how dense C
// arrays are reserved in practice.
struct MatrixDescriptor {
  uint32_t base = 0;
  uint32_t stride = 1;
  uint32_t rows = 1;
  uint32_t cols = 1;
  ElementWidth eew = ElementWidth::kWord;

  uint32_t row_pitch() const { return stride <= 1 ? cols : stride; }
  uint32_t element_bytes() const { return bytes(eew); }
  uint32_t row_bytes() const { return cols * element_bytes(); }
  uint32_t pitch_bytes() const { return row_pitch() * element_bytes(); }
  // ((rows - 1) * pitch + cols) * eew / 8
  uint64_t byte_extent() const;
  // Inclusive last byte address.
  uint32_t last_byte() const { return base + static_cast<uint32_t>(byte_extent()) - 1; }
  uint32_t element_address(uint32_t r, uint32_t c) const {
    return base + (r * row_pitch() + c) * element_bytes();
  }

  // Throws Error(kShapeMismatch) when rows/cols are zero, the pitch is below
  // cols, or the extent wraps the 32-bit address space.
  void validate() const;

  friend bool operator==(const MatrixDescriptor&, const MatrixDescriptor&) = default;
};

struct Encoded {
  InstructionWord word;
  std::array<uint32_t, 3> values{};  // rs1, rs2, rs3
};

InstructionWord make_word(uint32_t func5, ElementWidth eew, RegisterIndices regs);

// Throws Error(kFieldOverflow) when md, stride, rows or cols exceed 16 bits.
Encoded encode_xmr(uint32_t md, const MatrixDescriptor& desc, RegisterIndices regs = {});

// Throws Error(kBadKernelId) for n > 30.
Encoded encode_xmk(uint32_t n, ElementWidth eew, const OperandHalves& halves,
                   RegisterIndices regs = {});

// Throws Error(kNotXmnmc) or Error(kInvalidEew).
DecodedOp decode(InstructionWord word, uint32_t rs1_val, uint32_t rs2_val, uint32_t rs3_val);

// Field views of a decoded reserve.
struct ReserveFields {
  uint32_t md;
  MatrixDescriptor desc;
};
ReserveFields reserve_fields(const DecodedOp& op);

}  // namespace arcane::isa
