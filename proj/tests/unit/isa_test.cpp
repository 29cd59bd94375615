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

#include <gtest/gtest.h>

#include <random>

#include "arcane/errors.hpp"

namespace {

using namespace arcane;
using isa::ElementWidth;

template <typename F>
Errc error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::kDeadlock;
}

TEST(Isa, EncodeReserveExample) {
  isa::MatrixDescriptor d;
  d.base = 0x00010000;
  d.stride = 1;
  d.rows = 4;
  d.cols = 4;
  const auto e = isa::encode_xmr(2, d);
  EXPECT_EQ(e.word.raw, 0xF86283DBu);
  EXPECT_EQ(e.values[0], 0x00010000u);
  EXPECT_EQ(e.values[1], 0x00010002u);
  EXPECT_EQ(e.values[2], 0x00040004u);
}

TEST(Isa, EncodeMinimalReserve) {
  isa::MatrixDescriptor d;
  const auto e = isa::encode_xmr(0, d);
  EXPECT_EQ(e.values[1], 0x00010000u);
  EXPECT_EQ(e.values[2], 0x00010001u);
}

TEST(Isa, ReserveFieldOverflow) {
  isa::MatrixDescriptor d;
  d.stride = 70000;
  EXPECT_EQ(error_of([&] { isa::encode_xmr(0, d); }), Errc::kFieldOverflow);
  d.stride = 1;
  EXPECT_EQ(error_of([&] { isa::encode_xmr(0x10000, d); }), Errc::kFieldOverflow);
}

TEST(Isa, EncodeGemmWord) {
  const auto e = isa::encode_xmk(0, ElementWidth::kWord, {});
  EXPECT_EQ(e.word.raw, 0x006283DBu);
  EXPECT_EQ(e.values, (std::array<uint32_t, 3>{0, 0, 0}));
}

TEST(Isa, EncodeMaxPoolPacking) {
  isa::OperandHalves h{};
  h[isa::kHiRs1] = 2;  // stride
  h[isa::kLoRs1] = 2;  // window
  h[isa::kLoRs2] = 3;  // md
  h[isa::kHiRs3] = 1;  // ms1
  const auto e = isa::encode_xmk(2, ElementWidth::kWord, h);
  EXPECT_EQ(e.values[0], 0x00020002u);
  EXPECT_EQ(e.values[1], 0x00000003u);
  EXPECT_EQ(e.values[2], 0x00010000u);
}

TEST(Isa, KernelIdThirtyOneIsReserved) {
  EXPECT_EQ(error_of([] { isa::encode_xmk(31, ElementWidth::kWord, {}); }), Errc::kBadKernelId);
}

TEST(Isa, DecodeExamples) {
  const auto op = isa::decode({0x006283DBu}, 0, 0, 0);
  EXPECT_EQ(op.func5, 0);
  EXPECT_EQ(op.eew, ElementWidth::kWord);
  EXPECT_EQ(op.halves(), isa::OperandHalves{});

  const auto r = isa::decode({0xF86283DBu}, 0x00010000, 0, 0);
  EXPECT_TRUE(r.is_reserve());
  EXPECT_EQ(r.halves()[isa::kHiRs1], 0x0001);
  EXPECT_EQ(r.halves()[isa::kLoRs1], 0x0000);
}

TEST(Isa, DecodeRejectsForeignOpcode) {
  EXPECT_EQ(error_of([] { isa::decode({0x00000033u}, 0, 0, 0); }), Errc::kNotXmnmc);
}

TEST(Isa, DecodeRejectsReservedWidth) {
  const uint32_t w = 0x006283DBu | (3u << 25);
  EXPECT_EQ(error_of([&] { isa::decode({w}, 0, 0, 0); }), Errc::kInvalidEew);
}

TEST(Isa, FieldLayout) {
  const auto w = isa::make_word(9, ElementWidth::kByte, {1, 2, 3}).raw;
  EXPECT_EQ(w >> 27, 9u);
  EXPECT_EQ((w >> 25) & 3, 2u);
  EXPECT_EQ((w >> 20) & 31, 2u);
  EXPECT_EQ((w >> 15) & 31, 1u);
  EXPECT_EQ((w >> 12) & 7, 0u);
  EXPECT_EQ((w >> 7) & 31, 3u);
  EXPECT_EQ(w & 0x7f, 0x5bu);
}

TEST(Isa, SuffixMapping) {
  EXPECT_EQ(isa::suffix(ElementWidth::kWord), 'w');
  EXPECT_EQ(isa::suffix(ElementWidth::kHalf), 'h');
  EXPECT_EQ(isa::suffix(ElementWidth::kByte), 'b');
  EXPECT_EQ(isa::width_from_suffix('h'), ElementWidth::kHalf);
  EXPECT_FALSE(isa::width_from_suffix('q').has_value());
  EXPECT_EQ(isa::width_from_bits(8), ElementWidth::kByte);
  EXPECT_FALSE(isa::width_from_bits(64).has_value());
}

TEST(Isa, DescriptorExtent) {
  isa::MatrixDescriptor d;
  d.rows = 3;
  d.cols = 4;
  d.stride = 6;
  d.eew = ElementWidth::kHalf;
  EXPECT_EQ(d.byte_extent(), uint64_t{(2 * 6 + 4) * 2});
  d.stride = 1;
  EXPECT_EQ(d.byte_extent(), uint64_t{12 * 2});
  d.stride = 3;
  EXPECT_EQ(error_of([&] { d.validate(); }), Errc::kShapeMismatch);
  d.stride = 0;
  d.base = 0xfffffff0u;
  EXPECT_EQ(error_of([&] { d.validate(); }), Errc::kShapeMismatch);
}

// ---- properties ----------------------------------------------------------------

TEST(IsaProperty, KernelRoundtripExhaustiveOverFunc5AndWidth) {
  std::mt19937 g(1);
  for (uint32_t n = 0; n <= 30; ++n) {
    for (auto eew : {ElementWidth::kWord, ElementWidth::kHalf, ElementWidth::kByte}) {
      for (int i = 0; i < 200; ++i) {
        isa::OperandHalves h;
        for (auto& x : h) x = static_cast<uint16_t>(g());
        const isa::RegisterIndices regs{static_cast<uint8_t>(g() % 32), static_cast<uint8_t>(g() % 32),
                                        static_cast<uint8_t>(g() % 32)};
        const auto e = isa::encode_xmk(n, eew, h, regs);
        ASSERT_EQ(e.word.raw & 0x7f, isa::kOpcode);
        const auto d = isa::decode(e.word, e.values[0], e.values[1], e.values[2]);
        ASSERT_EQ(d.func5, n);
        ASSERT_EQ(d.eew, eew);
        ASSERT_EQ(d.regs, regs);
        ASSERT_EQ(d.halves(), h);
      }
    }
  }
}

TEST(IsaProperty, ReserveRoundtrip) {
  std::mt19937 g(2);
  for (int i = 0; i < 100000; ++i) {
    isa::MatrixDescriptor d;
    d.base = g();
    d.stride = g() & 0xffff;
    d.rows = g() & 0xffff;
    d.cols = g() & 0xffff;
    d.eew = static_cast<ElementWidth>(g() % 3);
    const uint32_t md = g() & 0xffff;
    const auto e = isa::encode_xmr(md, d);
    const auto f = isa::reserve_fields(isa::decode(e.word, e.values[0], e.values[1], e.values[2]));
    ASSERT_EQ(f.md, md);
    ASSERT_EQ(f.desc, d);
  }
}

TEST(IsaProperty, HalvesConcatenateBack) {
  std::mt19937 g(3);
  for (int i = 0; i < 100000; ++i) {
    const uint32_t v = g();
    ASSERT_EQ(isa::pack(isa::hi(v), isa::lo(v)), v);
  }
}

}  // namespace
