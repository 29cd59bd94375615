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

#include <gtest/gtest.h>

#include "arcane/errors.hpp"
#include "support/kernel_cases.hpp"

namespace {

using testsupport::ElementWidth;
using testsupport::Kernel;

struct Param {
  Kernel kernel;
  ElementWidth eew;
};

std::string param_name(const testing::TestParamInfo<Param>& info) {
  static const char* names[] = {"Gemm", "LeakyRelu", "MaxPool", "Conv2d", "ConvLayer3"};
  return std::string(names[static_cast<int>(info.param.kernel)]) + "E" +
         std::to_string(arcane::isa::bits(info.param.eew));
}

class KernelOracle : public testing::TestWithParam<Param> {};

TEST_P(KernelOracle, RandomCasesMatchReference) {
  const auto [kernel, eew] = GetParam();
  testsupport::Rng rng(0x5eed0000u + static_cast<uint32_t>(kernel) * 16 + arcane::isa::bits(eew));
  for (int i = 0; i < 200; ++i) {
    const auto c = testsupport::random_case(kernel, eew, rng);
    testsupport::CaseRun r;
    try {
      r = testsupport::run_case(c);
    } catch (const arcane::Error& e) {
      FAIL() << "case " << i << " (" << c.label << "): " << e.what();
    }
    ASSERT_EQ(r.actual.v, c.expected.v) << "case " << i << " (" << c.label << ")";
    ASSERT_TRUE(r.gaps_intact) << "case " << i << " (" << c.label << ")";
  }
}

std::vector<Param> all_params() {
  std::vector<Param> out;
  for (Kernel k : {Kernel::kGemm, Kernel::kLeakyRelu, Kernel::kMaxPool, Kernel::kConv2d,
                   Kernel::kConvLayer3}) {
    for (ElementWidth e : {ElementWidth::kByte, ElementWidth::kHalf, ElementWidth::kWord}) {
      out.push_back({k, e});
    }
  }
  return out;
}

INSTANTIATE_TEST_SUITE_P(AllKernels, KernelOracle, testing::ValuesIn(all_params()), param_name);

TEST(KernelExamples, GemmIdentityCopiesOperand) {
  testsupport::KernelCase c;
  c.kernel = Kernel::kGemm;
  c.eew = ElementWidth::kWord;
  auto desc = [](uint32_t base, uint32_t r, uint32_t col) {
    arcane::isa::MatrixDescriptor d;
    d.base = base;
    d.rows = r;
    d.cols = col;
    return d;
  };
  c.ops = {{2, desc(0x3000, 2, 3), oracle::Mat(2, 3)},
           {0, desc(0x1000, 2, 2), oracle::Mat(2, 2, {1, 0, 0, 1})},
           {1, desc(0x2000, 2, 3), oracle::Mat(2, 3, {7, -8, 9, 10, 11, -12})}};
  c.halves = {1, 0, 0, 2, 0, 1};
  const auto r = testsupport::run_case(c);
  EXPECT_EQ(r.actual.v, (std::vector<int64_t>{7, -8, 9, 10, 11, -12}));
}

TEST(KernelExamples, LeakyReluScalesNegatives) {
  testsupport::KernelCase c;
  c.kernel = Kernel::kLeakyRelu;
  c.eew = ElementWidth::kWord;
  arcane::isa::MatrixDescriptor in;
  in.base = 0x1000;
  in.rows = 1;
  in.cols = 2;
  auto out = in;
  out.base = 0x2000;
  c.ops = {{1, out, oracle::Mat(1, 2)}, {0, in, oracle::Mat(1, 2, {-1, 5})}};
  c.halves = {2, 0, 0, 1, 0, 0};
  EXPECT_EQ(testsupport::run_case(c).actual.v, (std::vector<int64_t>{-2, 5}));
}

TEST(KernelExamples, ConvLayerOnSmallInt8Input) {
  testsupport::Rng rng(8);
  arcane::SimConfig cfg;
  for (int i = 0; i < 20; ++i) {
    testsupport::KernelCase c;
    c.kernel = Kernel::kConvLayer3;
    c.eew = ElementWidth::kByte;
    arcane::isa::MatrixDescriptor a, f, r;
    a.eew = f.eew = r.eew = ElementWidth::kByte;
    a.base = 0x1000;
    a.rows = 24;
    a.cols = 8;
    f.base = 0x2000;
    f.rows = 9;
    f.cols = 3;
    r.base = 0x3000;
    r.rows = 3;
    r.cols = 3;
    c.ops = {{2, r, oracle::Mat(3, 3)},
             {0, a, testsupport::random_mat(rng, 24, 8, 8)},
             {1, f, testsupport::random_mat(rng, 9, 3, 8)}};
    c.halves = {0, 0, 0, 2, 0, 1};
    const auto got = testsupport::run_case(c, cfg);
    EXPECT_EQ(got.actual.v, oracle::conv_layer3(c.ops[1].init, c.ops[2].init, 8).v);
  }
}

}  // namespace
