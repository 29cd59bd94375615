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

// Randomized single-kernel cases: shapes, operand placement and the expected
// result from the scalar references.

#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "arcane/config.hpp"
#include "arcane/host.hpp"
#include "arcane/isa.hpp"
#include "arcane/simulator.hpp"
#include "oracle/reference.hpp"

namespace testsupport {

using arcane::isa::ElementWidth;
using arcane::isa::Kernel;

class Rng {
 public:
  explicit Rng(uint64_t seed) : g_(seed) {}
  uint32_t range(uint32_t lo, uint32_t hi) {
    return std::uniform_int_distribution<uint32_t>(lo, hi)(g_);
  }
  int64_t irange(int64_t lo, int64_t hi) { return std::uniform_int_distribution<int64_t>(lo, hi)(g_); }
  bool chance(double p) { return std::bernoulli_distribution(p)(g_); }
  int64_t value(unsigned bits) { return oracle::wrap(static_cast<int64_t>(g_()), bits); }
  std::mt19937_64& engine() { return g_; }

 private:
  std::mt19937_64 g_;
};

struct Operand {
  uint32_t reg = 0;
  arcane::isa::MatrixDescriptor desc;
  oracle::Mat init;
};

struct KernelCase {
  std::string label;
  Kernel kernel = Kernel::kGemm;
  ElementWidth eew = ElementWidth::kWord;
  std::vector<Operand> ops;  // ops[0] is the destination
  arcane::isa::OperandHalves halves{};
  oracle::Mat expected;
  bool in_place = false;
};

inline unsigned bits_of(ElementWidth e) { return arcane::isa::bits(e); }

// Lays matrices out one after another from `base`, each at a random element
// offset inside its first line and with an optional row-pitch gap.
class Placer {
 public:
  Placer(Rng& rng, uint32_t base, uint32_t line) : rng_(rng), next_(base), line_(line) {}

  arcane::isa::MatrixDescriptor place(uint32_t rows, uint32_t cols, ElementWidth eew) {
    arcane::isa::MatrixDescriptor d;
    const uint32_t eb = arcane::isa::bytes(eew);
    d.rows = rows;
    d.cols = cols;
    d.eew = eew;
    d.stride = rng_.chance(0.3) ? cols + rng_.range(1, 5) : (rng_.chance(0.5) ? 0 : 1);
    d.base = next_ + rng_.range(0, 31) * eb;
    const uint64_t end = d.base + d.byte_extent();
    next_ = static_cast<uint32_t>((end + line_ - 1) / line_ * line_);
    if (rng_.chance(0.3)) next_ += line_;
    return d;
  }

 private:
  Rng& rng_;
  uint32_t next_;
  uint32_t line_;
};

inline oracle::Mat random_mat(Rng& rng, uint32_t rows, uint32_t cols, unsigned bits) {
  oracle::Mat m(rows, cols);
  for (auto& v : m.v) v = rng.value(bits);
  return m;
}

// Typical shapes are small; about one case in six is wide enough to need
// column blocking.
inline uint32_t dim(Rng& rng, uint32_t small_max, uint32_t wide_max) {
  return rng.chance(0.17) ? rng.range(small_max, wide_max) : rng.range(1, small_max);
}

inline KernelCase random_case(Kernel k, ElementWidth eew, Rng& rng,
                              const arcane::SimConfig& cfg = {}) {
  using arcane::isa::kHiRs1, arcane::isa::kLoRs1, arcane::isa::kHiRs2, arcane::isa::kLoRs2,
      arcane::isa::kHiRs3, arcane::isa::kLoRs3;
  KernelCase c;
  c.kernel = k;
  c.eew = eew;
  const unsigned bits = bits_of(eew);
  Placer place(rng, cfg.data_base + 0x1000, cfg.line_bytes);

  std::vector<uint32_t> regs(cfg.matrix_registers);
  std::iota(regs.begin(), regs.end(), 0u);
  std::shuffle(regs.begin(), regs.end(), rng.engine());

  auto operand = [&](uint32_t rows, uint32_t cols) {
    Operand o;
    o.reg = regs[c.ops.size()];
    o.desc = place.place(rows, cols, eew);
    o.init = random_mat(rng, rows, cols, bits);
    c.ops.push_back(o);
    return c.ops.size() - 1;
  };
  auto h16 = [](int64_t v) { return static_cast<uint16_t>(static_cast<uint64_t>(v) & 0xffff); };

  switch (k) {
    case Kernel::kGemm: {
      const uint32_t r = dim(rng, 24, 70);
      const uint32_t kk = dim(rng, 24, 300);
      const uint32_t cc = dim(rng, 24, 300);
      const int64_t alpha = rng.chance(0.5) ? 1 : rng.irange(-300, 300);
      const int64_t beta = rng.chance(0.4) ? 0 : rng.irange(-300, 300);
      operand(r, cc);
      operand(r, kk);
      operand(kk, cc);
      if (beta != 0) operand(r, cc);
      c.halves[kHiRs1] = h16(alpha);
      c.halves[kLoRs1] = h16(beta);
      c.halves[kHiRs2] = static_cast<uint16_t>(beta != 0 ? c.ops[3].reg : 0);
      c.halves[kLoRs2] = static_cast<uint16_t>(c.ops[0].reg);
      c.halves[kHiRs3] = static_cast<uint16_t>(c.ops[1].reg);
      c.halves[kLoRs3] = static_cast<uint16_t>(c.ops[2].reg);
      c.expected = oracle::gemm(c.ops[1].init, c.ops[2].init, beta != 0 ? &c.ops[3].init : nullptr,
                                alpha, beta, bits);
      c.label = fmt::format("gemm {}x{}x{} a={} b={}", r, kk, cc, alpha, beta);
      break;
    }
    case Kernel::kLeakyRelu: {
      const uint32_t r = dim(rng, 32, 90);
      const uint32_t cc = dim(rng, 32, 700);
      const int64_t alpha = rng.irange(-9, 9);
      operand(r, cc);
      if (rng.chance(0.15)) {
        c.in_place = true;
        Operand src = c.ops[0];
        src.reg = regs[1];
        c.ops.push_back(src);
      } else {
        operand(r, cc);
      }
      c.halves[kHiRs1] = h16(alpha);
      c.halves[kLoRs2] = static_cast<uint16_t>(c.ops[0].reg);
      c.halves[kHiRs3] = static_cast<uint16_t>(c.ops[1].reg);
      c.expected = oracle::leaky_relu(c.ops[1].init, alpha, bits);
      c.label = fmt::format("leaky_relu {}x{} a={}{}", r, cc, alpha, c.in_place ? " in-place" : "");
      break;
    }
    case Kernel::kMaxPool: {
      const uint32_t win = rng.range(1, 4);
      const uint32_t stride = rng.range(1, 4);
      const uint32_t r = win + dim(rng, 30, 80) - 1;
      const uint32_t cc = win + dim(rng, 30, 600) - 1;
      const uint32_t oh = (r - win) / stride + 1;
      const uint32_t ow = (cc - win) / stride + 1;
      operand(oh, ow);
      operand(r, cc);
      c.halves[kHiRs1] = static_cast<uint16_t>(stride);
      c.halves[kLoRs1] = static_cast<uint16_t>(win);
      c.halves[kLoRs2] = static_cast<uint16_t>(c.ops[0].reg);
      c.halves[kHiRs3] = static_cast<uint16_t>(c.ops[1].reg);
      c.expected = oracle::maxpool(c.ops[1].init, stride, win, bits);
      c.label = fmt::format("maxpool {}x{} win={} stride={}", r, cc, win, stride);
      break;
    }
    case Kernel::kConv2d: {
      const uint32_t kh = rng.range(1, 5);
      const uint32_t kw = rng.range(1, 5);
      const uint32_t h = kh + dim(rng, 24, 60) - 1;
      const uint32_t w = kw + dim(rng, 24, 400) - 1;
      operand(h - kh + 1, w - kw + 1);
      operand(h, w);
      operand(kh, kw);
      c.halves[kLoRs2] = static_cast<uint16_t>(c.ops[0].reg);
      c.halves[kHiRs3] = static_cast<uint16_t>(c.ops[1].reg);
      c.halves[kLoRs3] = static_cast<uint16_t>(c.ops[2].reg);
      c.expected = oracle::conv2d(c.ops[1].init, c.ops[2].init, bits);
      c.label = fmt::format("conv2d {}x{} k={}x{}", h, w, kh, kw);
      break;
    }
    case Kernel::kConvLayer3: {
      const uint32_t kh = rng.range(1, 5);
      const uint32_t kw = rng.range(1, 5);
      const uint32_t h = kh + 1 + dim(rng, 20, 40) - 1;
      const uint32_t w = kw + 1 + dim(rng, 20, 300) - 1;
      operand((h - kh + 1) / 2, (w - kw + 1) / 2);
      operand(3 * h, w);
      operand(3 * kh, kw);
      c.halves[kLoRs2] = static_cast<uint16_t>(c.ops[0].reg);
      c.halves[kHiRs3] = static_cast<uint16_t>(c.ops[1].reg);
      c.halves[kLoRs3] = static_cast<uint16_t>(c.ops[2].reg);
      c.expected = oracle::conv_layer3(c.ops[1].init, c.ops[2].init, bits);
      c.label = fmt::format("conv_layer3 3x{}x{} k={}x{}", h, w, kh, kw);
      break;
    }
  }
  c.label += fmt::format(" e{}", bits);
  return c;
}

struct CaseRun {
  oracle::Mat actual;
  arcane::ExecutionReport report;
  bool gaps_intact = true;  // row-pitch padding of the destination untouched
};

inline std::vector<uint32_t> gap_addresses(const arcane::isa::MatrixDescriptor& d) {
  std::vector<uint32_t> out;
  const uint32_t eb = d.element_bytes();
  for (uint32_t r = 0; r + 1 < d.rows; ++r) {
    for (uint32_t c = d.cols; c < d.row_pitch(); ++c) out.push_back(d.base + (r * d.row_pitch() + c) * eb);
  }
  return out;
}

inline uint32_t gap_pattern(unsigned eb) {
  return eb == 4 ? 0x5a5a5a5au : 0x5a5a5a5au & ((1u << (8 * eb)) - 1);
}

inline arcane::HostProgram case_program(const KernelCase& c) {
  arcane::HostProgram p;
  for (const auto& o : c.ops) p.events.push_back(arcane::HostEvent::offload(arcane::isa::encode_xmr(o.reg, o.desc)));
  p.events.push_back(arcane::HostEvent::offload(
      arcane::isa::encode_xmk(static_cast<uint32_t>(c.kernel), c.eew, c.halves)));
  return p;
}

inline CaseRun run_case(const KernelCase& c, const arcane::SimConfig& cfg = {}) {
  arcane::Simulator sim(cfg);
  const auto& md = c.ops[0].desc;
  const auto gaps = gap_addresses(md);
  const unsigned eb = md.element_bytes();
  for (uint32_t a : gaps) sim.memory().write(a, eb, gap_pattern(eb));
  for (const auto& o : c.ops) sim.write_matrix(o.desc, o.init.v);
  CaseRun r;
  r.report = sim.run(case_program(c), c.label);
  r.actual = oracle::Mat(md.rows, md.cols, sim.read_matrix(md));
  for (uint32_t a : gaps) {
    if (sim.cache().peek(a, eb) != gap_pattern(eb)) r.gaps_intact = false;
  }
  return r;
}

}  // namespace testsupport
