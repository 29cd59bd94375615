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

// Random programs mixing host loads and stores with chains of offloaded
// kernels, and a serialized executor that applies every event atomically in
// program order.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "arcane/host.hpp"
#include "arcane/isa.hpp"
#include "arcane/simulator.hpp"
#include "oracle/reference.hpp"
#include "support/kernel_cases.hpp"

namespace testsupport {

struct HazardCase {
  arcane::SimConfig cfg;
  uint32_t n = 4;                   // every area holds an n x n int32 matrix
  std::vector<uint32_t> areas;      // base addresses
  uint32_t lo = 0, hi = 0;          // byte range compared at the end
  std::vector<std::pair<uint32_t, uint32_t>> init;  // (addr, word)
  arcane::HostProgram program;
};

inline arcane::isa::MatrixDescriptor area_desc(const HazardCase& c, uint32_t a) {
  arcane::isa::MatrixDescriptor d;
  d.base = c.areas[a];
  d.rows = c.n;
  d.cols = c.n;
  d.eew = ElementWidth::kWord;
  return d;
}

inline HazardCase random_hazard_case(Rng& rng) {
  using namespace arcane;
  HazardCase c;
  c.cfg.num_vpus = rng.range(1, 4);
  c.cfg.queue_depth = rng.range(1, 8);
  c.cfg.vregs_per_vpu = 32;
  c.n = rng.range(2, 12);
  const uint32_t bytes = c.n * c.n * 4;
  uint32_t next = 0x4000 + rng.range(0, 15) * 4;
  for (int i = 0; i < 6; ++i) {
    c.areas.push_back(next);
    next += bytes + rng.range(0, 3) * 4 * rng.range(0, 40);
    next = (next + 3) & ~3u;
  }
  c.lo = 0x4000 - 64;
  c.hi = next + 64;
  for (uint32_t a = c.lo; a < c.hi; a += 4) {
    c.init.emplace_back(a, static_cast<uint32_t>(rng.range(0, 0xffffffffu)));
  }

  auto random_addr = [&](unsigned width) {
    uint32_t a;
    if (rng.chance(0.8)) {
      const uint32_t base = c.areas[rng.range(0, 5)];
      a = base + rng.range(0, bytes + 8) - 4;
    } else {
      a = rng.range(c.lo, c.hi - 4);
    }
    return a & ~(width - 1);
  };

  const uint32_t events = rng.range(6, 30);
  for (uint32_t e = 0; e < events; ++e) {
    const uint32_t roll = rng.range(0, 99);
    if (roll < 30) {
      // Offload a kernel over distinct areas (LeakyReLU may run in place).
      const uint32_t kind = rng.range(0, 2);
      std::vector<uint32_t> picks;
      const uint32_t need = kind == 1 ? (rng.chance(0.5) ? 4 : 3) : 2;
      while (picks.size() < need) {
        const uint32_t a = rng.range(0, 5);
        if (std::find(picks.begin(), picks.end(), a) == picks.end()) picks.push_back(a);
      }
      if (kind == 0 && rng.chance(0.2)) picks[1] = picks[0];
      // Distinct registers per kernel, rotating through m0..m7 so rebinding
      // hits registers still used by queued kernels.
      const uint32_t first = rng.range(0, 7);
      std::vector<uint32_t> regs;
      for (std::size_t i = 0; i < picks.size(); ++i) regs.push_back((first + static_cast<uint32_t>(i)) % 8);
      for (std::size_t i = 0; i < picks.size(); ++i) {
        c.program.events.push_back(HostEvent::offload(isa::encode_xmr(regs[i], area_desc(c, picks[i]))));
      }
      isa::OperandHalves h{};
      uint32_t func5 = 0;
      if (kind == 0) {
        func5 = 1;
        h[isa::kHiRs1] = static_cast<uint16_t>(static_cast<int16_t>(rng.irange(-3, 3)));
        h[isa::kLoRs2] = static_cast<uint16_t>(regs[0]);
        h[isa::kHiRs3] = static_cast<uint16_t>(regs[1]);
      } else if (kind == 1) {
        func5 = 0;
        h[isa::kHiRs1] = static_cast<uint16_t>(static_cast<int16_t>(rng.irange(-2, 2)));
        h[isa::kLoRs1] = need == 4 ? static_cast<uint16_t>(rng.range(1, 3)) : 0;
        h[isa::kHiRs2] = need == 4 ? static_cast<uint16_t>(regs[3]) : 0;
        h[isa::kLoRs2] = static_cast<uint16_t>(regs[0]);
        h[isa::kHiRs3] = static_cast<uint16_t>(regs[1]);
        h[isa::kLoRs3] = static_cast<uint16_t>(regs[2]);
      } else {
        func5 = 2;  // 1x1 window, stride 1: same shape
        h[isa::kHiRs1] = 1;
        h[isa::kLoRs1] = 1;
        h[isa::kLoRs2] = static_cast<uint16_t>(regs[0]);
        h[isa::kHiRs3] = static_cast<uint16_t>(regs[1]);
      }
      c.program.events.push_back(HostEvent::offload(isa::encode_xmk(func5, ElementWidth::kWord, h)));
    } else if (roll < 55) {
      const unsigned w = 1u << rng.range(0, 2);
      c.program.events.push_back(HostEvent::load(random_addr(w), w));
    } else if (roll < 85) {
      const unsigned w = 1u << rng.range(0, 2);
      c.program.events.push_back(HostEvent::store(random_addr(w), w, rng.range(0, 0xffffffffu)));
    } else if (roll < 95) {
      c.program.events.push_back(HostEvent::busy(rng.range(0, 400)));
    } else {
      c.program.events.push_back(HostEvent::barrier());
    }
  }
  return c;
}

struct SerialResult {
  std::vector<uint32_t> loads;
  oracle::FlatMemory memory;
};

// Every event takes effect atomically in program order.
inline SerialResult serial_execute(const HazardCase& c) {
  using namespace arcane;
  SerialResult out;
  for (auto [a, v] : c.init) out.memory.write(a, 4, v);
  std::vector<std::optional<isa::MatrixDescriptor>> regs(16);
  auto fdesc = [](const isa::MatrixDescriptor& d) {
    return oracle::FlatMemory::Desc{d.base, d.row_pitch(), d.rows, d.cols, isa::bits(d.eew)};
  };
  for (const auto& ev : c.program.events) {
    switch (ev.kind) {
      case HostEvent::Kind::kLoad:
        out.loads.push_back(out.memory.read(ev.addr, ev.width));
        break;
      case HostEvent::Kind::kStore:
        out.memory.write(ev.addr, ev.width, ev.value);
        break;
      case HostEvent::Kind::kOffload: {
        const isa::DecodedOp op = isa::decode(ev.word, ev.rs[0], ev.rs[1], ev.rs[2]);
        if (op.is_reserve()) {
          const auto f = isa::reserve_fields(op);
          regs[f.md] = f.desc;
          break;
        }
        const auto h = op.halves();
        auto mat = [&](uint16_t r) { return out.memory.read_matrix(fdesc(*regs[r])); };
        const auto md = *regs[h[isa::kLoRs2]];
        oracle::Mat result;
        const int64_t alpha = static_cast<int16_t>(h[isa::kHiRs1]);
        if (op.func5 == 1) {
          result = oracle::leaky_relu(mat(h[isa::kHiRs3]), alpha, 32);
        } else if (op.func5 == 0) {
          const int64_t beta = static_cast<int16_t>(h[isa::kLoRs1]);
          oracle::Mat cm;
          if (beta != 0) cm = mat(h[isa::kHiRs2]);
          result = oracle::gemm(mat(h[isa::kHiRs3]), mat(h[isa::kLoRs3]), beta != 0 ? &cm : nullptr,
                                alpha, beta, 32);
        } else {
          result = oracle::maxpool(mat(h[isa::kHiRs3]), h[isa::kHiRs1], h[isa::kLoRs1], 32);
        }
        out.memory.write_matrix(fdesc(md), result);
        break;
      }
      case HostEvent::Kind::kBusy:
      case HostEvent::Kind::kBarrier:
        break;
    }
  }
  return out;
}

struct HazardOutcome {
  bool ok = true;
  std::string detail;
  std::array<uint64_t, arcane::kStallReasons> stalls{};
};

inline HazardOutcome check_hazard_case(const HazardCase& c) {
  arcane::Simulator sim(c.cfg);
  for (auto [a, v] : c.init) sim.memory().write(a, 4, v);
  sim.run(c.program, "hazard");
  const SerialResult want = serial_execute(c);
  HazardOutcome out;
  out.stalls = sim.stall_episodes();
  const auto& got = sim.loads();
  if (got.size() != want.loads.size()) {
    out.ok = false;
    out.detail = fmt::format("{} loads, oracle has {}", got.size(), want.loads.size());
    return out;
  }
  for (std::size_t i = 0; i < got.size(); ++i) {
    if (got[i].value != want.loads[i]) {
      out.ok = false;
      out.detail = fmt::format("load {} at {:#x}: got {:#x}, serialized {:#x}", i, got[i].addr,
                               got[i].value, want.loads[i]);
      return out;
    }
  }
  for (uint32_t a = c.lo; a < c.hi; ++a) {
    const uint32_t v = sim.cache().peek(a, 1);
    if (v != want.memory.byte(a)) {
      out.ok = false;
      out.detail = fmt::format("byte {:#x}: got {:#x}, serialized {:#x}", a, v, want.memory.byte(a));
      return out;
    }
  }
  return out;
}

}  // namespace testsupport
