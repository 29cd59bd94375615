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

// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "arcane/errors.hpp"
#include "arcane/harness.hpp"
#include "arcane/isa.hpp"
#include "support/cache_traces.hpp"
#include "support/hazard_cases.hpp"
#include "support/kernel_cases.hpp"

namespace {

using namespace arcane;
using isa::ElementWidth;
using isa::Kernel;

struct Verdict {
  bool pass = true;
  std::string detail;
};

Verdict fail(std::string why) { return {false, std::move(why)}; }

constexpr ElementWidth kWidths[] = {ElementWidth::kByte, ElementWidth::kHalf, ElementWidth::kWord};

Verdict kernel_oracle() {
  int cases = 0;
  for (Kernel k : {Kernel::kGemm, Kernel::kLeakyRelu, Kernel::kMaxPool, Kernel::kConv2d,
                   Kernel::kConvLayer3}) {
    for (ElementWidth e : kWidths) {
      testsupport::Rng rng(0xacce0000u + static_cast<uint32_t>(k) * 16 + isa::bits(e));
      for (int i = 0; i < 200; ++i, ++cases) {
        const auto c = testsupport::random_case(k, e, rng);
        try {
          const auto r = testsupport::run_case(c);
          if (r.actual.v != c.expected.v) return fail(fmt::format("mismatch on {}", c.label));
          if (!r.gaps_intact) return fail(fmt::format("row padding clobbered on {}", c.label));
        } catch (const Error& err) {
          return fail(fmt::format("{}: {}", c.label, err.what()));
        }
      }
    }
  }
  return {true, fmt::format("{} cases bit-exact", cases)};
}

Verdict hazards() {
  testsupport::Rng rng(0xacce5501u);
  std::array<uint64_t, kStallReasons> seen{};
  constexpr int kCases = 600;
  for (int i = 0; i < kCases; ++i) {
    const auto c = testsupport::random_hazard_case(rng);
    try {
      const auto r = testsupport::check_hazard_case(c);
      if (!r.ok) return fail(fmt::format("case {}: {}", i, r.detail));
      for (std::size_t k = 0; k < seen.size(); ++k) seen[k] += r.stalls[k];
    } catch (const Error& err) {
      return fail(fmt::format("case {}: {}", i, err.what()));
    }
  }
  auto n = [&](StallReason s) { return seen[static_cast<std::size_t>(s)]; };
  if (n(StallReason::kRaw) == 0 || n(StallReason::kWar) == 0 || n(StallReason::kWaw) == 0) {
    return fail("generator did not provoke every hazard kind");
  }
  return {true, fmt::format("{} interleavings serializable (RAW {}, WAR {}, WAW {}, locked {})", kCases,
                            n(StallReason::kRaw), n(StallReason::kWar), n(StallReason::kWaw),
                            n(StallReason::kLocked))};
}

Verdict cache_policy() {
  int traces = 0;
  for (uint32_t seed = 1; seed <= 4; ++seed, ++traces) {
    if (auto e = testsupport::lru_trace(8, seed, 10000, false); !e.empty()) return fail(e);
  }
  if (auto e = testsupport::lru_trace(32, 21, 10000, false); !e.empty()) return fail(e);
  ++traces;
  for (uint32_t seed = 11; seed <= 14; ++seed, ++traces) {
    if (auto e = testsupport::lru_trace(8, seed, 10000, true); !e.empty()) return fail(e);
  }
  return {true, fmt::format("{} traces of 10^4 accesses match the LRU model", traces)};
}

Verdict isa_roundtrip() {
  std::mt19937 g(0xacce);
  uint64_t checked = 0;
  for (uint32_t n = 0; n <= 30; ++n) {
    for (ElementWidth e : kWidths) {
      isa::OperandHalves h;
      for (auto& x : h) x = static_cast<uint16_t>(g());
      const auto enc = isa::encode_xmk(n, e, h);
      const auto d = isa::decode(enc.word, enc.values[0], enc.values[1], enc.values[2]);
      if (d.func5 != n || d.eew != e || d.halves() != h) return fail(fmt::format("xmk{} .{}", n, isa::suffix(e)));
      ++checked;
    }
  }
  for (int i = 0; i < 100000; ++i, ++checked) {
    if (i % 2 == 0) {
      isa::OperandHalves h;
      for (auto& x : h) x = static_cast<uint16_t>(g());
      const uint32_t n = g() % 31;
      const auto e = kWidths[g() % 3];
      const isa::RegisterIndices regs{static_cast<uint8_t>(g() % 32), static_cast<uint8_t>(g() % 32),
                                      static_cast<uint8_t>(g() % 32)};
      const auto enc = isa::encode_xmk(n, e, h, regs);
      const auto d = isa::decode(enc.word, enc.values[0], enc.values[1], enc.values[2]);
      if (d.func5 != n || d.eew != e || d.regs != regs || d.halves() != h) {
        return fail(fmt::format("kernel packing {}", i));
      }
    } else {
      isa::MatrixDescriptor desc;
      desc.base = g();
      desc.stride = g() & 0xffff;
      desc.rows = g() & 0xffff;
      desc.cols = g() & 0xffff;
      desc.eew = kWidths[g() % 3];
      const uint32_t md = g() & 0xffff;
      const auto enc = isa::encode_xmr(md, desc);
      const auto f = isa::reserve_fields(isa::decode(enc.word, enc.values[0], enc.values[1], enc.values[2]));
      if (f.md != md || !(f.desc == desc)) return fail(fmt::format("reserve packing {}", i));
    }
  }
  return {true, fmt::format("{} encodings round-trip", checked)};
}

const std::vector<uint32_t> kSizes = {8, 16, 32, 64, 128, 256};

std::string overhead_csv() {
  std::ostringstream os;
  write_overhead_csv(os, sweep_overhead(kSizes, kDefaultLanes, ElementWidth::kWord));
  return os.str();
}

std::string speedup_csv() {
  std::ostringstream os;
  write_speedup_csv(os, sweep_speedup({64, 256}, kDefaultLanes,
                                      {ElementWidth::kByte, ElementWidth::kWord}, {3, 7}));
  return os.str();
}

Verdict overhead_trends() {
  double worst_alloc = 0, pre256 = 0, wb256 = 0;
  for (uint32_t lanes : kDefaultLanes) {
    const auto pts = sweep_overhead(kSizes, {lanes}, ElementWidth::kWord);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto& f = pts[i].phases;
      worst_alloc = std::max(worst_alloc, f.f_allocation);
      if (i > 0 && f.f_preamble > pts[i - 1].phases.f_preamble) {
        return fail(fmt::format("preamble rises from {} to {} at {} lanes", pts[i - 1].size, pts[i].size, lanes));
      }
      if (f.f_allocation > 0.20) {
        return fail(fmt::format("allocation {:.2f}% at {}x{}, {} lanes", 100 * f.f_allocation,
                                pts[i].size, pts[i].size, lanes));
      }
    }
    const auto& last = pts.back().phases;
    pre256 = std::max(pre256, last.f_preamble);
    wb256 = std::max(wb256, last.f_writeback);
    if (last.f_preamble > 0.05) return fail(fmt::format("preamble {:.2f}% at 256", 100 * last.f_preamble));
    if (last.f_writeback > 0.04) return fail(fmt::format("writeback {:.2f}% at 256", 100 * last.f_writeback));
  }
  return {true, fmt::format("preamble@256 {:.3f}%, writeback@256 {:.2f}%, allocation max {:.2f}%",
                            100 * pre256, 100 * wb256, 100 * worst_alloc)};
}

Verdict speedup_trends() {
  const auto pts = sweep_speedup({256}, kDefaultLanes, {ElementWidth::kByte, ElementWidth::kWord}, {3, 7});
  auto at = [&](uint32_t lanes, ElementWidth e, uint32_t filter) -> const SpeedupPoint& {
    return *std::find_if(pts.begin(), pts.end(), [&](const SpeedupPoint& p) {
      return p.lanes == lanes && p.eew == e && p.filter == filter;
    });
  };
  const double s8 = at(8, ElementWidth::kByte, 3).speedup_scalar;
  if (s8 < 20 || s8 > 45) return fail(fmt::format("8-lane int8 3x3 speedup {:.2f}x", s8));
  for (ElementWidth e : {ElementWidth::kByte, ElementWidth::kWord}) {
    for (uint32_t f : {3u, 7u}) {
      const double s2 = at(2, e, f).speedup_scalar, s4 = at(4, e, f).speedup_scalar,
                   s8l = at(8, e, f).speedup_scalar;
      if (!(s8l >= s4 && s4 >= s2)) return fail(fmt::format("lane ordering {:.2f}/{:.2f}/{:.2f}", s2, s4, s8l));
    }
  }
  for (uint32_t lanes : kDefaultLanes) {
    for (uint32_t f : {3u, 7u}) {
      if (at(lanes, ElementWidth::kByte, f).speedup_scalar < at(lanes, ElementWidth::kWord, f).speedup_scalar) {
        return fail(fmt::format("int8 below int32 at {} lanes, {}x{}", lanes, f, f));
      }
    }
  }
  double packed_peak = 0;
  for (const auto& p : pts) packed_peak = std::max(packed_peak, p.packed_over_scalar);
  if (packed_peak > 10) return fail(fmt::format("packed SIMD peaks at {:.2f}x", packed_peak));
  const double s7 = at(8, ElementWidth::kByte, 7).speedup_scalar;
  if (s7 <= s8) return fail(fmt::format("7x7 speedup {:.2f}x not above 3x3 {:.2f}x", s7, s8));
  return {true, fmt::format("int8 3x3 8-lane {:.2f}x, 7x7 {:.2f}x, packed peak {:.2f}x", s8, s7, packed_peak)};
}

constexpr const char* kOverlapKernel = R"(
[data]
matrix A 0x10000 32 32 w random seed=1
matrix B 0x11000 32 32 w random seed=2
matrix C 0x12000 32 32 w
[program]
xmr.w m0, A
xmr.w m1, B
xmr.w m2, C
xmk0.w m2, m0, m1
)";

Verdict ooo_overlap() {
  const auto total = [](const std::string& tail) {
    return run_workload(parse_workload(std::string(kOverlapKernel) + tail, "overlap")).report.total_cycles;
  };
  const uint64_t offload = total("barrier\n");
  std::string detail;
  for (uint64_t n : {offload / 4, offload / 2, offload, 2 * offload}) {
    const uint64_t both = total(fmt::format("busy {}\nbarrier\n", n));
    const uint64_t serialized = offload + n;
    if (both > serialized) return fail(fmt::format("busy {}: {} > serialized {}", n, both, serialized));
    if (n >= offload / 2 && both == serialized) return fail(fmt::format("busy {}: no overlap", n));
    if (n == offload) detail = fmt::format("busy {}: {} vs serialized {} (overlap {})", n, both, serialized, serialized - both);
  }
  return {true, detail};
}

Verdict determinism() {
  const auto suite = [] {
    std::string out = overhead_csv() + speedup_csv();
    for (const char* wl : {kOverlapKernel}) {
      out += run_workload(parse_workload(wl, "det")).report.csv_row() + "\n";
    }
    out += run_workload(conv_layer_workload(32, 3, ElementWidth::kByte, SimConfig{}, 77)).report.csv_row();
    return out;
  };
  const std::string a = suite();
  const std::string b = suite();
  if (a != b) return fail("CSV outputs differ between runs");
  return {true, fmt::format("{} CSV bytes identical across two runs", a.size())};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"kernel oracle equivalence", kernel_oracle},
      {"hazard serializability", hazards},
      {"cache policy conformance", cache_policy},
      {"ISA roundtrip", isa_roundtrip},
      {"overhead trends", overhead_trends},
      {"speedup trends", speedup_trends},
      {"out-of-order overlap", ooo_overlap},
      {"determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = fail(e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += v.pass ? 0 : 1;
    fmt::print("{} criterion {}: {} ({}; {:.1f} s)\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
               v.detail, secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
