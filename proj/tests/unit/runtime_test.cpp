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

#include "arcane/runtime.hpp"

#include <gtest/gtest.h>

#include <limits>
#include <memory>

#include "arcane/errors.hpp"
#include "arcane/harness.hpp"
#include "arcane/simulator.hpp"
#include "oracle/reference.hpp"

namespace {

using namespace arcane;
using isa::ElementWidth;

// Runtime with its cache and VPUs, driven by hand.
struct Rig {
  explicit Rig(SimConfig c = {}) : cfg(c), mem(c.memory_size), cache(cfg, mem) {
    for (uint32_t v = 0; v < cfg.num_vpus; ++v) {
      vpus.emplace_back(v, cache, cfg.vregs_per_vpu, cfg.lanes, cfg.issue_cycles);
    }
    rt = std::make_unique<Runtime>(cfg, cache, vpus,
                                   std::make_shared<KernelLibrary>(KernelLibrary::builtin()));
  }

  // Offloads one statement and advances until the decode outcome is known.
  DecodeOutcome offload(const std::string& line) {
    const auto e = assemble_offload(line);
    rt->latch(isa::decode(e.word, e.values[0], e.values[1], e.values[2]), now);
    rt->step(now);
    while (rt->outcome() == DecodeOutcome::kPending) {
      const uint64_t next = rt->next_event();
      if (next == std::numeric_limits<uint64_t>::max()) break;
      now = next;
      rt->retire(now);
      rt->step(now);
    }
    const DecodeOutcome o = rt->outcome();
    rt->acknowledge();
    return o;
  }

  SimConfig cfg;
  MainMemory mem;
  CacheController cache;
  std::vector<Vpu> vpus;
  std::unique_ptr<Runtime> rt;
  uint64_t now = 0;
};

uint32_t valid_at_entries(const CacheController& c) {
  uint32_t n = 0;
  for (const auto& a : c.address_table()) n += a.valid ? 1 : 0;
  return n;
}

TEST(Runtime, ReserveThenGemmIsAccepted) {
  Rig rig;
  EXPECT_EQ(rig.offload("xmr.w m0, 0x1000, 1, 4, 4"), DecodeOutcome::kAccepted);
  EXPECT_EQ(rig.offload("xmr.w m1, 0x2000, 1, 4, 4"), DecodeOutcome::kAccepted);
  EXPECT_EQ(rig.offload("xmr.w m2, 0x3000, 1, 4, 4"), DecodeOutcome::kAccepted);
  EXPECT_EQ(rig.offload("xmk0.w m2, m0, m1"), DecodeOutcome::kAccepted);
  EXPECT_EQ(rig.rt->queue().size() + (rig.rt->kernel_running() ? 1 : 0), 1u);
  EXPECT_EQ(valid_at_entries(rig.cache), 3u);  // md, ms1, ms2
  EXPECT_EQ(rig.offload("xmr.w m3, 0x4000, 1, 4, 4"), DecodeOutcome::kAccepted);
  EXPECT_EQ(rig.offload("xmk0.w m3, m0, m1, m2, 1, 2"), DecodeOutcome::kAccepted);
  // m0 and m1 share slots; m2 now also appears as a source, m3 as a destination.
  EXPECT_EQ(valid_at_entries(rig.cache), 5u);
}

TEST(Runtime, UnregisteredKernelIsRejected) {
  Rig rig;
  EXPECT_EQ(rig.offload("xmk7.w 0, 0, 0, 0, 0, 0"), DecodeOutcome::kRejected);
}

TEST(Runtime, ShapeMismatchIsRejected) {
  Rig rig;
  rig.offload("xmr.w m0, 0x1000, 1, 4, 4");
  rig.offload("xmr.w m1, 0x2000, 1, 3, 4");
  rig.offload("xmr.w m2, 0x3000, 1, 4, 4");
  EXPECT_EQ(rig.offload("xmk0.w m2, m0, m1"), DecodeOutcome::kRejected);
  EXPECT_EQ(rig.offload("xmk1.w m2, m9, 1"), DecodeOutcome::kRejected);  // unbound source
  EXPECT_EQ(valid_at_entries(rig.cache), 0u);
}

TEST(Runtime, ReserveDefersLoading) {
  Rig rig;
  rig.offload("xmr.w m0, 0x1000, 1, 4, 4");
  EXPECT_TRUE(rig.rt->traffic().empty());
  EXPECT_TRUE(rig.rt->matrix_map().bound(0));
  EXPECT_FALSE(rig.rt->matrix_map().phys(*rig.rt->matrix_map().phys_of(0)).residency.has_value());
}

TEST(Runtime, SchedulerPicksFewestDirtyLines) {
  SimConfig cfg;
  cfg.num_vpus = 2;
  Rig rig(cfg);
  // Three dirty lines on VPU 0, one on VPU 1.
  auto dirty = [&](uint32_t line, uint32_t addr) {
    rig.cache.host_access(addr, true, 4, 1);
    rig.cache.end_host_op();
    ASSERT_EQ(rig.cache.lookup(addr), line);
  };
  for (uint32_t l = 0; l < 32; ++l) dirty(l, l * 1024);  // fills VPU 0 lines in order
  for (uint32_t l = 32; l < 64; ++l) {
    rig.cache.host_access(l * 1024, false, 4);
    rig.cache.end_host_op();
  }
  EXPECT_EQ(rig.rt->select_vpu(), 1u);
  rig.cache.flush();
  EXPECT_EQ(rig.rt->select_vpu(), 0u);  // tie -> lowest id
}

TEST(Runtime, AllocateSmallMatrixUsesOneRegister) {
  Rig rig;
  rig.offload("xmr.w m0, 0x1000, 1, 4, 4");
  rig.rt->allocate_matrix(0, 0);
  const auto& p = rig.rt->matrix_map().phys(*rig.rt->matrix_map().phys_of(0));
  ASSERT_TRUE(p.residency.has_value());
  EXPECT_EQ(p.residency->view.vregs.size(), 1u);
  ASSERT_EQ(rig.rt->traffic().size(), 1u);
  EXPECT_EQ(rig.rt->traffic()[0].bytes, 64u);
}

TEST(Runtime, AllocateFourRowsPerRegister) {
  Rig rig;
  rig.offload("xmr.w m0, 0x10000, 1, 64, 64");
  const uint64_t cycles = rig.rt->allocate_matrix(0, 0);
  const auto& p = rig.rt->matrix_map().phys(*rig.rt->matrix_map().phys_of(0));
  EXPECT_EQ(p.residency->view.vregs.size(), 16u);
  EXPECT_EQ(p.residency->view.rows_per_vreg, 4u);
  EXPECT_EQ(rig.rt->traffic()[0].bytes, 64u * 256u);
  // 64 rows of 256 bytes.
  EXPECT_GE(cycles, rig.cfg.dma.transfer_cycles(64, 256));
}

TEST(Runtime, AllocateRowWiderThanRegister) {
  Rig rig;
  rig.offload("xmr.w m0, 0x10000, 1, 300, 300");
  try {
    rig.rt->allocate_matrix(0, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kCapacityExceeded);
  }
}

TEST(Runtime, WritebackTwiceIsNotResident) {
  Rig rig;
  rig.mem.write(0x1000, 4, 42);
  rig.offload("xmr.w m0, 0x1000, 1, 4, 4");
  rig.rt->allocate_matrix(0, 0);
  rig.rt->writeback_matrix(0, 0);
  EXPECT_EQ(rig.cache.peek(0x1000, 4), 42u);
  try {
    rig.rt->writeback_matrix(0, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kNotResident);
  }
}

TEST(Runtime, WritebackPreservesHostBytesOutsideOperand) {
  Rig rig;
  rig.mem.write(0x1000, 4, 7);
  rig.offload("xmr.w m0, 0x1000, 1, 1, 1");
  rig.rt->allocate_matrix(0, 0);
  rig.cache.host_access(0x1004, true, 4, 0x1234);  // same line, outside the operand
  rig.cache.end_host_op();
  rig.rt->writeback_matrix(0, 0);
  EXPECT_EQ(rig.cache.peek(0x1004, 4), 0x1234u);
  EXPECT_EQ(rig.cache.peek(0x1000, 4), 7u);
}

TEST(Runtime, QueueFullStallsOffload) {
  SimConfig cfg;
  cfg.queue_depth = 1;
  const auto w = parse_workload(R"(
[data]
matrix A 0x1000 8 8 w random seed=3
matrix B 0x2000 8 8 w
matrix C 0x3000 8 8 w
matrix D 0x4000 8 8 w
[program]
xmr.w m0, A
xmr.w m1, B
xmr.w m2, C
xmr.w m3, D
xmk1.w m1, m0, 2
xmk1.w m2, m0, 3
xmk1.w m3, m0, 4
)", "queue", ".", cfg);
  const auto r = run_workload(w);
  const auto a = r.matrices.at("A");
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(r.matrices.at("D")[i], oracle::leaky_relu(oracle::Mat(1, 1, {a[i]}), 4, 32).v[0]);
  }
  EXPECT_EQ(r.report.kernels, 3u);
}

TEST(Runtime, RenamingKeepsQueuedKernelsOnTheirBindings) {
  const auto w = parse_workload(R"(
[data]
matrix A1 0x1000 4 4 w random seed=1 min=-9 max=9
matrix A2 0x2000 4 4 w random seed=2 min=-9 max=9
matrix B  0x3000 4 4 w random seed=3 min=-9 max=9
matrix D1 0x4000 4 4 w
matrix D2 0x5000 4 4 w
[program]
xmr.w m0, A1
xmr.w m1, B
xmr.w m2, D1
xmk0.w m2, m0, m1
xmr.w m0, A2
xmr.w m2, D2
xmk0.w m2, m0, m1
)");
  const auto r = run_workload(w);
  auto mat = [&](const char* n) { return oracle::Mat(4, 4, r.matrices.at(n)); };
  EXPECT_EQ(r.matrices.at("D1"), oracle::gemm(mat("A1"), mat("B"), nullptr, 1, 0, 32).v);
  EXPECT_EQ(r.matrices.at("D2"), oracle::gemm(mat("A2"), mat("B"), nullptr, 1, 0, 32).v);
}

TEST(Runtime, ChainedDestinationIsNotWrittenBackEarly) {
  const auto w = parse_workload(R"(
[data]
matrix A 0x1000 4 4 w random seed=1 min=-5 max=5
matrix B 0x2000 4 4 w random seed=2 min=-5 max=5
matrix C 0x3000 4 4 w
matrix D 0x4000 4 4 w
[program]
xmr.w m0, A
xmr.w m1, B
xmr.w m2, C
xmk0.w m2, m0, m1
xmr.w m3, D
xmk1.w m3, m2, -2
)");
  Simulator sim(w.config);
  for (const auto& m : w.matrices) sim.write_matrix(m.desc, m.values);
  sim.run(w.program);
  // C's write-back comes after D's: nothing reached memory between the kernels.
  const auto& t = sim.runtime().traffic();
  std::optional<std::size_t> c_wb, d_wb;
  const uint32_t c_phys = *sim.runtime().matrix_map().phys_of(2);
  const uint32_t d_phys = *sim.runtime().matrix_map().phys_of(3);
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i].direction != DmaDirection::kVpuToMem) continue;
    if (t[i].phys == c_phys) c_wb = i;
    if (t[i].phys == d_phys) d_wb = i;
  }
  ASSERT_TRUE(c_wb && d_wb);
  EXPECT_GT(*c_wb, *d_wb);
  std::size_t c_loads = 0;
  for (const auto& rec : t) c_loads += rec.phys == c_phys && rec.direction == DmaDirection::kMemToVpu;
  EXPECT_EQ(c_loads, 0u);
  const oracle::Mat a(4, 4, sim.read_matrix(w.matrices[0].desc));
  const oracle::Mat b(4, 4, sim.read_matrix(w.matrices[1].desc));
  const auto c = oracle::gemm(a, b, nullptr, 1, 0, 32);
  EXPECT_EQ(sim.read_matrix(w.matrices[2].desc), c.v);
  EXPECT_EQ(sim.read_matrix(w.matrices[3].desc), oracle::leaky_relu(c, -2, 32).v);
}

TEST(Runtime, IdleCyclesAccumulateWithEmptyQueue) {
  const auto w = parse_workload("[program]\nbusy 100\n");
  const auto r = run_workload(w);
  EXPECT_EQ(r.report.total_cycles, 100u);
  EXPECT_EQ(r.report.ecpu_idle, 100u);
}

TEST(Runtime, PhaseAccounting) {
  const auto r = run_workload(conv_layer_workload(16, 3, ElementWidth::kWord, SimConfig{}));
  EXPECT_EQ(r.report.preamble, 4u * SimConfig{}.decode_cycles);
  EXPECT_GT(r.report.allocation, 0u);
  EXPECT_GT(r.report.compute, 0u);
  EXPECT_GT(r.report.writeback, 0u);
}

TEST(Runtime, LibraryAcceptsUserKernels) {
  KernelLibrary lib = KernelLibrary::builtin();
  const auto* leaky = lib.find(1);
  ASSERT_NE(leaky, nullptr);
  lib.add(9, *leaky);
  EXPECT_NE(lib.find(9), nullptr);
  EXPECT_EQ(lib.find(7), nullptr);
  EXPECT_THROW(lib.add(31, *leaky), Error);
  SimConfig cfg;
  Simulator sim(cfg, std::make_shared<KernelLibrary>(lib));
  isa::MatrixDescriptor d;
  d.base = 0x1000;
  d.rows = 1;
  d.cols = 2;
  auto o = d;
  o.base = 0x2000;
  sim.write_matrix(d, {-3, 4});
  HostProgram p;
  p.events.push_back(HostEvent::offload(isa::encode_xmr(0, d)));
  p.events.push_back(HostEvent::offload(isa::encode_xmr(1, o)));
  isa::OperandHalves h{};
  h[isa::kHiRs1] = 5;
  h[isa::kLoRs2] = 1;
  h[isa::kHiRs3] = 0;
  p.events.push_back(HostEvent::offload(isa::encode_xmk(9, ElementWidth::kWord, h)));
  sim.run(p);
  EXPECT_EQ(sim.read_matrix(o), (std::vector<int64_t>{-15, 4}));
}

}  // namespace
