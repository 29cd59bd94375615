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

// Host CPU side: the program being run, the offload bridge and the analytic
// baselines used for speedup figures.

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "arcane/cache.hpp"
#include "arcane/config.hpp"
#include "arcane/isa.hpp"
#include "arcane/runtime.hpp"

namespace arcane {

struct HostEvent {
  enum class Kind : uint8_t { kLoad, kStore, kOffload, kBusy, kBarrier };
  Kind kind = Kind::kBusy;
  uint32_t addr = 0;
  unsigned width = 4;
  uint32_t value = 0;
  isa::InstructionWord word;
  std::array<uint32_t, 3> rs{};
  uint64_t cycles = 0;
  std::string text;  // source line, for diagnostics

  static HostEvent load(uint32_t addr, unsigned width);
  static HostEvent store(uint32_t addr, unsigned width, uint32_t value);
  static HostEvent offload(const isa::Encoded& e);
  static HostEvent busy(uint64_t cycles);
  static HostEvent barrier();
};

struct HostProgram {
  std::vector<HostEvent> events;
};

enum class BridgePhase : uint8_t { kIdle, kIssued, kAwaitingDecode, kAccepted, kKilled };

std::string_view bridge_phase_name(BridgePhase p);

struct LoadRecord {
  uint64_t time = 0;
  uint32_t addr = 0;
  unsigned width = 4;
  uint32_t value = 0;
};

// Executes a HostProgram against the cache and the runtime bridge. Driven by
// the simulation loop through retire/step/next_event.
class Host {
 public:
  Host(const SimConfig& cfg, CacheController& cache, Runtime& runtime, const HostProgram& prog);

  // Completes the operation ending at `now`. Returns true when ending a cache
  // access handed a deferred lock request to the eCPU.
  bool retire(uint64_t now);
  void step(uint64_t now);
  // Time of the next self-timed transition, or UINT64_MAX while waiting on
  // the cache side.
  uint64_t next_event() const;
  bool waiting() const;
  bool done() const { return state_ == State::kDone; }

  uint64_t stall_cycles() const { return stall_cycles_; }
  uint64_t local_cycles() const { return local_cycles_; }
  uint64_t offloads() const { return offloads_; }
  const std::vector<LoadRecord>& loads() const { return loads_; }
  // Blocked host accesses, counted once per episode, indexed by StallReason.
  const std::array<uint64_t, kStallReasons>& stall_episodes() const { return stall_episodes_; }
  BridgePhase bridge_phase() const { return phase_; }
  // Every bridge phase entered, in order.
  const std::vector<BridgePhase>& bridge_history() const { return history_; }

 private:
  enum class State : uint8_t { kReady, kAccess, kLocal, kHandshake, kDecode, kBlocked, kBarrier, kDone };

  void enter(BridgePhase p);
  void issue(uint64_t now);
  void try_access(uint64_t now);
  void unblock(uint64_t now);

  const SimConfig& cfg_;
  CacheController& cache_;
  Runtime& runtime_;
  const HostProgram& prog_;
  std::size_t pc_ = 0;
  State state_ = State::kReady;
  uint64_t until_ = 0;
  uint64_t blocked_since_ = 0;
  bool final_barrier_ = false;
  BridgePhase phase_ = BridgePhase::kIdle;
  std::vector<BridgePhase> history_;
  uint64_t stall_cycles_ = 0;
  uint64_t local_cycles_ = 0;
  uint64_t offloads_ = 0;
  std::vector<LoadRecord> loads_;
  std::array<uint64_t, kStallReasons> stall_episodes_{};
};

// ---- baselines -------------------------------------------------------------------

enum class BaselineModel : uint8_t { kScalar, kPackedSimd };

struct KernelShape {
  isa::Kernel kernel = isa::Kernel::kConv2d;
  uint32_t rows = 0;   // input rows (per channel for the conv layer); GeMM: R
  uint32_t cols = 0;   // input cols; GeMM: C
  uint32_t inner = 0;  // GeMM: K
  uint32_t kh = 0, kw = 0;
  uint32_t win = 2, stride = 2;
  bool beta = false;  // GeMM adds beta * ms3
};

// Operation count of the kernel; one multiply-accumulate counts as two.
uint64_t baseline_ops(const KernelShape& shape);

// scalar = ops / 2 * CPI_SCALAR_MAC;
// packed = scalar / (32 / eew) * SIMD_EFFICIENCY.
double baseline_cycles(const KernelShape& shape, isa::ElementWidth eew, BaselineModel model,
                       const SimConfig& cfg);

}  // namespace arcane
