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

// Top-level wiring of memory, cache, VPUs, runtime and host, plus the
// discrete-event loop that advances them in simulated time.

#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "arcane/cache.hpp"
#include "arcane/config.hpp"
#include "arcane/host.hpp"
#include "arcane/memory.hpp"
#include "arcane/runtime.hpp"
#include "arcane/vpu.hpp"

namespace arcane {

struct ExecutionReport {
  std::string workload;
  std::string config;
  uint64_t total_cycles = 0;
  uint64_t preamble = 0;
  uint64_t allocation = 0;
  uint64_t compute = 0;
  uint64_t writeback = 0;
  uint64_t host_stall = 0;
  uint64_t ecpu_idle = 0;

  uint64_t host_local = 0;
  uint64_t kernels = 0;
  uint64_t offloads = 0;

  static std::string csv_header();
  std::string csv_row() const;
};

struct PhaseBreakdown {
  uint64_t preamble = 0, allocation = 0, compute = 0, writeback = 0;
  double f_preamble = 0, f_allocation = 0, f_compute = 0, f_writeback = 0;

  // Fractions are relative to the sum of the four phases.
  static PhaseBreakdown from(const ExecutionReport& r);
};

class Simulator {
 public:
  explicit Simulator(const SimConfig& cfg,
                     std::shared_ptr<const KernelLibrary> library = nullptr);
  Simulator(const Simulator&) = delete;
  Simulator& operator=(const Simulator&) = delete;

  const SimConfig& config() const { return cfg_; }
  MainMemory& memory() { return memory_; }
  CacheController& cache() { return cache_; }
  const CacheController& cache() const { return cache_; }
  Runtime& runtime() { return *runtime_; }
  std::vector<Vpu>& vpus() { return vpus_; }

  // Runs `prog` to completion, including the implicit drain at its end.
  // Throws Error(kIllegalInstruction) on a killed offload and
  // Error(kDeadlock) when nothing can make progress. One program per
  // simulator.
  ExecutionReport run(const HostProgram& prog, const std::string& workload = "");

  const std::vector<LoadRecord>& loads() const { return loads_; }
  const std::vector<BridgePhase>& bridge_history() const { return bridge_history_; }
  const std::array<uint64_t, kStallReasons>& stall_episodes() const { return stall_episodes_; }

  // Event log: runtime decisions, transfers and one line per micro-op.
  void set_trace(std::ostream* os);

  // Coherent element reads/writes outside simulated time.
  std::vector<int64_t> read_matrix(const isa::MatrixDescriptor& d) const;
  void write_matrix(const isa::MatrixDescriptor& d, const std::vector<int64_t>& values);

 private:
  SimConfig cfg_;
  MainMemory memory_;
  CacheController cache_;
  std::vector<Vpu> vpus_;
  std::unique_ptr<Runtime> runtime_;
  std::ostream* trace_ = nullptr;
  uint64_t now_ = 0;
  bool ran_ = false;
  std::vector<LoadRecord> loads_;
  std::vector<BridgePhase> bridge_history_;
  std::array<uint64_t, kStallReasons> stall_episodes_{};
};

}  // namespace arcane
