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

// Workload files, configuration files, the assembler used by both, seeded
// data generation and the parameter sweeps.
//
// Workload file layout (all sections optional, '#' starts a comment):
//
//   [config]
//   lanes = 8
//
//   [data]
//   matrix A 0x10000 24 8 w random seed=7 min=-8 max=8
//   matrix F 0x20000 9 3 w literal 1 0 -1 2 0 -2 1 0 -1 ...
//   matrix R 0x30000 3 3 w
//
//   [program]
//   xmr.w m0, A
//   xmr.w m1, F, 1, 9, 3
//   xmr.w m2, R
//   xmk4.w m2, m0, m1
//   busy 1000
//   barrier
//   load.w R[1,2]

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "arcane/config.hpp"
#include "arcane/host.hpp"
#include "arcane/isa.hpp"
#include "arcane/simulator.hpp"

namespace arcane {

// 64-bit linear congruential generator; outputs are the high 32 bits.
//   state' = state * 6364136223846793005 + 1442695040888963407
class Lcg64 {
 public:
  static constexpr uint64_t kMultiplier = 6364136223846793005ULL;
  static constexpr uint64_t kIncrement = 1442695040888963407ULL;

  explicit Lcg64(uint64_t seed) : state_(seed) {}
  uint32_t next();
  // Uniform in [lo, hi] (inclusive), by modulo reduction.
  int64_t uniform(int64_t lo, int64_t hi);
  uint64_t state() const { return state_; }

 private:
  uint64_t state_;
};

// Values of a rows x cols matrix at `eew`: the low eew bits of successive
// outputs, sign-extended, or uniform in [lo, hi] when a range is given.
std::vector<int64_t> random_matrix(uint64_t seed, uint32_t rows, uint32_t cols,
                                   isa::ElementWidth eew,
                                   std::optional<std::pair<int64_t, int64_t>> range = {});

// ---- configuration ---------------------------------------------------------------

// Applies `key = value` lines (an optional [config] header is accepted) on
// top of `cfg`. Throws ParseError for unknown keys or malformed values and
// Error(kConfigInvariantViolated) when the result is invalid.
void apply_config_text(std::string_view text, SimConfig& cfg);
SimConfig load_config(const std::filesystem::path& path, SimConfig base = {});
// Sets one configuration key; returns false when the key is unknown.
bool set_config_key(SimConfig& cfg, std::string_view key, std::string_view value);

// ---- assembly --------------------------------------------------------------------

struct MatrixData {
  std::string name;
  isa::MatrixDescriptor desc;
  std::vector<int64_t> values;  // row-major, rows * cols
};

using SymbolTable = std::map<std::string, isa::MatrixDescriptor, std::less<>>;

// Assembles one program statement. `line` is used for error positions.
HostEvent assemble_line(std::string_view text, const SymbolTable& symbols, std::size_t line = 1);
// Assembles a single xmr/xmk statement with numeric operands.
isa::Encoded assemble_offload(std::string_view text);
// Disassembles an xmnmc word and its register values.
std::string disassemble(const isa::DecodedOp& op);

// ---- workloads -------------------------------------------------------------------

struct Workload {
  std::string name;
  SimConfig config;
  std::vector<MatrixData> matrices;
  HostProgram program;
};

// Throws ParseError (with line and column) or Error(kConfigInvariantViolated).
Workload parse_workload(std::string_view text, const std::string& name = "workload",
                        const std::filesystem::path& base_dir = ".", SimConfig base = {});
Workload load_workload(const std::filesystem::path& path, SimConfig base = {});

struct RunOptions {
  std::optional<SimConfig> config_override;
  std::ostream* trace = nullptr;
  std::ostream* ct_dump = nullptr;
  std::ostream* at_dump = nullptr;
};

struct RunResult {
  ExecutionReport report;
  std::map<std::string, std::vector<int64_t>> matrices;  // final contents
  std::vector<LoadRecord> loads;
  CacheStats cache;
};

RunResult run_workload(const Workload& w, const RunOptions& opts = {});

// ---- sweeps ----------------------------------------------------------------------

// The 3-channel convolution layer on a size x size input with k x k filters.
Workload conv_layer_workload(uint32_t size, uint32_t k, isa::ElementWidth eew,
                             const SimConfig& cfg, uint64_t seed = 1);

struct OverheadPoint {
  uint32_t size = 0;
  uint32_t lanes = 0;
  isa::ElementWidth eew = isa::ElementWidth::kWord;
  ExecutionReport report;
  PhaseBreakdown phases;
};

struct SpeedupPoint {
  uint32_t size = 0;
  uint32_t lanes = 0;
  isa::ElementWidth eew = isa::ElementWidth::kWord;
  uint32_t filter = 3;
  uint64_t arcane_cycles = 0;
  double scalar_cycles = 0;
  double packed_cycles = 0;
  double speedup_scalar = 0;
  double speedup_packed = 0;
  double packed_over_scalar = 0;
};

inline const std::vector<uint32_t> kDefaultSizes = {8, 16, 32, 64, 128, 256};
inline const std::vector<uint32_t> kDefaultLanes = {2, 4, 8};

std::vector<OverheadPoint> sweep_overhead(const std::vector<uint32_t>& sizes,
                                          const std::vector<uint32_t>& lanes,
                                          isa::ElementWidth eew, const SimConfig& base = {});
std::vector<SpeedupPoint> sweep_speedup(const std::vector<uint32_t>& sizes,
                                        const std::vector<uint32_t>& lanes,
                                        const std::vector<isa::ElementWidth>& eews,
                                        const std::vector<uint32_t>& filters,
                                        const SimConfig& base = {});

void write_overhead_csv(std::ostream& os, const std::vector<OverheadPoint>& pts);
void write_speedup_csv(std::ostream& os, const std::vector<SpeedupPoint>& pts);
// x = size, one column per (lanes, eew, filter) series of speedup_scalar.
void write_speedup_plot(std::ostream& os, const std::vector<SpeedupPoint>& pts);

}  // namespace arcane
