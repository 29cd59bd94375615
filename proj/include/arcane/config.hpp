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

#pragma once

#include <cstdint>
#include <string>

namespace arcane {

// Bus timing shared by the 2D DMA engine and host-miss line transfers.
struct DmaTiming {
  uint32_t setup_cycles = 10;     // per request
  uint32_t row_setup_cycles = 4;  // per row
  uint32_t bus_bytes = 4;         // bytes moved per cycle

  // setup + rows * (row_setup + ceil(row_bytes / bus_bytes))
  uint64_t transfer_cycles(uint64_t rows, uint64_t row_bytes) const;
  uint64_t line_cycles(uint32_t line_bytes) const { return transfer_cycles(1, line_bytes); }
};

// Complete simulator configuration. The defaults describe the 4 x 32 x 1 KiB
// (128 KiB) system with 4-lane vector units.
struct SimConfig {
  // Geometry.
  uint32_t num_vpus = 4;
  uint32_t vregs_per_vpu = 32;
  uint32_t line_bytes = 1024;
  uint32_t lanes = 4;

  // Controller / runtime sizing.
  uint32_t at_capacity = 16;
  uint32_t queue_depth = 8;
  uint32_t matrix_registers = 16;

  // Timing.
  DmaTiming dma;
  uint32_t issue_cycles = 12;
  uint32_t decode_cycles = 50;
  uint32_t bridge_handshake_cycles = 2;

  // Analytic baselines.
  double cpi_scalar_mac = 8.0;
  double simd_efficiency = 0.7;

  // Memory.
  uint32_t memory_size = 16u << 20;
  uint32_t memory_base = 0;
  uint32_t data_base = 0;
  uint32_t data_size = 16u << 20;

  uint32_t total_lines() const { return num_vpus * vregs_per_vpu; }
  uint32_t capacity_bytes() const { return total_lines() * line_bytes; }

  // Throws Error(kConfigInvariantViolated) describing the first violation.
  void validate() const;

  // Compact one-line description used in CSV rows, e.g. "v4x32x1024-l4".
  std::string tag() const;
};

}  // namespace arcane
