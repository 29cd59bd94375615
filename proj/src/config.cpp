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

#include "arcane/config.hpp"

#include <fmt/format.h>

#include <bit>

#include "arcane/errors.hpp"

namespace arcane {

uint64_t DmaTiming::transfer_cycles(uint64_t rows, uint64_t row_bytes) const {
  const uint64_t beats = (row_bytes + bus_bytes - 1) / bus_bytes;
  return setup_cycles + rows * (row_setup_cycles + beats);
}

void SimConfig::validate() const {
  auto fail = [](const std::string& why) {
    throw Error(Errc::kConfigInvariantViolated, why);
  };
  if (num_vpus == 0) fail("num_vpus must be at least 1");
  if (vregs_per_vpu == 0 || vregs_per_vpu > 256) fail("vregs_per_vpu must be in 1..256");
  if (line_bytes < 16 || !std::has_single_bit(line_bytes)) {
    fail(fmt::format("line_bytes {} must be a power of two >= 16", line_bytes));
  }
  if (lanes != 2 && lanes != 4 && lanes != 8) {
    fail(fmt::format("lanes {} must be one of 2, 4, 8", lanes));
  }
  if (at_capacity < 4) fail("at_capacity must hold at least one 4-operand kernel");
  if (queue_depth == 0) fail("queue_depth must be at least 1");
  if (matrix_registers == 0 || matrix_registers > 0xffff) fail("matrix_registers out of range");
  if (dma.bus_bytes == 0) fail("bus_bytes must be positive");
  if (memory_size == 0) fail("memory_size must be positive");
  if (uint64_t{memory_base} + memory_size > (uint64_t{1} << 32)) {
    fail("memory does not fit the 32-bit address space");
  }
  if (data_base < memory_base ||
      uint64_t{data_base} + data_size > uint64_t{memory_base} + memory_size) {
    fail("data region must lie inside main memory");
  }
  if (data_base % line_bytes != 0) fail("data_base must be line aligned");
  if (memory_base % line_bytes != 0 || memory_size % line_bytes != 0) {
    fail("main memory must be a whole number of lines");
  }
  if (cpi_scalar_mac <= 0.0) fail("cpi_scalar_mac must be positive");
  if (simd_efficiency <= 0.0) fail("simd_efficiency must be positive");
}

std::string SimConfig::tag() const {
  return fmt::format("v{}x{}x{}-l{}", num_vpus, vregs_per_vpu, line_bytes, lanes);
}

}  // namespace arcane
