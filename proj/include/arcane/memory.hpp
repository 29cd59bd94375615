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

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "arcane/config.hpp"

namespace arcane {

// Off-chip main memory: a flat little-endian byte array starting at `base`.
// Unwritten bytes read as zero.
class MainMemory {
 public:
  explicit MainMemory(uint32_t size = 16u << 20, uint32_t base = 0);

  uint32_t base() const { return base_; }
  uint32_t size() const { return static_cast<uint32_t>(bytes_.size()); }

  // width is 1, 2 or 4; address must be naturally aligned.
  uint32_t read(uint32_t addr, unsigned width) const;
  void write(uint32_t addr, unsigned width, uint32_t value);

  // Raw byte windows for line transfers and image loading; bounds-checked.
  std::span<std::byte> bytes(uint32_t addr, std::size_t n);
  std::span<const std::byte> bytes(uint32_t addr, std::size_t n) const;

  bool contains(uint32_t addr, std::size_t n) const;

 private:
  std::size_t offset(uint32_t addr, std::size_t n) const;

  uint32_t base_;
  std::vector<std::byte> bytes_;
};

enum class DmaDirection { kMemToVpu, kVpuToMem };

// Row-oriented 2D transfer. Main-memory addresses are byte addresses; the
// vector-unit side is addressed inside the aggregate line storage
// (line_index * line_bytes + offset).
struct Dma2dRequest {
  uint32_t src_base = 0;
  uint32_t dst_base = 0;
  uint32_t rows = 1;
  uint32_t row_bytes = 0;
  uint32_t src_stride_bytes = 0;
  uint32_t dst_stride_bytes = 0;
  DmaDirection direction = DmaDirection::kMemToVpu;

  // Throws Error(kOutOfBounds) when rows == 0 or a stride is below row_bytes.
  void validate() const;
};

// The controller side of a DMA: every main-memory access of a transfer goes
// through these callbacks so the cache can serve hits and apply its policies.
// Each callback returns extra cycles spent (write-backs, line fills).
class DmaPort {
 public:
  virtual ~DmaPort() = default;
  virtual bool dma_lock_held() const = 0;
  virtual uint64_t dma_read_memory(uint32_t addr, std::span<std::byte> out) = 0;
  virtual uint64_t dma_write_memory(uint32_t addr, std::span<const std::byte> in) = 0;
  virtual std::span<std::byte> dma_line_storage(uint32_t offset, std::size_t n) = 0;
};

// Executes one request and returns its total cycle cost. Throws
// Error(kLockNotHeld) when the controller lock is not held by the runtime and
// Error(kOutOfBounds) for a malformed request.
uint64_t dma_execute(const Dma2dRequest& req, DmaPort& port, const DmaTiming& timing);

}  // namespace arcane
