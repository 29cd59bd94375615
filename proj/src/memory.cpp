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

#include "arcane/memory.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cstring>

#include "arcane/errors.hpp"

namespace arcane {

namespace {

void check_width(unsigned width) {
  if (width != 1 && width != 2 && width != 4) {
    throw Error(Errc::kMisaligned, fmt::format("unsupported access width {}", width));
  }
}

}  // namespace

MainMemory::MainMemory(uint32_t size, uint32_t base) : base_(base), bytes_(size) {}

bool MainMemory::contains(uint32_t addr, std::size_t n) const {
  return addr >= base_ && uint64_t{addr} - base_ + n <= bytes_.size();
}

std::size_t MainMemory::offset(uint32_t addr, std::size_t n) const {
  if (!contains(addr, n)) {
    throw Error(Errc::kOutOfBounds,
                fmt::format("access [{:#x}, +{}) outside memory [{:#x}, +{:#x})", addr, n, base_,
                            bytes_.size()));
  }
  return addr - base_;
}

uint32_t MainMemory::read(uint32_t addr, unsigned width) const {
  check_width(width);
  const std::size_t off = offset(addr, width);
  if (addr % width != 0) {
    throw Error(Errc::kMisaligned, fmt::format("{}-byte read at {:#x}", width, addr));
  }
  uint32_t v = 0;
  for (unsigned i = 0; i < width; ++i) {
    v |= uint32_t{std::to_integer<uint8_t>(bytes_[off + i])} << (8 * i);
  }
  return v;
}

void MainMemory::write(uint32_t addr, unsigned width, uint32_t value) {
  check_width(width);
  const std::size_t off = offset(addr, width);
  if (addr % width != 0) {
    throw Error(Errc::kMisaligned, fmt::format("{}-byte write at {:#x}", width, addr));
  }
  for (unsigned i = 0; i < width; ++i) {
    bytes_[off + i] = std::byte{static_cast<uint8_t>(value >> (8 * i))};
  }
}

std::span<std::byte> MainMemory::bytes(uint32_t addr, std::size_t n) {
  return std::span<std::byte>(bytes_).subspan(offset(addr, n), n);
}

std::span<const std::byte> MainMemory::bytes(uint32_t addr, std::size_t n) const {
  return std::span<const std::byte>(bytes_).subspan(offset(addr, n), n);
}

void Dma2dRequest::validate() const {
  if (rows == 0) throw Error(Errc::kOutOfBounds, "2D transfer with zero rows");
  if (rows > 1 && (row_bytes > src_stride_bytes || row_bytes > dst_stride_bytes)) {
    throw Error(Errc::kOutOfBounds,
                fmt::format("row of {} bytes exceeds stride (src {}, dst {})", row_bytes,
                            src_stride_bytes, dst_stride_bytes));
  }
}

uint64_t dma_execute(const Dma2dRequest& req, DmaPort& port, const DmaTiming& timing) {
  if (!port.dma_lock_held()) {
    throw Error(Errc::kLockNotHeld, "DMA issued without the controller lock");
  }
  req.validate();
  uint64_t cycles = timing.transfer_cycles(req.rows, req.row_bytes);
  std::vector<std::byte> row(req.row_bytes);
  for (uint32_t r = 0; r < req.rows; ++r) {
    const uint32_t src = req.src_base + r * req.src_stride_bytes;
    const uint32_t dst = req.dst_base + r * req.dst_stride_bytes;
    if (req.direction == DmaDirection::kMemToVpu) {
      cycles += port.dma_read_memory(src, row);
      auto out = port.dma_line_storage(dst, row.size());
      std::copy(row.begin(), row.end(), out.begin());
    } else {
      auto in = port.dma_line_storage(src, row.size());
      std::copy(in.begin(), in.end(), row.begin());
      cycles += port.dma_write_memory(dst, row);
    }
  }
  return cycles;
}

}  // namespace arcane
