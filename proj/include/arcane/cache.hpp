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

// The compute-capable last-level cache controller.
//
// The cache is fully associative and its lines are the vector registers of
// the VPUs: line i lives at byte offset i * line_bytes of one flat storage
// array, and vreg k of VPU v is line v * vregs_per_vpu + k. A line is either a
// tagged cache line holding a copy of main memory or, while a kernel owns it,
// an untagged compute line.
//
// Host requests are checked against the Address Table (AT), which records the
// byte ranges of operands belonging to offloaded kernels:
//
//   access   source entry   destination entry
//   read     allow          RAW
//   write    WAR            WAW

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "arcane/config.hpp"
#include "arcane/memory.hpp"

namespace arcane {

enum class Role : uint8_t { kSource, kDest };

enum class Hazard : uint8_t { kNone, kWar, kRaw, kWaw };

std::string_view hazard_name(Hazard h);

struct CacheTableEntry {
  uint32_t tag = 0;  // line-aligned base address
  bool valid = false;
  bool dirty = false;
  bool busy_computing = false;
  bool is_source = false;
  bool is_dest = false;
  bool compute = false;  // owned by a kernel as a vector register
  uint32_t lru_counter = 0;
};

struct AddressTableEntry {
  uint32_t start_addr = 0;  // inclusive
  uint32_t end_addr = 0;    // inclusive
  bool valid = false;
  bool busy = false;
  Role role = Role::kSource;
  uint32_t refs = 0;  // identical ranges registered by several kernels share a slot
};

enum class LockHolder : uint8_t { kNone, kHost, kEcpu };

struct LockState {
  LockHolder holder = LockHolder::kNone;
  bool pending_ecpu_request = false;
};

enum class StallReason : uint8_t { kNone, kLocked, kWar, kRaw, kWaw, kBusy, kNoEvictableLine };
inline constexpr std::size_t kStallReasons = 7;

std::string_view stall_name(StallReason r);

struct HostAccessResult {
  StallReason stall = StallReason::kNone;
  uint32_t data = 0;
  uint64_t cycles = 0;
  bool hit = false;

  bool stalled() const { return stall != StallReason::kNone; }
};

struct LineFlags {
  bool busy_computing = false;
  bool source = false;
  bool dest = false;
};

struct CacheStats {
  uint64_t hits = 0;
  uint64_t misses = 0;
  uint64_t line_fills = 0;
  uint64_t line_writebacks = 0;  // dirty lines copied back to memory
  uint64_t write_arounds = 0;    // DMA rows written straight to memory
  uint64_t memory_writes = 0;    // every write into main memory
};

class CacheController : public DmaPort {
 public:
  CacheController(const SimConfig& cfg, MainMemory& mem);

  uint32_t num_lines() const { return static_cast<uint32_t>(ct_.size()); }
  uint32_t line_bytes() const { return line_bytes_; }
  uint32_t line_of(uint32_t vpu, uint32_t vreg) const { return vpu * vregs_per_vpu_ + vreg; }

  // ---- host side ---------------------------------------------------------

  // Performs one aligned host access or reports why it must be retried. A
  // completed access leaves the host marked in flight until end_host_op().
  HostAccessResult host_access(uint32_t addr, bool write, unsigned width, uint32_t value = 0);

  // Ends the in-flight host operation. Returns true when a deferred eCPU lock
  // request was granted as a consequence.
  bool end_host_op();
  bool host_in_flight() const { return lock_.holder == LockHolder::kHost; }

  // ---- lock ----------------------------------------------------------------

  // Returns true when granted; otherwise the request is left pending and is
  // granted by end_host_op().
  bool acquire_lock_ecpu();
  void release_lock_ecpu();
  bool ecpu_holds_lock() const { return lock_.holder == LockHolder::kEcpu; }
  const LockState& lock_state() const { return lock_; }

  // ---- replacement ---------------------------------------------------------

  void lru_touch(uint32_t line);
  // Throws Error(kNoEvictableLine) when every line is busy.
  uint32_t select_victim() const;
  std::optional<uint32_t> find_victim() const;

  // ---- address table -------------------------------------------------------

  // Registers [start, end] (inclusive) for `role`. Throws Error(kAtFull).
  uint32_t at_register(uint32_t start, uint32_t end, Role role);
  void at_release(uint32_t slot);
  Hazard at_check(uint32_t addr, uint32_t bytes, bool write) const;
  uint32_t at_free_slots() const;
  // Free slots still needed to register all of `ranges` (identical valid
  // entries are shared).
  uint32_t at_slots_needed(std::span<const AddressTableEntry> ranges) const;
  const std::vector<AddressTableEntry>& address_table() const { return at_; }

  // ---- line status ---------------------------------------------------------

  // Sets `flags` on every valid tagged line intersecting [start, end].
  // Requires the eCPU to hold the lock.
  void mark_lines(uint32_t start, uint32_t end, LineFlags flags);

  // Turns `line` into a compute line of the current kernel. A dirty tagged
  // line is written back first. Returns the cycles spent. Requires the lock.
  uint64_t claim_compute_line(uint32_t line);
  // Returns a compute line to the pool as an invalid line.
  void free_compute_line(uint32_t line);
  // Clears the busy flag on tagged lines pinned by allocation transfers.
  void release_pinned_lines();

  void set_line_dirty(uint32_t line);
  uint32_t dirty_line_count(uint32_t vpu) const;

  std::span<std::byte> line_data(uint32_t line);
  std::span<const std::byte> line_data(uint32_t line) const;
  const std::vector<CacheTableEntry>& cache_table() const { return ct_; }
  std::optional<uint32_t> lookup(uint32_t addr) const;

  // Coherent view of memory (cache copy if present) without timing effects.
  uint32_t peek(uint32_t addr, unsigned width) const;
  // Writes every dirty tagged line back to memory and returns the cycles.
  uint64_t flush();

  const CacheStats& stats() const { return stats_; }

  void dump_ct_csv(std::ostream& os) const;
  void dump_at_csv(std::ostream& os) const;

  // ---- DmaPort -------------------------------------------------------------
  bool dma_lock_held() const override { return ecpu_holds_lock(); }
  uint64_t dma_read_memory(uint32_t addr, std::span<std::byte> out) override;
  uint64_t dma_write_memory(uint32_t addr, std::span<const std::byte> in) override;
  std::span<std::byte> dma_line_storage(uint32_t offset, std::size_t n) override;

 private:
  uint32_t line_base(uint32_t addr) const { return addr & ~(line_bytes_ - 1); }
  void require_lock(const char* what) const;
  uint64_t write_back_line(uint32_t line);
  uint64_t fill_line(uint32_t line, uint32_t tag);
  void invalidate_line(uint32_t line);
  void refresh_operand_flags(uint32_t line);
  void refresh_all_operand_flags();

  MainMemory& mem_;
  DmaTiming timing_;
  uint32_t line_bytes_;
  uint32_t vregs_per_vpu_;
  uint32_t num_vpus_;
  std::vector<std::byte> storage_;
  std::vector<CacheTableEntry> ct_;
  std::unordered_map<uint32_t, uint32_t> tag_index_;
  std::vector<AddressTableEntry> at_;
  std::vector<uint32_t> pinned_;
  LockState lock_;
  CacheStats stats_;
};

}  // namespace arcane
