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

#include "arcane/cache.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <ostream>

#include "arcane/errors.hpp"

namespace arcane {

namespace {

bool overlaps(uint32_t a0, uint32_t a1, uint32_t b0, uint32_t b1) { return a0 <= b1 && b0 <= a1; }

}  // namespace

std::string_view hazard_name(Hazard h) {
  switch (h) {
    case Hazard::kNone: return "none";
    case Hazard::kWar: return "WAR";
    case Hazard::kRaw: return "RAW";
    case Hazard::kWaw: return "WAW";
  }
  return "?";
}

std::string_view stall_name(StallReason r) {
  switch (r) {
    case StallReason::kNone: return "none";
    case StallReason::kLocked: return "locked";
    case StallReason::kWar: return "WAR";
    case StallReason::kRaw: return "RAW";
    case StallReason::kWaw: return "WAW";
    case StallReason::kBusy: return "busy";
    case StallReason::kNoEvictableLine: return "no-evictable-line";
  }
  return "?";
}

CacheController::CacheController(const SimConfig& cfg, MainMemory& mem)
    : mem_(mem),
      timing_(cfg.dma),
      line_bytes_(cfg.line_bytes),
      vregs_per_vpu_(cfg.vregs_per_vpu),
      num_vpus_(cfg.num_vpus),
      storage_(std::size_t{cfg.total_lines()} * cfg.line_bytes),
      ct_(cfg.total_lines()),
      at_(cfg.at_capacity) {}

void CacheController::require_lock(const char* what) const {
  if (!ecpu_holds_lock()) {
    throw Error(Errc::kLockNotHeld, fmt::format("{} requires the eCPU to hold the lock", what));
  }
}

std::optional<uint32_t> CacheController::lookup(uint32_t addr) const {
  auto it = tag_index_.find(line_base(addr));
  if (it == tag_index_.end()) return std::nullopt;
  return it->second;
}

std::span<std::byte> CacheController::line_data(uint32_t line) {
  return std::span<std::byte>(storage_).subspan(std::size_t{line} * line_bytes_, line_bytes_);
}

std::span<const std::byte> CacheController::line_data(uint32_t line) const {
  return std::span<const std::byte>(storage_).subspan(std::size_t{line} * line_bytes_,
                                                      line_bytes_);
}

// ---- replacement -----------------------------------------------------------

void CacheController::lru_touch(uint32_t line) {
  const uint32_t cap = num_lines() - 1;
  for (uint32_t i = 0; i < num_lines(); ++i) {
    if (i == line || !ct_[i].valid) continue;
    ct_[i].lru_counter = std::min(ct_[i].lru_counter + 1, cap);
  }
  ct_[line].lru_counter = 0;
}

std::optional<uint32_t> CacheController::find_victim() const {
  for (uint32_t i = 0; i < num_lines(); ++i) {
    if (!ct_[i].valid) return i;
  }
  std::optional<uint32_t> best;
  for (uint32_t i = 0; i < num_lines(); ++i) {
    if (ct_[i].busy_computing) continue;
    if (!best || ct_[i].lru_counter > ct_[*best].lru_counter) best = i;
  }
  return best;
}

uint32_t CacheController::select_victim() const {
  auto v = find_victim();
  if (!v) throw Error(Errc::kNoEvictableLine, "every cache line is busy computing");
  return *v;
}

// ---- line movement ---------------------------------------------------------

uint64_t CacheController::write_back_line(uint32_t line) {
  CacheTableEntry& e = ct_[line];
  auto dst = mem_.bytes(e.tag, line_bytes_);
  auto src = line_data(line);
  std::copy(src.begin(), src.end(), dst.begin());
  e.dirty = false;
  ++stats_.line_writebacks;
  ++stats_.memory_writes;
  return timing_.line_cycles(line_bytes_);
}

void CacheController::invalidate_line(uint32_t line) {
  CacheTableEntry& e = ct_[line];
  if (e.valid && !e.compute) tag_index_.erase(e.tag);
  e = CacheTableEntry{};
}

uint64_t CacheController::fill_line(uint32_t line, uint32_t tag) {
  auto src = mem_.bytes(tag, line_bytes_);
  auto dst = line_data(line);
  std::copy(src.begin(), src.end(), dst.begin());
  CacheTableEntry& e = ct_[line];
  e = CacheTableEntry{};
  e.tag = tag;
  e.valid = true;
  tag_index_[tag] = line;
  refresh_operand_flags(line);
  ++stats_.line_fills;
  return timing_.line_cycles(line_bytes_);
}

void CacheController::refresh_operand_flags(uint32_t line) {
  CacheTableEntry& e = ct_[line];
  e.is_source = false;
  e.is_dest = false;
  if (!e.valid || e.compute) return;
  const uint32_t end = e.tag + line_bytes_ - 1;
  for (const auto& a : at_) {
    if (!a.valid || !overlaps(e.tag, end, a.start_addr, a.end_addr)) continue;
    (a.role == Role::kSource ? e.is_source : e.is_dest) = true;
  }
}

void CacheController::refresh_all_operand_flags() {
  for (uint32_t i = 0; i < num_lines(); ++i) refresh_operand_flags(i);
}

// ---- host side -------------------------------------------------------------

HostAccessResult CacheController::host_access(uint32_t addr, bool write, unsigned width,
                                              uint32_t value) {
  if (width != 1 && width != 2 && width != 4) {
    throw Error(Errc::kMisaligned, fmt::format("unsupported access width {}", width));
  }
  if (!mem_.contains(addr, width)) {
    throw Error(Errc::kOutOfBounds, fmt::format("host access at {:#x} outside memory", addr));
  }
  if (addr % width != 0) {
    throw Error(Errc::kMisaligned, fmt::format("{}-byte host access at {:#x}", width, addr));
  }
  HostAccessResult r;
  if (lock_.holder != LockHolder::kNone) {
    r.stall = StallReason::kLocked;
    return r;
  }
  auto to_stall = [](Hazard h) {
    switch (h) {
      case Hazard::kWar: return StallReason::kWar;
      case Hazard::kRaw: return StallReason::kRaw;
      case Hazard::kWaw: return StallReason::kWaw;
      case Hazard::kNone: break;
    }
    return StallReason::kNone;
  };

  std::optional<uint32_t> line = lookup(addr);
  if (line) {
    const CacheTableEntry& e = ct_[*line];
    if (e.busy_computing) {
      r.stall = StallReason::kBusy;
      return r;
    }
    // The AT lookup runs alongside the hit and only for flagged lines.
    if (e.is_source || e.is_dest) {
      r.stall = to_stall(at_check(addr, width, write));
      if (r.stalled()) return r;
    }
    r.hit = true;
    r.cycles = 1;
    ++stats_.hits;
  } else {
    r.stall = to_stall(at_check(addr, width, write));
    if (r.stalled()) return r;
    auto victim = find_victim();
    if (!victim) {
      r.stall = StallReason::kNoEvictableLine;
      return r;
    }
    r.cycles = 1;
    if (ct_[*victim].valid && ct_[*victim].dirty) r.cycles += write_back_line(*victim);
    invalidate_line(*victim);
    r.cycles += fill_line(*victim, line_base(addr));
    line = victim;
    ++stats_.misses;
  }

  auto bytes = line_data(*line).subspan(addr - line_base(addr), width);
  if (write) {
    for (unsigned i = 0; i < width; ++i) bytes[i] = std::byte{static_cast<uint8_t>(value >> (8 * i))};
    ct_[*line].dirty = true;
  } else {
    for (unsigned i = 0; i < width; ++i) {
      r.data |= uint32_t{std::to_integer<uint8_t>(bytes[i])} << (8 * i);
    }
  }
  lru_touch(*line);
  lock_.holder = LockHolder::kHost;
  return r;
}

bool CacheController::end_host_op() {
  if (lock_.holder != LockHolder::kHost) return false;
  lock_.holder = LockHolder::kNone;
  if (lock_.pending_ecpu_request) {
    lock_.pending_ecpu_request = false;
    lock_.holder = LockHolder::kEcpu;
    return true;
  }
  return false;
}

// ---- lock ------------------------------------------------------------------

bool CacheController::acquire_lock_ecpu() {
  if (lock_.holder == LockHolder::kEcpu) return true;
  if (lock_.holder == LockHolder::kHost) {
    lock_.pending_ecpu_request = true;
    return false;
  }
  lock_.holder = LockHolder::kEcpu;
  return true;
}

void CacheController::release_lock_ecpu() {
  if (lock_.holder != LockHolder::kEcpu) {
    throw Error(Errc::kDoubleRelease, "lock released while not held by the eCPU");
  }
  lock_.holder = LockHolder::kNone;
}

// ---- address table ---------------------------------------------------------

uint32_t CacheController::at_register(uint32_t start, uint32_t end, Role role) {
  if (start > end) {
    throw Error(Errc::kOutOfBounds, fmt::format("empty AT range [{:#x}, {:#x}]", start, end));
  }
  for (uint32_t i = 0; i < at_.size(); ++i) {
    auto& a = at_[i];
    if (a.valid && a.start_addr == start && a.end_addr == end && a.role == role) {
      ++a.refs;
      return i;
    }
  }
  for (uint32_t i = 0; i < at_.size(); ++i) {
    auto& a = at_[i];
    if (a.valid) continue;
    a = AddressTableEntry{start, end, true, true, role, 1};
    for (uint32_t l = 0; l < num_lines(); ++l) {
      const auto& e = ct_[l];
      if (e.valid && !e.compute && overlaps(e.tag, e.tag + line_bytes_ - 1, start, end)) {
        refresh_operand_flags(l);
      }
    }
    return i;
  }
  throw Error(Errc::kAtFull, fmt::format("no free slot among {} AT entries", at_.size()));
}

void CacheController::at_release(uint32_t slot) {
  if (slot >= at_.size() || !at_[slot].valid) {
    throw Error(Errc::kDoubleRelease, fmt::format("AT slot {} is not registered", slot));
  }
  if (--at_[slot].refs == 0) {
    at_[slot] = AddressTableEntry{};
    refresh_all_operand_flags();
  }
}

Hazard CacheController::at_check(uint32_t addr, uint32_t bytes, bool write) const {
  const uint32_t last = addr + bytes - 1;
  Hazard found = Hazard::kNone;
  for (const auto& a : at_) {
    if (!a.valid || !a.busy || !overlaps(addr, last, a.start_addr, a.end_addr)) continue;
    if (a.role == Role::kDest) return write ? Hazard::kWaw : Hazard::kRaw;
    if (write) found = Hazard::kWar;
  }
  return found;
}

uint32_t CacheController::at_free_slots() const {
  return static_cast<uint32_t>(
      std::count_if(at_.begin(), at_.end(), [](const auto& a) { return !a.valid; }));
}

uint32_t CacheController::at_slots_needed(std::span<const AddressTableEntry> ranges) const {
  uint32_t needed = 0;
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    const auto& r = ranges[i];
    auto same = [&](const AddressTableEntry& a) {
      return a.start_addr == r.start_addr && a.end_addr == r.end_addr && a.role == r.role;
    };
    const bool present = std::any_of(at_.begin(), at_.end(),
                                     [&](const auto& a) { return a.valid && same(a); });
    const bool earlier = std::any_of(ranges.begin(), ranges.begin() + static_cast<long>(i), same);
    if (!present && !earlier) ++needed;
  }
  return needed;
}

// ---- line status -----------------------------------------------------------

void CacheController::mark_lines(uint32_t start, uint32_t end, LineFlags flags) {
  require_lock("mark_lines");
  for (uint32_t l = 0; l < num_lines(); ++l) {
    auto& e = ct_[l];
    if (!e.valid || e.compute || !overlaps(e.tag, e.tag + line_bytes_ - 1, start, end)) continue;
    if (flags.busy_computing && !e.busy_computing) {
      e.busy_computing = true;
      pinned_.push_back(l);
    }
    e.is_source |= flags.source;
    e.is_dest |= flags.dest;
  }
}

uint64_t CacheController::claim_compute_line(uint32_t line) {
  require_lock("claiming a compute line");
  auto& e = ct_[line];
  if (e.busy_computing) {
    throw Error(Errc::kNotComputeLine, fmt::format("line {} is already busy", line));
  }
  uint64_t cycles = 0;
  if (e.valid && e.dirty) cycles += write_back_line(line);
  invalidate_line(line);
  e.valid = true;
  e.compute = true;
  e.busy_computing = true;
  return cycles;
}

void CacheController::free_compute_line(uint32_t line) {
  if (!ct_[line].compute) {
    throw Error(Errc::kNotComputeLine, fmt::format("line {} is not a compute line", line));
  }
  ct_[line] = CacheTableEntry{};
}

void CacheController::release_pinned_lines() {
  for (uint32_t l : pinned_) {
    if (!ct_[l].compute) ct_[l].busy_computing = false;
  }
  pinned_.clear();
}

void CacheController::set_line_dirty(uint32_t line) { ct_[line].dirty = true; }

uint32_t CacheController::dirty_line_count(uint32_t vpu) const {
  uint32_t n = 0;
  for (uint32_t k = 0; k < vregs_per_vpu_; ++k) n += ct_[line_of(vpu, k)].dirty ? 1 : 0;
  return n;
}

uint32_t CacheController::peek(uint32_t addr, unsigned width) const {
  if (auto line = lookup(addr)) {
    auto bytes = line_data(*line).subspan(addr - line_base(addr), width);
    uint32_t v = 0;
    for (unsigned i = 0; i < width; ++i) v |= uint32_t{std::to_integer<uint8_t>(bytes[i])} << (8 * i);
    return v;
  }
  return mem_.read(addr, width);
}

uint64_t CacheController::flush() {
  uint64_t cycles = 0;
  for (uint32_t l = 0; l < num_lines(); ++l) {
    if (ct_[l].valid && !ct_[l].compute && ct_[l].dirty) cycles += write_back_line(l);
  }
  return cycles;
}

// ---- DMA -------------------------------------------------------------------

uint64_t CacheController::dma_read_memory(uint32_t addr, std::span<std::byte> out) {
  uint64_t cycles = 0;
  std::size_t done = 0;
  while (done < out.size()) {
    const uint32_t a = addr + static_cast<uint32_t>(done);
    const uint32_t off = a - line_base(a);
    const std::size_t n = std::min<std::size_t>(out.size() - done, line_bytes_ - off);
    if (auto line = lookup(a)) {
      auto& e = ct_[*line];
      if (e.dirty) cycles += write_back_line(*line);
      if (!e.busy_computing) {
        e.busy_computing = true;
        pinned_.push_back(*line);
      }
      auto src = line_data(*line).subspan(off, n);
      std::copy(src.begin(), src.end(), out.begin() + static_cast<long>(done));
    } else {
      auto src = mem_.bytes(a, n);
      std::copy(src.begin(), src.end(), out.begin() + static_cast<long>(done));
    }
    done += n;
  }
  return cycles;
}

uint64_t CacheController::dma_write_memory(uint32_t addr, std::span<const std::byte> in) {
  uint64_t cycles = 0;
  std::size_t done = 0;
  while (done < in.size()) {
    const uint32_t a = addr + static_cast<uint32_t>(done);
    const uint32_t off = a - line_base(a);
    const std::size_t n = std::min<std::size_t>(in.size() - done, line_bytes_ - off);
    auto chunk = in.subspan(done, n);
    std::optional<uint32_t> line = lookup(a);
    if (!line) {
      line = find_victim();
      if (!line) {
        // Nothing evictable: the row bypasses the cache.
        auto dst = mem_.bytes(a, n);
        std::copy(chunk.begin(), chunk.end(), dst.begin());
        ++stats_.write_arounds;
        ++stats_.memory_writes;
        done += n;
        continue;
      }
      if (ct_[*line].valid && ct_[*line].dirty) cycles += write_back_line(*line);
      invalidate_line(*line);
      cycles += fill_line(*line, line_base(a));
    }
    auto dst = line_data(*line).subspan(off, n);
    std::copy(chunk.begin(), chunk.end(), dst.begin());
    ct_[*line].dirty = true;
    lru_touch(*line);
    done += n;
  }
  return cycles;
}

std::span<std::byte> CacheController::dma_line_storage(uint32_t offset, std::size_t n) {
  if (uint64_t{offset} + n > storage_.size()) {
    throw Error(Errc::kOutOfBounds,
                fmt::format("VPU-side range [{:#x}, +{}) outside line storage", offset, n));
  }
  if (n > 0) {
    for (uint32_t l = offset / line_bytes_; l <= (offset + n - 1) / line_bytes_; ++l) {
      if (!ct_[l].compute) {
        throw Error(Errc::kNotComputeLine,
                    fmt::format("DMA targets line {} which is not a compute line", l));
      }
    }
  }
  return std::span<std::byte>(storage_).subspan(offset, n);
}

// ---- dumps -----------------------------------------------------------------

void CacheController::dump_ct_csv(std::ostream& os) const {
  os << "line,tag,valid,dirty,busy_computing,source,dest,compute,lru\n";
  for (uint32_t l = 0; l < num_lines(); ++l) {
    const auto& e = ct_[l];
    fmt::print(os, "{},{:#010x},{:d},{:d},{:d},{:d},{:d},{:d},{}\n", l, e.tag, e.valid, e.dirty,
               e.busy_computing, e.is_source, e.is_dest, e.compute, e.lru_counter);
  }
}

void CacheController::dump_at_csv(std::ostream& os) const {
  os << "slot,start,end,valid,status,role,refs\n";
  for (uint32_t i = 0; i < at_.size(); ++i) {
    const auto& a = at_[i];
    fmt::print(os, "{},{:#010x},{:#010x},{:d},{},{},{}\n", i, a.start_addr, a.end_addr, a.valid,
               a.busy ? "busy" : "free", a.role == Role::kSource ? "source" : "dest", a.refs);
  }
}

}  // namespace arcane
