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

// Random host-access traces replayed against the cache controller and the
// reference counter-LRU model. Each replay returns an empty string on success
// and a description of the first divergence otherwise.

#pragma once

#include <algorithm>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "arcane/cache.hpp"
#include "arcane/config.hpp"
#include "arcane/memory.hpp"
#include "oracle/reference.hpp"

namespace testsupport {

inline arcane::SimConfig small_cache(uint32_t lines = 8, uint32_t line_bytes = 64) {
  arcane::SimConfig c;
  c.num_vpus = 1;
  c.vregs_per_vpu = lines;
  c.line_bytes = line_bytes;
  c.memory_size = 1u << 20;
  c.data_size = 1u << 20;
  return c;
}

struct CacheRig {
  explicit CacheRig(arcane::SimConfig c = small_cache())
      : cfg(c), mem(c.memory_size, c.memory_base), cache(cfg, mem) {}
  arcane::HostAccessResult access(uint32_t addr, bool write, unsigned width = 4, uint32_t value = 0) {
    auto r = cache.host_access(addr, write, width, value);
    if (!r.stalled()) cache.end_host_op();
    return r;
  }
  arcane::SimConfig cfg;
  arcane::MainMemory mem;
  arcane::CacheController cache;
};

// Checks hit latency, victim choice, LRU counters and memory writes on every
// access. With `with_busy`, random resident lines are pinned as
// busy-computing and must refuse host accesses without changing.
inline std::string lru_trace(uint32_t lines, uint32_t seed, int n, bool with_busy) {
  using arcane::StallReason;
  CacheRig rig(small_cache(lines));
  oracle::LruModel model(lines);
  std::mt19937 g(seed);
  std::vector<bool> busy(lines, false);
  for (int i = 0; i < n; ++i) {
    if (with_busy && g() % 40 == 0) {
      if (!rig.cache.acquire_lock_ecpu()) return fmt::format("access {}: lock not granted", i);
      if (g() % 4 == 0) {
        rig.cache.release_pinned_lines();
        std::fill(busy.begin(), busy.end(), false);
        for (uint32_t l = 0; l < lines; ++l) model.set_busy(l, false);
      } else {
        const uint32_t l = g() % lines;
        const auto& e = rig.cache.cache_table()[l];
        if (e.valid) {
          rig.cache.mark_lines(e.tag, e.tag + 63, {true, false, false});
          busy[l] = true;
          model.set_busy(l, true);
        }
      }
      rig.cache.release_lock_ecpu();
      continue;
    }
    const uint32_t addr = (g() % (lines * 3)) * 64 + (g() % 16) * 4;
    const bool write = g() % 3 == 0;
    const uint32_t payload = g();
    const auto before = rig.cache.lookup(addr);
    const auto victim = before ? std::nullopt : rig.cache.find_victim();
    const bool victim_dirty = victim && rig.cache.cache_table()[*victim].valid &&
                              rig.cache.cache_table()[*victim].dirty;
    const uint64_t writes_before = rig.cache.stats().memory_writes;
    const auto old = rig.cache.line_data(before.value_or(0));
    const std::vector<std::byte> snapshot(old.begin(), old.end());
    const auto r = rig.access(addr, write, 4, payload);

    if (before && busy[*before]) {
      if (r.stall != StallReason::kBusy) return fmt::format("access {}: busy line not refused", i);
      const auto now = rig.cache.line_data(*before);
      if (!std::equal(snapshot.begin(), snapshot.end(), now.begin())) {
        return fmt::format("access {}: busy line modified", i);
      }
      continue;
    }
    if (r.stall == StallReason::kNoEvictableLine) {
      if (model.victim() != -1) return fmt::format("access {}: spurious no-evictable stall", i);
      continue;
    }
    if (r.stalled()) return fmt::format("access {}: unexpected stall", i);
    const uint64_t writes = rig.cache.stats().memory_writes - writes_before;
    if (before) {
      if (!r.hit || r.cycles != 1) return fmt::format("access {}: hit took {} cycles", i, r.cycles);
      if (writes != 0) return fmt::format("access {}: hit wrote memory", i);
      model.touch(*before);
    } else {
      const int v = model.victim();
      const auto line = rig.cache.lookup(addr);
      if (v < 0 || !line || static_cast<int>(*line) != v) {
        return fmt::format("access {}: victim {} but model chose {}", i, line ? int(*line) : -1, v);
      }
      if (writes != (victim_dirty ? 1u : 0u)) {
        return fmt::format("access {}: eviction of {} line wrote {} times", i,
                           victim_dirty ? "dirty" : "clean", writes);
      }
      model.touch(static_cast<uint32_t>(v));
    }
    for (uint32_t l = 0; l < lines; ++l) {
      if (rig.cache.cache_table()[l].lru_counter != model.counter(l)) {
        return fmt::format("access {}: counter of line {} diverged", i, l);
      }
    }
  }
  return {};
}

}  // namespace testsupport
