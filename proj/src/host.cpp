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

#include "arcane/host.hpp"

#include <fmt/format.h>

#include <limits>

#include "arcane/errors.hpp"

namespace arcane {

namespace {
constexpr uint64_t kNever = std::numeric_limits<uint64_t>::max();
}  // namespace

HostEvent HostEvent::load(uint32_t addr, unsigned width) {
  HostEvent e;
  e.kind = Kind::kLoad;
  e.addr = addr;
  e.width = width;
  return e;
}

HostEvent HostEvent::store(uint32_t addr, unsigned width, uint32_t value) {
  HostEvent e;
  e.kind = Kind::kStore;
  e.addr = addr;
  e.width = width;
  e.value = value;
  return e;
}

HostEvent HostEvent::offload(const isa::Encoded& enc) {
  HostEvent e;
  e.kind = Kind::kOffload;
  e.word = enc.word;
  e.rs = enc.values;
  return e;
}

HostEvent HostEvent::busy(uint64_t cycles) {
  HostEvent e;
  e.kind = Kind::kBusy;
  e.cycles = cycles;
  return e;
}

HostEvent HostEvent::barrier() {
  HostEvent e;
  e.kind = Kind::kBarrier;
  return e;
}

std::string_view bridge_phase_name(BridgePhase p) {
  switch (p) {
    case BridgePhase::kIdle: return "idle";
    case BridgePhase::kIssued: return "issued";
    case BridgePhase::kAwaitingDecode: return "awaiting-decode";
    case BridgePhase::kAccepted: return "accepted";
    case BridgePhase::kKilled: return "killed";
  }
  return "?";
}

Host::Host(const SimConfig& cfg, CacheController& cache, Runtime& runtime,
           const HostProgram& prog)
    : cfg_(cfg), cache_(cache), runtime_(runtime), prog_(prog) {}

void Host::enter(BridgePhase p) {
  phase_ = p;
  history_.push_back(p);
}

bool Host::retire(uint64_t now) {
  if (until_ != now) return false;
  switch (state_) {
    case State::kAccess:
      state_ = State::kReady;
      return cache_.end_host_op();
    case State::kLocal:
      state_ = State::kReady;
      return false;
    case State::kHandshake: {
      const HostEvent& e = prog_.events[pc_ - 1];
      runtime_.latch(isa::decode(e.word, e.rs[0], e.rs[1], e.rs[2]), now);
      enter(BridgePhase::kAwaitingDecode);
      state_ = State::kDecode;
      return false;
    }
    default:
      return false;
  }
}

uint64_t Host::next_event() const {
  switch (state_) {
    case State::kAccess:
    case State::kLocal:
    case State::kHandshake:
      return until_;
    default:
      return kNever;
  }
}

bool Host::waiting() const {
  return state_ == State::kDecode || state_ == State::kBlocked || state_ == State::kBarrier;
}

void Host::unblock(uint64_t now) {
  stall_cycles_ += now - blocked_since_;
  state_ = State::kReady;
}

void Host::try_access(uint64_t now) {
  const HostEvent& e = prog_.events[pc_];
  const bool write = e.kind == HostEvent::Kind::kStore;
  const HostAccessResult r = cache_.host_access(e.addr, write, e.width, e.value);
  if (r.stalled()) {
    if (state_ != State::kBlocked) {
      ++stall_episodes_[static_cast<std::size_t>(r.stall)];
      state_ = State::kBlocked;
      blocked_since_ = now;
    }
    return;
  }
  if (state_ == State::kBlocked) stall_cycles_ += now - blocked_since_;
  if (!write) loads_.push_back({now, e.addr, e.width, r.data});
  ++pc_;
  state_ = State::kAccess;
  until_ = now + r.cycles;
}

void Host::issue(uint64_t now) {
  if (pc_ == prog_.events.size()) {
    state_ = State::kBarrier;
    final_barrier_ = true;
    blocked_since_ = now;
    return;
  }
  const HostEvent& e = prog_.events[pc_];
  switch (e.kind) {
    case HostEvent::Kind::kLoad:
    case HostEvent::Kind::kStore:
      try_access(now);
      return;
    case HostEvent::Kind::kBusy:
      ++pc_;
      if (e.cycles == 0) return;
      state_ = State::kLocal;
      until_ = now + e.cycles;
      local_cycles_ += e.cycles;
      return;
    case HostEvent::Kind::kBarrier:
      ++pc_;
      state_ = State::kBarrier;
      blocked_since_ = now;
      return;
    case HostEvent::Kind::kOffload:
      ++pc_;
      ++offloads_;
      enter(BridgePhase::kIssued);
      blocked_since_ = now;
      state_ = State::kHandshake;
      until_ = now + cfg_.bridge_handshake_cycles;
      if (cfg_.bridge_handshake_cycles == 0) retire(now);
      return;
  }
}

void Host::step(uint64_t now) {
  for (;;) {
    switch (state_) {
      case State::kReady:
        issue(now);
        break;
      case State::kBlocked:
        try_access(now);
        if (state_ == State::kBlocked) return;
        break;
      case State::kDecode: {
        const DecodeOutcome o = runtime_.outcome();
        if (o == DecodeOutcome::kPending) return;
        if (o == DecodeOutcome::kRejected) {
          enter(BridgePhase::kKilled);
          const std::string why = runtime_.reject_reason();
          runtime_.acknowledge();
          enter(BridgePhase::kIdle);
          const HostEvent& e = prog_.events[pc_ - 1];
          throw Error(Errc::kIllegalInstruction,
                      fmt::format("offload {:#010x}{}{} killed at cycle {}: {}", e.word.raw,
                                  e.text.empty() ? "" : " ", e.text, now, why));
        }
        enter(BridgePhase::kAccepted);
        runtime_.acknowledge();
        enter(BridgePhase::kIdle);
        unblock(now);
        break;
      }
      case State::kBarrier:
        if (!runtime_.drained()) return;
        unblock(now);
        if (final_barrier_) {
          state_ = State::kDone;
          return;
        }
        break;
      default:
        return;
    }
  }
}

// ---- baselines -------------------------------------------------------------------

uint64_t baseline_ops(const KernelShape& s) {
  const uint64_t rows = s.rows;
  const uint64_t cols = s.cols;
  switch (s.kernel) {
    case isa::Kernel::kGemm: {
      uint64_t ops = 2 * rows * cols * s.inner + rows * cols;
      if (s.beta) ops += 2 * rows * cols;
      return ops;
    }
    case isa::Kernel::kLeakyRelu:
      return 2 * rows * cols;
    case isa::Kernel::kMaxPool: {
      const uint64_t orows = (rows - s.win) / s.stride + 1;
      const uint64_t ocols = (cols - s.win) / s.stride + 1;
      return orows * ocols * (uint64_t{s.win} * s.win - 1);
    }
    case isa::Kernel::kConv2d:
      return 2 * (rows - s.kh + 1) * (cols - s.kw + 1) * s.kh * s.kw;
    case isa::Kernel::kConvLayer3: {
      const uint64_t oh = rows - s.kh + 1;
      const uint64_t ow = cols - s.kw + 1;
      const uint64_t pooled = (oh / 2) * (ow / 2);
      return 3 * 2 * oh * ow * s.kh * s.kw + pooled * 4;  // 3 compares + ReLU
    }
  }
  return 0;
}

double baseline_cycles(const KernelShape& shape, isa::ElementWidth eew, BaselineModel model,
                       const SimConfig& cfg) {
  const double scalar = static_cast<double>(baseline_ops(shape)) / 2.0 * cfg.cpi_scalar_mac;
  if (model == BaselineModel::kScalar) return scalar;
  return scalar / (32.0 / isa::bits(eew)) * cfg.simd_efficiency;
}

}  // namespace arcane
