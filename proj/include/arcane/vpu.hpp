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
#include <functional>
#include <string>
#include <string_view>

#include "arcane/cache.hpp"
#include "arcane/isa.hpp"

namespace arcane {

enum class OpKind : uint8_t {
  kVLoadImm,   // dst[i] = scalar
  kVAdd,       // dst[i] = src1[i] + src2[i]
  kVSub,       // dst[i] = src1[i] - src2[i]
  kVMul,       // dst[i] = src1[i] * src2[i]
  kVMacc,      // dst[i] += src1[i] * src2[i]
  kVMax,       // dst[i] = max(src1[i], src2[i])
  kVSra,       // dst[i] = src1[i] >> scalar (arithmetic)
  kVSlide,     // dst[dst_off + i] = src1[src_off + i * stride]
  kVRedMax,    // dst[0] = max(src1[0..vl))
  kVMergeGe0,  // dst[i] = src1[i] >= 0 ? src1[i] : src2[i]
  kVCopy,      // dst[i] = src1[i]
};

std::string_view op_name(OpKind k);

// One vector instruction. Register ids are VPU-local (0..vregs_per_vpu-1).
// Element offsets and the stride apply to kVSlide only.
struct VectorMicroOp {
  OpKind kind = OpKind::kVAdd;
  uint8_t dst = 0;
  uint8_t src1 = 0;
  uint8_t src2 = 0;
  uint32_t scalar = 0;
  uint32_t vl = 0;
  isa::ElementWidth eew = isa::ElementWidth::kWord;
  uint32_t dst_off = 0;
  uint32_t src_off = 0;
  uint32_t stride = 1;
};

std::string format_op(const VectorMicroOp& op);

// Sign-extends the low `bits` of v.
int64_t sign_extend(uint64_t v, unsigned bits);

class Vpu {
 public:
  using TraceSink = std::function<void(uint32_t vpu, const VectorMicroOp&, uint64_t cycles)>;

  Vpu(uint32_t id, CacheController& cache, uint32_t vregs, uint32_t lanes, uint32_t issue_cycles);

  uint32_t id() const { return id_; }
  uint32_t lanes() const { return lanes_; }
  uint32_t num_vregs() const { return vregs_; }
  uint32_t line_of(uint32_t vreg) const { return cache_.line_of(id_, vreg); }

  // ISSUE + ceil(vl / (lanes * 32 / eew)).
  uint64_t cycles(const VectorMicroOp& op) const;

  // Applies `op` to the register file and returns its cycles. Throws
  // Error(kVlTooLarge) for out-of-range lengths/offsets and
  // Error(kNotComputeLine) when an operand is not owned by a kernel.
  uint64_t execute(const VectorMicroOp& op);

  int64_t element(uint32_t vreg, uint32_t index, isa::ElementWidth eew) const;
  void set_element(uint32_t vreg, uint32_t index, isa::ElementWidth eew, int64_t value);

  uint32_t dirty_line_count() const { return cache_.dirty_line_count(id_); }

  void set_trace(TraceSink sink) { trace_ = std::move(sink); }

 private:
  void check_operand(uint32_t vreg, const char* role) const;

  uint32_t id_;
  CacheController& cache_;
  uint32_t vregs_;
  uint32_t lanes_;
  uint32_t issue_;
  TraceSink trace_;
};

}  // namespace arcane
