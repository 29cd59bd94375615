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

#include "arcane/vpu.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <vector>

#include "arcane/errors.hpp"

namespace arcane {

std::string_view op_name(OpKind k) {
  switch (k) {
    case OpKind::kVLoadImm: return "vload-imm";
    case OpKind::kVAdd: return "vadd";
    case OpKind::kVSub: return "vsub";
    case OpKind::kVMul: return "vmul";
    case OpKind::kVMacc: return "vmacc";
    case OpKind::kVMax: return "vmax";
    case OpKind::kVSra: return "vsra";
    case OpKind::kVSlide: return "vslide";
    case OpKind::kVRedMax: return "vredmax";
    case OpKind::kVMergeGe0: return "vmerge-ge0";
    case OpKind::kVCopy: return "vcopy";
  }
  return "?";
}

std::string format_op(const VectorMicroOp& op) {
  std::string s = fmt::format("{}.{} v{}, v{}, v{}, vl={}", op_name(op.kind), isa::suffix(op.eew),
                              op.dst, op.src1, op.src2, op.vl);
  if (op.kind == OpKind::kVLoadImm || op.kind == OpKind::kVSra) {
    s += fmt::format(", x={}", static_cast<int32_t>(op.scalar));
  }
  if (op.kind == OpKind::kVSlide) {
    s += fmt::format(", doff={}, soff={}, stride={}", op.dst_off, op.src_off, op.stride);
  }
  return s;
}

int64_t sign_extend(uint64_t v, unsigned bits) {
  const uint64_t mask = bits >= 64 ? ~uint64_t{0} : (uint64_t{1} << bits) - 1;
  v &= mask;
  const uint64_t sign = uint64_t{1} << (bits - 1);
  return static_cast<int64_t>((v ^ sign) - sign);
}

Vpu::Vpu(uint32_t id, CacheController& cache, uint32_t vregs, uint32_t lanes,
         uint32_t issue_cycles)
    : id_(id), cache_(cache), vregs_(vregs), lanes_(lanes), issue_(issue_cycles) {}

uint64_t Vpu::cycles(const VectorMicroOp& op) const {
  const uint64_t per_cycle = uint64_t{lanes_} * (32 / isa::bits(op.eew));
  return issue_ + (op.vl + per_cycle - 1) / per_cycle;
}

int64_t Vpu::element(uint32_t vreg, uint32_t index, isa::ElementWidth eew) const {
  const unsigned eb = isa::bytes(eew);
  auto bytes = cache_.line_data(line_of(vreg)).subspan(std::size_t{index} * eb, eb);
  uint64_t v = 0;
  for (unsigned i = 0; i < eb; ++i) v |= uint64_t{std::to_integer<uint8_t>(bytes[i])} << (8 * i);
  return sign_extend(v, isa::bits(eew));
}

void Vpu::set_element(uint32_t vreg, uint32_t index, isa::ElementWidth eew, int64_t value) {
  const unsigned eb = isa::bytes(eew);
  auto bytes = cache_.line_data(line_of(vreg)).subspan(std::size_t{index} * eb, eb);
  const auto u = static_cast<uint64_t>(value);
  for (unsigned i = 0; i < eb; ++i) bytes[i] = std::byte{static_cast<uint8_t>(u >> (8 * i))};
}

void Vpu::check_operand(uint32_t vreg, const char* role) const {
  if (vreg >= vregs_) {
    throw Error(Errc::kOutOfBounds, fmt::format("{} register v{} out of range", role, vreg));
  }
  if (!cache_.cache_table()[line_of(vreg)].compute) {
    throw Error(Errc::kNotComputeLine,
                fmt::format("{} register v{} of VPU {} is not a busy compute line", role, vreg,
                            id_));
  }
}

uint64_t Vpu::execute(const VectorMicroOp& op) {
  const uint32_t elems = cache_.line_bytes() / isa::bytes(op.eew);
  const auto eew = op.eew;
  check_operand(op.dst, "destination");
  const bool unary = op.kind == OpKind::kVLoadImm;
  const bool binary = op.kind == OpKind::kVAdd || op.kind == OpKind::kVSub ||
                      op.kind == OpKind::kVMul || op.kind == OpKind::kVMacc ||
                      op.kind == OpKind::kVMax || op.kind == OpKind::kVMergeGe0;
  if (!unary) check_operand(op.src1, "source");
  if (binary) check_operand(op.src2, "source");

  auto too_large = [&](uint64_t need) {
    if (need > elems) {
      throw Error(Errc::kVlTooLarge, fmt::format("{} needs {} elements, a register holds {}",
                                                 op_name(op.kind), need, elems));
    }
  };
  if (op.kind == OpKind::kVSlide) {
    too_large(uint64_t{op.dst_off} + op.vl);
    if (op.vl > 0) too_large(uint64_t{op.src_off} + uint64_t{op.vl - 1} * op.stride + 1);
  } else {
    too_large(op.vl);
  }

  const unsigned bits = isa::bits(eew);
  auto in1 = [&](uint32_t i) { return element(op.src1, i, eew); };
  auto in2 = [&](uint32_t i) { return element(op.src2, i, eew); };
  auto out = [&](uint32_t i, int64_t v) { set_element(op.dst, i, eew, sign_extend(static_cast<uint64_t>(v), bits)); };

  switch (op.kind) {
    case OpKind::kVLoadImm:
      for (uint32_t i = 0; i < op.vl; ++i) out(i, static_cast<int32_t>(op.scalar));
      break;
    case OpKind::kVAdd:
      for (uint32_t i = 0; i < op.vl; ++i) out(i, in1(i) + in2(i));
      break;
    case OpKind::kVSub:
      for (uint32_t i = 0; i < op.vl; ++i) out(i, in1(i) - in2(i));
      break;
    case OpKind::kVMul:
      for (uint32_t i = 0; i < op.vl; ++i) out(i, in1(i) * in2(i));
      break;
    case OpKind::kVMacc:
      for (uint32_t i = 0; i < op.vl; ++i) out(i, element(op.dst, i, eew) + in1(i) * in2(i));
      break;
    case OpKind::kVMax:
      for (uint32_t i = 0; i < op.vl; ++i) out(i, std::max(in1(i), in2(i)));
      break;
    case OpKind::kVSra:
      for (uint32_t i = 0; i < op.vl; ++i) out(i, in1(i) >> std::min<uint32_t>(op.scalar, bits - 1));
      break;
    case OpKind::kVSlide: {
      std::vector<int64_t> tmp(op.vl);
      for (uint32_t i = 0; i < op.vl; ++i) tmp[i] = in1(op.src_off + i * op.stride);
      for (uint32_t i = 0; i < op.vl; ++i) out(op.dst_off + i, tmp[i]);
      break;
    }
    case OpKind::kVRedMax: {
      if (op.vl == 0) break;
      int64_t m = in1(0);
      for (uint32_t i = 1; i < op.vl; ++i) m = std::max(m, in1(i));
      out(0, m);
      break;
    }
    case OpKind::kVMergeGe0:
      for (uint32_t i = 0; i < op.vl; ++i) {
        const int64_t a = in1(i);
        out(i, a >= 0 ? a : in2(i));
      }
      break;
    case OpKind::kVCopy:
      for (uint32_t i = 0; i < op.vl; ++i) out(i, in1(i));
      break;
  }
  cache_.set_line_dirty(line_of(op.dst));
  const uint64_t c = cycles(op);
  if (trace_) trace_(id_, op, c);
  return c;
}

}  // namespace arcane
