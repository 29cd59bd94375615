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

// Built-in kernel bodies. Each kernel tiles its operands into the registers
// it is given and lowers to vector micro-ops; filter taps and scalar matrix
// elements are broadcast with vload-imm after the eCPU reads them.

#include <fmt/format.h>

#include <algorithm>
#include <memory>
#include <optional>
#include <vector>

#include "arcane/errors.hpp"
#include "arcane/runtime.hpp"

namespace arcane {

namespace {

uint32_t ceil_div(uint32_t a, uint32_t b) { return (a + b - 1) / b; }

[[noreturn]] void shape_error(const std::string& what) {
  throw Error(Errc::kShapeMismatch, what);
}

[[noreturn]] void no_fit(const std::string& what) {
  throw Error(Errc::kCapacityExceeded, what);
}

const isa::MatrixDescriptor& use(KernelRequest& req, int slot, const char* name) {
  auto& b = req.op(slot);
  b.used = true;
  if (!b.bound) shape_error(fmt::format("{} (m{}) is not bound", name, b.logical));
  return b.desc;
}

RowLoc shifted(RowLoc loc, uint32_t by) { return {loc.vreg, loc.offset + by}; }

// Rows of one operand, either streamed through a ring of register slots or
// read from a resident view. Locations point at column c0 of the current
// column block.
class RowSource {
 public:
  static RowSource ring(int operand, uint32_t first, uint32_t nvregs, uint32_t slots,
                        uint32_t width) {
    RowSource s;
    s.operand_ = operand;
    s.first_ = first;
    s.slots_ = slots;
    s.width_ = width;
    s.spv_ = ceil_div(slots, nvregs);
    s.occupant_.assign(slots, std::nullopt);
    return s;
  }

  static RowSource resident(int operand, const View* view) {
    RowSource s;
    s.operand_ = operand;
    s.view_ = view;
    return s;
  }

  void begin_block(uint32_t c0, uint32_t ncols) {
    if (c0 == c0_ && ncols == ncols_) return;
    c0_ = c0;
    ncols_ = ncols;
    std::fill(occupant_.begin(), occupant_.end(), std::nullopt);
  }

  void ensure(KernelBuilder& b, uint32_t r0, uint32_t r1) {
    if (view_) return;
    std::vector<KernelBuilder::RowPlacement> rows;
    for (uint32_t r = r0; r < r1; ++r) {
      auto& occ = occupant_[r % slots_];
      if (occ == r) continue;
      occ = r;
      rows.push_back({r, loc(b, r)});
    }
    b.load(operand_, c0_, ncols_, rows);
  }

  RowLoc loc(const KernelBuilder& b, uint32_t r) const {
    if (view_) return shifted(view_->loc(r), c0_);
    const uint32_t s = r % slots_;
    return {b.vreg(first_ + s / spv_), (s % spv_) * width_};
  }

 private:
  int operand_ = 0;
  const View* view_ = nullptr;
  uint32_t first_ = 0;
  uint32_t slots_ = 1;
  uint32_t width_ = 0;
  uint32_t spv_ = 1;
  uint32_t c0_ = ~0u;
  uint32_t ncols_ = 0;
  std::vector<std::optional<uint32_t>> occupant_;
};

// Register count for a ring of `slots` rows of `width` elements.
uint32_t ring_vregs(uint32_t slots, uint32_t width, uint32_t elems, bool packed) {
  return packed ? ceil_div(slots, std::max(1u, elems / width)) : slots;
}

std::vector<uint32_t> vpu_ids(const KernelBuilder& b, uint32_t first, uint32_t n) {
  std::vector<uint32_t> out;
  out.reserve(n);
  for (uint32_t i = 0; i < n; ++i) out.push_back(b.vreg(first + i));
  return out;
}

std::vector<KernelBuilder::RowPlacement> one_per_vreg(const KernelBuilder& b, uint32_t first,
                                                      uint32_t r0, uint32_t r1) {
  std::vector<KernelBuilder::RowPlacement> rows;
  for (uint32_t r = r0; r < r1; ++r) rows.push_back({r, {b.vreg(first + r - r0), 0}});
  return rows;
}

// ---- LeakyReLU -------------------------------------------------------------------

class LeakyPlan final : public KernelPlan {
 public:
  uint32_t rows = 0, cols = 0;
  int32_t alpha = 0;
  bool resident = false;
  uint32_t cb = 0, rpv = 1, band = 0, nvregs = 0;
  bool is_whole = false;

  uint32_t vregs() const override { return nvregs; }
  bool whole() const override { return is_whole; }

  void emit(KernelBuilder& b) const override {
    const uint32_t splat = b.vreg(0);
    if (resident) {
      const View& src = *b.resident(kOpMs1);
      const uint32_t nv = ceil_div(rows, src.rows_per_vreg);
      View out{vpu_ids(b, 1, nv), src.rows_per_vreg, src.pitch, rows, cols};
      b.set_whole(out);
      b.splat(splat, alpha, std::min(b.elems(), (src.rows_per_vreg - 1) * src.pitch + cols));
      for (uint32_t j = 0; j < nv; ++j) {
        const uint32_t n = std::min(src.rows_per_vreg, rows - j * src.rows_per_vreg);
        const uint32_t vl = (n - 1) * src.pitch + cols;
        b.binary(OpKind::kVMul, out.vregs[j], src.vregs[j], splat, vl);
        b.binary(OpKind::kVMergeGe0, out.vregs[j], src.vregs[j], out.vregs[j], vl);
      }
      return;
    }
    if (is_whole) b.set_whole(View{vpu_ids(b, 1 + band, band), rpv, cb, rows, cols});
    b.splat(splat, alpha, rpv * cb);
    const uint32_t band_rows = band * rpv;
    for (uint32_t c0 = 0; c0 < cols; c0 += cb) {
      const uint32_t nc = std::min(cb, cols - c0);
      for (uint32_t r0 = 0; r0 < rows; r0 += band_rows) {
        const uint32_t r1 = std::min(rows, r0 + band_rows);
        std::vector<KernelBuilder::RowPlacement> in, out;
        for (uint32_t r = r0; r < r1; ++r) {
          const uint32_t v = (r - r0) / rpv;
          const uint32_t off = ((r - r0) % rpv) * cb;
          in.push_back({r, {b.vreg(1 + v), off}});
          out.push_back({r, {b.vreg(1 + band + v), off}});
        }
        b.load(kOpMs1, c0, nc, in);
        for (uint32_t v = 0; v * rpv < r1 - r0; ++v) {
          const uint32_t n = std::min(rpv, r1 - r0 - v * rpv);
          const uint32_t vl = (n - 1) * cb + nc;
          const uint32_t s = b.vreg(1 + v);
          const uint32_t d = b.vreg(1 + band + v);
          b.binary(OpKind::kVMul, d, s, splat, vl);
          b.binary(OpKind::kVMergeGe0, d, s, d, vl);
        }
        b.store(c0, nc, out);
      }
    }
  }
};

class LeakyRelu final : public KernelImpl {
 public:
  void prepare(KernelRequest& req) const override {
    const auto& md = use(req, kOpMd, "md");
    const auto& ms1 = use(req, kOpMs1, "ms1");
    if (md.rows != ms1.rows || md.cols != ms1.cols) {
      shape_error(fmt::format("md is {}x{}, ms1 is {}x{}", md.rows, md.cols, ms1.rows, ms1.cols));
    }
  }

  std::unique_ptr<KernelPlan> plan(const KernelRequest& req,
                                   const PlanContext& ctx) const override {
    auto p = std::make_unique<LeakyPlan>();
    const auto& d = req.op(kOpMs1).desc;
    p->rows = d.rows;
    p->cols = d.cols;
    p->alpha = req.alpha;
    if (const View* v = ctx.resident[kOpMs1]) {
      p->resident = true;
      p->is_whole = true;
      p->nvregs = 1 + ceil_div(d.rows, v->rows_per_vreg);
      if (p->nvregs > ctx.vregs) no_fit("resident LeakyReLU input leaves no room for its output");
      return p;
    }
    p->cb = std::min(d.cols, ctx.elems);
    p->rpv = ctx.elems / p->cb;
    p->band = std::min(ceil_div(d.rows, p->rpv), (ctx.vregs - 1) / 2);
    if (ctx.vregs < 3 || p->band == 0) no_fit("LeakyReLU needs at least 3 registers");
    p->nvregs = 1 + 2 * p->band;
    p->is_whole = p->cb == d.cols && p->band * p->rpv >= d.rows;
    return p;
  }

  bool elementwise() const override { return true; }
};

// ---- max pooling -----------------------------------------------------------------

class MaxPoolPlan final : public KernelPlan {
 public:
  uint32_t rows = 0, cols = 0, win = 1, stride = 1, orows = 0, ocols = 0;
  uint32_t ocb = 0;  // output columns per block
  bool resident = false;
  bool packed = false;
  uint32_t ring_n = 0, band = 0;
  bool is_whole = false;

  uint32_t in_width(uint32_t noc) const { return (noc - 1) * stride + win; }
  uint32_t vregs() const override { return 2 + ring_n + band; }
  bool whole() const override { return is_whole; }

  void emit(KernelBuilder& b) const override {
    const uint32_t m = b.vreg(0);
    const uint32_t tmp = b.vreg(1);
    const uint32_t out0 = 2 + ring_n;
    RowSource src = resident ? RowSource::resident(kOpMs1, b.resident(kOpMs1))
                             : RowSource::ring(kOpMs1, 2, ring_n, win, in_width(ocb));
    if (is_whole) b.set_whole(View{vpu_ids(b, out0, band), 1, ocols, orows, ocols});
    for (uint32_t oc0 = 0; oc0 < ocols; oc0 += ocb) {
      const uint32_t noc = std::min(ocb, ocols - oc0);
      const uint32_t iw = in_width(noc);
      src.begin_block(oc0 * stride, iw);
      for (uint32_t p0 = 0; p0 < orows; p0 += band) {
        const uint32_t p1 = std::min(orows, p0 + band);
        for (uint32_t p = p0; p < p1; ++p) {
          const uint32_t r = p * stride;
          src.ensure(b, r, r + win);
          if (win == 1) {
            const RowLoc l = src.loc(b, r);
            if (l.offset == 0) {
              b.binary(OpKind::kVCopy, m, l.vreg, l.vreg, iw);
            } else {
              b.slide(m, l.vreg, l.offset, 1, iw);
            }
          } else {
            const uint32_t a = b.aligned(src.loc(b, r), iw, m);
            const uint32_t c = b.aligned(src.loc(b, r + 1), iw, tmp);
            b.binary(OpKind::kVMax, m, a, c, iw);
            for (uint32_t t = 2; t < win; ++t) {
              b.binary(OpKind::kVMax, m, m, b.aligned(src.loc(b, r + t), iw, tmp), iw);
            }
          }
          const uint32_t out = b.vreg(out0 + p - p0);
          b.slide(out, m, 0, stride, noc);
          for (uint32_t t = 1; t < win; ++t) {
            b.slide(tmp, m, t, stride, noc);
            b.binary(OpKind::kVMax, out, out, tmp, noc);
          }
        }
        b.store(oc0, noc, one_per_vreg(b, out0, p0, p1));
      }
    }
  }
};

class MaxPool final : public KernelImpl {
 public:
  void prepare(KernelRequest& req) const override {
    const auto& md = use(req, kOpMd, "md");
    const auto& in = use(req, kOpMs1, "ms1");
    if (req.win == 0 || req.stride == 0) shape_error("window and stride must be positive");
    if (in.rows < req.win || in.cols < req.win) {
      shape_error(fmt::format("{}x{} input is smaller than the {}-wide window", in.rows, in.cols,
                              req.win));
    }
    const uint32_t orows = (in.rows - req.win) / req.stride + 1;
    const uint32_t ocols = (in.cols - req.win) / req.stride + 1;
    if (md.rows != orows || md.cols != ocols) {
      shape_error(fmt::format("md is {}x{}, pooling gives {}x{}", md.rows, md.cols, orows, ocols));
    }
  }

  std::unique_ptr<KernelPlan> plan(const KernelRequest& req,
                                   const PlanContext& ctx) const override {
    const auto& in = req.op(kOpMs1).desc;
    const uint32_t E = ctx.elems;
    if (req.win > E) no_fit("pooling window wider than a register");
    auto base = std::make_unique<MaxPoolPlan>();
    base->rows = in.rows;
    base->cols = in.cols;
    base->win = req.win;
    base->stride = req.stride;
    base->orows = (in.rows - req.win) / req.stride + 1;
    base->ocols = (in.cols - req.win) / req.stride + 1;
    base->ocb = std::min(base->ocols, (E - req.win) / req.stride + 1);
    base->resident = ctx.resident[kOpMs1] != nullptr;
    if (base->resident) base->ocb = base->ocols;

    std::unique_ptr<MaxPoolPlan> fallback;
    for (bool packed : {false, true}) {
      auto p = std::make_unique<MaxPoolPlan>(*base);
      p->packed = packed;
      p->ring_n = p->resident ? 0 : ring_vregs(p->win, p->in_width(p->ocb), E, packed);
      if (2 + p->ring_n >= ctx.vregs) continue;
      p->band = std::min(p->orows, ctx.vregs - 2 - p->ring_n);
      p->is_whole = p->ocb == p->ocols && p->band >= p->orows;
      if (p->is_whole) return p;
      if (!fallback) fallback = std::move(p);
      if (base->resident) break;
    }
    if (!fallback) no_fit("max pooling does not fit the available registers");
    return fallback;
  }
};

// ---- 2D convolution --------------------------------------------------------------

// Filter rows packed floor(E / kw) per register, loaded once.
struct FilterLayout {
  uint32_t rows = 0, kw = 0, nvregs = 0;

  static FilterLayout make(uint32_t rows, uint32_t kw, uint32_t elems, bool resident) {
    return {rows, kw, resident ? 0 : ceil_div(rows, elems / kw)};
  }
  RowSource source(uint32_t first, const View* resident) const {
    return resident ? RowSource::resident(kOpMs2, resident)
                    : RowSource::ring(kOpMs2, first, nvregs, rows, kw);
  }
};

class Conv2dPlan final : public KernelPlan {
 public:
  uint32_t kh = 0, kw = 0, orows = 0, ocols = 0;
  uint32_t ocb = 0;
  bool resident_in = false;
  FilterLayout filter;
  uint32_t ring_n = 0, band = 0;
  bool is_whole = false;

  uint32_t vregs() const override { return 2 + filter.nvregs + ring_n + band; }
  bool whole() const override { return is_whole; }

  void emit(KernelBuilder& b) const override {
    const uint32_t splat = b.vreg(0);
    const uint32_t tmp = b.vreg(1);
    RowSource f = filter.source(2, b.resident(kOpMs2));
    f.begin_block(0, kw);
    f.ensure(b, 0, kh);
    const uint32_t ring0 = 2 + filter.nvregs;
    const uint32_t out0 = ring0 + ring_n;
    RowSource src = resident_in ? RowSource::resident(kOpMs1, b.resident(kOpMs1))
                                : RowSource::ring(kOpMs1, ring0, ring_n, kh, ocb + kw - 1);
    if (is_whole) b.set_whole(View{vpu_ids(b, out0, band), 1, ocols, orows, ocols});
    for (uint32_t c0 = 0; c0 < ocols; c0 += ocb) {
      const uint32_t nc = std::min(ocb, ocols - c0);
      src.begin_block(c0, nc + kw - 1);
      for (uint32_t y0 = 0; y0 < orows; y0 += band) {
        const uint32_t y1 = std::min(orows, y0 + band);
        for (uint32_t y = y0; y < y1; ++y) {
          src.ensure(b, y, y + kh);
          const uint32_t out = b.vreg(out0 + y - y0);
          for (uint32_t dy = 0; dy < kh; ++dy) {
            for (uint32_t dx = 0; dx < kw; ++dx) {
              b.splat_from(splat, shifted(f.loc(b, dy), dx), nc);
              const uint32_t x = b.aligned(shifted(src.loc(b, y + dy), dx), nc, tmp);
              b.binary(dy == 0 && dx == 0 ? OpKind::kVMul : OpKind::kVMacc, out, x, splat, nc);
            }
          }
        }
        b.store(c0, nc, one_per_vreg(b, out0, y0, y1));
      }
    }
  }
};

class Conv2d final : public KernelImpl {
 public:
  void prepare(KernelRequest& req) const override {
    const auto& md = use(req, kOpMd, "md");
    const auto& in = use(req, kOpMs1, "ms1");
    const auto& k = use(req, kOpMs2, "ms2");
    if (in.rows < k.rows || in.cols < k.cols) {
      shape_error(fmt::format("{}x{} filter exceeds the {}x{} input", k.rows, k.cols, in.rows,
                              in.cols));
    }
    if (md.rows != in.rows - k.rows + 1 || md.cols != in.cols - k.cols + 1) {
      shape_error(fmt::format("md is {}x{}, valid convolution gives {}x{}", md.rows, md.cols,
                              in.rows - k.rows + 1, in.cols - k.cols + 1));
    }
  }

  std::unique_ptr<KernelPlan> plan(const KernelRequest& req,
                                   const PlanContext& ctx) const override {
    const auto& in = req.op(kOpMs1).desc;
    const auto& k = req.op(kOpMs2).desc;
    const uint32_t E = ctx.elems;
    if (k.cols > E) no_fit("filter row wider than a register");
    Conv2dPlan base;
    base.kh = k.rows;
    base.kw = k.cols;
    base.orows = in.rows - k.rows + 1;
    base.ocols = in.cols - k.cols + 1;
    base.resident_in = ctx.resident[kOpMs1] != nullptr;
    base.ocb = base.resident_in ? base.ocols : std::min(base.ocols, E - k.cols + 1);
    base.filter = FilterLayout::make(k.rows, k.cols, E, ctx.resident[kOpMs2] != nullptr);

    std::unique_ptr<Conv2dPlan> fallback;
    for (bool packed : {false, true}) {
      auto p = std::make_unique<Conv2dPlan>(base);
      p->ring_n = p->resident_in ? 0 : ring_vregs(p->kh, p->ocb + p->kw - 1, E, packed);
      const uint32_t fixed = 2 + p->filter.nvregs + p->ring_n;
      if (fixed >= ctx.vregs) continue;
      p->band = std::min(p->orows, ctx.vregs - fixed);
      p->is_whole = p->ocb == p->ocols && p->band >= p->orows;
      if (p->is_whole) return p;
      if (!fallback) fallback = std::move(p);
      if (base.resident_in) break;
    }
    if (!fallback) no_fit("2D convolution does not fit the available registers");
    return fallback;
  }
};

// ---- 3-channel convolution layer -------------------------------------------------

// conv (3 channels summed) -> 2x2 max pool, stride 2 -> ReLU.
class ConvLayer3Plan final : public KernelPlan {
 public:
  static constexpr uint32_t kChannels = 3;
  uint32_t h = 0, kh = 0, kw = 0, prows = 0, pcols = 0;
  uint32_t pcb = 0;  // pooled columns per block
  bool resident_in = false;
  bool shared_ring = false;
  FilterLayout filter;
  uint32_t ring_each = 0;  // registers per ring
  uint32_t band = 0;
  bool is_whole = false;

  uint32_t in_width(uint32_t npc) const { return 2 * npc + kw - 1; }
  uint32_t rings() const { return resident_in ? 0 : (shared_ring ? 1 : kChannels); }
  uint32_t fixed() const { return 5 + filter.nvregs + rings() * ring_each; }
  uint32_t vregs() const override { return fixed() + band; }
  bool whole() const override { return is_whole; }

  void emit(KernelBuilder& b) const override {
    const uint32_t splat = b.vreg(0);
    const uint32_t tmp = b.vreg(1);
    const uint32_t acc_a = b.vreg(2);
    const uint32_t acc_b = b.vreg(3);
    const uint32_t zero = b.vreg(4);
    RowSource f = filter.source(5, b.resident(kOpMs2));
    f.begin_block(0, kw);
    f.ensure(b, 0, kChannels * kh);

    const uint32_t ring0 = 5 + filter.nvregs;
    std::vector<RowSource> src;
    if (resident_in) {
      src.push_back(RowSource::resident(kOpMs1, b.resident(kOpMs1)));
    } else {
      for (uint32_t i = 0; i < rings(); ++i) {
        src.push_back(
            RowSource::ring(kOpMs1, ring0 + i * ring_each, ring_each, kh + 1, in_width(pcb)));
      }
    }
    auto ring_of = [&](uint32_t c) -> RowSource& { return src[src.size() == 1 ? 0 : c]; };
    const uint32_t out0 = fixed();
    if (is_whole) b.set_whole(View{vpu_ids(b, out0, band), 1, pcols, prows, pcols});
    b.splat(zero, 0, pcb);

    for (uint32_t pc0 = 0; pc0 < pcols; pc0 += pcb) {
      const uint32_t npc = std::min(pcb, pcols - pc0);
      const uint32_t vl = 2 * npc;
      for (auto& s : src) s.begin_block(2 * pc0, in_width(npc));
      for (uint32_t p0 = 0; p0 < prows; p0 += band) {
        const uint32_t p1 = std::min(prows, p0 + band);
        for (uint32_t p = p0; p < p1; ++p) {
          for (uint32_t c = 0; c < kChannels; ++c) {
            RowSource& s = ring_of(c);
            const uint32_t top = c * h + 2 * p;
            s.ensure(b, top, top + kh + 1);
            for (uint32_t half = 0; half < 2; ++half) {
              const uint32_t acc = half == 0 ? acc_a : acc_b;
              for (uint32_t dy = 0; dy < kh; ++dy) {
                for (uint32_t dx = 0; dx < kw; ++dx) {
                  b.splat_from(splat, shifted(f.loc(b, c * kh + dy), dx), vl);
                  const uint32_t x = b.aligned(shifted(s.loc(b, top + half + dy), dx), vl, tmp);
                  const bool first = c == 0 && dy == 0 && dx == 0;
                  b.binary(first ? OpKind::kVMul : OpKind::kVMacc, acc, x, splat, vl);
                }
              }
            }
          }
          const uint32_t out = b.vreg(out0 + p - p0);
          b.binary(OpKind::kVMax, acc_a, acc_a, acc_b, vl);
          b.slide(out, acc_a, 0, 2, npc);
          b.slide(tmp, acc_a, 1, 2, npc);
          b.binary(OpKind::kVMax, out, out, tmp, npc);
          b.binary(OpKind::kVMax, out, out, zero, npc);
        }
        b.store(pc0, npc, one_per_vreg(b, out0, p0, p1));
      }
    }
  }
};

class ConvLayer3 final : public KernelImpl {
 public:
  void prepare(KernelRequest& req) const override {
    const auto& md = use(req, kOpMd, "md");
    const auto& in = use(req, kOpMs1, "ms1");
    const auto& k = use(req, kOpMs2, "ms2");
    if (in.rows % 3 != 0 || k.rows % 3 != 0) {
      shape_error(fmt::format("ms1 ({} rows) and ms2 ({} rows) must stack 3 channels", in.rows,
                              k.rows));
    }
    const uint32_t h = in.rows / 3;
    const uint32_t kh = k.rows / 3;
    if (h < kh || in.cols < k.cols) shape_error("filter exceeds the input channel");
    const uint32_t ph = (h - kh + 1) / 2;
    const uint32_t pw = (in.cols - k.cols + 1) / 2;
    if (ph == 0 || pw == 0) shape_error("convolution output is too small to pool");
    if (md.rows != ph || md.cols != pw) {
      shape_error(fmt::format("md is {}x{}, the layer gives {}x{}", md.rows, md.cols, ph, pw));
    }
  }

  std::unique_ptr<KernelPlan> plan(const KernelRequest& req,
                                   const PlanContext& ctx) const override {
    const auto& in = req.op(kOpMs1).desc;
    const auto& k = req.op(kOpMs2).desc;
    const uint32_t E = ctx.elems;
    if (k.cols + 1 > E) no_fit("filter row wider than a register");
    ConvLayer3Plan base;
    base.h = in.rows / 3;
    base.kh = k.rows / 3;
    base.kw = k.cols;
    base.prows = (base.h - base.kh + 1) / 2;
    base.pcols = (in.cols - base.kw + 1) / 2;
    base.resident_in = ctx.resident[kOpMs1] != nullptr;
    base.pcb = base.resident_in ? base.pcols : std::min(base.pcols, (E - base.kw + 1) / 2);
    base.filter = FilterLayout::make(3 * base.kh, base.kw, E, ctx.resident[kOpMs2] != nullptr);

    std::unique_ptr<ConvLayer3Plan> fallback;
    for (bool shared : {false, true}) {
      for (bool packed : {false, true}) {
        auto p = std::make_unique<ConvLayer3Plan>(base);
        p->shared_ring = shared;
        p->ring_each = ring_vregs(p->kh + 1, p->in_width(p->pcb), E, packed);
        if (p->fixed() >= ctx.vregs) continue;
        p->band = std::min(p->prows, ctx.vregs - p->fixed());
        p->is_whole = p->pcb == p->pcols && p->band >= p->prows;
        if (p->is_whole) return p;
        if (!fallback) fallback = std::move(p);
      }
    }
    if (!fallback) no_fit("the convolution layer does not fit the available registers");
    return fallback;
  }
};

// ---- GeMM ------------------------------------------------------------------------

// md = alpha * (ms1 x ms2) + beta * ms3
class GemmPlan final : public KernelPlan {
 public:
  uint32_t R = 0, K = 0, C = 0;
  int32_t alpha = 1, beta = 0;
  uint32_t cb = 0, kc = 0, rb = 0;
  uint32_t av = 0, bv = 0, cv = 0;
  bool is_whole = false;

  uint32_t vregs() const override { return 2 + bv + rb + av + cv; }
  bool whole() const override { return is_whole; }

  void emit(KernelBuilder& b) const override {
    const uint32_t splat = b.vreg(0);
    const uint32_t tmp = b.vreg(1);
    const uint32_t b0 = 2;
    const uint32_t acc0 = b0 + bv;
    const uint32_t a0 = acc0 + rb;
    const uint32_t c0v = a0 + av;
    RowSource bsrc = b.resident(kOpMs2) ? RowSource::resident(kOpMs2, b.resident(kOpMs2))
                                        : RowSource::ring(kOpMs2, b0, bv, kc, cb);
    RowSource asrc = b.resident(kOpMs1) ? RowSource::resident(kOpMs1, b.resident(kOpMs1))
                                        : RowSource::ring(kOpMs1, a0, av, rb, kc);
    std::optional<RowSource> csrc;
    if (beta != 0) {
      csrc = b.resident(kOpMs3) ? RowSource::resident(kOpMs3, b.resident(kOpMs3))
                                : RowSource::ring(kOpMs3, c0v, cv, rb, cb);
    }
    if (is_whole) b.set_whole(View{vpu_ids(b, acc0, rb), 1, C, R, C});

    for (uint32_t c0 = 0; c0 < C; c0 += cb) {
      const uint32_t nc = std::min(cb, C - c0);
      for (uint32_t i0 = 0; i0 < R; i0 += rb) {
        const uint32_t i1 = std::min(R, i0 + rb);
        for (uint32_t k0 = 0; k0 < K; k0 += kc) {
          const uint32_t k1 = std::min(K, k0 + kc);
          asrc.begin_block(k0, k1 - k0);
          asrc.ensure(b, i0, i1);
          bsrc.begin_block(c0, nc);
          bsrc.ensure(b, k0, k1);
          for (uint32_t k = k0; k < k1; ++k) {
            const uint32_t x = b.aligned(bsrc.loc(b, k), nc, tmp);
            for (uint32_t i = i0; i < i1; ++i) {
              b.splat_from(splat, shifted(asrc.loc(b, i), k - k0), nc);
              b.binary(k == 0 ? OpKind::kVMul : OpKind::kVMacc, b.vreg(acc0 + i - i0), x, splat,
                       nc);
            }
          }
        }
        if (alpha != 1) {
          b.splat(splat, alpha, nc);
          for (uint32_t i = i0; i < i1; ++i) {
            const uint32_t acc = b.vreg(acc0 + i - i0);
            b.binary(OpKind::kVMul, acc, acc, splat, nc);
          }
        }
        if (csrc) {
          csrc->begin_block(c0, nc);
          csrc->ensure(b, i0, i1);
          b.splat(splat, beta, nc);
          for (uint32_t i = i0; i < i1; ++i) {
            const uint32_t x = b.aligned(csrc->loc(b, i), nc, tmp);
            b.binary(OpKind::kVMacc, b.vreg(acc0 + i - i0), x, splat, nc);
          }
        }
        b.store(c0, nc, one_per_vreg(b, acc0, i0, i1));
      }
    }
  }
};

class Gemm final : public KernelImpl {
 public:
  void prepare(KernelRequest& req) const override {
    const auto& md = use(req, kOpMd, "md");
    const auto& a = use(req, kOpMs1, "ms1");
    const auto& bm = use(req, kOpMs2, "ms2");
    if (a.cols != bm.rows) {
      shape_error(fmt::format("ms1 is {}x{} but ms2 is {}x{}", a.rows, a.cols, bm.rows, bm.cols));
    }
    if (md.rows != a.rows || md.cols != bm.cols) {
      shape_error(fmt::format("md is {}x{}, the product is {}x{}", md.rows, md.cols, a.rows,
                              bm.cols));
    }
    if (req.beta != 0) {
      const auto& c = use(req, kOpMs3, "ms3");
      if (c.rows != md.rows || c.cols != md.cols) {
        shape_error(fmt::format("ms3 is {}x{}, md is {}x{}", c.rows, c.cols, md.rows, md.cols));
      }
    }
  }

  std::unique_ptr<KernelPlan> plan(const KernelRequest& req,
                                   const PlanContext& ctx) const override {
    const uint32_t E = ctx.elems;
    const auto& a = req.op(kOpMs1).desc;
    const auto& bm = req.op(kOpMs2).desc;
    GemmPlan base;
    base.R = a.rows;
    base.K = a.cols;
    base.C = bm.cols;
    base.alpha = req.alpha;
    base.beta = req.beta;
    const bool ra = ctx.resident[kOpMs1] != nullptr;
    const bool rbm = ctx.resident[kOpMs2] != nullptr;
    const bool rc = ctx.resident[kOpMs3] != nullptr;
    base.cb = std::min(base.C, E);
    if (rbm && base.cb != base.C) no_fit("resident ms2 rows exceed a register");

    std::optional<GemmPlan> best;
    for (uint32_t kc = std::min(base.K, E); kc >= 1; --kc) {
      GemmPlan p = base;
      p.kc = kc;
      p.bv = rbm ? 0 : ceil_div(kc, E / p.cb);
      for (uint32_t rb = std::min(base.R, ctx.vregs); rb >= 1; --rb) {
        p.rb = rb;
        p.av = ra ? 0 : ceil_div(rb, E / kc);
        p.cv = (base.beta == 0 || rc) ? 0 : ceil_div(rb, E / p.cb);
        if (p.vregs() <= ctx.vregs) break;
        p.rb = 0;
      }
      if (p.rb == 0) continue;
      if (!best || p.rb > best->rb) best = p;
      if (best->rb == base.R) break;
    }
    if (!best) no_fit("GeMM does not fit the available registers");
    best->is_whole = best->cb == best->C && best->rb >= best->R;
    return std::make_unique<GemmPlan>(*best);
  }
};

}  // namespace

KernelLibrary KernelLibrary::builtin() {
  using R = HalfRole;
  KernelLibrary lib;
  lib.add(static_cast<uint32_t>(isa::Kernel::kGemm),
          {"gemm", {R::kAlpha, R::kBeta, R::kMs3, R::kMd, R::kMs1, R::kMs2},
           std::make_shared<Gemm>()});
  lib.add(static_cast<uint32_t>(isa::Kernel::kLeakyRelu),
          {"leaky_relu", {R::kAlpha, R::kUnused, R::kUnused, R::kMd, R::kMs1, R::kUnused},
           std::make_shared<LeakyRelu>()});
  lib.add(static_cast<uint32_t>(isa::Kernel::kMaxPool),
          {"maxpool", {R::kStride, R::kWin, R::kUnused, R::kMd, R::kMs1, R::kUnused},
           std::make_shared<MaxPool>()});
  lib.add(static_cast<uint32_t>(isa::Kernel::kConv2d),
          {"conv2d", {R::kUnused, R::kUnused, R::kUnused, R::kMd, R::kMs1, R::kMs2},
           std::make_shared<Conv2d>()});
  lib.add(static_cast<uint32_t>(isa::Kernel::kConvLayer3),
          {"conv_layer3", {R::kUnused, R::kUnused, R::kUnused, R::kMd, R::kMs1, R::kMs2},
           std::make_shared<ConvLayer3>()});
  return lib;
}

}  // namespace arcane
