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

#include "arcane/runtime.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <limits>
#include <set>

#include "arcane/errors.hpp"

namespace arcane {

namespace {

constexpr uint64_t kNever = std::numeric_limits<uint64_t>::max();

bool regions_overlap(const isa::MatrixDescriptor& a, const isa::MatrixDescriptor& b) {
  return a.base <= b.last_byte() && b.base <= a.last_byte();
}

std::vector<Dma2dRequest> group_rows(const std::vector<std::pair<uint32_t, uint32_t>>& rows,
                                     uint32_t row_bytes, DmaDirection dir) {
  // rows: (memory address, line-storage offset), in row order.
  std::vector<Dma2dRequest> out;
  std::size_t i = 0;
  while (i < rows.size()) {
    std::size_t j = i + 1;
    uint32_t ms = 0;
    uint32_t ls = 0;
    if (j < rows.size()) {
      ms = rows[j].first - rows[i].first;
      ls = rows[j].second - rows[i].second;
      if (rows[j].first < rows[i].first || rows[j].second < rows[i].second || ms < row_bytes ||
          ls < row_bytes) {
        ms = 0;
      }
    }
    if (ms != 0) {
      while (j < rows.size() && rows[j].first - rows[j - 1].first == ms &&
             rows[j].second - rows[j - 1].second == ls && rows[j].first > rows[j - 1].first &&
             rows[j].second > rows[j - 1].second) {
        ++j;
      }
    } else {
      ms = row_bytes;
      ls = row_bytes;
    }
    Dma2dRequest r;
    r.rows = static_cast<uint32_t>(j - i);
    r.row_bytes = row_bytes;
    r.direction = dir;
    if (dir == DmaDirection::kMemToVpu) {
      r.src_base = rows[i].first;
      r.dst_base = rows[i].second;
      r.src_stride_bytes = ms;
      r.dst_stride_bytes = ls;
    } else {
      r.src_base = rows[i].second;
      r.dst_base = rows[i].first;
      r.src_stride_bytes = ls;
      r.dst_stride_bytes = ms;
    }
    out.push_back(r);
    i = j;
  }
  return out;
}

}  // namespace

std::string_view phase_name(Phase p) {
  switch (p) {
    case Phase::kPreamble: return "preamble";
    case Phase::kAllocation: return "allocation";
    case Phase::kCompute: return "compute";
    case Phase::kWriteback: return "writeback";
  }
  return "?";
}

uint64_t& PhaseCycles::operator[](Phase p) {
  switch (p) {
    case Phase::kPreamble: return preamble;
    case Phase::kAllocation: return allocation;
    case Phase::kCompute: return compute;
    case Phase::kWriteback: break;
  }
  return writeback;
}

std::vector<Dma2dRequest> view_transfers(const View& view, const isa::MatrixDescriptor& desc,
                                         uint32_t vpu, uint32_t vregs_per_vpu,
                                         uint32_t line_bytes, DmaDirection dir) {
  const uint32_t eb = desc.element_bytes();
  std::vector<std::pair<uint32_t, uint32_t>> rows;
  rows.reserve(desc.rows);
  for (uint32_t r = 0; r < desc.rows; ++r) {
    const RowLoc loc = view.loc(r);
    rows.emplace_back(desc.element_address(r, 0),
                      (vpu * vregs_per_vpu + loc.vreg) * line_bytes + loc.offset * eb);
  }
  return group_rows(rows, desc.row_bytes(), dir);
}

// ---- MatrixMap ---------------------------------------------------------------

MatrixMap::MatrixMap(uint32_t registers) : logical_(registers) {}

std::pair<uint32_t, bool> MatrixMap::bind(uint32_t md, const isa::MatrixDescriptor& desc) {
  if (md >= logical_.size()) {
    throw Error(Errc::kShapeMismatch, fmt::format("matrix register m{} does not exist", md));
  }
  auto& slot = logical_[md];
  if (slot) {
    auto& p = phys_.at(*slot);
    if (p.refs == 0 && !p.residency) {
      p.desc = desc;
      return {*slot, false};
    }
  }
  const uint32_t id = next_id_++;
  phys_[id].desc = desc;
  const auto old = slot;
  slot = id;
  if (old) collect(*old);
  return {id, old.has_value()};
}

std::optional<uint32_t> MatrixMap::phys_of(uint32_t md) const {
  if (md >= logical_.size()) return std::nullopt;
  return logical_[md];
}

PhysicalMatrix& MatrixMap::phys(uint32_t id) { return phys_.at(id); }
const PhysicalMatrix& MatrixMap::phys(uint32_t id) const { return phys_.at(id); }

void MatrixMap::retain(uint32_t id) { ++phys_.at(id).refs; }

void MatrixMap::release(uint32_t id) {
  auto& p = phys_.at(id);
  if (p.refs > 0) --p.refs;
  collect(id);
}

void MatrixMap::set_residency(uint32_t id, Residency r) { phys_.at(id).residency = std::move(r); }

void MatrixMap::clear_residency(uint32_t id) {
  phys_.at(id).residency.reset();
  collect(id);
}

std::vector<uint32_t> MatrixMap::resident_ids() const {
  std::vector<uint32_t> ids;
  for (const auto& [id, p] : phys_) {
    if (p.residency) ids.push_back(id);
  }
  return ids;
}

void MatrixMap::collect(uint32_t id) {
  auto it = phys_.find(id);
  if (it == phys_.end() || it->second.refs > 0 || it->second.residency) return;
  if (std::find(logical_.begin(), logical_.end(), std::optional<uint32_t>(id)) != logical_.end()) {
    return;
  }
  phys_.erase(it);
}

// ---- requests, queue, library ------------------------------------------------------

bool KernelRequest::sources_phys(uint32_t phys) const {
  for (int i = kOpMs1; i <= kOpMs3; ++i) {
    if (op(i).used && op(i).phys == phys) return true;
  }
  return false;
}

void KernelQueue::push(KernelRequest r) {
  if (full()) throw Error(Errc::kCapacityExceeded, "kernel queue is full");
  items_.push_back(std::move(r));
}

KernelRequest KernelQueue::pop() {
  KernelRequest r = std::move(items_.front());
  items_.pop_front();
  return r;
}

void KernelLibrary::add(uint32_t func5, KernelLibraryEntry entry) {
  if (func5 > isa::kMaxKernelId) {
    throw Error(Errc::kBadKernelId, fmt::format("kernel id {} outside 0..30", func5));
  }
  entries_[func5] = std::move(entry);
}

const KernelLibraryEntry* KernelLibrary::find(uint32_t func5) const {
  if (func5 > isa::kMaxKernelId || !entries_[func5]) return nullptr;
  return &*entries_[func5];
}

// ---- KernelBuilder -----------------------------------------------------------------

KernelBuilder::KernelBuilder(const KernelRequest& req, const SimConfig& cfg, uint32_t vpu,
                             std::vector<uint32_t> vregs, std::array<const View*, 4> resident)
    : req_(req),
      line_bytes_(cfg.line_bytes),
      vregs_per_vpu_(cfg.vregs_per_vpu),
      vpu_(vpu),
      elems_(cfg.line_bytes / isa::bytes(req.eew)),
      vregs_(std::move(vregs)),
      resident_(resident) {}

uint32_t KernelBuilder::vreg(uint32_t i) const {
  if (i >= vregs_.size()) {
    throw Error(Errc::kCapacityExceeded,
                fmt::format("plan register {} beyond the {} claimed", i, vregs_.size()));
  }
  return vregs_[i];
}

void KernelBuilder::op(const VectorMicroOp& op) {
  Step s;
  s.kind = Step::Kind::kVpu;
  s.phase = Phase::kCompute;
  s.op = op;
  s.op.eew = req_.eew;
  steps_.push_back(std::move(s));
}

void KernelBuilder::splat(uint32_t dst, int32_t value, uint32_t vl) {
  VectorMicroOp o;
  o.kind = OpKind::kVLoadImm;
  o.dst = static_cast<uint8_t>(dst);
  o.scalar = static_cast<uint32_t>(value);
  o.vl = vl;
  op(o);
}

void KernelBuilder::splat_from(uint32_t dst, RowLoc element, uint32_t vl) {
  splat(dst, 0, vl);
  steps_.back().scalar_from = element;
}

void KernelBuilder::binary(OpKind kind, uint32_t dst, uint32_t a, uint32_t b, uint32_t vl) {
  VectorMicroOp o;
  o.kind = kind;
  o.dst = static_cast<uint8_t>(dst);
  o.src1 = static_cast<uint8_t>(a);
  o.src2 = static_cast<uint8_t>(b);
  o.vl = vl;
  op(o);
}

void KernelBuilder::slide(uint32_t dst, uint32_t src, uint32_t src_off, uint32_t stride,
                          uint32_t vl, uint32_t dst_off) {
  VectorMicroOp o;
  o.kind = OpKind::kVSlide;
  o.dst = static_cast<uint8_t>(dst);
  o.src1 = static_cast<uint8_t>(src);
  o.vl = vl;
  o.src_off = src_off;
  o.stride = stride;
  o.dst_off = dst_off;
  op(o);
}

uint32_t KernelBuilder::aligned(RowLoc loc, uint32_t vl, uint32_t tmp) {
  if (loc.offset == 0) return loc.vreg;
  slide(tmp, loc.vreg, loc.offset, 1, vl);
  return tmp;
}

uint32_t KernelBuilder::line_offset(RowLoc loc) const {
  return (vpu_ * vregs_per_vpu_ + loc.vreg) * line_bytes_ + loc.offset * isa::bytes(req_.eew);
}

std::vector<Dma2dRequest> KernelBuilder::group(
    const std::vector<std::pair<uint32_t, uint32_t>>& rows, uint32_t row_bytes,
    DmaDirection dir) const {
  return group_rows(rows, row_bytes, dir);
}

void KernelBuilder::load(int operand, uint32_t c0, uint32_t ncols,
                         const std::vector<RowPlacement>& rows) {
  if (rows.empty()) return;
  const auto& b = req_.op(operand);
  std::vector<std::pair<uint32_t, uint32_t>> pairs;
  pairs.reserve(rows.size());
  for (const auto& p : rows) {
    pairs.emplace_back(b.desc.element_address(p.row, c0), line_offset(p.loc));
  }
  Step s;
  s.kind = Step::Kind::kTransfer;
  s.phase = Phase::kAllocation;
  s.locked = true;
  s.dmas = group(pairs, ncols * isa::bytes(req_.eew), DmaDirection::kMemToVpu);
  s.operand = operand;
  s.phys = b.phys;
  last_load_[static_cast<std::size_t>(operand)] = steps_.size();
  steps_.push_back(std::move(s));
}

void KernelBuilder::store(uint32_t c0, uint32_t ncols, const std::vector<RowPlacement>& rows) {
  if (whole_view_ || rows.empty()) return;
  const auto& b = req_.op(kOpMd);
  std::vector<std::pair<uint32_t, uint32_t>> pairs;
  pairs.reserve(rows.size());
  for (const auto& p : rows) {
    pairs.emplace_back(b.desc.element_address(p.row, c0), line_offset(p.loc));
  }
  Step s;
  s.kind = Step::Kind::kTransfer;
  s.phase = Phase::kWriteback;
  s.locked = true;
  s.dmas = group(pairs, ncols * isa::bytes(req_.eew), DmaDirection::kVpuToMem);
  s.operand = kOpMd;
  s.phys = b.phys;
  last_store_ = steps_.size();
  steps_.push_back(std::move(s));
}

// ---- Runtime -------------------------------------------------------------------------

Runtime::Runtime(const SimConfig& cfg, CacheController& cache, std::vector<Vpu>& vpus,
                 std::shared_ptr<const KernelLibrary> library)
    : cfg_(cfg),
      cache_(cache),
      vpus_(vpus),
      library_(std::move(library)),
      map_(cfg.matrix_registers),
      queue_(cfg.queue_depth) {}

void Runtime::trace(uint64_t now, const std::string& msg) const {
  if (trace_) trace_(now, msg);
}

void Runtime::latch(const isa::DecodedOp& op, uint64_t now) {
  if (bridge_) throw Error(Errc::kIllegalInstruction, "bridge already holds an instruction");
  bridge_ = op;
  decoded_ = false;
  outcome_ = DecodeOutcome::kPending;
  reject_reason_.clear();
  trace(now, fmt::format("bridge latched func5={} eew={}", op.func5, isa::suffix(op.eew)));
}

void Runtime::acknowledge() {
  bridge_.reset();
  held_.reset();
  decoded_ = false;
  outcome_ = DecodeOutcome::kNone;
}

void Runtime::wake(uint64_t now) {
  if (idle_) {
    idle_cycles_ += now - idle_since_;
    idle_ = false;
  }
}

void Runtime::close(uint64_t now) {
  if (idle_ && now > idle_since_) {
    idle_cycles_ += now - idle_since_;
    idle_since_ = now;
  }
}

bool Runtime::drained() const {
  return !bridge_ && queue_.empty() && !active_ && state_ == State::kFree &&
         map_.resident_ids().empty();
}

uint64_t Runtime::next_event() const {
  if (state_ == State::kDecoding || state_ == State::kStep) return busy_until_;
  return kNever;
}

uint32_t Runtime::select_vpu() const {
  uint32_t best = 0;
  for (uint32_t v = 1; v < vpus_.size(); ++v) {
    if (vpus_[v].dirty_line_count() < vpus_[best].dirty_line_count()) best = v;
  }
  return best;
}

void Runtime::reject(const std::string& why) {
  outcome_ = DecodeOutcome::kRejected;
  reject_reason_ = why;
}

void Runtime::finish_decode(uint64_t now) {
  decoded_ = true;
  const isa::DecodedOp op = *bridge_;
  if (op.is_reserve()) {
    const auto f = isa::reserve_fields(op);
    try {
      if (f.md >= map_.size()) {
        throw Error(Errc::kShapeMismatch, fmt::format("matrix register m{} does not exist", f.md));
      }
      f.desc.validate();
    } catch (const Error& e) {
      reject(e.what());
      trace(now, fmt::format("xmr rejected: {}", e.what()));
      return;
    }
    const auto [phys, renamed] = map_.bind(f.md, f.desc);
    outcome_ = DecodeOutcome::kAccepted;
    trace(now, fmt::format("xmr m{} -> p{} base={:#x} {}x{} stride={}{}", f.md, phys, f.desc.base,
                           f.desc.rows, f.desc.cols, f.desc.stride, renamed ? " (renamed)" : ""));
    return;
  }

  const KernelLibraryEntry* entry = library_->find(op.func5);
  if (!entry) {
    reject(fmt::format("no kernel registered for func5={}", op.func5));
    trace(now, reject_reason_);
    return;
  }
  KernelRequest req;
  req.id = next_request_id_++;
  req.func5 = op.func5;
  req.eew = op.eew;
  req.halves = op.halves();
  req.issue_time = now;
  try {
    for (std::size_t i = 0; i < 6; ++i) {
      const uint16_t h = req.halves[i];
      auto bind = [&](int slot) {
        auto& b = req.op(slot);
        b.logical = h;
        if (auto p = map_.phys_of(h)) {
          b.bound = true;
          b.phys = *p;
          b.desc = map_.phys(*p).desc;
        }
      };
      switch (entry->halves[i]) {
        case HalfRole::kUnused: break;
        case HalfRole::kMd: bind(kOpMd); break;
        case HalfRole::kMs1: bind(kOpMs1); break;
        case HalfRole::kMs2: bind(kOpMs2); break;
        case HalfRole::kMs3: bind(kOpMs3); break;
        case HalfRole::kAlpha: req.alpha = static_cast<int16_t>(h); break;
        case HalfRole::kBeta: req.beta = static_cast<int16_t>(h); break;
        case HalfRole::kStride: req.stride = h; break;
        case HalfRole::kWin: req.win = h; break;
      }
    }
    entry->impl->prepare(req);
    for (int i = 0; i < 4; ++i) {
      const auto& b = req.op(i);
      if (!b.used) continue;
      if (!b.bound) {
        throw Error(Errc::kShapeMismatch, fmt::format("operand m{} is not bound", b.logical));
      }
      if (b.desc.eew != req.eew) {
        throw Error(Errc::kShapeMismatch,
                    fmt::format("operand m{} has width .{} but the kernel is .{}", b.logical,
                                isa::suffix(b.desc.eew), isa::suffix(req.eew)));
      }
    }
    PlanContext full;
    full.vregs = cfg_.vregs_per_vpu;
    full.elems = cfg_.line_bytes / isa::bytes(req.eew);
    auto plan = entry->impl->plan(req, full);
    if (plan->vregs() > cfg_.vregs_per_vpu) {
      throw Error(Errc::kCapacityExceeded, "kernel needs more registers than a VPU has");
    }
    const auto& md = req.op(kOpMd);
    for (int i = kOpMs1; i <= kOpMs3; ++i) {
      const auto& s = req.op(i);
      if (!s.used || !md.used || !regions_overlap(md.desc, s.desc)) continue;
      const bool same = entry->impl->elementwise() && s.desc == md.desc;
      if (!same && !plan->whole()) {
        throw Error(Errc::kShapeMismatch,
                    "destination overlaps a source and cannot be computed in one pass");
      }
    }
  } catch (const Error& e) {
    reject(fmt::format("{} rejected: {}", entry->name, e.what()));
    trace(now, reject_reason_);
    return;
  }
  held_ = std::move(req);
  try_accept(now);
}

void Runtime::try_accept(uint64_t now) {
  if (!held_ || !accept_kernel(now)) return;
  held_.reset();
  outcome_ = DecodeOutcome::kAccepted;
  ++version_;
}

bool Runtime::accept_kernel(uint64_t now) {
  KernelRequest& req = *held_;
  if (queue_.full()) return false;
  std::vector<AddressTableEntry> ranges;
  for (int i = 0; i < 4; ++i) {
    const auto& b = req.op(i);
    if (!b.used) continue;
    AddressTableEntry e;
    e.start_addr = b.desc.base;
    e.end_addr = b.desc.last_byte();
    e.role = i == kOpMd ? Role::kDest : Role::kSource;
    ranges.push_back(e);
  }
  if (cache_.at_slots_needed(ranges) > cache_.at_free_slots()) return false;
  for (int i = 0; i < 4; ++i) {
    auto& b = req.op(i);
    if (!b.used) continue;
    req.at_slots[static_cast<std::size_t>(i)] = cache_.at_register(
        b.desc.base, b.desc.last_byte(), i == kOpMd ? Role::kDest : Role::kSource);
    map_.retain(b.phys);
  }
  trace(now, fmt::format("kernel #{} func5={} accepted, queue depth {}", req.id, req.func5,
                         queue_.size() + 1));
  queue_.push(std::move(req));
  return true;
}

std::vector<uint32_t> Runtime::resident_vregs(uint32_t vpu) const {
  std::vector<uint32_t> out;
  for (uint32_t id : map_.resident_ids()) {
    const auto& r = *map_.phys(id).residency;
    if (r.vpu == vpu) out.insert(out.end(), r.view.vregs.begin(), r.view.vregs.end());
  }
  return out;
}

std::vector<uint32_t> Runtime::choose_window(uint32_t vpu, uint32_t n,
                                             const std::vector<uint32_t>& reserved) const {
  std::vector<uint32_t> cand;
  for (uint32_t k = 0; k < cfg_.vregs_per_vpu; ++k) {
    if (std::find(reserved.begin(), reserved.end(), k) == reserved.end()) cand.push_back(k);
  }
  if (cand.size() < n) {
    throw Error(Errc::kCapacityExceeded,
                fmt::format("VPU {} has {} free registers, {} needed", vpu, cand.size(), n));
  }
  auto cost = [&](uint32_t k) {
    const auto& e = cache_.cache_table()[cache_.line_of(vpu, k)];
    if (e.compute) return 0u;  // resident spilled before the claim
    return e.valid ? (e.dirty ? 2u : 1u) : 0u;
  };
  std::size_t best = 0;
  uint64_t best_cost = std::numeric_limits<uint64_t>::max();
  for (std::size_t s = 0; s + n <= cand.size(); ++s) {
    uint64_t c = 0;
    for (std::size_t i = s; i < s + n; ++i) c += cost(cand[i]);
    if (c < best_cost) {
      best_cost = c;
      best = s;
    }
  }
  return {cand.begin() + static_cast<long>(best), cand.begin() + static_cast<long>(best + n)};
}

Step Runtime::spill_step(uint32_t phys) {
  const auto& p = map_.phys(phys);
  const Residency& r = *p.residency;
  Step s;
  s.kind = Step::Kind::kTransfer;
  s.phase = Phase::kWriteback;
  s.locked = true;
  s.dmas = view_transfers(r.view, p.desc, r.vpu, cfg_.vregs_per_vpu, cfg_.line_bytes,
                          DmaDirection::kVpuToMem);
  s.phys = phys;
  s.after.push_back([this, phys] {
    auto& pm = map_.phys(phys);
    const Residency res = *pm.residency;
    std::set<uint32_t> lines(res.view.vregs.begin(), res.view.vregs.end());
    for (uint32_t k : lines) cache_.free_compute_line(cache_.line_of(res.vpu, k));
    if (res.at_slot) cache_.at_release(*res.at_slot);
    map_.clear_residency(phys);
  });
  return s;
}

void Runtime::start_kernel(uint64_t now) {
  ActiveKernel k;
  k.req = queue_.pop();
  k.entry = library_->find(k.req.func5);
  const KernelRequest& req = k.req;
  const auto& md = req.op(kOpMd);

  // VPU choice: a resident source pins the kernel to its VPU.
  std::optional<uint32_t> vpu;
  for (int i = kOpMs1; i <= kOpMs3 && !vpu; ++i) {
    const auto& s = req.op(i);
    if (s.used && map_.exists(s.phys) && map_.phys(s.phys).residency) {
      vpu = map_.phys(s.phys).residency->vpu;
    }
  }
  k.vpu = vpu.value_or(select_vpu());

  auto overlaps_operand = [&](const isa::MatrixDescriptor& d, uint32_t phys) {
    if (md.used && regions_overlap(d, md.desc)) return true;
    for (int i = kOpMs1; i <= kOpMs3; ++i) {
      const auto& s = req.op(i);
      if (s.used && (s.phys != phys || map_.phys(phys).residency->vpu != k.vpu) &&
          regions_overlap(d, s.desc)) {
        return true;
      }
    }
    return false;
  };

  std::vector<uint32_t> kept;
  std::vector<uint32_t> spilled;
  for (uint32_t id : map_.resident_ids()) {
    const auto& p = map_.phys(id);
    const bool here = p.residency->vpu == k.vpu;
    if (here && req.sources_phys(id) && !(md.used && regions_overlap(p.desc, md.desc))) {
      kept.push_back(id);
    } else if (here || overlaps_operand(p.desc, id)) {
      spilled.push_back(id);
    }
  }

  const uint32_t elems = cfg_.line_bytes / isa::bytes(req.eew);
  auto context = [&](const std::vector<uint32_t>& res) {
    PlanContext ctx;
    ctx.elems = elems;
    ctx.vregs = cfg_.vregs_per_vpu;
    for (uint32_t id : res) {
      const auto& view = map_.phys(id).residency->view;
      ctx.vregs -= static_cast<uint32_t>(std::set<uint32_t>(view.vregs.begin(), view.vregs.end()).size());
      for (int i = kOpMs1; i <= kOpMs3; ++i) {
        if (req.op(i).used && req.op(i).phys == id) ctx.resident[static_cast<std::size_t>(i)] = &view;
      }
    }
    return ctx;
  };
  auto needs_whole = [&] {
    for (int i = kOpMs1; i <= kOpMs3; ++i) {
      const auto& s = req.op(i);
      if (s.used && md.used && regions_overlap(s.desc, md.desc) &&
          !(k.entry->impl->elementwise() && s.desc == md.desc)) {
        return true;
      }
    }
    return false;
  };

  std::unique_ptr<KernelPlan> plan;
  PlanContext ctx = context(kept);
  if (!kept.empty()) {
    try {
      plan = k.entry->impl->plan(req, ctx);
      if (needs_whole() && !plan->whole()) plan.reset();
    } catch (const Error& e) {
      if (e.code() != Errc::kCapacityExceeded) throw;
    }
    if (!plan) {
      spilled.insert(spilled.end(), kept.begin(), kept.end());
      kept.clear();
      ctx = context(kept);
    }
  }
  if (!plan) plan = k.entry->impl->plan(req, ctx);

  std::vector<uint32_t> reserved;
  for (uint32_t id : kept) {
    const auto& v = map_.phys(id).residency->view.vregs;
    reserved.insert(reserved.end(), v.begin(), v.end());
  }
  for (uint32_t id : map_.resident_ids()) {
    const auto& r = *map_.phys(id).residency;
    if (r.vpu != k.vpu || std::find(kept.begin(), kept.end(), id) != kept.end()) continue;
    if (std::find(spilled.begin(), spilled.end(), id) == spilled.end()) {
      reserved.insert(reserved.end(), r.view.vregs.begin(), r.view.vregs.end());
    }
  }
  k.claimed = choose_window(k.vpu, plan->vregs(), reserved);

  for (uint32_t id : spilled) k.steps.push_back(spill_step(id));

  Step claim;
  claim.kind = Step::Kind::kTask;
  claim.phase = Phase::kAllocation;
  claim.locked = true;
  const uint32_t vpu_id = k.vpu;
  const std::vector<uint32_t> lines = k.claimed;
  claim.task = [this, vpu_id, lines] {
    uint64_t c = 0;
    for (uint32_t v : lines) c += cache_.claim_compute_line(cache_.line_of(vpu_id, v));
    return c;
  };
  const std::size_t claim_index = k.steps.size();
  k.steps.push_back(std::move(claim));
  const std::size_t body = k.steps.size();

  KernelBuilder b(req, cfg_, k.vpu, k.claimed, ctx.resident);
  plan->emit(b);
  for (auto& s : b.steps()) k.steps.push_back(std::move(s));
  k.whole_view = b.whole_view();

  // Operand table entries are dropped once the data they protect has moved.
  const auto slots = req.at_slots;
  for (int i = kOpMs1; i <= kOpMs3; ++i) {
    const auto& slot = slots[static_cast<std::size_t>(i)];
    if (!slot) continue;
    const auto& last = b.last_load()[static_cast<std::size_t>(i)];
    const std::size_t at = last ? body + *last : claim_index;
    const uint32_t s = *slot;
    k.steps[at].after.push_back([this, s] { cache_.at_release(s); });
  }
  if (slots[kOpMd] && !k.whole_view) {
    const uint32_t s = *slots[kOpMd];
    const std::size_t at = b.last_store() ? body + *b.last_store() : k.steps.size() - 1;
    k.steps[at].after.push_back([this, s] { cache_.at_release(s); });
  }

  trace(now, fmt::format("kernel #{} {} start on VPU {} ({} registers, {} steps{})", req.id,
                         k.entry->name, k.vpu, k.claimed.size(), k.steps.size(),
                         k.whole_view ? ", whole" : ""));
  active_ = std::move(k);
}

void Runtime::finish_kernel() {
  ActiveKernel& k = *active_;
  k.finishing = true;
  const KernelRequest& req = k.req;
  const auto& md = req.op(kOpMd);

  std::set<uint32_t> keep_lines;
  std::optional<uint32_t> kept_dest;
  if (k.whole_view) {
    bool wanted = false;
    for (const auto& q : queue_.items()) wanted = wanted || q.sources_phys(md.phys);
    if (wanted) {
      Residency r;
      r.vpu = k.vpu;
      r.view = *k.whole_view;
      r.at_slot = req.at_slots[kOpMd];
      map_.set_residency(md.phys, r);
      kept_dest = md.phys;
      keep_lines.insert(r.view.vregs.begin(), r.view.vregs.end());
    } else {
      Step s;
      s.kind = Step::Kind::kTransfer;
      s.phase = Phase::kWriteback;
      s.locked = true;
      s.dmas = view_transfers(*k.whole_view, md.desc, k.vpu, cfg_.vregs_per_vpu,
                              cfg_.line_bytes, DmaDirection::kVpuToMem);
      s.operand = kOpMd;
      s.phys = md.phys;
      if (const auto slot = req.at_slots[kOpMd]) {
        const uint32_t sl = *slot;
        s.after.push_back([this, sl] { cache_.at_release(sl); });
      }
      k.steps.push_back(std::move(s));
    }
  }

  Step cleanup;
  cleanup.kind = Step::Kind::kTask;
  cleanup.phase = Phase::kWriteback;
  cleanup.locked = true;
  std::vector<uint32_t> lines;
  for (uint32_t v : k.claimed) {
    if (!keep_lines.count(v)) lines.push_back(v);
  }
  const uint32_t vpu_id = k.vpu;
  cleanup.task = [this, vpu_id, lines] {
    for (uint32_t v : lines) cache_.free_compute_line(cache_.line_of(vpu_id, v));
    cache_.release_pinned_lines();
    return uint64_t{0};
  };
  std::vector<uint32_t> used;
  for (int i = 0; i < 4; ++i) {
    if (req.op(i).used) used.push_back(req.op(i).phys);
  }
  cleanup.after.push_back([this, used] {
    for (uint32_t p : used) map_.release(p);
  });
  k.steps.push_back(std::move(cleanup));

  for (uint32_t id : map_.resident_ids()) {
    if (kept_dest && id == *kept_dest) continue;
    bool wanted = false;
    for (const auto& q : queue_.items()) wanted = wanted || q.sources_phys(id);
    if (!wanted) k.steps.push_back(spill_step(id));
  }
}

void Runtime::begin_step(uint64_t now) {
  wake(now);
  Step& s = active_->steps[active_->pc];
  if (s.locked && !cache_.acquire_lock_ecpu()) {
    state_ = State::kLockWait;
    wait_since_ = now;
    return;
  }
  run_step(now);
}

void Runtime::lock_granted(uint64_t now) {
  if (state_ != State::kLockWait) return;
  ++version_;
  phases_[active_->steps[active_->pc].phase] += now - wait_since_;
  run_step(now);
}

void Runtime::run_step(uint64_t now) {
  Step& s = active_->steps[active_->pc];
  const uint64_t c = execute_step(s, now);
  phases_[s.phase] += c;
  if (c == 0) {
    complete_step();
    state_ = State::kFree;
    return;
  }
  state_ = State::kStep;
  busy_until_ = now + c;
}

void Runtime::complete_step() {
  Step& s = active_->steps[active_->pc];
  for (auto& fn : s.after) fn();
  if (s.locked) cache_.release_lock_ecpu();
  ++active_->pc;
}

uint64_t Runtime::execute_step(Step& s, uint64_t now) {
  switch (s.kind) {
    case Step::Kind::kVpu: {
      Vpu& v = vpus_[active_->vpu];
      if (s.scalar_from) {
        s.op.scalar = static_cast<uint32_t>(v.element(s.scalar_from->vreg, s.scalar_from->offset, s.op.eew));
      }
      return v.execute(s.op);
    }
    case Step::Kind::kTransfer: {
      uint64_t c = 0;
      uint64_t bytes = 0;
      DmaDirection dir = DmaDirection::kMemToVpu;
      for (const auto& r : s.dmas) {
        c += dma_execute(r, cache_, cfg_.dma);
        bytes += uint64_t{r.rows} * r.row_bytes;
        dir = r.direction;
      }
      traffic_.push_back({now, s.phys, dir, bytes});
      trace(now, fmt::format("{} p{} {} bytes in {} requests, {} cycles",
                             dir == DmaDirection::kMemToVpu ? "load" : "store", s.phys, bytes,
                             s.dmas.size(), c));
      return c;
    }
    case Step::Kind::kTask:
      return s.task ? s.task() : 0;
  }
  return 0;
}

void Runtime::retire(uint64_t now) {
  if ((state_ == State::kDecoding || state_ == State::kStep) && busy_until_ == now) ++version_;
  if (state_ == State::kDecoding && busy_until_ == now) {
    state_ = State::kFree;
    finish_decode(now);
  } else if (state_ == State::kStep && busy_until_ == now) {
    complete_step();
    state_ = State::kFree;
  }
}

void Runtime::step(uint64_t now) {
  while (state_ == State::kFree) {
    ++version_;
    if (bridge_ && !decoded_) {
      wake(now);
      state_ = State::kDecoding;
      busy_until_ = now + cfg_.decode_cycles;
      phases_.preamble += cfg_.decode_cycles;
      trace(now, "decode start");
      if (cfg_.decode_cycles == 0) {
        state_ = State::kFree;
        finish_decode(now);
      }
      continue;
    }
    if (held_) try_accept(now);
    if (active_) {
      if (active_->pc < active_->steps.size()) {
        begin_step(now);
        continue;
      }
      if (!active_->finishing) {
        finish_kernel();
        continue;
      }
      trace(now, fmt::format("kernel #{} done", active_->req.id));
      active_.reset();
      ++kernels_completed_;
      continue;
    }
    if (!queue_.empty()) {
      wake(now);
      start_kernel(now);
      continue;
    }
    --version_;
    if (!idle_) {
      idle_ = true;
      idle_since_ = now;
    }
    return;
  }
}

// ---- direct operations ---------------------------------------------------------------

uint64_t Runtime::allocate_matrix(uint32_t md, uint32_t vpu) {
  const auto phys = map_.phys_of(md);
  if (!phys) throw Error(Errc::kNotResident, fmt::format("m{} is not bound", md));
  auto& p = map_.phys(*phys);
  if (p.residency) return 0;
  const uint32_t rb = p.desc.row_bytes();
  const uint32_t rpv = cfg_.line_bytes / rb;
  if (rpv == 0) {
    throw Error(Errc::kCapacityExceeded,
                fmt::format("a {}-byte row does not fit a {}-byte register", rb, cfg_.line_bytes));
  }
  const uint32_t need = (p.desc.rows + rpv - 1) / rpv;
  std::vector<uint32_t> reserved = resident_vregs(vpu);
  std::vector<uint32_t> free;
  for (uint32_t k = 0; k < cfg_.vregs_per_vpu; ++k) {
    const bool res = std::find(reserved.begin(), reserved.end(), k) != reserved.end();
    if (!res && !cache_.cache_table()[cache_.line_of(vpu, k)].busy_computing) free.push_back(k);
  }
  if (free.size() < need) {
    throw Error(Errc::kCapacityExceeded,
                fmt::format("{}x{} matrix needs {} registers, VPU {} has {} free", p.desc.rows,
                            p.desc.cols, need, vpu, free.size()));
  }
  if (!cache_.acquire_lock_ecpu()) {
    throw Error(Errc::kLockNotHeld, "controller lock is held by an in-flight host access");
  }
  uint64_t cycles = 0;
  View view;
  view.rows_per_vreg = rpv;
  view.pitch = p.desc.cols;
  view.rows = p.desc.rows;
  view.cols = p.desc.cols;
  for (uint32_t i = 0; i < need; ++i) {
    view.vregs.push_back(free[i]);
    cycles += cache_.claim_compute_line(cache_.line_of(vpu, free[i]));
  }
  uint64_t bytes = 0;
  for (const auto& r : view_transfers(view, p.desc, vpu, cfg_.vregs_per_vpu, cfg_.line_bytes,
                                      DmaDirection::kMemToVpu)) {
    cycles += dma_execute(r, cache_, cfg_.dma);
    bytes += uint64_t{r.rows} * r.row_bytes;
  }
  cache_.release_pinned_lines();
  cache_.release_lock_ecpu();
  traffic_.push_back({0, *phys, DmaDirection::kMemToVpu, bytes});
  Residency r;
  r.vpu = vpu;
  r.view = std::move(view);
  map_.set_residency(*phys, std::move(r));
  return cycles;
}

uint64_t Runtime::writeback_matrix(uint32_t md, uint32_t vpu) {
  const auto phys = map_.phys_of(md);
  if (!phys || !map_.phys(*phys).residency || map_.phys(*phys).residency->vpu != vpu) {
    throw Error(Errc::kNotResident, fmt::format("m{} is not resident on VPU {}", md, vpu));
  }
  if (!cache_.acquire_lock_ecpu()) {
    throw Error(Errc::kLockNotHeld, "controller lock is held by an in-flight host access");
  }
  Step s = spill_step(*phys);
  uint64_t cycles = 0;
  uint64_t bytes = 0;
  for (const auto& r : s.dmas) {
    cycles += dma_execute(r, cache_, cfg_.dma);
    bytes += uint64_t{r.rows} * r.row_bytes;
  }
  traffic_.push_back({0, *phys, DmaDirection::kVpuToMem, bytes});
  for (auto& fn : s.after) fn();
  cache_.release_lock_ecpu();
  return cycles;
}

}  // namespace arcane
