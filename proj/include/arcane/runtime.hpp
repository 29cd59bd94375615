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

// The cache runtime executed by the embedded CPU: kernel decoder, kernel
// queue, scheduler and matrix allocator.
//
// Kernel bodies are compiled into a list of steps when the kernel starts:
// vector micro-ops, 2D transfers run under the controller lock, and internal
// bookkeeping tasks. The simulation loop then walks that list in simulated
// time.

#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "arcane/cache.hpp"
#include "arcane/config.hpp"
#include "arcane/isa.hpp"
#include "arcane/memory.hpp"
#include "arcane/vpu.hpp"

namespace arcane {

enum class Phase : uint8_t { kPreamble, kAllocation, kCompute, kWriteback };

std::string_view phase_name(Phase p);

struct PhaseCycles {
  uint64_t preamble = 0;
  uint64_t allocation = 0;
  uint64_t compute = 0;
  uint64_t writeback = 0;

  uint64_t& operator[](Phase p);
  uint64_t total() const { return preamble + allocation + compute + writeback; }
};

// ---- matrix registers --------------------------------------------------------

// Element location inside a VPU: register and element offset.
struct RowLoc {
  uint32_t vreg = 0;
  uint32_t offset = 0;
};

// Rows of a matrix held in registers. Row r starts at element
// (r % rows_per_vreg) * pitch of register vregs[r / rows_per_vreg].
struct View {
  std::vector<uint32_t> vregs;
  uint32_t rows_per_vreg = 1;
  uint32_t pitch = 0;
  uint32_t rows = 0;
  uint32_t cols = 0;

  RowLoc loc(uint32_t r) const {
    return {vregs[r / rows_per_vreg], (r % rows_per_vreg) * pitch};
  }
};

struct Residency {
  uint32_t vpu = 0;
  View view;
  std::optional<uint32_t> at_slot;  // destination entry kept until written back
};

struct PhysicalMatrix {
  isa::MatrixDescriptor desc;
  uint32_t refs = 0;  // queued or running kernels using it
  std::optional<Residency> residency;
};

// Logical matrix registers m0..m(N-1) mapped to physical matrices. Rebinding a
// register whose physical matrix is still referenced allocates a fresh one.
class MatrixMap {
 public:
  explicit MatrixMap(uint32_t registers);

  uint32_t size() const { return static_cast<uint32_t>(logical_.size()); }
  // Returns the physical id now bound to `md` and whether a rename happened.
  std::pair<uint32_t, bool> bind(uint32_t md, const isa::MatrixDescriptor& desc);
  std::optional<uint32_t> phys_of(uint32_t md) const;
  bool bound(uint32_t md) const { return phys_of(md).has_value(); }

  PhysicalMatrix& phys(uint32_t id);
  const PhysicalMatrix& phys(uint32_t id) const;
  bool exists(uint32_t id) const { return phys_.count(id) != 0; }
  void retain(uint32_t id);
  void release(uint32_t id);
  void set_residency(uint32_t id, Residency r);
  void clear_residency(uint32_t id);
  std::vector<uint32_t> resident_ids() const;

 private:
  void collect(uint32_t id);

  std::vector<std::optional<uint32_t>> logical_;
  std::map<uint32_t, PhysicalMatrix> phys_;
  uint32_t next_id_ = 0;
};

// ---- kernel requests -----------------------------------------------------------

enum class HalfRole : uint8_t { kUnused, kMd, kMs1, kMs2, kMs3, kAlpha, kBeta, kStride, kWin };

inline constexpr int kOpMd = 0;
inline constexpr int kOpMs1 = 1;
inline constexpr int kOpMs2 = 2;
inline constexpr int kOpMs3 = 3;

struct OperandBinding {
  bool bound = false;  // the logical register had a binding at decode time
  bool used = false;   // the kernel reads or writes it
  uint32_t logical = 0;
  uint32_t phys = 0;
  isa::MatrixDescriptor desc;
};

struct KernelRequest {
  uint64_t id = 0;
  uint8_t func5 = 0;
  isa::ElementWidth eew = isa::ElementWidth::kWord;
  isa::OperandHalves halves{};
  std::array<OperandBinding, 4> operands{};
  int32_t alpha = 0;
  int32_t beta = 0;
  uint32_t stride = 0;
  uint32_t win = 0;
  uint64_t issue_time = 0;
  std::array<std::optional<uint32_t>, 4> at_slots{};

  const OperandBinding& op(int i) const { return operands[static_cast<std::size_t>(i)]; }
  OperandBinding& op(int i) { return operands[static_cast<std::size_t>(i)]; }
  bool sources_phys(uint32_t phys) const;
};

class KernelQueue {
 public:
  explicit KernelQueue(uint32_t capacity) : capacity_(capacity) {}
  bool full() const { return items_.size() >= capacity_; }
  bool empty() const { return items_.empty(); }
  std::size_t size() const { return items_.size(); }
  uint32_t capacity() const { return capacity_; }
  void push(KernelRequest r);
  KernelRequest pop();
  const std::deque<KernelRequest>& items() const { return items_; }

 private:
  uint32_t capacity_;
  std::deque<KernelRequest> items_;
};

// ---- kernel programs -------------------------------------------------------------

struct Step {
  enum class Kind : uint8_t { kVpu, kTransfer, kTask };
  Kind kind = Kind::kVpu;
  Phase phase = Phase::kCompute;
  bool locked = false;
  VectorMicroOp op;
  std::optional<RowLoc> scalar_from;  // element read by the eCPU into op.scalar
  std::vector<Dma2dRequest> dmas;
  int operand = -1;  // transfers: operand slot moved (-1 for resident spills)
  uint32_t phys = 0;
  std::function<uint64_t()> task;
  std::vector<std::function<void()>> after;
};

struct PlanContext {
  uint32_t vregs = 0;  // registers available to the kernel
  uint32_t elems = 0;  // elements per register at the kernel's eew
  std::array<const View*, 4> resident{};
};

class KernelBuilder;

class KernelPlan {
 public:
  virtual ~KernelPlan() = default;
  virtual uint32_t vregs() const = 0;
  // True when the whole destination is produced in registers at once, so its
  // write-back may be deferred by the scheduler.
  virtual bool whole() const = 0;
  virtual void emit(KernelBuilder& b) const = 0;
};

class KernelImpl {
 public:
  virtual ~KernelImpl() = default;
  // Checks shapes, fills scalars and marks used operands. Throws Error.
  virtual void prepare(KernelRequest& req) const = 0;
  // Throws Error(kCapacityExceeded) when no tiling fits `ctx`.
  virtual std::unique_ptr<KernelPlan> plan(const KernelRequest& req,
                                           const PlanContext& ctx) const = 0;
  // Element-wise kernels may run in place on an identical region.
  virtual bool elementwise() const { return false; }
};

struct KernelLibraryEntry {
  std::string name;
  std::array<HalfRole, 6> halves{};
  std::shared_ptr<const KernelImpl> impl;
};

// Constant-time func5 -> kernel lookup.
class KernelLibrary {
 public:
  // Throws Error(kBadKernelId) for func5 > 30.
  void add(uint32_t func5, KernelLibraryEntry entry);
  const KernelLibraryEntry* find(uint32_t func5) const;

  // GeMM, LeakyReLU, max pooling, 2D convolution and the 3-channel layer.
  static KernelLibrary builtin();

 private:
  std::array<std::optional<KernelLibraryEntry>, isa::kMaxKernelId + 1> entries_;
};

// Emission interface handed to KernelPlan::emit.
class KernelBuilder {
 public:
  KernelBuilder(const KernelRequest& req, const SimConfig& cfg, uint32_t vpu,
                std::vector<uint32_t> vregs, std::array<const View*, 4> resident);

  const KernelRequest& request() const { return req_; }
  isa::ElementWidth eew() const { return req_.eew; }
  uint32_t elems() const { return elems_; }
  const View* resident(int operand) const { return resident_[static_cast<std::size_t>(operand)]; }

  // Plan-local register index -> VPU register id.
  uint32_t vreg(uint32_t i) const;

  void op(const VectorMicroOp& op);
  void splat(uint32_t dst, int32_t value, uint32_t vl);
  void splat_from(uint32_t dst, RowLoc element, uint32_t vl);
  void binary(OpKind kind, uint32_t dst, uint32_t a, uint32_t b, uint32_t vl);
  void slide(uint32_t dst, uint32_t src, uint32_t src_off, uint32_t stride, uint32_t vl,
             uint32_t dst_off = 0);
  // Register holding the vl elements starting at `loc`, at offset 0; slides
  // into `tmp` when needed.
  uint32_t aligned(RowLoc loc, uint32_t vl, uint32_t tmp);

  // Moves rows [c0, c0 + ncols) of operand rows into registers.
  struct RowPlacement {
    uint32_t row;
    RowLoc loc;
  };
  void load(int operand, uint32_t c0, uint32_t ncols, const std::vector<RowPlacement>& rows);
  // Writes destination rows back. In whole mode the final write-back is
  // recorded instead of emitted.
  void store(uint32_t c0, uint32_t ncols, const std::vector<RowPlacement>& rows);
  void set_whole(View view) { whole_view_ = std::move(view); }

  std::vector<Step>& steps() { return steps_; }
  std::optional<View>& whole_view() { return whole_view_; }
  const std::array<std::optional<std::size_t>, 4>& last_load() const { return last_load_; }
  std::optional<std::size_t> last_store() const { return last_store_; }

 private:
  std::vector<Dma2dRequest> group(const std::vector<std::pair<uint32_t, uint32_t>>& rows,
                                  uint32_t row_bytes, DmaDirection dir) const;
  uint32_t line_offset(RowLoc loc) const;

  const KernelRequest& req_;
  uint32_t line_bytes_;
  uint32_t vregs_per_vpu_;
  uint32_t vpu_;
  uint32_t elems_;
  std::vector<uint32_t> vregs_;
  std::array<const View*, 4> resident_;
  std::vector<Step> steps_;
  std::optional<View> whole_view_;
  std::array<std::optional<std::size_t>, 4> last_load_{};
  std::optional<std::size_t> last_store_;
};

// Row transfers between a register view and a matrix in memory.
std::vector<Dma2dRequest> view_transfers(const View& view, const isa::MatrixDescriptor& desc,
                                         uint32_t vpu, uint32_t vregs_per_vpu,
                                         uint32_t line_bytes, DmaDirection dir);

// ---- runtime ---------------------------------------------------------------------

struct TrafficRecord {
  uint64_t time = 0;
  uint32_t phys = 0;
  DmaDirection direction = DmaDirection::kMemToVpu;
  uint64_t bytes = 0;
};

enum class DecodeOutcome : uint8_t { kNone, kPending, kAccepted, kRejected };

class Runtime {
 public:
  using TraceFn = std::function<void(uint64_t, const std::string&)>;

  Runtime(const SimConfig& cfg, CacheController& cache, std::vector<Vpu>& vpus,
          std::shared_ptr<const KernelLibrary> library);

  // ---- bridge side ----
  // Latches an offloaded instruction for decoding. One at a time.
  void latch(const isa::DecodedOp& op, uint64_t now);
  bool bridge_busy() const { return bridge_.has_value(); }
  DecodeOutcome outcome() const { return outcome_; }
  const std::string& reject_reason() const { return reject_reason_; }
  // Acknowledges a final outcome and frees the bridge.
  void acknowledge();

  // ---- simulation hooks ----
  void retire(uint64_t now);
  void step(uint64_t now);
  void lock_granted(uint64_t now);
  uint64_t next_event() const;
  bool waiting_for_lock() const { return state_ == State::kLockWait; }
  // No queued or running kernel, no resident matrix and no bridge request.
  bool drained() const;
  void close(uint64_t now);

  const PhaseCycles& phases() const { return phases_; }
  uint64_t idle_cycles() const { return idle_cycles_; }
  uint64_t kernels_completed() const { return kernels_completed_; }

  // ---- direct operations (outside the timed loop) ----
  // Loads the matrix bound to `md` whole into `vpu` (rows packed
  // floor(line / row_bytes) per register). Throws Error(kCapacityExceeded).
  uint64_t allocate_matrix(uint32_t md, uint32_t vpu);
  // Throws Error(kNotResident).
  uint64_t writeback_matrix(uint32_t md, uint32_t vpu);
  // argmin dirty-line count, lowest id on ties.
  uint32_t select_vpu() const;

  // ---- introspection ----
  const MatrixMap& matrix_map() const { return map_; }
  const KernelQueue& queue() const { return queue_; }
  const std::vector<TrafficRecord>& traffic() const { return traffic_; }
  bool kernel_running() const { return active_.has_value(); }
  // Bumped on every state change visible to the host side.
  uint64_t version() const { return version_; }
  void set_trace(TraceFn fn) { trace_ = std::move(fn); }

 private:
  enum class State : uint8_t { kFree, kDecoding, kStep, kLockWait };

  struct ActiveKernel {
    KernelRequest req;
    const KernelLibraryEntry* entry = nullptr;
    uint32_t vpu = 0;
    std::vector<uint32_t> claimed;  // VPU-local register ids
    std::vector<Step> steps;
    std::size_t pc = 0;
    std::optional<View> whole_view;
    bool finishing = false;
  };

  void trace(uint64_t now, const std::string& msg) const;
  void finish_decode(uint64_t now);
  void try_accept(uint64_t now);
  void reject(const std::string& why);
  bool accept_kernel(uint64_t now);
  void start_kernel(uint64_t now);
  void finish_kernel();
  void begin_step(uint64_t now);
  void run_step(uint64_t now);
  void complete_step();
  void wake(uint64_t now);
  uint64_t execute_step(Step& s, uint64_t now);
  Step spill_step(uint32_t phys);
  std::vector<uint32_t> choose_window(uint32_t vpu, uint32_t n,
                                      const std::vector<uint32_t>& reserved) const;
  std::vector<uint32_t> resident_vregs(uint32_t vpu) const;

  SimConfig cfg_;
  CacheController& cache_;
  std::vector<Vpu>& vpus_;
  std::shared_ptr<const KernelLibrary> library_;
  MatrixMap map_;
  KernelQueue queue_;

  std::optional<isa::DecodedOp> bridge_;
  bool decoded_ = false;  // decode finished, waiting for queue/AT space
  std::optional<KernelRequest> held_;
  DecodeOutcome outcome_ = DecodeOutcome::kNone;
  std::string reject_reason_;

  State state_ = State::kFree;
  uint64_t busy_until_ = 0;
  uint64_t wait_since_ = 0;
  uint64_t idle_since_ = 0;
  bool idle_ = true;
  std::optional<ActiveKernel> active_;

  PhaseCycles phases_;
  uint64_t idle_cycles_ = 0;
  uint64_t kernels_completed_ = 0;
  uint64_t next_request_id_ = 0;
  uint64_t version_ = 0;
  std::vector<TrafficRecord> traffic_;
  TraceFn trace_;
};

}  // namespace arcane
