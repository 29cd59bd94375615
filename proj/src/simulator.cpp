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

#include "arcane/simulator.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <limits>
#include <ostream>

#include "arcane/errors.hpp"

namespace arcane {

namespace {
constexpr uint64_t kNever = std::numeric_limits<uint64_t>::max();

const SimConfig& validated(const SimConfig& cfg) {
  cfg.validate();
  return cfg;
}
}  // namespace

std::string ExecutionReport::csv_header() {
  return "workload,config,total_cycles,preamble,allocation,compute,writeback,host_stall,"
         "ecpu_idle";
}

std::string ExecutionReport::csv_row() const {
  return fmt::format("{},{},{},{},{},{},{},{},{}", workload, config, total_cycles, preamble,
                     allocation, compute, writeback, host_stall, ecpu_idle);
}

PhaseBreakdown PhaseBreakdown::from(const ExecutionReport& r) {
  PhaseBreakdown p;
  p.preamble = r.preamble;
  p.allocation = r.allocation;
  p.compute = r.compute;
  p.writeback = r.writeback;
  const double total = static_cast<double>(r.preamble + r.allocation + r.compute + r.writeback);
  if (total > 0) {
    p.f_preamble = static_cast<double>(r.preamble) / total;
    p.f_allocation = static_cast<double>(r.allocation) / total;
    p.f_compute = static_cast<double>(r.compute) / total;
    p.f_writeback = static_cast<double>(r.writeback) / total;
  }
  return p;
}

Simulator::Simulator(const SimConfig& cfg, std::shared_ptr<const KernelLibrary> library)
    : cfg_(validated(cfg)), memory_(cfg.memory_size, cfg.memory_base), cache_(cfg_, memory_) {
  vpus_.reserve(cfg_.num_vpus);
  for (uint32_t v = 0; v < cfg_.num_vpus; ++v) {
    vpus_.emplace_back(v, cache_, cfg_.vregs_per_vpu, cfg_.lanes, cfg_.issue_cycles);
  }
  if (!library) library = std::make_shared<const KernelLibrary>(KernelLibrary::builtin());
  runtime_ = std::make_unique<Runtime>(cfg_, cache_, vpus_, std::move(library));
}

void Simulator::set_trace(std::ostream* os) {
  trace_ = os;
  if (!os) {
    runtime_->set_trace(nullptr);
    for (auto& v : vpus_) v.set_trace(nullptr);
    return;
  }
  runtime_->set_trace([this](uint64_t t, const std::string& msg) {
    fmt::print(*trace_, "{:>10} ecpu {}\n", t, msg);
  });
  for (auto& v : vpus_) {
    v.set_trace([this](uint32_t id, const VectorMicroOp& op, uint64_t cycles) {
      fmt::print(*trace_, "{:>10} vpu{} {} cycles={}\n", now_, id, format_op(op), cycles);
    });
  }
}

ExecutionReport Simulator::run(const HostProgram& prog, const std::string& workload) {
  if (ran_) throw Error(Errc::kIllegalInstruction, "a simulator runs a single program");
  ran_ = true;
  Host host(cfg_, cache_, *runtime_, prog);
  uint64_t t = 0;
  auto finish = [&] {
    loads_ = host.loads();
    bridge_history_ = host.bridge_history();
    stall_episodes_ = host.stall_episodes();
  };
  try {
    for (;;) {
      now_ = t;
      const uint64_t v0 = runtime_->version();
      runtime_->retire(t);
      if (host.retire(t)) runtime_->lock_granted(t);
      host.step(t);
      runtime_->step(t);
      if (host.done() && runtime_->drained()) break;
      uint64_t next = std::min(host.next_event(), runtime_->next_event());
      if (host.waiting() && runtime_->version() != v0) next = std::min(next, t + 1);
      if (next == kNever) {
        throw Error(Errc::kDeadlock,
                    fmt::format("no progress possible at cycle {} (host waiting, runtime idle)", t));
      }
      t = next;
    }
  } catch (...) {
    finish();
    throw;
  }
  finish();
  runtime_->close(t);
  if (trace_) fmt::print(*trace_, "{:>10} host done\n", t);

  ExecutionReport r;
  r.workload = workload;
  r.config = cfg_.tag();
  r.total_cycles = t;
  const PhaseCycles& ph = runtime_->phases();
  r.preamble = ph.preamble;
  r.allocation = ph.allocation;
  r.compute = ph.compute;
  r.writeback = ph.writeback;
  r.host_stall = host.stall_cycles();
  r.ecpu_idle = runtime_->idle_cycles();
  r.host_local = host.local_cycles();
  r.kernels = runtime_->kernels_completed();
  r.offloads = host.offloads();
  return r;
}

std::vector<int64_t> Simulator::read_matrix(const isa::MatrixDescriptor& d) const {
  std::vector<int64_t> out;
  out.reserve(std::size_t{d.rows} * d.cols);
  const unsigned eb = d.element_bytes();
  for (uint32_t r = 0; r < d.rows; ++r) {
    for (uint32_t c = 0; c < d.cols; ++c) {
      out.push_back(sign_extend(cache_.peek(d.element_address(r, c), eb), 8 * eb));
    }
  }
  return out;
}

void Simulator::write_matrix(const isa::MatrixDescriptor& d, const std::vector<int64_t>& values) {
  if (values.size() != std::size_t{d.rows} * d.cols) {
    throw Error(Errc::kShapeMismatch,
                fmt::format("{} values for a {}x{} matrix", values.size(), d.rows, d.cols));
  }
  const unsigned eb = d.element_bytes();
  for (uint32_t r = 0; r < d.rows; ++r) {
    for (uint32_t c = 0; c < d.cols; ++c) {
      memory_.write(d.element_address(r, c), eb,
                    static_cast<uint32_t>(values[std::size_t{r} * d.cols + c]));
    }
  }
}

}  // namespace arcane
