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

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "arcane/errors.hpp"
#include "arcane/harness.hpp"
#include "arcane/isa.hpp"
#include "arcane/simulator.hpp"

namespace py = pybind11;
using namespace pybind11::literals;
using namespace arcane;

namespace {

// Owned by the module for the life of the interpreter.
py::handle sim_error_type;
py::handle parse_error_type;

isa::ElementWidth eew_of(unsigned bits) {
  const auto w = isa::width_from_bits(bits);
  if (!w) throw py::value_error("element width must be 8, 16 or 32");
  return *w;
}

std::vector<isa::ElementWidth> eews_of(const std::vector<unsigned>& bits) {
  std::vector<isa::ElementWidth> out;
  for (unsigned b : bits) out.push_back(eew_of(b));
  return out;
}

py::dict report_dict(const ExecutionReport& r) {
  return py::dict("workload"_a = r.workload, "config"_a = r.config, "total_cycles"_a = r.total_cycles,
                  "preamble"_a = r.preamble, "allocation"_a = r.allocation, "compute"_a = r.compute,
                  "writeback"_a = r.writeback, "host_stall"_a = r.host_stall, "ecpu_idle"_a = r.ecpu_idle,
                  "host_local"_a = r.host_local, "kernels"_a = r.kernels, "offloads"_a = r.offloads);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Cycle-level simulator of an in-cache matrix accelerator";

  sim_error_type = py::exception<Error>(m, "SimError", PyExc_RuntimeError).release();
  parse_error_type = py::exception<ParseError>(m, "ParseError", sim_error_type.ptr()).release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ParseError& e) {
      py::object exc = parse_error_type(e.what());
      exc.attr("code") = std::string(errc_name(e.code()));
      exc.attr("line") = e.line();
      exc.attr("column") = e.column();
      PyErr_SetObject(parse_error_type.ptr(), exc.ptr());
    } catch (const Error& e) {
      py::object exc = sim_error_type(e.what());
      exc.attr("code") = std::string(errc_name(e.code()));
      PyErr_SetObject(sim_error_type.ptr(), exc.ptr());
    }
  });

  py::class_<SimConfig>(m, "SimConfig")
      .def(py::init<>())
      .def(py::init([](const py::kwargs& kw) {
        SimConfig c;
        for (const auto& [k, v] : kw) {
          const auto key = py::str(k).cast<std::string>();
          if (!set_config_key(c, key, py::str(v).cast<std::string>())) {
            throw py::key_error("unknown configuration key '" + key + "'");
          }
        }
        c.validate();
        return c;
      }))
      .def_readwrite("num_vpus", &SimConfig::num_vpus)
      .def_readwrite("vregs_per_vpu", &SimConfig::vregs_per_vpu)
      .def_readwrite("line_bytes", &SimConfig::line_bytes)
      .def_readwrite("lanes", &SimConfig::lanes)
      .def_readwrite("at_capacity", &SimConfig::at_capacity)
      .def_readwrite("queue_depth", &SimConfig::queue_depth)
      .def_readwrite("matrix_registers", &SimConfig::matrix_registers)
      .def_readwrite("issue_cycles", &SimConfig::issue_cycles)
      .def_readwrite("decode_cycles", &SimConfig::decode_cycles)
      .def_readwrite("bridge_handshake_cycles", &SimConfig::bridge_handshake_cycles)
      .def_readwrite("cpi_scalar_mac", &SimConfig::cpi_scalar_mac)
      .def_readwrite("simd_efficiency", &SimConfig::simd_efficiency)
      .def_readwrite("memory_size", &SimConfig::memory_size)
      .def_property_readonly("capacity_bytes", &SimConfig::capacity_bytes)
      .def("set", [](SimConfig& c, const std::string& key, const std::string& value) {
        if (!set_config_key(c, key, value)) throw py::key_error("unknown configuration key '" + key + "'");
      }, "key"_a, "value"_a)
      .def("apply", [](SimConfig& c, const std::string& text) { apply_config_text(text, c); }, "text"_a,
           "Applies 'key = value' lines.")
      .def("validate", &SimConfig::validate)
      .def("tag", &SimConfig::tag)
      .def("__repr__", [](const SimConfig& c) { return "<SimConfig " + c.tag() + ">"; });

  m.def("load_config", [](const std::filesystem::path& p) { return load_config(p); }, "path"_a);

  py::class_<isa::MatrixDescriptor>(m, "MatrixDescriptor")
      .def_readonly("base", &isa::MatrixDescriptor::base)
      .def_readonly("stride", &isa::MatrixDescriptor::stride)
      .def_readonly("rows", &isa::MatrixDescriptor::rows)
      .def_readonly("cols", &isa::MatrixDescriptor::cols)
      .def_property_readonly("eew", [](const isa::MatrixDescriptor& d) { return isa::bits(d.eew); });

  m.def("encode", [](const std::string& line) {
    const auto e = assemble_offload(line);
    return py::make_tuple(e.word.raw, e.values[0], e.values[1], e.values[2]);
  }, "line"_a, "Assembles one xmr/xmk statement into (word, rs1, rs2, rs3).");
  m.def("decode", [](uint32_t word, uint32_t rs1, uint32_t rs2, uint32_t rs3) {
    return disassemble(isa::decode(isa::InstructionWord{word}, rs1, rs2, rs3));
  }, "word"_a, "rs1"_a = 0, "rs2"_a = 0, "rs3"_a = 0);

  m.def("random_matrix", [](uint64_t seed, uint32_t rows, uint32_t cols, unsigned eew) {
    return random_matrix(seed, rows, cols, eew_of(eew));
  }, "seed"_a, "rows"_a, "cols"_a, "eew"_a = 32);

  py::class_<Workload>(m, "Workload")
      .def_readonly("name", &Workload::name)
      .def_readonly("config", &Workload::config)
      .def_property_readonly("matrices", [](const Workload& w) {
        py::dict d;
        for (const auto& mat : w.matrices) d[py::str(mat.name)] = mat.desc;
        return d;
      })
      .def_property_readonly("num_events", [](const Workload& w) { return w.program.events.size(); });

  m.def("parse_workload", [](const std::string& text, const std::string& name, std::optional<SimConfig> cfg) {
    return parse_workload(text, name, ".", cfg.value_or(SimConfig{}));
  }, "text"_a, "name"_a = "workload", "config"_a = py::none());
  m.def("load_workload", [](const std::filesystem::path& p, std::optional<SimConfig> cfg) {
    return load_workload(p, cfg.value_or(SimConfig{}));
  }, "path"_a, "config"_a = py::none());
  m.def("conv_layer_workload", [](uint32_t size, uint32_t k, unsigned eew, std::optional<SimConfig> cfg,
                                  uint64_t seed) {
    return conv_layer_workload(size, k, eew_of(eew), cfg.value_or(SimConfig{}), seed);
  }, "size"_a, "k"_a = 3, "eew"_a = 32, "config"_a = py::none(), "seed"_a = 1);

  m.def("run", [](const Workload& w, std::optional<SimConfig> cfg, bool trace) {
    std::ostringstream log;
    RunOptions o;
    o.config_override = cfg;
    if (trace) o.trace = &log;
    RunResult r;
    {
      py::gil_scoped_release release;
      r = run_workload(w, o);
    }
    py::list loads;
    for (const auto& l : r.loads) loads.append(py::make_tuple(l.time, l.addr, l.width, l.value));
    py::dict out("report"_a = report_dict(r.report), "matrices"_a = r.matrices, "loads"_a = loads,
                 "csv"_a = r.report.csv_row());
    if (trace) out["trace"] = log.str();
    return out;
  }, "workload"_a, "config"_a = py::none(), "trace"_a = false,
        "Runs a workload to completion and returns its report and final matrices.");

  m.attr("CSV_HEADER") = ExecutionReport::csv_header();

  m.def("sweep_overhead", [](const std::vector<uint32_t>& sizes, const std::vector<uint32_t>& lanes,
                             unsigned eew, std::optional<SimConfig> cfg) {
    std::vector<OverheadPoint> pts;
    {
      py::gil_scoped_release release;
      pts = sweep_overhead(sizes, lanes, eew_of(eew), cfg.value_or(SimConfig{}));
    }
    std::ostringstream os;
    write_overhead_csv(os, pts);
    return os.str();
  }, "sizes"_a = kDefaultSizes, "lanes"_a = kDefaultLanes, "eew"_a = 32, "config"_a = py::none(),
        "Runs the conv-layer phase sweep and returns it as CSV text.");
  m.def("sweep_speedup", [](const std::vector<uint32_t>& sizes, const std::vector<uint32_t>& lanes,
                            const std::vector<unsigned>& eews, const std::vector<uint32_t>& filters,
                            std::optional<SimConfig> cfg) {
    const auto widths = eews_of(eews);
    std::vector<SpeedupPoint> pts;
    {
      py::gil_scoped_release release;
      pts = sweep_speedup(sizes, lanes, widths, filters, cfg.value_or(SimConfig{}));
    }
    std::ostringstream os;
    write_speedup_csv(os, pts);
    return os.str();
  }, "sizes"_a = kDefaultSizes, "lanes"_a = kDefaultLanes, "eew"_a = std::vector<unsigned>{8, 16, 32},
        "filters"_a = std::vector<uint32_t>{3}, "config"_a = py::none(),
        "Runs the speedup sweep against both baselines and returns it as CSV text.");
}
