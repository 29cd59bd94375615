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

// Command-line front end.
//
//   sim run <workload>
//   sim sweep overhead|speedup [--sizes ...] [--lanes ...] [--eew ...] [--out FILE]
//   sim encode "<asm-line>"
//   sim decode <word> [rs1 rs2 rs3]
//
// Exit status: 0 success, 2 parse or configuration error, 3 runtime error.

#include <fmt/format.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "arcane/errors.hpp"
#include "arcane/harness.hpp"
#include "arcane/isa.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitParse = 2;
constexpr int kExitRuntime = 3;

uint32_t parse_u32(const std::string& s) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &used, 0);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || used == 0 || v > 0xffffffffULL) {
    throw arcane::Error(arcane::Errc::kParseError, fmt::format("bad number '{}'", s));
  }
  return static_cast<uint32_t>(v);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error(fmt::format("cannot write {}", path));
  return os;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cycle-level simulator of a compute-capable last-level cache"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string trace_path;
  app.add_option("--config", config_path, "Configuration file (key = value lines)")
      ->check(CLI::ExistingFile);
  app.add_option("--trace", trace_path,
                 "Event log path; cache and address tables go to PATH.ct.csv and PATH.at.csv");

  auto* run = app.add_subcommand("run", "Run a workload file and print its execution report");
  std::string workload_path;
  std::string report_path;
  run->add_option("workload", workload_path, "Workload file")->required()->check(CLI::ExistingFile);
  run->add_option("--out", report_path, "Also write the report CSV here");

  auto* sweep = app.add_subcommand("sweep", "Sweep the convolution layer over sizes and lanes");
  std::string sweep_kind;
  std::vector<uint32_t> sizes = arcane::kDefaultSizes;
  std::vector<uint32_t> lanes = arcane::kDefaultLanes;
  std::vector<unsigned> eews;
  std::vector<uint32_t> filters = {3};
  std::string sweep_out;
  std::string plot_out;
  sweep->add_option("kind", sweep_kind, "overhead or speedup")
      ->required()
      ->check(CLI::IsMember({"overhead", "speedup"}));
  sweep->add_option("--sizes", sizes, "Input sizes")->delimiter(',');
  sweep->add_option("--lanes", lanes, "Lane counts")->delimiter(',');
  sweep->add_option("--eew", eews, "Element widths in bits (8, 16, 32)")
      ->delimiter(',')
      ->check(CLI::IsMember({8u, 16u, 32u}));
  sweep->add_option("--filters", filters, "Filter sizes (speedup only)")->delimiter(',');
  sweep->add_option("--out", sweep_out, "Output CSV (default: stdout)");
  sweep->add_option("--plot", plot_out, "Speedup series table for plotting");

  auto* encode = app.add_subcommand("encode", "Assemble one xmr/xmk statement");
  std::string asm_line;
  encode->add_option("line", asm_line, "Statement, e.g. \"xmk4.w m2, m0, m1\"")->required();

  auto* decode = app.add_subcommand("decode", "Disassemble an instruction word");
  std::string word_text;
  std::vector<std::string> rs_text;
  decode->add_option("word", word_text, "Instruction word (hex)")->required();
  decode->add_option("rs", rs_text, "Values of rs1, rs2, rs3")->expected(0, 3);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitParse;
  }

  try {
    arcane::SimConfig base;
    if (!config_path.empty()) base = arcane::load_config(config_path);

    if (*run) {
      arcane::Workload w = arcane::load_workload(workload_path);
      // --config overrides the workload's own [config] section.
      if (!config_path.empty()) {
        arcane::SimConfig cfg = w.config;
        std::ifstream in(config_path);
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        arcane::apply_config_text(text, cfg);
        w.config = cfg;
      }
      arcane::RunOptions opts;
      std::ofstream trace, ct, at;
      if (!trace_path.empty()) {
        trace = open_out(trace_path);
        ct = open_out(trace_path + ".ct.csv");
        at = open_out(trace_path + ".at.csv");
        opts.trace = &trace;
        opts.ct_dump = &ct;
        opts.at_dump = &at;
      }
      const arcane::RunResult r = arcane::run_workload(w, opts);
      const std::string csv = arcane::ExecutionReport::csv_header() + "\n" + r.report.csv_row() + "\n";
      std::cout << csv;
      if (!report_path.empty()) open_out(report_path) << csv;
    } else if (*sweep) {
      std::vector<arcane::isa::ElementWidth> widths;
      for (unsigned b : eews) widths.push_back(*arcane::isa::width_from_bits(b));
      std::ofstream file;
      std::ostream* os = &std::cout;
      if (!sweep_out.empty()) {
        file = open_out(sweep_out);
        os = &file;
      }
      if (sweep_kind == "overhead") {
        if (widths.empty()) widths.push_back(arcane::isa::ElementWidth::kWord);
        std::vector<arcane::OverheadPoint> pts;
        for (auto eew : widths) {
          auto part = arcane::sweep_overhead(sizes, lanes, eew, base);
          pts.insert(pts.end(), part.begin(), part.end());
        }
        arcane::write_overhead_csv(*os, pts);
      } else {
        if (widths.empty()) widths = {arcane::isa::ElementWidth::kByte};
        const auto pts = arcane::sweep_speedup(sizes, lanes, widths, filters, base);
        arcane::write_speedup_csv(*os, pts);
        if (!plot_out.empty()) {
          auto plot = open_out(plot_out);
          arcane::write_speedup_plot(plot, pts);
        }
      }
    } else if (*encode) {
      const arcane::isa::Encoded e = arcane::assemble_offload(asm_line);
      std::cout << fmt::format("word={:#010x} rs1={:#010x} rs2={:#010x} rs3={:#010x}\n",
                               e.word.raw, e.values[0], e.values[1], e.values[2]);
    } else if (*decode) {
      uint32_t rs[3] = {0, 0, 0};
      for (std::size_t i = 0; i < rs_text.size(); ++i) rs[i] = parse_u32(rs_text[i]);
      const auto op = arcane::isa::decode({parse_u32(word_text)}, rs[0], rs[1], rs[2]);
      std::cout << arcane::disassemble(op) << '\n';
    }
  } catch (const arcane::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitParse;
  } catch (const arcane::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    const bool input = e.code() == arcane::Errc::kParseError ||
                       e.code() == arcane::Errc::kConfigInvariantViolated ||
                       e.code() == arcane::Errc::kNotXmnmc ||
                       e.code() == arcane::Errc::kInvalidEew;
    return input ? kExitParse : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
