#pragma once

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "agc/contract_sdp.hpp"
#include "agc/infograph.hpp"
#include "agc/instance_io.hpp"
#include "agc/lifting.hpp"
#include "agc/report_io.hpp"
#include "agc/simulate.hpp"

namespace agc::cli {

/// Stable process exit codes.
enum ExitCode : int {
  Ok = 0,
  UsageError = 1,     // bad arguments, parse or validation failure
  IoFailure = 2,      // unreadable input or unwritable output
  Infeasible = 3,     // the program was proven infeasible
  SolverFailure = 4,  // numerical breakdown, inaccurate solve, off-pattern recovery
  Violations = 5,     // simulation found constraint or contract violations
  HashMismatch = 6,   // synthesis report belongs to a different instance
};

namespace detail {

inline std::string utc_timestamp()
{
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

inline std::string set_str(const std::vector<int>& v)
{
  if (v.empty()) { return "∅"; }
  std::string s = "{";
  for (std::size_t k = 0; k < v.size(); ++k) { s += (k ? ", " : "") + std::to_string(v[k] + 1); }
  return s + "}";
}

inline std::string edge_set_str(const std::vector<Edge>& edges)
{
  if (edges.empty()) { return "∅"; }
  std::string s = "{";
  for (std::size_t k = 0; k < edges.size(); ++k) {
    s += (k ? ", " : "") + std::string("(") + std::to_string(edges[k].from + 1) + ", " +
         std::to_string(edges[k].to + 1) + ")";
  }
  return s + "}";
}

inline std::string fmt(double v)
{
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

/// Writes a JSON artifact; the document is already complete.
inline void write_json(const std::string& path, const json& doc) { io::write_file(path, doc.dump(2) + "\n"); }

struct SolverFlags
{
  std::string backend;
  double feas_tol = 0.0;
  double gap_tol = 0.0;
  int max_iters = 0;

  void attach(CLI::App* cmd)
  {
    cmd->add_option("--backend", backend, "Conic backend (ipm or cvxpy); overrides AGC_CONIC_BACKEND")
      ->check(CLI::IsMember({"ipm", "cvxpy"}));
    cmd->add_option("--feas-tol", feas_tol, "Primal/dual feasibility tolerance; overrides AGC_FEAS_TOL")
      ->check(CLI::PositiveNumber);
    cmd->add_option("--gap-tol", gap_tol, "Absolute and relative gap tolerance; overrides AGC_GAP_TOL")
      ->check(CLI::PositiveNumber);
    cmd->add_option("--max-iters", max_iters, "Iteration limit; overrides AGC_MAX_ITERS")->check(CLI::PositiveNumber);
  }

  conic::BackendSettings resolve(RunManifest& m) const
  {
    conic::BackendSettings s = conic::settings_from_env();
    if (!backend.empty()) {
      s.backend = conic::backend_from_string(backend);
      m.overrides["backend"] = backend;
    }
    if (feas_tol > 0.0) {
      s.ipm.feastol = feas_tol;
      m.overrides["feas_tol"] = fmt(feas_tol);
    }
    if (gap_tol > 0.0) {
      s.ipm.abstol = s.ipm.reltol = gap_tol;
      m.overrides["gap_tol"] = fmt(gap_tol);
    }
    if (max_iters > 0) {
      s.ipm.max_iters = max_iters;
      m.overrides["max_iters"] = std::to_string(max_iters);
    }
    return s;
  }
};

}  // namespace detail

inline int cmd_analyze(const std::string& path, const std::string& out_path, std::ostream& out)
{
  const ProblemInstance inst = load_instance(path);
  const InfoDecomposition d = compute_decomposition(inst, build_coupling_graphs(inst));
  const std::string hash = instance_hash(inst);
  out << "instance: " << path << " (hash " << hash << ")\n";
  out << "subsystems: " << inst.subsystems() << ", horizon: " << inst.horizon() << "\n";
  for (int i = 0; i < d.subsystems; ++i) {
    out << "N(" << i + 1 << ") = " << detail::set_str(d.nested[i]) << "\n";
    out << "C(" << i + 1 << ") = " << detail::set_str(d.coupled[i]) << "\n";
  }
  out << "E_C = " << detail::edge_set_str(d.E_C) << "\n";
  out << "C = " << detail::set_str(d.coupled_set) << "; "
      << (is_partially_nested(d) ? "partially nested" : "nonclassical") << "\n";
  if (!out_path.empty()) {
    RunManifest m{path, "analyze", {}, std::nullopt, out_path, tool_version, detail::utc_timestamp()};
    json j;
    j["format"] = "agc-analysis";
    j["version"] = 1;
    j["manifest"] = manifest_to_json(m);
    j["instance_hash"] = hash;
    j["decomposition"] = decomposition_to_json(d);
    detail::write_json(out_path, j);
  }
  return Ok;
}

inline int cmd_synthesize(const std::string& path, const std::string& out_path, const detail::SolverFlags& flags,
                          bool fix_Y_zero, std::ostream& out, std::ostream& err)
{
  const ProblemInstance inst = load_instance(path);
  RunManifest m{path, "synthesize", {}, std::nullopt, out_path, tool_version, detail::utc_timestamp()};
  SynthesisOptions opts;
  opts.backend = flags.resolve(m);
  opts.assembly.fix_Y_zero = fix_Y_zero;
  if (fix_Y_zero) { m.overrides["fix_Y_zero"] = "true"; }

  const InfoDecomposition d = compute_decomposition(inst, build_coupling_graphs(inst));
  const LiftedSystem sys = build_lifted(inst, d);
  SynthesisResult r;
  try {
    r = synthesize(inst, d, sys, opts);
  } catch (const OffPatternError& e) {
    err << "error: " << e.what() << "\n";
    return SolverFailure;
  }
  detail::write_json(out_path, synthesis_to_json(r, d, instance_hash(inst), m));
  out << "status: " << conic::to_string(r.status) << "\n";
  if (r.solved()) {
    out << "objective: " << detail::fmt(r.objective) << "\n";
    out << "lambda: " << detail::fmt(r.variables->lambda) << ", beta: " << detail::fmt(r.variables->beta) << "\n";
  }
  out << "solver: " << r.diagnostics.backend << ", " << r.diagnostics.iterations << " iterations\n";
  out << "report: " << out_path << "\n";
  switch (r.status) {
  case conic::SolveStatus::Optimal: return Ok;
  case conic::SolveStatus::Infeasible: return Infeasible;
  case conic::SolveStatus::Inaccurate:
    err << "warning: solver finished with reduced accuracy\n";
    return SolverFailure;
  case conic::SolveStatus::Failure: break;
  }
  err << "error: solver failure: " << r.diagnostics.message << "\n";
  return SolverFailure;
}

struct SimulateArgs
{
  std::string instance;
  std::string synthesis;
  long samples = 10000;
  std::uint64_t seed = 1;
  std::string out;
  std::string table;
  double abs_tol = 1e-6;
  double rel_tol = 1e-6;
  double membership_tol = 1e-6;
};

inline int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err)
{
  if (a.samples < 1) { throw ValidationError("sample count must be at least 1"); }
  const ProblemInstance inst = load_instance(a.instance);
  const StoredSynthesis stored = synthesis_from_json(io::parse_text(io::read_file(a.synthesis)));
  const std::string hash = instance_hash(inst);
  if (stored.instance_hash != hash) {
    err << "error: hash mismatch: synthesis was produced from instance " << stored.instance_hash << ", not " << hash
        << "\n";
    return HashMismatch;
  }
  if (!stored.result.solved()) {
    throw ValidationError("synthesis report has status '" + conic::to_string(stored.result.status) +
                          "'; nothing to simulate");
  }
  check_synthesis_shapes(stored, inst);

  RunManifest m{a.instance, "simulate", {}, a.seed, a.out, tool_version, detail::utc_timestamp()};
  m.overrides["synthesis"] = a.synthesis;
  m.overrides["samples"] = std::to_string(a.samples);
  m.overrides["abs_tol"] = detail::fmt(a.abs_tol);
  m.overrides["rel_tol"] = detail::fmt(a.rel_tol);
  m.overrides["membership_tol"] = detail::fmt(a.membership_tol);
  if (!a.table.empty()) { m.overrides["table"] = a.table; }

  SimulationConfig cfg;
  cfg.samples = a.samples;
  cfg.seed = a.seed;
  cfg.abs_tol = a.abs_tol;
  cfg.rel_tol = a.rel_tol;
  cfg.membership_tol = a.membership_tol;
  cfg.keep_table = !a.table.empty();

  SimulationReport rep;
  try {
    rep = run(inst, stored.result, cfg);
  } catch (const CausalityError& e) {
    err << "error: " << e.what() << "\n";
    return Violations;
  }
  detail::write_json(a.out, simulation_to_json(rep, hash, m));
  if (!a.table.empty()) {
    std::ostringstream os;
    write_table(os, rep);
    io::write_file(a.table, os.str());
  }
  out << "samples: " << rep.samples << " (seed " << rep.seed << ")\n";
  out << "constraint violations: " << rep.constraint_violations << " (worst slack " << detail::fmt(rep.worst_slack)
      << ")\n";
  out << "contract violations: " << rep.contract_violations << " (worst membership "
      << detail::fmt(rep.worst_membership) << ")\n";
  out << "surrogate cost: " << detail::fmt(rep.surrogate_cost_mean) << " +/- " << detail::fmt(rep.surrogate_cost_se)
      << "\n";
  out << "actual closed-loop cost: " << detail::fmt(rep.actual_cost_mean) << " +/- "
      << detail::fmt(rep.actual_cost_se) << "\n";
  out << "report: " << a.out << "\n";
  return rep.clean() ? Ok : Violations;
}

/// One summary line per recognised artifact in dir, sorted by file name.
inline int cmd_report(const std::string& dir, std::ostream& out, std::ostream& err)
{
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) {
    err << "error: not a directory: " << dir << "\n";
    return IoFailure;
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") { files.push_back(e.path()); }
  }
  std::sort(files.begin(), files.end());
  int seen = 0;
  for (const auto& f : files) {
    json j;
    try {
      j = io::parse_text(io::read_file(f));
    } catch (const std::exception&) {
      continue;
    }
    if (!j.is_object()) { continue; }
    const std::string format = j.value("format", std::string());
    const std::string name = f.filename().string();
    if (format == "agc-synthesis") {
      out << name << ": synthesis, status " << j.value("status", std::string("?"));
      if (j.contains("lambda")) {
        out << ", objective " << detail::fmt(j.value("objective", 0.0)) << ", lambda "
            << detail::fmt(j.value("lambda", 0.0));
        if (j.contains("row_slacks") && !j["row_slacks"].empty()) {
          const auto slacks = j["row_slacks"].get<std::vector<double>>();
          out << ", min row slack " << detail::fmt(*std::min_element(slacks.begin(), slacks.end()));
        }
      }
      out << ", instance " << j.value("instance_hash", std::string("?")) << "\n";
    } else if (format == "agc-simulation") {
      out << name << ": simulation, " << j.value("samples", 0L) << " samples, " << j.value("constraint_violations", 0L)
          << " constraint violations, " << j.value("contract_violations", 0L) << " contract violations, surrogate cost "
          << detail::fmt(j["surrogate_cost"].value("mean", 0.0)) << " +/- "
          << detail::fmt(j["surrogate_cost"].value("std_error", 0.0)) << "\n";
    } else if (format == "agc-analysis") {
      const auto& d = j["decomposition"];
      out << name << ": analysis, " << (d.value("partially_nested", false) ? "partially nested" : "nonclassical")
          << ", coupled subsystems " << d["coupled_set"].dump() << "\n";
    } else {
      continue;
    }
    ++seen;
  }
  out << seen << " artifact(s) in " << dir << "\n";
  return Ok;
}

/// Entry point shared by the executable and in-process tests. args excludes the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
  CLI::App app{"Decentralized control synthesis with assume-guarantee contracts", "agc"};
  app.set_version_flag("--version", tool_version);
  app.require_subcommand(1);

  std::string instance;
  std::string out_path;

  auto* analyze = app.add_subcommand("analyze", "Print the information decomposition of an instance");
  analyze->add_option("instance", instance, "Instance file")->required();
  analyze->add_option("-o,--output", out_path, "Also write the decomposition as JSON");

  detail::SolverFlags flags;
  bool fix_Y_zero = false;
  auto* synth = app.add_subcommand("synthesize", "Solve the policy-contract program and write a synthesis report");
  synth->add_option("instance", instance, "Instance file")->required();
  synth->add_option("-o,--output", out_path, "Synthesis report path")->required();
  synth->add_flag("--fix-Y-zero", fix_Y_zero, "Restrict the contract to translation and scaling");
  flags.attach(synth);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo validation of a synthesized policy");
  simulate->add_option("instance", sim.instance, "Instance file")->required();
  simulate->add_option("synthesis", sim.synthesis, "Synthesis report")->required();
  simulate->add_option("-n,--samples", sim.samples, "Number of disturbance samples")->required();
  simulate->add_option("--seed", sim.seed, "Random seed")->required();
  simulate->add_option("-o,--output", sim.out, "Simulation report path")->required();
  simulate->add_option("--table", sim.table, "Optional per-sample CSV table");
  simulate->add_option("--abs-tol", sim.abs_tol, "Absolute constraint tolerance")->check(CLI::NonNegativeNumber);
  simulate->add_option("--rel-tol", sim.rel_tol, "Relative constraint tolerance")->check(CLI::NonNegativeNumber);
  simulate->add_option("--membership-tol", sim.membership_tol, "Contract membership tolerance")
    ->check(CLI::NonNegativeNumber);

  std::string dir;
  auto* report = app.add_subcommand("report", "Summarize all artifacts in a directory");
  report->add_option("dir", dir, "Artifact directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? Ok : UsageError;
  }

  try {
    if (analyze->parsed()) { return cmd_analyze(instance, out_path, out); }
    if (synth->parsed()) { return cmd_synthesize(instance, out_path, flags, fix_Y_zero, out, err); }
    if (simulate->parsed()) { return cmd_simulate(sim, out, err); }
    if (report->parsed()) { return cmd_report(dir, out, err); }
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return IoFailure;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return UsageError;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return UsageError;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return UsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return SolverFailure;
  }
  return UsageError;
}

inline int main(int argc, char** argv)
{
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args);
}

}  // namespace agc::cli
