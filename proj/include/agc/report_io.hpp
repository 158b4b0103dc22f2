#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "agc/contract_sdp.hpp"
#include "agc/instance_io.hpp"
#include "agc/simulate.hpp"

namespace agc {

inline constexpr const char* tool_version = "1.0.0";

/// Provenance of an output artifact. The timestamp is the only field allowed to differ between identical runs.
struct RunManifest
{
  std::string instance;
  std::string command;
  std::map<std::string, std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string output;
  std::string version = tool_version;
  std::string timestamp;
};

inline json manifest_to_json(const RunManifest& m)
{
  json j;
  j["tool"] = "agc";
  j["version"] = m.version;
  j["command"] = m.command;
  j["instance"] = m.instance;
  json o = json::object();
  for (const auto& [k, v] : m.overrides) { o[k] = v; }
  j["overrides"] = o;
  j["seed"] = m.seed ? json(*m.seed) : json(nullptr);
  j["output"] = m.output;
  j["timestamp"] = m.timestamp;
  return j;
}

inline RunManifest manifest_from_json(const json& j)
{
  RunManifest m;
  m.version = j.value("version", std::string());
  m.command = j.value("command", std::string());
  m.instance = j.value("instance", std::string());
  if (j.contains("overrides") && j["overrides"].is_object()) {
    for (const auto& [k, v] : j["overrides"].items()) { m.overrides[k] = v.get<std::string>(); }
  }
  if (j.contains("seed") && j["seed"].is_number_unsigned()) { m.seed = j["seed"].get<std::uint64_t>(); }
  m.output = j.value("output", std::string());
  m.timestamp = j.value("timestamp", std::string());
  return m;
}

namespace io {

inline json diagnostics_to_json(const conic::SolverDiagnostics& d)
{
  return {{"backend", d.backend},           {"iterations", d.iterations},
          {"primal_residual", d.primal_residual}, {"dual_residual", d.dual_residual},
          {"gap", d.gap},                   {"relative_gap", d.relative_gap},
          {"message", d.message}};
}

inline json one_based(const std::vector<int>& v)
{
  json out = json::array();
  for (int k : v) { out.push_back(k + 1); }
  return out;
}

}  // namespace io

inline json decomposition_to_json(const InfoDecomposition& d)
{
  json j;
  json nested = json::array();
  json coupled = json::array();
  for (int i = 0; i < d.subsystems; ++i) {
    nested.push_back(io::one_based(d.nested[i]));
    coupled.push_back(io::one_based(d.coupled[i]));
  }
  j["N"] = nested;
  j["C"] = coupled;
  j["coupled_set"] = io::one_based(d.coupled_set);
  json ec = json::array();
  for (const auto& e : d.E_C) { ec.push_back({e.from + 1, e.to + 1}); }
  j["E_C"] = ec;
  j["partially_nested"] = is_partially_nested(d);
  j["coupled_state_dim"] = d.coupled_state_dim;
  j["coupled_trajectory_dim"] = d.coupled_traj_dim;
  return j;
}

inline json synthesis_to_json(const SynthesisResult& r, const InfoDecomposition& d, const std::string& hash,
                              const RunManifest& manifest)
{
  json j;
  j["format"] = "agc-synthesis";
  j["version"] = 1;
  j["manifest"] = manifest_to_json(manifest);
  j["instance_hash"] = hash;
  j["status"] = conic::to_string(r.status);
  j["objective"] = r.objective;
  j["solver"] = io::diagnostics_to_json(r.diagnostics);
  j["decomposition"] = decomposition_to_json(d);
  j["program"] = {{"variables", r.num_vars}, {"lmi_dim", r.lmi_dim}};
  if (!r.variables) { return j; }
  const auto& v = *r.variables;
  j["lambda"] = v.lambda;
  j["beta"] = v.beta;
  j["contract"] = {{"center", io::to_json(r.contract->center)},
                   {"shape", io::to_json(r.contract->shape)},
                   {"vbar", io::to_json(r.contract->vbar)},
                   {"Z", io::to_json(r.contract->Z)}};
  j["policy"] = {{"u_open", io::to_json(r.policy->u_open)},
                 {"Qw", io::to_json(r.policy->Qw)},
                 {"Qv", io::to_json(r.policy->Qv)}};
  j["row_slacks"] = r.row_slacks;
  j["checks"] = {{"off_pattern", r.off_pattern}, {"max_equality_residual", r.max_equality_residual}};
  j["variables"] = {{"ubar", io::to_json(v.ubar)}, {"xbar", io::to_json(v.xbar)}, {"vbar", io::to_json(v.vbar)},
                    {"Qw", io::to_json(v.Qw)},     {"Qxi", io::to_json(v.Qxi)},   {"Y", io::to_json(v.Y)},
                    {"Pw", io::to_json(v.Pw)},     {"Pxi", io::to_json(v.Pxi)},   {"lambda", v.lambda},
                    {"beta", v.beta},              {"t1", io::to_json(v.t1)},     {"t2", io::to_json(v.t2)}};
  return j;
}

struct StoredSynthesis
{
  SynthesisResult result;
  std::string instance_hash;
  RunManifest manifest;
};

inline StoredSynthesis synthesis_from_json(const json& j)
{
  if (!j.is_object() || j.value("format", std::string()) != "agc-synthesis") {
    throw ParseError("format", "not a synthesis report (expected \"agc-synthesis\")");
  }
  StoredSynthesis s;
  s.instance_hash = io::require(j, "instance_hash").get<std::string>();
  if (j.contains("manifest")) { s.manifest = manifest_from_json(j["manifest"]); }
  auto& r = s.result;
  r.status = conic::status_from_string(io::require(j, "status").get<std::string>());
  r.objective = io::number(io::require(j, "objective"), "objective");
  if (!r.solved()) { return s; }
  const auto& vj = io::require(j, "variables");
  SdpVariables v;
  auto mat = [&](const json& parent, const std::string& key, const std::string& prefix) {
    const auto& node = io::require(parent, key);
    return node.empty() ? MatrixXd() : io::matrix_from(node, prefix + key);
  };
  v.ubar = io::vector_from(io::require(vj, "ubar"), "variables.ubar");
  v.xbar = io::vector_from(io::require(vj, "xbar"), "variables.xbar");
  v.vbar = io::vector_from(io::require(vj, "vbar"), "variables.vbar");
  v.Qw = mat(vj, "Qw", "variables.");
  v.Qxi = mat(vj, "Qxi", "variables.");
  v.Y = mat(vj, "Y", "variables.");
  v.Pw = mat(vj, "Pw", "variables.");
  v.Pxi = mat(vj, "Pxi", "variables.");
  v.lambda = io::number(io::require(vj, "lambda"), "variables.lambda");
  v.beta = io::number(io::require(vj, "beta"), "variables.beta");
  v.t1 = io::vector_from(io::require(vj, "t1"), "variables.t1");
  v.t2 = io::vector_from(io::require(vj, "t2"), "variables.t2");
  r.variables = v;

  const auto& pj = io::require(j, "policy");
  AffinePolicy p;
  p.u_open = io::vector_from(io::require(pj, "u_open"), "policy.u_open");
  p.Qw = mat(pj, "Qw", "policy.");
  p.Qv = mat(pj, "Qv", "policy.");
  r.policy = p;

  const auto& cj = io::require(j, "contract");
  Contract c;
  c.center = io::vector_from(io::require(cj, "center"), "contract.center");
  c.shape = c.center.size() ? mat(cj, "shape", "contract.") : MatrixXd(0, 0);
  c.vbar = io::vector_from(io::require(cj, "vbar"), "contract.vbar");
  c.Z = mat(cj, "Z", "contract.");
  r.contract = c;
  if (j.contains("row_slacks")) { r.row_slacks = j["row_slacks"].get<std::vector<double>>(); }
  return s;
}

/// Checks that a stored synthesis has the shapes the instance implies.
inline void check_synthesis_shapes(const StoredSynthesis& s, const ProblemInstance& inst)
{
  const BlockIndex idx = inst.index();
  const auto& p = *s.result.policy;
  const auto Nx = idx.Nx();
  const auto Nu = idx.Nu();
  auto need = [](bool ok, const std::string& what) {
    if (!ok) { throw ValidationError("dimension mismatch: synthesis " + what + " does not fit the instance"); }
  };
  need(p.u_open.size() == Nu, "policy.u_open");
  need(p.Qw.rows() == Nu && p.Qw.cols() == Nx, "policy.Qw");
  need(p.Qv.rows() == Nu && p.Qv.cols() == Nx, "policy.Qv");
  const auto& v = *s.result.variables;
  need(v.Pw.rows() == Nx && v.Pw.cols() == Nx, "variables.Pw");
  need(v.Pxi.rows() == Nx && v.Pxi.cols() == Nx, "variables.Pxi");
  need(v.Qxi.rows() == Nu && v.Qxi.cols() == Nx, "variables.Qxi");
  need(v.xbar.size() == Nx && v.ubar.size() == Nu, "variables.xbar/ubar");
}

inline json simulation_to_json(const SimulationReport& r, const std::string& hash, const RunManifest& manifest)
{
  json j;
  j["format"] = "agc-simulation";
  j["version"] = 1;
  j["manifest"] = manifest_to_json(manifest);
  j["instance_hash"] = hash;
  j["samples"] = r.samples;
  j["seed"] = r.seed;
  j["constraint_violations"] = r.constraint_violations;
  j["worst_constraint_slack"] = r.worst_slack;
  j["contract_violations"] = r.contract_violations;
  j["worst_membership"] = r.worst_membership;
  j["max_reconstruction_error"] = r.max_reconstruction_error;
  j["max_rollout_disagreement"] = r.max_rollout_disagreement;
  j["surrogate_cost"] = {{"mean", r.surrogate_cost_mean}, {"std_error", r.surrogate_cost_se}};
  j["actual_closed_loop_cost"] = {{"mean", r.actual_cost_mean}, {"std_error", r.actual_cost_se}};
  j["cost_check_applicable"] = r.cost_check_applicable;
  return j;
}

}  // namespace agc
