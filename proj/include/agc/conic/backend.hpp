#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "agc/conic/interior_point.hpp"
#include "agc/conic/program.hpp"

namespace agc::conic {

enum class Backend { InteriorPoint, Cvxpy };

struct BackendSettings
{
  Backend backend = Backend::InteriorPoint;
  IpmSettings ipm;
  std::string python = "python3";
};

inline std::string to_string(Backend b) { return b == Backend::Cvxpy ? "cvxpy" : "ipm"; }

inline Backend backend_from_string(const std::string& s)
{
  if (s == "ipm") { return Backend::InteriorPoint; }
  if (s == "cvxpy") { return Backend::Cvxpy; }
  throw std::invalid_argument("unknown conic backend '" + s + "' (expected ipm or cvxpy)");
}

/**
 * Reads AGC_CONIC_BACKEND, AGC_FEAS_TOL, AGC_GAP_TOL, AGC_MAX_ITERS and
 * AGC_PYTHON on top of the defaults.
 */
inline BackendSettings settings_from_env(BackendSettings base = {})
{
  auto get = [](const char* name) -> std::string {
    const char* v = std::getenv(name);
    return v ? std::string(v) : std::string();
  };
  auto positive = [](const std::string& name, const std::string& text) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != text.size() || !(v > 0.0)) { throw std::invalid_argument(name + " must be a positive number"); }
    return v;
  };
  if (auto v = get("AGC_CONIC_BACKEND"); !v.empty()) { base.backend = backend_from_string(v); }
  if (auto v = get("AGC_FEAS_TOL"); !v.empty()) { base.ipm.feastol = positive("AGC_FEAS_TOL", v); }
  if (auto v = get("AGC_GAP_TOL"); !v.empty()) {
    base.ipm.abstol = base.ipm.reltol = positive("AGC_GAP_TOL", v);
  }
  if (auto v = get("AGC_MAX_ITERS"); !v.empty()) {
    base.ipm.max_iters = static_cast<int>(positive("AGC_MAX_ITERS", v));
  }
  if (auto v = get("AGC_PYTHON"); !v.empty()) { base.python = v; }
  return base;
}

namespace detail {

inline nlohmann::json affine_json(const AffineExpr& e)
{
  nlohmann::json vars = nlohmann::json::array();
  nlohmann::json coefs = nlohmann::json::array();
  for (const auto& t : e.terms) {
    vars.push_back(t.var);
    coefs.push_back(t.coef);
  }
  return {{"vars", vars}, {"coefs", coefs}, {"const", e.constant}};
}

inline nlohmann::json program_json(const ConicProgram& prog, const IpmSettings& tol)
{
  nlohmann::json j;
  j["n"] = prog.num_vars;
  nlohmann::json quad = nlohmann::json::array();
  for (int k = 0; k < prog.quad.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(prog.quad, k); it; ++it) {
      quad.push_back({it.row(), it.col(), it.value()});
    }
  }
  j["quad"] = quad;
  j["linear"] = std::vector<double>(prog.linear.data(), prog.linear.data() + prog.linear.size());
  j["constant"] = prog.constant;
  j["eq"] = nlohmann::json::array();
  for (const auto& e : prog.equalities) { j["eq"].push_back(affine_json(e)); }
  j["soc"] = nlohmann::json::array();
  for (const auto& s : prog.socs) {
    nlohmann::json vec = nlohmann::json::array();
    for (const auto& v : s.vector) { vec.push_back(affine_json(v)); }
    j["soc"].push_back({{"bound", affine_json(s.bound)}, {"vector", vec}});
  }
  j["lmi"] = nlohmann::json::array();
  for (const auto& l : prog.lmis) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : l.entries) { entries.push_back({e.var, e.row, e.col, e.coef}); }
    nlohmann::json c = nlohmann::json::array();
    for (int r = 0; r < l.dim; ++r) {
      for (int s = 0; s <= r; ++s) {
        if (l.constant(r, s) != 0.0) { c.push_back({r, s, l.constant(r, s)}); }
      }
    }
    j["lmi"].push_back({{"dim", l.dim}, {"entries", entries}, {"constant", c}});
  }
  j["eps"] = tol.feastol;
  return j;
}

inline constexpr const char* cvxpy_script = R"PY(
import json, sys
import numpy as np
import scipy.sparse as sp
import cvxpy as cp

doc = json.load(open(sys.argv[1]))
n = doc["n"]
x = cp.Variable(n)

def aff(e):
    if not e["vars"]:
        return cp.Constant(e["const"])
    row = sp.csr_matrix((e["coefs"], ([0] * len(e["vars"]), e["vars"])), shape=(1, n))
    return (row @ x)[0] + e["const"]

obj = doc["constant"]
if doc["linear"]:
    obj = obj + np.array(doc["linear"]) @ x
if doc["quad"]:
    r, c, v = zip(*doc["quad"])
    Q = sp.coo_matrix((v, (r, c)), shape=(n, n)).toarray()
    Q = 0.5 * (Q + Q.T)
    obj = obj + cp.quad_form(x, cp.psd_wrap(Q))

cons = []
for e in doc["eq"]:
    cons.append(aff(e) == 0)
for s in doc["soc"]:
    if s["vector"]:
        cons.append(cp.SOC(aff(s["bound"]), cp.hstack([aff(v) for v in s["vector"]])))
    else:
        cons.append(aff(s["bound"]) >= 0)
for l in doc["lmi"]:
    d = l["dim"]
    rows, cols, vals = [], [], []
    for var, r, c, coef in l["entries"]:
        rows.append(c * d + r); cols.append(var); vals.append(coef)
        if r != c:
            rows.append(r * d + c); cols.append(var); vals.append(coef)
    F0 = np.zeros((d, d))
    for r, c, v in l["constant"]:
        F0[r, c] += v
        if r != c:
            F0[c, r] += v
    Amat = sp.csr_matrix((vals, (rows, cols)), shape=(d * d, n))
    F = cp.reshape(Amat @ x, (d, d), order="F") + F0
    cons.append(0.5 * (F + F.T) >> 0)

prob = cp.Problem(cp.Minimize(obj), cons)
out = {"status": "failure", "x": None, "solver": "", "message": ""}
try:
    prob.solve(solver=cp.CLARABEL, tol_feas=doc["eps"], tol_gap_abs=doc["eps"], tol_gap_rel=doc["eps"])
    out["solver"] = "CLARABEL"
except Exception as exc:
    try:
        prob.solve(solver=cp.SCS, eps=1e-9, max_iters=200000)
        out["solver"] = "SCS"
    except Exception as exc2:
        out["message"] = str(exc2)
st = prob.status
if st == cp.OPTIMAL:
    out["status"] = "optimal"
elif st == cp.OPTIMAL_INACCURATE:
    out["status"] = "inaccurate"
elif st in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
    out["status"] = "infeasible"
if out["status"] in ("optimal", "inaccurate") and x.value is not None:
    out["x"] = [float(v) for v in x.value]
out["iterations"] = int(prob.solver_stats.num_iters or 0) if prob.solver_stats else 0
json.dump(out, open(sys.argv[2], "w"))
)PY";

inline std::filesystem::path unique_temp(const std::string& stem, const std::string& ext)
{
  static std::atomic<unsigned> counter{0};
  std::ostringstream name;
  name << "agc-" << stem << '-' << std::hex << reinterpret_cast<std::uintptr_t>(&counter) << '-' << counter++ << ext;
  return std::filesystem::temp_directory_path() / name.str();
}

}  // namespace detail

/// True when the configured interpreter can import cvxpy.
inline bool cvxpy_available(const std::string& python = "python3")
{
  const std::string cmd = python + " -c \"import cvxpy\" >/dev/null 2>&1";
  return std::system(cmd.c_str()) == 0;
}

inline ConicSolution solve_with_cvxpy(const ConicProgram& prog, const BackendSettings& settings)
{
  ConicSolution out;
  out.diagnostics.backend = "cvxpy";
  const auto script = detail::unique_temp("solve", ".py");
  const auto input = detail::unique_temp("program", ".json");
  const auto output = detail::unique_temp("result", ".json");
  {
    std::ofstream(script) << detail::cvxpy_script;
    std::ofstream(input) << detail::program_json(prog, settings.ipm).dump();
  }
  const std::string cmd = settings.python + " " + script.string() + " " + input.string() + " " + output.string() +
                          " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  std::error_code ec;
  std::filesystem::remove(script, ec);
  std::filesystem::remove(input, ec);
  if (rc != 0 || !std::filesystem::exists(output)) {
    std::filesystem::remove(output, ec);
    out.status = SolveStatus::Failure;
    out.diagnostics.message = "cvxpy subprocess failed";
    return out;
  }
  nlohmann::json res;
  {
    std::ifstream in(output);
    res = nlohmann::json::parse(in);
  }
  std::filesystem::remove(output, ec);
  out.status = status_from_string(res.value("status", "failure"));
  out.diagnostics.iterations = res.value("iterations", 0);
  out.diagnostics.message = res.value("solver", std::string()) + " " + res.value("message", std::string());
  if ((out.status == SolveStatus::Optimal || out.status == SolveStatus::Inaccurate) && res["x"].is_array()) {
    VectorXd x(prog.num_vars);
    for (int k = 0; k < prog.num_vars; ++k) { x(k) = res["x"][static_cast<std::size_t>(k)].get<double>(); }
    out.primal = x;
    out.objective = prog.objective(x);
  } else if (out.status != SolveStatus::Infeasible) {
    out.status = SolveStatus::Failure;
  }
  return out;
}

inline ConicSolution solve(const ConicProgram& prog, const BackendSettings& settings = {})
{
  switch (settings.backend) {
  case Backend::Cvxpy: return solve_with_cvxpy(prog, settings);
  case Backend::InteriorPoint: break;
  }
  return InteriorPointSolver(settings.ipm).solve(prog);
}

}  // namespace agc::conic
