#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>

#include "agc/model.hpp"

namespace agc {

using json = nlohmann::ordered_json;

/// Malformed document or schema violation; carries the offending field and, for syntax errors, the line.
class ParseError : public std::runtime_error
{
public:
  ParseError(const std::string& field, const std::string& msg, int line = 0)
      : std::runtime_error(format(field, msg, line)), field_(field), line_(line)
  {}

  [[nodiscard]] const std::string& field() const { return field_; }
  [[nodiscard]] int line() const { return line_; }

private:
  static std::string format(const std::string& field, const std::string& msg, int line)
  {
    std::ostringstream os;
    if (line > 0) { os << "line " << line << ": "; }
    if (!field.empty()) { os << "field '" << field << "': "; }
    os << msg;
    return os.str();
  }

  std::string field_;
  int line_;
};

/// File could not be read or written.
class IoError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

namespace io {

inline const json& require(const json& doc, const std::string& key)
{
  if (!doc.is_object() || !doc.contains(key)) { throw ParseError(key, "missing required field"); }
  return doc.at(key);
}

inline double number(const json& v, const std::string& field)
{
  if (!v.is_number()) { throw ParseError(field, "expected a number, got " + std::string(v.type_name())); }
  return v.get<double>();
}

inline int integer(const json& v, const std::string& field)
{
  if (!v.is_number_integer()) { throw ParseError(field, "expected an integer"); }
  return v.get<int>();
}

inline VectorXd vector_from(const json& v, const std::string& field)
{
  if (!v.is_array()) { throw ParseError(field, "expected an array of numbers"); }
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t k = 0; k < v.size(); ++k) { out(static_cast<Eigen::Index>(k)) = number(v[k], field); }
  return out;
}

/// Row-major nested array; [] is an empty matrix.
inline MatrixXd matrix_from(const json& v, const std::string& field)
{
  if (!v.is_array()) { throw ParseError(field, "expected a matrix (array of rows)"); }
  if (v.empty()) { return {}; }
  const auto rows = v.size();
  if (!v[0].is_array()) { throw ParseError(field, "expected a matrix (array of rows)"); }
  const auto cols = v[0].size();
  MatrixXd out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (!v[r].is_array() || v[r].size() != cols) {
      throw ParseError(field, "row " + std::to_string(r + 1) + " has " +
                                  std::to_string(v[r].is_array() ? v[r].size() : 0) + " entries, expected " +
                                  std::to_string(cols));
    }
    for (std::size_t c = 0; c < cols; ++c) {
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = number(v[r][c], field);
    }
  }
  return out;
}

/// Either one matrix (constant over time) or a list of matrices.
inline std::vector<MatrixXd> matrix_sequence_from(const json& v, const std::string& field)
{
  const bool is_list = v.is_array() && !v.empty() && v[0].is_array() && !v[0].empty() && v[0][0].is_array();
  if (!is_list) { return {matrix_from(v, field)}; }
  std::vector<MatrixXd> out;
  for (std::size_t k = 0; k < v.size(); ++k) { out.push_back(matrix_from(v[k], field + "[" + std::to_string(k) + "]")); }
  return out;
}

inline json to_json(const MatrixXd& m)
{
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) { row.push_back(m(r, c)); }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json to_json(const VectorXd& v)
{
  json out = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) { out.push_back(v(k)); }
  return out;
}

inline json sequence_to_json(const std::vector<MatrixXd>& seq)
{
  const bool constant =
    std::all_of(seq.begin(), seq.end(), [&](const MatrixXd& m) { return m == seq.front(); });
  if (constant) { return to_json(seq.front()); }
  json out = json::array();
  for (const auto& m : seq) { out.push_back(to_json(m)); }
  return out;
}

inline int line_of_offset(const std::string& text, std::size_t byte)
{
  byte = std::min(byte, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

inline json parse_text(const std::string& text)
{
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("", e.what(), line_of_offset(text, e.byte > 0 ? e.byte - 1 : 0));
  }
}

inline std::string read_file(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) { throw IoError("cannot open " + path.string()); }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) { throw IoError("cannot write " + path.string()); }
  out << text;
  if (!out) { throw IoError("write failed for " + path.string()); }
}

}  // namespace io

/// Parses an instance document and validates it.
inline ProblemInstance instance_from_json(const json& doc)
{
  if (!doc.is_object()) { throw ParseError("", "instance document must be an object"); }
  ProblemInstance raw;
  const int N = io::integer(io::require(doc, "subsystems"), "subsystems");
  raw.dynamics.horizon = io::integer(io::require(doc, "horizon"), "horizon");
  const auto& dims = io::require(doc, "dims");
  if (!dims.is_array() || static_cast<int>(dims.size()) != N) {
    throw ParseError("dims", "expected " + std::to_string(N) + " entries");
  }
  for (std::size_t i = 0; i < dims.size(); ++i) {
    const std::string f = "dims[" + std::to_string(i) + "]";
    raw.dims.push_back({io::integer(io::require(dims[i], "state"), f + ".state"),
                        io::integer(io::require(dims[i], "input"), f + ".input")});
  }
  raw.dynamics.A = io::matrix_sequence_from(io::require(doc, "A"), "A");
  raw.dynamics.B = io::matrix_sequence_from(io::require(doc, "B"), "B");

  const auto& edges = io::require(doc, "E_I");
  if (!edges.is_array()) { throw ParseError("E_I", "expected a list of [from, to] pairs"); }
  for (const auto& e : edges) {
    if (!e.is_array() || e.size() != 2) { throw ParseError("E_I", "expected a list of [from, to] pairs"); }
    raw.info_graph.edges.push_back({io::integer(e[0], "E_I") - 1, io::integer(e[1], "E_I") - 1});
  }

  raw.disturbance.Sigma = io::matrix_from(io::require(doc, "Sigma"), "Sigma");
  if (doc.contains("M")) { raw.disturbance.M = io::matrix_from(doc.at("M"), "M"); }
  if (doc.contains("distribution")) {
    const auto& d = doc.at("distribution");
    if (!d.is_string() || d.get<std::string>() != "uniform_ellipsoid") {
      throw ParseError("distribution", "unsupported law (expected \"uniform_ellipsoid\")");
    }
  }

  raw.constraints.g = io::vector_from(io::require(doc, "g"), "g");
  raw.constraints.F_x = io::matrix_from(io::require(doc, "F_x"), "F_x");
  raw.constraints.F_u = io::matrix_from(io::require(doc, "F_u"), "F_u");
  if (doc.contains("F_w")) { raw.constraints.F_w = io::matrix_from(doc.at("F_w"), "F_w"); }

  raw.cost.R_x = io::matrix_from(io::require(doc, "R_x"), "R_x");
  raw.cost.R_u = io::matrix_from(io::require(doc, "R_u"), "R_u");
  return validate_instance(std::move(raw));
}

inline json instance_to_json(const ProblemInstance& inst)
{
  json doc;
  doc["format"] = "agc-instance";
  doc["version"] = 1;
  doc["subsystems"] = inst.subsystems();
  doc["horizon"] = inst.horizon();
  json dims = json::array();
  for (const auto& d : inst.dims) { dims.push_back({{"state", d.state_dim}, {"input", d.input_dim}}); }
  doc["dims"] = dims;
  doc["A"] = io::sequence_to_json(inst.dynamics.A);
  doc["B"] = io::sequence_to_json(inst.dynamics.B);
  json edges = json::array();
  for (const auto& e : inst.info_graph.edges) { edges.push_back({e.from + 1, e.to + 1}); }
  doc["E_I"] = edges;
  doc["Sigma"] = io::to_json(inst.disturbance.Sigma);
  doc["M"] = io::to_json(inst.disturbance.M);
  doc["distribution"] = to_string(inst.disturbance.law);
  doc["F_x"] = io::to_json(inst.constraints.F_x);
  doc["F_u"] = io::to_json(inst.constraints.F_u);
  doc["F_w"] = io::to_json(inst.constraints.F_w);
  doc["g"] = io::to_json(inst.constraints.g);
  doc["R_x"] = io::to_json(inst.cost.R_x);
  doc["R_u"] = io::to_json(inst.cost.R_u);
  return doc;
}

inline ProblemInstance load_instance(const std::filesystem::path& path)
{
  return instance_from_json(io::parse_text(io::read_file(path)));
}

inline void save_instance(const ProblemInstance& inst, const std::filesystem::path& path)
{
  io::write_file(path, instance_to_json(inst).dump(1) + "\n");
}

/// FNV-1a over the canonical compact serialization, as 16 hex digits.
inline std::string instance_hash(const ProblemInstance& inst)
{
  const std::string text = instance_to_json(inst).dump();
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace agc
