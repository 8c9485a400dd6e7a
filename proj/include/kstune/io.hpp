#pragma once

#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "kstune/autotune.hpp"
#include "kstune/core.hpp"
#include "kstune/prox.hpp"

// File formats used by the command line tool.
//
// Measurements: CSV, one row per time step, p comma-separated fields. A
// missing value is an empty field or a literal `?`; `?` is written.
// Parameters: JSON object with keys "A", "Wisqrt", "C", "Visqrt", each a
// row-major array of rows.

namespace kstune::io {

using json = nlohmann::json;

/// Shortest form is not needed; 17 significant digits always round-trips.
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

inline double parse_field(std::string_view field, std::size_t line_no, std::size_t column) {
  if (field.empty() || field == "?") return MeasurementSet::missing();
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(value)) {
    fail(ErrorKind::ParseError, "line " + std::to_string(line_no) + ", column " + std::to_string(column) +
                                    ": cannot parse '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace detail

inline MeasurementSet read_measurements_csv(std::istream& in, bool has_header) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (has_header && line_no == 1) continue;
    const auto fields = detail::split(line);
    if (rows.empty()) {
      width = fields.size();
    } else if (fields.size() != width) {
      fail(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": expected " + std::to_string(width) +
                                      " fields, found " + std::to_string(fields.size()));
    }
    std::vector<double> row;
    row.reserve(width);
    for (std::size_t c = 0; c < fields.size(); ++c) row.push_back(detail::parse_field(fields[c], line_no, c + 1));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail(ErrorKind::ParseError, "no measurement rows");
  Matrix Y(static_cast<Index>(rows.size()), static_cast<Index>(width));
  for (Index t = 0; t < Y.rows(); ++t) {
    for (Index i = 0; i < Y.cols(); ++i) Y(t, i) = rows[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)];
  }
  return MeasurementSet(std::move(Y));
}

/// Writes a T x k table; NaN entries are written as `?`.
inline void write_table_csv(std::ostream& out, const Matrix& values, std::string_view prefix, bool header = true) {
  if (header) {
    for (Index i = 0; i < values.cols(); ++i) out << (i ? "," : "") << prefix << (i + 1);
    out << '\n';
  }
  for (Index t = 0; t < values.rows(); ++t) {
    for (Index i = 0; i < values.cols(); ++i) {
      if (i) out << ',';
      const double x = values(t, i);
      if (std::isnan(x)) out << '?';
      else out << format_double(x);
    }
    out << '\n';
  }
}

inline void write_measurements_csv(std::ostream& out, const MeasurementSet& meas, bool header = true) {
  write_table_csv(out, meas.values(), "y", header);
}

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const json& j, std::string_view name) {
  if (!j.is_array() || j.empty()) fail(ErrorKind::ParseError, std::string(name) + ": expected a nonempty array of rows");
  const std::size_t cols = j.front().is_array() ? j.front().size() : 0;
  Matrix m(static_cast<Index>(j.size()), static_cast<Index>(cols));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array() || j[i].size() != cols) {
      fail(ErrorKind::ParseError, std::string(name) + ": row " + std::to_string(i) + " has the wrong length");
    }
    for (std::size_t k = 0; k < cols; ++k) {
      if (!j[i][k].is_number()) {
        fail(ErrorKind::ParseError, std::string(name) + ": entry (" + std::to_string(i) + ", " + std::to_string(k) +
                                        ") is not a number");
      }
      m(static_cast<Index>(i), static_cast<Index>(k)) = j[i][k].get<double>();
    }
  }
  return m;
}

inline json params_to_json(const ParameterSet& params) {
  return json{{"A", matrix_to_json(params.A)},
              {"Wisqrt", matrix_to_json(params.Wisqrt)},
              {"C", matrix_to_json(params.C)},
              {"Visqrt", matrix_to_json(params.Visqrt)}};
}

inline ParameterSet params_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorKind::ParseError, "parameter document must be an object");
  for (const char* key : {"A", "Wisqrt", "C", "Visqrt"}) {
    if (!j.contains(key)) fail(ErrorKind::ParseError, std::string("parameter document lacks \"") + key + "\"");
  }
  ParameterSet params{matrix_from_json(j["A"], "A"), matrix_from_json(j["Wisqrt"], "Wisqrt"),
                      matrix_from_json(j["C"], "C"), matrix_from_json(j["Visqrt"], "Visqrt")};
  validate(params);
  return params;
}

inline Target target_from_string(const std::string& s) {
  for (Target t : kAllTargets) {
    if (s == to_string(t)) return t;
  }
  fail(ErrorKind::ConfigError, "unknown target '" + s + "'");
}

namespace detail {

inline double number(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number()) {
    fail(ErrorKind::ConfigError, std::string("regularizer record needs numeric \"") + key + "\"");
  }
  return j[key].get<double>();
}

// Explicit "nominal" or, when absent, the starting value of that matrix.
inline Matrix nominal(const json& j, const ParameterSet& theta0, Target target) {
  if (j.contains("nominal")) return matrix_from_json(j["nominal"], "nominal");
  return select(theta0, target);
}

}  // namespace detail

/// Regularizer from
///   {"penalties":   [{"target": "A", "kind": "quad_deviation", "weight": w, "nominal": [[..]]},
///                    {"target": "Wisqrt", "kind": "offdiag_quad", "weight": w},
///                    {"target": "C", "kind": "nuclear", "weight": w}],
///    "constraints": [{"target": "C", "kind": "fixed"},
///                    {"target": "A", "kind": "fixed_entries", "mask": [[1, 0], ..]},
///                    {"target": "A", "kind": "box", "rho": r},
///                    {"target": "A", "kind": "nonneg"},
///                    {"target": "Visqrt", "kind": "diagonal_nonneg"},
///                    {"target": "Wisqrt", "kind": "symmetric"}]}
/// A missing "nominal" defaults to the matrix's value in theta0.
inline Regularizer regularizer_from_json(const json& j, const ParameterSet& theta0) {
  Regularizer reg;
  if (j.is_null()) return reg;
  if (!j.is_object()) fail(ErrorKind::ConfigError, "regularizer must be an object");
  for (const json& rec : j.value("penalties", json::array())) {
    const Target target = target_from_string(rec.value("target", ""));
    const std::string kind = rec.value("kind", "");
    if (kind == "quad_deviation") {
      reg.penalties.push_back({target, QuadDeviation{detail::nominal(rec, theta0, target), detail::number(rec, "weight")}});
    } else if (kind == "offdiag_quad") {
      reg.penalties.push_back({target, OffdiagQuad{detail::number(rec, "weight")}});
    } else if (kind == "nuclear") {
      reg.penalties.push_back({target, Nuclear{detail::number(rec, "weight")}});
    } else if (kind != "none") {
      fail(ErrorKind::ConfigError, "unknown penalty kind '" + kind + "'");
    }
  }
  for (const json& rec : j.value("constraints", json::array())) {
    const Target target = target_from_string(rec.value("target", ""));
    const std::string kind = rec.value("kind", "");
    if (kind == "fixed") {
      reg.constraints.push_back({target, Fixed{detail::nominal(rec, theta0, target)}});
    } else if (kind == "fixed_entries") {
      if (!rec.contains("mask")) fail(ErrorKind::ConfigError, "fixed_entries needs \"mask\"");
      const Matrix m = matrix_from_json(rec["mask"], "mask");
      reg.constraints.push_back({target, FixedEntries{(m.array() != 0.0).matrix(), detail::nominal(rec, theta0, target)}});
    } else if (kind == "box") {
      reg.constraints.push_back({target, Box{detail::nominal(rec, theta0, target), detail::number(rec, "rho")}});
    } else if (kind == "nonneg") {
      reg.constraints.push_back({target, Nonneg{}});
    } else if (kind == "diagonal_nonneg") {
      reg.constraints.push_back({target, DiagonalNonneg{}});
    } else if (kind == "symmetric") {
      reg.constraints.push_back({target, Symmetric{}});
    } else {
      fail(ErrorKind::ConfigError, "unknown constraint kind '" + kind + "'");
    }
  }
  validate(reg);
  return reg;
}

inline void write_history_csv(std::ostream& out, const std::vector<IterationRecord>& history) {
  out << "k,F,L,r,step,F_candidate,accepted,criterion\n";
  for (const IterationRecord& rec : history) {
    out << rec.k << ',' << format_double(rec.F) << ',' << format_double(rec.L) << ',' << format_double(rec.r) << ','
        << format_double(rec.step) << ',' << format_double(rec.F_candidate) << ',' << (rec.accepted ? 1 : 0) << ','
        << (rec.criterion ? format_double(*rec.criterion) : std::string()) << '\n';
  }
}

}  // namespace kstune::io
