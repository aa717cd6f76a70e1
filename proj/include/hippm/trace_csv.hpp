#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hippm/alm.hpp"
#include "hippm/instance.hpp"
#include "hippm/rates.hpp"
#include "hippm/solver.hpp"
#include "hippm/types.hpp"

namespace hippm {

inline constexpr const char* kTraceCsvHeader =
    "k,c_k,eps_k,residual,envelope,dist_to_star,feas_max,obj_gap,inner_iters,criterion_ok";

/// One CSV row; NaN doubles serialize as empty fields, never 0.
struct TraceCsvRow {
  long k = 0;
  double c_k = kNaN;
  double eps_k = kNaN;
  double residual = kNaN;
  double envelope = kNaN;
  double dist_to_star = kNaN;
  double feas_max = kNaN;
  double obj_gap = kNaN;
  long inner_iters = 0;
  bool criterion_ok = false;
};

struct TraceCsv {
  std::map<std::string, std::string> metadata;  // sorted: deterministic output
  std::vector<TraceCsvRow> rows;

  std::string meta(const std::string& key, const std::string& fallback = "") const {
    auto it = metadata.find(key);
    return it == metadata.end() ? fallback : it->second;
  }
};

namespace detail {

inline std::string csv_field(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.16e", v);
  return buf;
}

inline double csv_parse_field(const std::string& s) {
  if (s.empty()) return kNaN;
  return parse_number(s);
}

}  // namespace detail

inline std::string write_trace_csv(const TraceCsv& trace) {
  std::ostringstream out;
  for (const auto& [key, value] : trace.metadata) out << "# " << key << "=" << value << "\n";
  out << kTraceCsvHeader << "\n";
  for (const auto& r : trace.rows) {
    out << r.k << "," << detail::csv_field(r.c_k) << "," << detail::csv_field(r.eps_k)
        << "," << detail::csv_field(r.residual) << "," << detail::csv_field(r.envelope)
        << "," << detail::csv_field(r.dist_to_star) << "," << detail::csv_field(r.feas_max)
        << "," << detail::csv_field(r.obj_gap) << "," << r.inner_iters << ","
        << (r.criterion_ok ? 1 : 0) << "\n";
  }
  return out.str();
}

inline void write_trace_csv_file(const TraceCsv& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write trace file '" + path + "'");
  out << write_trace_csv(trace);
}

inline TraceCsv parse_trace_csv(std::istream& in) {
  TraceCsv trace;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::string body = line.substr(1);
      size_t start = body.find_first_not_of(' ');
      if (start == std::string::npos) continue;
      size_t eq = body.find('=', start);
      if (eq != std::string::npos)
        trace.metadata[body.substr(start, eq - start)] = body.substr(eq + 1);
      continue;
    }
    if (!header_seen) {
      if (line != kTraceCsvHeader)
        throw ParseError("trace CSV has unexpected header: " + line);
      header_seen = true;
      continue;
    }
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) fields.push_back(field);
    while (fields.size() < 10) fields.emplace_back();
    if (fields.size() != 10) throw ParseError("trace CSV row has wrong arity: " + line);
    TraceCsvRow r;
    r.k = std::stol(fields[0]);
    r.c_k = detail::csv_parse_field(fields[1]);
    r.eps_k = detail::csv_parse_field(fields[2]);
    r.residual = detail::csv_parse_field(fields[3]);
    r.envelope = detail::csv_parse_field(fields[4]);
    r.dist_to_star = detail::csv_parse_field(fields[5]);
    r.feas_max = detail::csv_parse_field(fields[6]);
    r.obj_gap = detail::csv_parse_field(fields[7]);
    r.inner_iters = fields[8].empty() ? 0 : std::stol(fields[8]);
    r.criterion_ok = fields[9] == "1";
    trace.rows.push_back(r);
  }
  if (!header_seen) throw ParseError("trace CSV missing header row");
  return trace;
}

inline TraceCsv parse_trace_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open trace file '" + path + "'");
  return parse_trace_csv(in);
}

/// Rows for an inclusion run. The envelope column is filled only when the run
/// supports it (criterion A, constant c, known z*): the exact envelope when
/// every certified error is zero, otherwise the Theta_k envelope.
inline std::vector<TraceCsvRow> rows_from_inclusion_trace(
    const IterateTrace& trace, const std::optional<EnvelopeParams>& envelope_params) {
  bool exact = true;
  for (const auto& rec : trace.records) exact = exact && rec.eps_used == 0.0;
  std::vector<TraceCsvRow> rows;
  rows.reserve(trace.records.size());
  for (const auto& rec : trace.records) {
    TraceCsvRow r;
    r.k = rec.k;
    r.c_k = rec.c;
    r.eps_k = rec.eps_used;
    r.residual = rec.residual;
    if (envelope_params && rec.k >= 1)
      r.envelope = exact ? envelope_exact(envelope_params->dist0, rec.k)
                         : theta_envelope(*envelope_params, rec.k);
    r.dist_to_star = rec.dist_to_star;
    r.inner_iters = rec.inner_iterations;
    r.criterion_ok = rec.criterion_ok;
    rows.push_back(r);
  }
  return rows;
}

inline std::vector<TraceCsvRow> rows_from_alm_trace(const ALMTrace& trace) {
  std::vector<TraceCsvRow> rows;
  rows.reserve(trace.records.size());
  for (const auto& rec : trace.records) {
    TraceCsvRow r;
    r.k = rec.k;
    r.c_k = rec.c;
    r.eps_k = rec.eps_k;
    r.dist_to_star = rec.dist_to_star;
    r.feas_max = rec.feas_max;
    r.obj_gap = rec.obj_gap;
    r.inner_iters = rec.inner_iterations;
    r.criterion_ok = rec.criterion_ok;
    rows.push_back(r);
  }
  return rows;
}

}  // namespace hippm
