#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hippm/alm.hpp"
#include "hippm/operators.hpp"
#include "hippm/types.hpp"

namespace hippm {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Line-oriented instance description: named sections with dense row-major
/// matrices, chosen for diffability and hand-authoring. `#` starts a comment.
///
///   kind inclusion|qp
///   name <identifier>
///   dim n [m]
///   operator affine|box|id_skew|quad_box      (inclusion only)
///   matrix <id> <rows> <cols>                 followed by rows*cols numbers
///   vector <id> <n>                           followed by n numbers (inf ok)
///   scalar <id> <value>
struct InstanceFile {
  enum class Kind { kInclusion, kQp };

  Kind kind = Kind::kInclusion;
  std::string name;
  long n = 0;
  long m = 0;  // qp only
  std::string operator_family;
  std::map<std::string, Matrix> matrices;
  std::map<std::string, Vector> vectors;
  std::map<std::string, double> scalars;

  const Matrix& matrix(const std::string& id) const {
    auto it = matrices.find(id);
    if (it == matrices.end()) throw ParseError("instance missing matrix '" + id + "'");
    return it->second;
  }
  const Vector& vector(const std::string& id) const {
    auto it = vectors.find(id);
    if (it == vectors.end()) throw ParseError("instance missing vector '" + id + "'");
    return it->second;
  }
  std::optional<Vector> optional_vector(const std::string& id) const {
    auto it = vectors.find(id);
    if (it == vectors.end()) return std::nullopt;
    return it->second;
  }
  std::optional<double> optional_scalar(const std::string& id) const {
    auto it = scalars.find(id);
    if (it == scalars.end()) return std::nullopt;
    return it->second;
  }

  MonotoneOperator make_operator() const {
    if (kind != Kind::kInclusion)
      throw ParseError("instance '" + name + "' is not an inclusion instance");
    if (operator_family == "affine") return AffineOperator(matrix("M"), vector("q"));
    if (operator_family == "box") return BoxNormalCone(vector("lower"), vector("upper"));
    if (operator_family == "id_skew") {
      auto mu = optional_scalar("mu");
      if (!mu) throw ParseError("id_skew instance missing scalar mu");
      return ScaledIdentityPlusSkew(*mu, matrix("S"));
    }
    if (operator_family == "quad_box")
      return QuadraticBoxSubdifferential(matrix("Q"), vector("q"),
                                         BoxNormalCone(vector("lower"), vector("upper")));
    throw ParseError("unknown operator family '" + operator_family + "'");
  }

  ConvexProgram make_program() const {
    if (kind != Kind::kQp)
      throw ParseError("instance '" + name + "' is not a qp instance");
    return ConvexProgram(matrix("Q"), vector("q"), matrix("A"), vector("b"),
                         BoxNormalCone(vector("lower"), vector("upper")));
  }

  std::optional<Vector> anchor() const { return optional_vector("anchor"); }
};

namespace detail {

inline double parse_number(const std::string& tok) {
  if (tok == "inf" || tok == "+inf") return kInf;
  if (tok == "-inf") return -kInf;
  size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &pos);
  } catch (const std::exception&) {
    throw ParseError("bad number '" + tok + "'");
  }
  if (pos != tok.size()) throw ParseError("bad number '" + tok + "'");
  return v;
}

inline std::string format_number(double v) {
  if (v == kInf) return "inf";
  if (v == -kInf) return "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline InstanceFile parse_instance(std::istream& in) {
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) tokens.push_back(tok);
  }
  size_t pos = 0;
  auto next = [&]() -> std::string {
    if (pos >= tokens.size()) throw ParseError("unexpected end of instance file");
    return tokens[pos++];
  };
  auto next_long = [&]() {
    double v = detail::parse_number(next());
    long l = static_cast<long>(v);
    if (static_cast<double>(l) != v || l < 0) throw ParseError("expected nonnegative integer");
    return l;
  };

  InstanceFile f;
  bool have_kind = false, have_dim = false;
  while (pos < tokens.size()) {
    std::string key = next();
    if (key == "end") break;
    if (key == "kind") {
      std::string v = next();
      if (v == "inclusion") f.kind = InstanceFile::Kind::kInclusion;
      else if (v == "qp") f.kind = InstanceFile::Kind::kQp;
      else throw ParseError("unknown kind '" + v + "'");
      have_kind = true;
    } else if (key == "name") {
      f.name = next();
    } else if (key == "dim") {
      if (!have_kind) throw ParseError("dim before kind");
      f.n = next_long();
      if (f.kind == InstanceFile::Kind::kQp) f.m = next_long();
      have_dim = true;
    } else if (key == "operator") {
      f.operator_family = next();
    } else if (key == "matrix") {
      std::string id = next();
      long r = next_long(), c = next_long();
      Matrix mat(r, c);
      for (long i = 0; i < r; ++i)
        for (long j = 0; j < c; ++j) mat(i, j) = detail::parse_number(next());
      if (!f.matrices.emplace(id, std::move(mat)).second)
        throw ParseError("duplicate matrix '" + id + "'");
    } else if (key == "vector") {
      std::string id = next();
      long nv = next_long();
      Vector vec(nv);
      for (long i = 0; i < nv; ++i) vec[i] = detail::parse_number(next());
      if (!f.vectors.emplace(id, std::move(vec)).second)
        throw ParseError("duplicate vector '" + id + "'");
    } else if (key == "scalar") {
      std::string id = next();
      double v = detail::parse_number(next());
      if (!f.scalars.emplace(id, v).second)
        throw ParseError("duplicate scalar '" + id + "'");
    } else {
      throw ParseError("unknown section '" + key + "'");
    }
  }
  if (!have_kind || !have_dim || f.name.empty())
    throw ParseError("instance file must declare kind, name and dim");

  // Declared dimensions must match every stored object.
  auto check_vec = [&](const std::string& id, long want) {
    if (auto v = f.optional_vector(id); v && v->size() != want)
      throw ParseError("vector '" + id + "' has wrong dimension");
  };
  auto check_mat = [&](const std::string& id, long r, long c) {
    auto it = f.matrices.find(id);
    if (it != f.matrices.end() && (it->second.rows() != r || it->second.cols() != c))
      throw ParseError("matrix '" + id + "' has wrong dimensions");
  };
  if (f.kind == InstanceFile::Kind::kInclusion) {
    if (f.operator_family.empty()) throw ParseError("inclusion instance missing operator");
    check_mat("M", f.n, f.n);
    check_mat("S", f.n, f.n);
    check_mat("Q", f.n, f.n);
    for (const char* id : {"q", "lower", "upper", "anchor"}) check_vec(id, f.n);
  } else {
    check_mat("Q", f.n, f.n);
    check_mat("A", f.m, f.n);
    for (const char* id : {"q", "lower", "upper", "xstar"}) check_vec(id, f.n);
    for (const char* id : {"b", "ystar", "y0"}) check_vec(id, f.m);
  }
  return f;
}

inline InstanceFile parse_instance_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open instance file '" + path + "'");
  return parse_instance(in);
}

/// Canonical serialization: fixed section order, 17-significant-digit numbers.
/// write(parse(f)) is the canonical form of f and is idempotent.
inline std::string write_instance(const InstanceFile& f) {
  std::ostringstream out;
  out << "kind " << (f.kind == InstanceFile::Kind::kInclusion ? "inclusion" : "qp") << "\n";
  out << "name " << f.name << "\n";
  out << "dim " << f.n;
  if (f.kind == InstanceFile::Kind::kQp) out << " " << f.m;
  out << "\n";
  if (!f.operator_family.empty()) out << "operator " << f.operator_family << "\n";
  for (const auto& [id, mat] : f.matrices) {
    out << "matrix " << id << " " << mat.rows() << " " << mat.cols() << "\n";
    for (long i = 0; i < mat.rows(); ++i) {
      for (long j = 0; j < mat.cols(); ++j)
        out << (j ? " " : "") << detail::format_number(mat(i, j));
      out << "\n";
    }
  }
  for (const auto& [id, vec] : f.vectors) {
    out << "vector " << id << " " << vec.size() << "\n";
    for (long i = 0; i < vec.size(); ++i)
      out << (i ? " " : "") << detail::format_number(vec[i]);
    out << "\n";
  }
  for (const auto& [id, v] : f.scalars)
    out << "scalar " << id << " " << detail::format_number(v) << "\n";
  out << "end\n";
  return out.str();
}

inline void write_instance_file(const InstanceFile& f, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write instance file '" + path + "'");
  out << write_instance(f);
}

}  // namespace hippm
