#ifndef LAYERPOT_IO_HPP
#define LAYERPOT_IO_HPP

#include "layerpot/coefficients.hpp"
#include "layerpot/geometry.hpp"
#include "layerpot/greens.hpp"
#include "layerpot/potentials.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace layerpot::io {

using json = nlohmann::json;

inline json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse " + path + ": " + e.what());
  }
}

inline Vec2 vec2(const json& j) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("expected a pair [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

/// Matrix as [[re,im] x 4] in the order a11, a12, a21, a22 (plain reals
/// are accepted for real entries).
inline Mat2c matrix(const json& j) {
  if (!j.is_array() || j.size() != 4) throw ConfigError("a matrix needs four entries a11, a12, a21, a22");
  Mat2c a;
  for (int k = 0; k < 4; ++k) {
    const json& e = j[k];
    cplx v;
    if (e.is_number()) {
      v = e.get<double>();
    } else if (e.is_array() && e.size() == 2) {
      v = cplx(e[0].get<double>(), e[1].get<double>());
    } else {
      throw ConfigError("matrix entry must be a number or [re, im]");
    }
    a(k / 2, k % 2) = v;
  }
  return a;
}

inline json matrix_json(const Mat2c& a) {
  json out = json::array();
  for (int k = 0; k < 4; ++k) out.push_back({a(k / 2, k % 2).real(), a(k / 2, k % 2).imag()});
  return out;
}

// ---------------------------------------------------------------------------
// Geometry

/// {"kind":"special", "e":[ex,ey], "phi":{"x":[...],"y":[...]}, "truncation":T}
/// {"kind":"closed", "vertices":[[x,y],...]}
/// {"kind":"closed", "circle":{"center":[x,y],"radius":r}} (smooth curves)
inline GeometryPtr geometry_from_json(const json& j) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    GeometryPtr g;
    if (kind == "special") {
      const Vec2 e = j.contains("e") ? vec2(j["e"]) : Vec2(0.0, 1.0);
      GraphFunction phi = GraphFunction::flat();
      if (j.contains("phi")) {
        const auto xs = j["phi"].at("x").get<std::vector<double>>();
        const auto ys = j["phi"].at("y").get<std::vector<double>>();
        phi = GraphFunction::from_samples(xs, ys);
      }
      g = build_special_domain(phi, e, j.at("truncation").get<double>());
    } else if (kind == "closed") {
      if (j.contains("circle")) {
        g = build_circle(vec2(j["circle"].at("center")), j["circle"].at("radius").get<double>());
      } else if (j.contains("ellipse")) {
        const auto& el = j["ellipse"];
        g = build_ellipse(vec2(el.at("center")), el.at("a").get<double>(), el.at("b").get<double>());
      } else {
        std::vector<Vec2> v;
        for (const auto& p : j.at("vertices")) v.push_back(vec2(p));
        g = build_closed_curve(v);
      }
    } else {
      throw ConfigError("unknown geometry kind '" + kind + "'");
    }
    return g;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("geometry JSON: ") + e.what());
  }
}

inline GeometryPtr load_geometry(const std::string& path) { return geometry_from_json(read_json(path)); }

// ---------------------------------------------------------------------------
// Coefficients

/// {"kind":"constant", "matrix":[...]}
/// {"kind":"profile", "grid":{"x":[...], "A":[matrix, ...]}, "reference":{...}}
/// {"kind":"pullback"}: B(phi) of the special geometry it is paired with.
inline CoefficientField coefficients_from_json(const json& j) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    CoefficientField f;
    if (kind == "constant") {
      f = CoefficientField::constant(matrix(j.at("matrix")));
    } else if (kind == "profile") {
      const auto xs = j.at("grid").at("x").get<std::vector<double>>();
      std::vector<Mat2c> as;
      for (const auto& m : j["grid"].at("A")) as.push_back(matrix(m));
      f = CoefficientField::sampled(xs, as);
    } else {
      throw ConfigError("unknown coefficient kind '" + kind + "'");
    }
    f = certify(std::move(f));
    if (j.contains("reference")) f.set_reference(coefficients_from_json(j["reference"]));
    return f;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("coefficient JSON: ") + e.what());
  }
}

inline bool is_pullback(const json& j) { return j.value("kind", std::string()) == "pullback"; }

/// Evaluator for a coefficient document on a geometry.
inline EvaluatorPtr evaluator_from_json(const json& j, const GeometryPtr& geom, FourierParams params = {}) {
  if (is_pullback(j)) {
    if (geom->kind != DomainKind::SpecialGraph || !geom->phi)
      throw ConfigError("pullback coefficients need a special (graph) geometry");
    if ((geom->e - Vec2(0.0, 1.0)).norm() > 1e-14) throw ConfigError("pullback coefficients need e = (0, 1)");
    return std::make_shared<GraphPullbackGreen>(*geom->phi, -geom->truncation, geom->truncation);
  }
  return make_evaluator(coefficients_from_json(j), params);
}

// ---------------------------------------------------------------------------
// CSV output

inline std::ofstream open_out(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << std::setprecision(17);
  return out;
}

inline std::string mesh_hash(const QuadratureMesh& mesh) {
  std::ostringstream s;
  s << std::setprecision(17) << mesh.size();
  for (std::size_t j = 0; j < mesh.size(); ++j) s << ',' << mesh.nodes[j].x() << ',' << mesh.nodes[j].y() << ',' << mesh.weights[j];
  std::ostringstream h;
  h << std::hex << std::setw(16) << std::setfill('0') << fourier::fnv1a(s.str());
  return h.str();
}

inline void write_mesh_csv(const QuadratureMesh& mesh, const std::string& path) {
  auto out = open_out(path);
  out << "node_x,node_y,weight,nu_x,nu_y,tau_x,tau_y,panel\n";
  for (std::size_t j = 0; j < mesh.size(); ++j)
    out << mesh.nodes[j].x() << ',' << mesh.nodes[j].y() << ',' << mesh.weights[j] << ',' << mesh.normals[j].x() << ','
        << mesh.normals[j].y() << ',' << mesh.tangents[j].x() << ',' << mesh.tangents[j].y() << ',' << mesh.panel_index[j]
        << '\n';
}

/// Operator as row,col,re,im plus a JSON sidecar next to it.
inline void write_operator_csv(const BoundaryOperator& op, const std::string& path) {
  auto out = open_out(path);
  out << "row,col,re,im\n";
  for (Eigen::Index i = 0; i < op.matrix.rows(); ++i)
    for (Eigen::Index j = 0; j < op.matrix.cols(); ++j)
      out << i << ',' << j << ',' << op.matrix(i, j).real() << ',' << op.matrix(i, j).imag() << '\n';
  json side = {{"mesh_hash", mesh_hash(*op.mesh)},
               {"op_tag", op_name(op.tag)},
               {"tolerance", op.tolerance},
               {"worst_node", op.worst_node},
               {"size", op.matrix.rows()},
               {"limit_offsets", op.limit_offsets}};
  auto js = open_out(path + ".json");
  js << side.dump(2) << '\n';
}

/// Density CSV: header re,im then one row per node.
inline CVector read_density_csv(const std::string& path, std::size_t n) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::string line;
  std::getline(in, line);
  CVector f(static_cast<Eigen::Index>(n));
  std::size_t k = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (k >= n) throw DataError(path + ": more rows than mesh nodes");
    std::istringstream s(line);
    std::string a, b;
    std::getline(s, a, ',');
    std::getline(s, b, ',');
    try {
      f[static_cast<Eigen::Index>(k)] = cplx(std::stod(a), b.empty() ? 0.0 : std::stod(b));
    } catch (const std::exception&) {
      throw DataError(path + ": bad number on row " + std::to_string(k + 2));
    }
    ++k;
  }
  if (k != n) throw DataError(path + ": " + std::to_string(k) + " rows for " + std::to_string(n) + " mesh nodes");
  return f;
}

}  // namespace layerpot::io

#endif  // LAYERPOT_IO_HPP
