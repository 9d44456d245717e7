#include "layerpot/layerpot.hpp"

#include <CLI11.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <iostream>

using namespace layerpot;

namespace {

struct MeshOptions {
  int panels = 32;
  double grading = 3.0;
  int order = 8;
};

void add_mesh_options(CLI::App* app, MeshOptions& m) {
  app->add_option("--panels", m.panels, "number of boundary panels")->check(CLI::Range(8, 4096));
  app->add_option("--grading", m.grading, "corner grading ratio");
  app->add_option("--order", m.order, "Gauss-Legendre nodes per panel");
}

std::vector<double> parse_numbers(const std::string& s) {
  std::vector<double> out;
  std::string tok;
  std::istringstream in(s);
  while (std::getline(in, tok, ',')) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ConfigError("not a number: '" + tok + "'");
    }
  }
  return out;
}

/// "x,y;x,y;..." point list.
std::vector<Vec2> parse_points(const std::string& s) {
  std::vector<Vec2> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ';')) {
    if (item.empty()) continue;
    const auto v = parse_numbers(item);
    if (v.size() != 2) throw ConfigError("point needs two coordinates: '" + item + "'");
    out.emplace_back(v[0], v[1]);
  }
  return out;
}

CVector named_density(const std::string& name, const QuadratureMesh& mesh) {
  const auto n = static_cast<Eigen::Index>(mesh.size());
  CVector f(n);
  Vec2 c = Vec2::Zero();
  for (std::size_t j = 0; j < mesh.size(); ++j) c += mesh.weights[j] * mesh.nodes[j];
  c /= mesh.total_length();
  for (Eigen::Index j = 0; j < n; ++j) {
    const Vec2& x = mesh.nodes[j];
    if (name == "cos_theta") {
      const Vec2 d = x - c;
      f[j] = d.x() / d.norm();
    } else if (name == "sin_theta") {
      const Vec2 d = x - c;
      f[j] = d.y() / d.norm();
    } else if (name == "one") {
      f[j] = 1.0;
    } else if (name == "zero") {
      f[j] = 0.0;
    } else if (name == "x") {
      f[j] = x.x();
    } else if (name == "y") {
      f[j] = x.y();
    } else if (name == "normal_x") {
      f[j] = mesh.normals[j].x();
    } else {
      throw ConfigError("unknown data preset '" + name + "'");
    }
  }
  return f;
}

BoundaryDensity load_data(const std::string& spec, const QuadratureMesh& mesh) {
  const std::string prefix = "preset:";
  if (spec.rfind(prefix, 0) == 0) {
    const std::string name = spec.substr(prefix.size());
    if (name == "atom") {
      const double len = mesh.total_length();
      return make_h1_atom(mesh, 0.25 * len, 0.1 * len);
    }
    return BoundaryDensity::lp(named_density(name, mesh));
  }
  if (!std::filesystem::exists(spec)) throw ConfigError("cannot open " + spec);
  return BoundaryDensity::lp(io::read_density_csv(spec, mesh.size()));
}

std::vector<Vec2> grid_points(const DomainGeometry& geom, int nx, int ny, double margin) {
  Vec2 lo(1e300, 1e300), hi(-1e300, -1e300);
  for (const auto& pl : geom.polyline())
    for (const auto& p : pl) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
  if (!geom.bounded()) {
    const double w = hi.x() - lo.x();
    lo.y() = hi.y();
    hi.y() = lo.y() + 0.5 * w;
  }
  std::vector<Vec2> out;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const Vec2 p(lo.x() + (hi.x() - lo.x()) * i / std::max(1, nx - 1),
                   lo.y() + (hi.y() - lo.y()) * j / std::max(1, ny - 1));
      if (geom.contains(p) && geom.distance(p) >= margin) out.push_back(p);
    }
  return out;
}

OpTag parse_op(const std::string& s) {
  for (OpTag t : {OpTag::Kplus, OpTag::Kminus, OpTag::KtPlus, OpTag::KtMinus, OpTag::Lt, OpTag::Strace})
    if (s == op_name(t)) return t;
  throw ConfigError("unknown operator '" + s + "'");
}

// ---------------------------------------------------------------------------

int run_green(const std::string& coef_path, const std::string& geom_path, const std::vector<std::string>& pairs,
              const std::string& pairs_csv, const std::string& out_path) {
  const auto cj = io::read_json(coef_path);
  GeometryPtr geom;
  if (!geom_path.empty()) geom = io::load_geometry(geom_path);
  if (io::is_pullback(cj) && !geom) throw ConfigError("pullback coefficients need --geometry");
  const EvaluatorPtr ev = io::is_pullback(cj) ? io::evaluator_from_json(cj, geom)
                                              : make_evaluator(io::coefficients_from_json(cj));
  std::vector<std::array<double, 4>> list;
  for (const auto& p : pairs) {
    const auto v = parse_numbers(p);
    if (v.size() != 4) throw ConfigError("--pair needs X_x,X_y,Y_x,Y_y");
    list.push_back({v[0], v[1], v[2], v[3]});
  }
  if (!pairs_csv.empty()) {
    std::ifstream in(pairs_csv);
    if (!in) throw ConfigError("cannot open " + pairs_csv);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto v = parse_numbers(line);
      if (v.size() < 4) throw ConfigError(pairs_csv + ": rows need X_x,X_y,Y_x,Y_y");
      list.push_back({v[0], v[1], v[2], v[3]});
    }
  }
  std::vector<GreenValue> vals(list.size());
#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < static_cast<int>(list.size()); ++k)
    vals[k] = ev->eval(Vec2(list[k][0], list[k][1]), Vec2(list[k][2], list[k][3]), kValue | kGradY);
  std::ostringstream buf;
  buf << std::setprecision(17) << "X_x,X_y,Y_x,Y_y,re_G,im_G,re_dy1G,im_dy1G,re_dy2G,im_dy2G\n";
  for (std::size_t k = 0; k < list.size(); ++k) {
    const auto& g = vals[k];
    buf << list[k][0] << ',' << list[k][1] << ',' << list[k][2] << ',' << list[k][3] << ',' << g.value.real() << ','
        << g.value.imag() << ',' << g.grad_y(0).real() << ',' << g.grad_y(0).imag() << ',' << g.grad_y(1).real() << ','
        << g.grad_y(1).imag() << '\n';
  }
  if (out_path.empty()) {
    std::cout << buf.str();
  } else {
    io::open_out(out_path) << buf.str();
  }
  std::cerr << "green: " << list.size() << " pairs, route " << route_name(ev->route()) << '\n';
  return 0;
}

int run_assemble(const std::string& geom_path, const std::string& coef_path, const MeshOptions& m,
                 const std::string& op, const std::string& out_path, const std::string& mesh_out) {
  const GeometryPtr geom = io::load_geometry(geom_path);
  const EvaluatorPtr ev = io::evaluator_from_json(io::read_json(coef_path), geom);
  const MeshPtr mesh = make_mesh(geom, m.panels, m.grading, m.order);
  const OpTag tag = parse_op(op);
  BoundaryOperator b;
  switch (tag) {
    case OpTag::Kplus: b = assemble_K(*ev, mesh, Side::Interior); break;
    case OpTag::Kminus: b = assemble_K(*ev, mesh, Side::Exterior); break;
    case OpTag::KtPlus: b = assemble_Kt(*ev, mesh, true); break;
    case OpTag::KtMinus: b = assemble_Kt(*ev, mesh, false); break;
    case OpTag::Lt: b = assemble_Lt(*ev, mesh); break;
    default: b = assemble_S_trace(*ev, mesh); break;
  }
  io::write_operator_csv(b, out_path);
  if (!mesh_out.empty()) io::write_mesh_csv(*mesh, mesh_out);
  std::cout << "assemble: " << op_name(tag) << ' ' << b.matrix.rows() << 'x' << b.matrix.cols() << ", tolerance "
            << b.tolerance << '\n';
  return 0;
}

int run_solve(const std::string& problem, double p, const std::string& geom_path, const std::string& coef_path,
              const MeshOptions& m, const std::string& data, const std::string& out_path,
              const std::string& report_path, const std::string& points, std::vector<int> grid) {
  const GeometryPtr geom = io::load_geometry(geom_path);
  const EvaluatorPtr ev = io::evaluator_from_json(io::read_json(coef_path), geom);
  const MeshPtr mesh = make_mesh(geom, m.panels, m.grading, m.order);
  BoundarySolver solver(ev, mesh);
  const BoundaryDensity f = load_data(data, *mesh);
  Solution sol;
  if (problem == "dirichlet") {
    sol = solver.dirichlet(f, p);
  } else if (problem == "neumann") {
    sol = solver.neumann(f, p);
  } else if (problem == "regularity") {
    sol = solver.regularity(f, p);
  } else {
    throw ConfigError("unknown problem '" + problem + "'");
  }
  std::vector<Vec2> pts = points.empty() ? std::vector<Vec2>{} : parse_points(points);
  if (pts.empty()) {
    if (grid.size() != 2) throw ConfigError("--grid needs nx,ny");
    double lmin = 1e300;
    for (const auto& pn : mesh->panels) lmin = std::min(lmin, pn.length);
    pts = grid_points(*geom, grid[0], grid[1], 0.25 * lmin);
  }
  std::vector<FieldSample> vals(pts.size());
#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < static_cast<int>(pts.size()); ++k) vals[k] = sol.field.evaluate(pts[k], true);
  if (!out_path.empty()) {
    auto out = io::open_out(out_path);
    out << "x,y,re_u,im_u,re_ux,im_ux,re_uy,im_uy\n";
    for (std::size_t k = 0; k < pts.size(); ++k) {
      const auto& v = vals[k];
      out << pts[k].x() << ',' << pts[k].y() << ',' << v.u.real() << ',' << v.u.imag() << ',' << v.grad(0).real()
          << ',' << v.grad(0).imag() << ',' << v.grad(1).real() << ',' << v.grad(1).imag() << '\n';
    }
  }
  if (!report_path.empty()) {
    nlohmann::json r = {{"problem", problem_name(sol.problem)},
                        {"p", sol.p},
                        {"residual", sol.stats.residual},
                        {"trace_residual", sol.stats.trace_residual},
                        {"condition", sol.stats.condition},
                        {"iterations", sol.stats.iterations},
                        {"nodes", mesh->size()},
                        {"route", route_name(ev->route())},
                        {"mesh_hash", io::mesh_hash(*mesh)}};
    io::open_out(report_path) << r.dump(2) << '\n';
  }
  std::cout << "solve: " << problem << ", " << pts.size() << " points, residual " << sol.stats.residual
            << ", trace residual " << sol.stats.trace_residual << ", condition " << sol.stats.condition << '\n';
  return 0;
}

int run_verify(const std::string& suite_path, const std::string& report_path, const std::string& constants_path) {
  const auto j = io::read_json(suite_path);
  const SuiteConfig cfg = suite_from_json(j, std::filesystem::path(suite_path).parent_path().string());
  const auto reports = run_suite(cfg);
  write_report(reports, report_path, constants_path);
  int failed = 0, passed = 0;
  double worst = 0.0;
  for (const auto& r : reports) {
    if (r.pass) {
      ++passed;
    } else if (!r.diagnostic) {
      ++failed;
    }
    if (r.equality)
      for (double v : r.measured) worst = std::max(worst, v);
    if (!r.pass) std::cerr << "  " << (r.diagnostic ? "diagnostic " : "FAIL ") << r.check_name << ' ' << r.error << '\n';
  }
  std::cout << "verify: " << reports.size() << " checks, " << passed << " passed, " << failed
            << " failed, max residual " << worst << '\n';
  return failed == 0 ? 0 : 1;
}

int run_sweep(const std::string& config_path, const std::string& out_path) {
  const auto j = io::read_json(config_path);
  const auto base = std::filesystem::path(config_path).parent_path();
  auto resolve = [&](const nlohmann::json& v) {
    if (!v.is_string()) return v;
    std::filesystem::path p(v.get<std::string>());
    if (p.is_relative()) p = base / p;
    return io::read_json(p.string());
  };
  GeometryPtr geom;
  CoefficientField a0;
  Mat2c dir;
  std::vector<double> eps;
  MeshOptions m;
  double max_condition = 1e12;
  try {
    geom = io::geometry_from_json(resolve(j.at("geometry")));
    a0 = io::coefficients_from_json(resolve(j.at("coefficients")));
    dir = io::matrix(j.at("direction"));
    if (j.contains("mesh")) {
      m.panels = j["mesh"].value("n_panels", m.panels);
      m.grading = j["mesh"].value("grading", m.grading);
      m.order = j["mesh"].value("order", m.order);
    }
    max_condition = j.value("max_condition", max_condition);
    if (j.contains("eps")) {
      eps = j["eps"].get<std::vector<double>>();
    } else {
      // growth mode: eps_start * factor^k up to eps_max
      const double e0 = j.value("eps_start", 0.05), fac = j.value("factor", 2.0), emax = j.value("eps_max", 5.0);
      for (double e = e0; e <= emax * (1 + 1e-12); e *= fac) eps.push_back(e);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(config_path + ": " + e.what());
  }
  const MeshPtr mesh = make_mesh(geom, m.panels, m.grading, m.order);
  SweepResult res;
  // one eps at a time so the curve stops where conditioning degrades
  for (double e : eps) {
    const auto one = perturbation_sweep(mesh, a0, dir, {e});
    if (one.truncated) {
      res.truncated = true;
      res.truncated_at = e;
      break;
    }
    res.points.push_back(one.points.front());
    if (!(one.points.front().condition <= max_condition)) break;
  }
  auto out = io::open_out(out_path);
  out << "eps,delta_norm,ratio,condition,jump\n";
  for (const auto& p : res.points)
    out << p.eps << ',' << p.delta_norm << ',' << p.ratio << ',' << p.condition << ',' << p.jump << '\n';
  std::cout << "sweep: " << res.points.size() << " points";
  if (!res.points.empty()) std::cout << ", last condition " << res.points.back().condition;
  if (res.truncated) std::cout << ", ellipticity lost at eps " << res.truncated_at;
  std::cout << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"layerpot: layer potentials for t-independent elliptic operators"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "worker thread cap (0: runtime default)");

  std::string geom_path, coef_path, out_path;
  MeshOptions mesh_opt;

  auto* green = app.add_subcommand("green", "evaluate the fundamental solution at point pairs");
  std::vector<std::string> pairs;
  std::string pairs_csv;
  green->add_option("--coefficients", coef_path, "coefficient JSON")->required();
  green->add_option("--geometry", geom_path, "geometry JSON (pullback fields only)");
  green->add_option("--pair", pairs, "X_x,X_y,Y_x,Y_y (pole X, point Y)");
  green->add_option("--pairs", pairs_csv, "CSV of pairs with a header row");
  green->add_option("--out", out_path, "output CSV (stdout if omitted)");

  auto* assemble = app.add_subcommand("assemble", "assemble a boundary operator");
  std::string op = "Kplus", mesh_out;
  assemble->add_option("--geometry", geom_path, "geometry JSON")->required();
  assemble->add_option("--coefficients", coef_path, "coefficient JSON")->required();
  assemble->add_option("--op", op, "Kplus, Kminus, KtPlus, KtMinus, Lt or Strace");
  assemble->add_option("--out", out_path, "operator CSV")->required();
  assemble->add_option("--mesh-out", mesh_out, "mesh CSV");
  add_mesh_options(assemble, mesh_opt);

  auto* solve = app.add_subcommand("solve", "solve a boundary value problem");
  std::string problem = "dirichlet", data, report_path, points;
  double p = 2.0;
  std::vector<int> grid{21, 21};
  solve->add_option("--problem", problem, "dirichlet, neumann or regularity");
  solve->add_option("--p", p, "Lebesgue exponent recorded with the solution");
  solve->add_option("--geometry", geom_path, "geometry JSON")->required();
  solve->add_option("--coefficients", coef_path, "coefficient JSON")->required();
  solve->add_option("--data", data, "density CSV (re,im per node) or preset:<name>")->required();
  solve->add_option("--out", out_path, "CSV of interior evaluations");
  solve->add_option("--report", report_path, "JSON solve statistics");
  solve->add_option("--points", points, "evaluation points x,y;x,y;...");
  solve->add_option("--grid", grid, "evaluation grid nx ny over the bounding box")->expected(2)->delimiter(',');
  add_mesh_options(solve, mesh_opt);

  auto* verify = app.add_subcommand("verify", "run a verification suite");
  std::string suite, constants_path;
  verify->add_option("--suite", suite, "suite JSON")->required();
  verify->add_option("--out-report", report_path, "JSON report");
  verify->add_option("--out-constants", constants_path, "CSV of measured constants");

  auto* sweep = app.add_subcommand("sweep", "perturbation sweep of K_+ in eps");
  std::string sweep_cfg;
  sweep->add_option("--config", sweep_cfg, "sweep JSON")->required();
  sweep->add_option("--out", out_path, "curve CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#endif
  try {
    if (*green) return run_green(coef_path, geom_path, pairs, pairs_csv, out_path);
    if (*assemble) return run_assemble(geom_path, coef_path, mesh_opt, op, out_path, mesh_out);
    if (*solve)
      return run_solve(problem, p, geom_path, coef_path, mesh_opt, data, out_path, report_path, points, grid);
    if (*verify) return run_verify(suite, report_path, constants_path);
    if (*sweep) return run_sweep(sweep_cfg, out_path);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
