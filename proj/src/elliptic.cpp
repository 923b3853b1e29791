#include "deadcore/elliptic.hpp"

#include <fmt/format.h>

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <fstream>

namespace deadcore {

SparseMatrix assemble_stiffness(const Mesh& mesh, const CoefficientFn& A) {
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(mesh.element_count() * 9);
  const auto& nodes = mesh.nodes();
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    const auto& el = mesh.elements()[e];
    const Point xb = mesh.barycenter(e);
    const Matrix2 a = A(xb);
    const double measure = mesh.element_measures()[e];
    if (mesh.dimension() == 1) {
      require(a(0, 0) > 0.0 && std::isfinite(a(0, 0)), ErrorCode::NonSPDCoefficient,
              fmt::format("coefficient {:.6g} is not positive at x = {:.6g}", a(0, 0), xb.x()));
      const double k = a(0, 0) / measure;
      triplets.emplace_back(el[0], el[0], k);
      triplets.emplace_back(el[0], el[1], -k);
      triplets.emplace_back(el[1], el[0], -k);
      triplets.emplace_back(el[1], el[1], k);
      continue;
    }
    const double scale = std::max(std::abs(a(0, 0)), std::abs(a(1, 1)));
    require(std::abs(a(0, 1) - a(1, 0)) <= 1e-12 * scale && a(0, 0) > 0.0 && a.determinant() > 0.0,
            ErrorCode::NonSPDCoefficient,
            fmt::format("coefficient is not SPD at ({:.6g}, {:.6g})", xb.x(), xb.y()));
    std::array<Point, 3> grad;
    for (int k = 0; k < 3; ++k) {
      const Point& p1 = nodes[static_cast<std::size_t>(el[(k + 1) % 3])];
      const Point& p2 = nodes[static_cast<std::size_t>(el[(k + 2) % 3])];
      grad[static_cast<std::size_t>(k)] = Point(p1.y() - p2.y(), p2.x() - p1.x()) / (2.0 * measure);
    }
    for (int i = 0; i < 3; ++i) {
      const Point ag = a * grad[static_cast<std::size_t>(i)];
      for (int j = 0; j < 3; ++j) {
        triplets.emplace_back(el[i], el[j], measure * ag.dot(grad[static_cast<std::size_t>(j)]));
      }
    }
  }
  const auto n = static_cast<Eigen::Index>(mesh.node_count());
  SparseMatrix K(n, n);
  K.setFromTriplets(triplets.begin(), triplets.end());
  return K;
}

SparseMatrix assemble_stiffness(const Mesh& mesh) {
  return assemble_stiffness(mesh, [](const Point&) { return Matrix2(Matrix2::Identity()); });
}

NoConvergenceError::NoConvergenceError(SolverReport report)
    : Error(ErrorCode::NoConvergence,
            fmt::format("nonlinear solver stopped after {} iterations with residual {:.3e}",
                        report.iterations, report.final_residual)),
      report_(std::move(report)) {}

namespace {

std::vector<char> boundary_mask(const Mesh& mesh) {
  std::vector<char> fixed(mesh.node_count(), 0);
  for (int b : mesh.boundary_nodes()) fixed[static_cast<std::size_t>(b)] = 1;
  return fixed;
}

void check_bounds(SolverReport& report, const std::vector<double>& values, double tol) {
  report.bounds_ok = std::all_of(values.begin(), values.end(),
                                 [tol](double v) { return v >= -10.0 * tol && v <= 1.0 + 10.0 * tol; });
}

void check_kinetic(const Kinetic& kin) {
  require(kin.value(0.0) == 0.0, ErrorCode::InvalidKinetic, "kinetic must satisfy beta(0) = 0");
}

SolveResult finish(const MeshPtr& mesh, MonotoneSolution&& solution, double tol) {
  if (!solution.report.converged) throw NoConvergenceError(solution.report);
  check_bounds(solution.report, solution.values, tol);
  return {ScalarField{mesh, std::move(solution.values), FieldKind::Solution}, std::move(solution.report),
          std::move(solution.residual)};
}

// Shared by solve_semilinear_u and solve_transported.
SolveResult solve_u_form(const MeshPtr& mesh, const SparseMatrix& K, std::vector<double> weights,
                         const std::vector<double>& f, const Kinetic& kin, double tol) {
  check_kinetic(kin);
  const double beta_one = kin.value(1.0);
  MonotoneProblem problem;
  problem.stiffness = &K;
  problem.weights = std::move(weights);
  problem.source.resize(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) problem.source[i] = beta_one - f[i];
  problem.fixed = boundary_mask(*mesh);
  problem.initial.assign(mesh->node_count(), 0.0);
  Reaction g;
  g.value = [&kin, beta_one](double u) { return beta_one - kin.value(1.0 - u); };
  g.derivative = [&kin](double u) { return kin.derivative(1.0 - u); };
  g.singular = kin.smoothness() == Smoothness::SingularAtZero;
  g.singular_point = 1.0;
  return finish(mesh, solve_monotone(problem, g, tol), tol);
}

}  // namespace

SolveResult solve_semilinear(const MeshPtr& mesh, const Kinetic& kin, const ScalarField& f, double bc,
                             double tol) {
  check_kinetic(kin);
  require(f.size() == mesh->node_count(), ErrorCode::InvalidParameter, "f does not match the mesh");
  const SparseMatrix K = assemble_stiffness(*mesh);
  MonotoneProblem problem;
  problem.stiffness = &K;
  problem.weights = mesh->lumped_mass();
  problem.source = f.values;
  problem.fixed = boundary_mask(*mesh);
  problem.initial.assign(mesh->node_count(), bc);
  Reaction beta;
  beta.value = [&kin](double s) { return kin.value(s); };
  beta.derivative = [&kin](double s) { return kin.derivative(s); };
  beta.singular = kin.smoothness() == Smoothness::SingularAtZero;
  beta.singular_point = 0.0;
  return finish(mesh, solve_monotone(problem, beta, tol), tol);
}

SolveResult solve_semilinear_u(const MeshPtr& mesh, const Kinetic& kin, const ScalarField& f, double tol) {
  require(f.size() == mesh->node_count(), ErrorCode::InvalidParameter, "f does not match the mesh");
  const CoefficientFn identity = [](const Point&) { return Matrix2(Matrix2::Identity()); };
  const SparseMatrix K = assemble_stiffness(*mesh, identity);
  return solve_u_form(mesh, K, mesh->lumped_mass(), f.values, kin, tol);
}

SolveResult solve_transported(const MeshPtr& mesh, const PerturbationField& theta, double tau,
                              const Kinetic& kin, const SourceFn& f, double tol) {
  const TransportedCoefficients tc = transported_coefficients(theta, f, tau, *mesh);
  const CoefficientFn A = [&tc](const Point& x) { return tc.A(x); };
  const SparseMatrix K = assemble_stiffness(*mesh, A);
  std::vector<double> weights = mesh->lumped_mass();
  std::vector<double> source(mesh->node_count());
  for (std::size_t i = 0; i < mesh->node_count(); ++i) {
    weights[i] *= tc.J(mesh->nodes()[i]);
    source[i] = tc.f_pullback(mesh->nodes()[i]);
  }
  return solve_u_form(mesh, K, std::move(weights), source, kin, tol);
}

ScalarField solve_linear_potential(const MeshPtr& mesh, const ScalarField& V,
                                   const std::map<int, double>& g_bc, const std::vector<int>& frozen,
                                   double tol) {
  const std::size_t n = mesh->node_count();
  require(V.size() == n, ErrorCode::InvalidParameter, "potential does not match the mesh");
  std::vector<char> fixed = boundary_mask(*mesh);
  std::vector<double> values(n, 0.0);
  for (int b : mesh->boundary_nodes()) {
    const auto it = g_bc.find(b);
    require(it != g_bc.end(), ErrorCode::InvalidParameter,
            fmt::format("boundary data missing for node {}", b));
    values[static_cast<std::size_t>(b)] = it->second;
  }
  for (int i : frozen) {
    require(i >= 0 && static_cast<std::size_t>(i) < n, ErrorCode::InvalidParameter,
            fmt::format("frozen node {} out of range", i));
    if (fixed[static_cast<std::size_t>(i)] == 0) {
      fixed[static_cast<std::size_t>(i)] = 1;
      values[static_cast<std::size_t>(i)] = 0.0;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    require(V[i] >= 0.0, ErrorCode::InvalidParameter, fmt::format("potential negative at node {}", i));
    if (std::isinf(V[i])) {
      require(fixed[i] != 0, ErrorCode::UnfrozenInfinitePotential,
              fmt::format("node {} has infinite potential but is not frozen", i));
    }
  }
  std::vector<int> slot(n, -1);
  std::vector<int> free;
  for (std::size_t i = 0; i < n; ++i) {
    if (fixed[i] == 0) {
      slot[i] = static_cast<int>(free.size());
      free.push_back(static_cast<int>(i));
    }
  }
  ScalarField v{mesh, values, FieldKind::Derived};
  if (free.empty()) return v;

  const SparseMatrix K = assemble_stiffness(*mesh);
  const auto m = static_cast<Eigen::Index>(free.size());
  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
  for (int col = 0; col < K.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(K, col); it; ++it) {
      const int r = slot[static_cast<std::size_t>(it.row())];
      const int c = slot[static_cast<std::size_t>(it.col())];
      if (r < 0) continue;
      if (c >= 0) {
        triplets.emplace_back(r, c, it.value());
      } else {
        rhs[r] -= it.value() * values[static_cast<std::size_t>(it.col())];
      }
    }
  }
  for (Eigen::Index k = 0; k < m; ++k) {
    const auto node = static_cast<std::size_t>(free[static_cast<std::size_t>(k)]);
    triplets.emplace_back(k, k, mesh->lumped_mass()[node] * V[node]);
  }
  SparseMatrix A(m, m);
  A.setFromTriplets(triplets.begin(), triplets.end());
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(A);
  require(ldlt.info() == Eigen::Success, ErrorCode::SingularSystem, "potential system is singular");
  const Eigen::VectorXd x = ldlt.solve(rhs);
  const double residual = (A * x - rhs).norm();
  require(x.allFinite() && residual <= std::max(tol, 1e-10 * rhs.norm()), ErrorCode::SingularSystem,
          fmt::format("potential system solve left residual {:.3e}", residual));
  for (Eigen::Index k = 0; k < m; ++k) v.values[static_cast<std::size_t>(free[static_cast<std::size_t>(k)])] = x[k];
  return v;
}

double l2_norm(const Mesh& mesh, const std::vector<double>& values) {
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) sum += mesh.lumped_mass()[i] * values[i] * values[i];
  return std::sqrt(sum);
}

double h1_seminorm(const Mesh& mesh, const std::vector<double>& values) {
  const SparseMatrix K = assemble_stiffness(mesh);
  const Eigen::Map<const Eigen::VectorXd> v(values.data(), static_cast<Eigen::Index>(values.size()));
  return std::sqrt(std::max(0.0, v.dot(K * v)));
}

FieldNorms norms(const ScalarField& field) {
  const Mesh& mesh = *field.mesh;
  const SparseMatrix K = assemble_stiffness(mesh);
  const Eigen::Map<const Eigen::VectorXd> v(field.values.data(), static_cast<Eigen::Index>(field.size()));
  const Eigen::VectorXd Kv = K * v;
  double h2 = 0.0;
  for (std::size_t i = 0; i < field.size(); ++i) {
    if (mesh.is_boundary(static_cast<int>(i))) continue;
    const double m = mesh.lumped_mass()[i];
    const double laplacian = Kv[static_cast<Eigen::Index>(i)] / m;
    h2 += m * laplacian * laplacian;
  }
  return {l2_norm(mesh, field.values), std::sqrt(std::max(0.0, v.dot(Kv))), std::sqrt(h2)};
}

double max_abs(const std::vector<double>& values) {
  double result = 0.0;
  for (double v : values) result = std::max(result, std::abs(v));
  return result;
}

std::vector<double> subtract(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size(), ErrorCode::InvalidParameter, "size mismatch in subtract");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

void write_field_csv(const std::string& path, const ScalarField& field) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::IoError, "cannot open " + path);
  out << "node_id,x,y,value\n";
  for (std::size_t i = 0; i < field.size(); ++i) {
    const Point& x = field.mesh->nodes()[i];
    out << fmt::format("{},{:.17g},{:.17g},{:.17g}\n", i, x.x(), x.y(), field.values[i]);
  }
  require(out.good(), ErrorCode::IoError, "failed writing " + path);
}

}  // namespace deadcore
