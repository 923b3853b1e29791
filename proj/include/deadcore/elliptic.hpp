#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "deadcore/errors.hpp"
#include "deadcore/geometry.hpp"
#include "deadcore/kinetics.hpp"
#include "deadcore/monotone_newton.hpp"

namespace deadcore {

using CoefficientFn = std::function<Matrix2(const Point&)>;

/// P1 Galerkin stiffness over all nodes (Dirichlet rows included), with A
/// evaluated at element barycenters. Throws NonSPDCoefficient.
SparseMatrix assemble_stiffness(const Mesh& mesh, const CoefficientFn& A);
/// Stiffness of the plain Laplacian.
SparseMatrix assemble_stiffness(const Mesh& mesh);

struct SolveResult {
  ScalarField field;
  SolverReport report;
  /// Galerkin residual at every node; on Dirichlet nodes it is the discrete
  /// boundary flux used for gradient recovery.
  std::vector<double> residual;
};

class NoConvergenceError : public Error {
 public:
  explicit NoConvergenceError(SolverReport report);
  const SolverReport& report() const noexcept { return report_; }

 private:
  SolverReport report_;
};

/// K w + M_L beta(w) = M_L f with w = bc on the boundary. Initial guess w = bc.
SolveResult solve_semilinear(const MeshPtr& mesh, const Kinetic& kin, const ScalarField& f, double bc,
                             double tol);

/// u-form with g(u) = beta(1) - beta(1 - u), f_hat = beta(1) - f and u = 0 on the boundary.
SolveResult solve_semilinear_u(const MeshPtr& mesh, const Kinetic& kin, const ScalarField& f, double tol);

/// u-form pulled back from (I + tau theta) Omega onto the fixed mesh. Shares the
/// solve_semilinear_u code path, so tau = 0 reproduces it bit for bit when the
/// nodal f there is f evaluated at the nodes.
SolveResult solve_transported(const MeshPtr& mesh, const PerturbationField& theta, double tau,
                              const Kinetic& kin, const SourceFn& f, double tol);

/// K v + M_L V v = 0 with v = g_bc on the boundary and v = 0 on frozen nodes.
/// Throws UnfrozenInfinitePotential or SingularSystem.
ScalarField solve_linear_potential(const MeshPtr& mesh, const ScalarField& V,
                                   const std::map<int, double>& g_bc, const std::vector<int>& frozen,
                                   double tol);

struct FieldNorms {
  double L2;
  double H1_semi;
  /// L2 norm of the discrete Laplacian M_L^{-1} K v over interior nodes; a
  /// surrogate for the H2 seminorm, not the true norm.
  double H2_surrogate;
};

FieldNorms norms(const ScalarField& field);
double l2_norm(const Mesh& mesh, const std::vector<double>& values);
double h1_seminorm(const Mesh& mesh, const std::vector<double>& values);
double max_abs(const std::vector<double>& values);
std::vector<double> subtract(const std::vector<double>& a, const std::vector<double>& b);

/// CSV with columns node_id,x,y,value.
void write_field_csv(const std::string& path, const ScalarField& field);

}  // namespace deadcore
