#pragma once

#include <Eigen/Sparse>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

namespace deadcore {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct SolverReport {
  int iterations = 0;
  /// Euclidean norm of the nonlinear residual over free nodes.
  double final_residual = 0.0;
  /// Rounding level of the residual evaluation at the final iterate. Convergence
  /// means final_residual <= max(tol, residual_floor).
  double residual_floor = 0.0;
  bool converged = false;
  bool bounds_ok = true;
  std::string method = "newton";

  nlohmann::json to_json() const;
};

/// Nondecreasing nodal reaction rho. `derivative` may return kInfiniteSlope at
/// `singular_point` when `singular` is set.
struct Reaction {
  std::function<double(double)> value;
  std::function<double(double)> derivative;
  bool singular = false;
  double singular_point = 0.0;
};

/// Discrete problem K x + W (rho(x) - s) = 0 on free nodes, x fixed elsewhere.
/// K must be symmetric with nonnegative diagonal; W > 0.
struct MonotoneProblem {
  const SparseMatrix* stiffness = nullptr;
  std::vector<double> weights;
  std::vector<double> source;
  std::vector<char> fixed;
  /// Initial guess; holds the Dirichlet values on fixed nodes.
  std::vector<double> initial;
};

struct MonotoneSolution {
  std::vector<double> values;
  /// Full residual K x + W (rho(x) - s), including rows of fixed nodes.
  std::vector<double> residual;
  SolverReport report;
};

/// Damped Newton with an exact line search on the convex energy whose gradient
/// is the residual. Slopes are capped at 1/sqrt(eps); near a singular point,
/// nodes dominated by the reaction use the chord slope instead, which converges
/// linearly with rate 1 - q for rho ~ |x|^q. Falls back to the monotone fixed point
/// (K + M W) x' = W (s + M x - rho(x)) if Newton stalls, returning the best iterate
/// seen when that does not converge either.
MonotoneSolution solve_monotone(const MonotoneProblem& problem, const Reaction& reaction, double tol,
                                int max_iterations = 500);

}  // namespace deadcore
