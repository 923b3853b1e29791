#include "deadcore/monotone_newton.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <limits>

#include "deadcore/errors.hpp"
#include "deadcore/kinetics.hpp"

namespace deadcore {

nlohmann::json SolverReport::to_json() const {
  return {{"iterations", iterations},
          {"final_residual", final_residual},
          {"residual_floor", residual_floor},
          {"converged", converged},
          {"bounds_ok", bounds_ok},
          {"method", method}};
}

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
const double kSlopeCap = 1.0 / std::sqrt(kEps);
constexpr double kChordCap = 1e200;
constexpr double kLineSearchFraction = 1e-3;
constexpr int kStallWindow = 30;

class Engine {
 public:
  Engine(const MonotoneProblem& problem, const Reaction& reaction)
      : p_(problem), reaction_(reaction), n_(problem.initial.size()) {
    require(p_.stiffness != nullptr && static_cast<std::size_t>(p_.stiffness->rows()) == n_ &&
                p_.weights.size() == n_ && p_.source.size() == n_ && p_.fixed.size() == n_,
            ErrorCode::InvalidParameter, "monotone problem has inconsistent sizes");
    slot_.assign(n_, -1);
    for (std::size_t i = 0; i < n_; ++i) {
      if (p_.fixed[i] == 0) {
        slot_[i] = static_cast<int>(free_.size());
        free_.push_back(static_cast<int>(i));
      }
    }
    std::vector<Eigen::Triplet<double>> triplets;
    for (int col = 0; col < p_.stiffness->outerSize(); ++col) {
      for (SparseMatrix::InnerIterator it(*p_.stiffness, col); it; ++it) {
        const int r = slot_[static_cast<std::size_t>(it.row())];
        const int c = slot_[static_cast<std::size_t>(it.col())];
        if (r >= 0 && c >= 0) triplets.emplace_back(r, c, it.value());
      }
    }
    const auto m = static_cast<Eigen::Index>(free_.size());
    kff_.resize(m, m);
    kff_.setFromTriplets(triplets.begin(), triplets.end());
    for (Eigen::Index i = 0; i < m; ++i) kff_.coeffRef(i, i) += 0.0;
    kff_.makeCompressed();
    abs_stiffness_ = p_.stiffness->cwiseAbs();
    rho_at_singular_ = reaction_.singular ? reaction_.value(reaction_.singular_point) : 0.0;
  }

  std::size_t free_count() const { return free_.size(); }

  Eigen::VectorXd residual(const Eigen::VectorXd& x) const {
    Eigen::VectorXd r = (*p_.stiffness) * x;
    for (std::size_t i = 0; i < n_; ++i) {
      r[static_cast<Eigen::Index>(i)] += p_.weights[i] * (reaction_.value(x[static_cast<Eigen::Index>(i)]) - p_.source[i]);
    }
    return r;
  }

  // Norm over free rows of 2 eps (|K| |x| + W (|rho(x)| + |s|)): residuals below
  // this are indistinguishable from zero in floating point.
  double rounding_floor(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd scale = abs_stiffness_ * x.cwiseAbs();
    double sum = 0.0;
    for (int node : free_) {
      const auto i = static_cast<std::size_t>(node);
      const double row = scale[node] + p_.weights[i] * (std::abs(reaction_.value(x[node])) + std::abs(p_.source[i]));
      sum += row * row;
    }
    return 2.0 * kEps * std::sqrt(sum);
  }

  Eigen::VectorXd restrict(const Eigen::VectorXd& full) const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(free_.size()));
    for (std::size_t k = 0; k < free_.size(); ++k) out[static_cast<Eigen::Index>(k)] = full[free_[k]];
    return out;
  }

  void add_to_free(Eigen::VectorXd& x, const Eigen::VectorXd& d, double t) const {
    for (std::size_t k = 0; k < free_.size(); ++k) x[free_[k]] += t * d[static_cast<Eigen::Index>(k)];
  }

  double tangent_slope(std::size_t node, double s) const {
    const double slope = capped_slope(reaction_.derivative(s), kSlopeCap);
    if (!reaction_.singular) return slope;
    const Eigen::Index k = slot_[node];
    if (p_.weights[node] * slope <= 10.0 * kff_.coeff(k, k)) return slope;
    const double ds = s - reaction_.singular_point;
    const double chord = ds == 0.0 ? kChordCap : std::min(kChordCap, (reaction_.value(s) - rho_at_singular_) / ds);
    return std::max(slope, chord);
  }

  SparseMatrix jacobian(const Eigen::VectorXd& x) const {
    SparseMatrix J = kff_;
    for (std::size_t k = 0; k < free_.size(); ++k) {
      const auto node = static_cast<std::size_t>(free_[k]);
      J.coeffRef(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) +=
          p_.weights[node] * tangent_slope(node, x[free_[k]]);
    }
    return J;
  }

  // Derivative of the energy along d at x + t d.
  double directional(const Eigen::VectorXd& x, const Eigen::VectorXd& d, double t) const {
    Eigen::VectorXd trial = x;
    add_to_free(trial, d, t);
    return restrict(residual(trial)).dot(d);
  }

  double line_search(const Eigen::VectorXd& x, const Eigen::VectorXd& d, double p0) const {
    if (!(p0 < 0.0)) return 1.0;
    const double p1 = directional(x, d, 1.0);
    if (p1 <= 0.0) return 1.0;
    double a = 0.0, fa = p0, b = 1.0, fb = p1;
    int side = 0;
    double t = 1.0;
    for (int k = 0; k < 60; ++k) {
      t = (a * fb - b * fa) / (fb - fa);
      const double ft = directional(x, d, t);
      if (std::abs(ft) <= kLineSearchFraction * std::abs(p0)) break;
      if (ft > 0.0) {
        b = t;
        fb = ft;
        if (side == 1) fa *= 0.5;
        side = 1;
      } else {
        a = t;
        fa = ft;
        if (side == -1) fb *= 0.5;
        side = -1;
      }
    }
    return t;
  }

  const SparseMatrix& kff() const { return kff_; }
  const std::vector<int>& free_nodes() const { return free_; }
  const MonotoneProblem& problem() const { return p_; }
  const Reaction& reaction() const { return reaction_; }

 private:
  const MonotoneProblem& p_;
  const Reaction& reaction_;
  std::size_t n_;
  std::vector<int> free_;
  std::vector<int> slot_;
  SparseMatrix kff_;
  SparseMatrix abs_stiffness_;
  double rho_at_singular_ = 0.0;
};

}  // namespace

MonotoneSolution solve_monotone(const MonotoneProblem& problem, const Reaction& reaction, double tol,
                                int max_iterations) {
  require(tol > 0.0, ErrorCode::InvalidParameter, "tol must be positive");
  Engine engine(problem, reaction);
  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(problem.initial.data(),
                                                        static_cast<Eigen::Index>(problem.initial.size()));
  MonotoneSolution out;
  SolverReport& report = out.report;

  Eigen::VectorXd r = engine.residual(x);
  double norm = engine.restrict(r).norm();
  const auto small = [&] { return norm <= std::max(tol, engine.rounding_floor(x)); };
  if (engine.free_count() == 0 || small()) {
    report.converged = true;
  } else {
    Eigen::SimplicialLDLT<SparseMatrix> ldlt;
    ldlt.analyzePattern(engine.kff());
    double best = norm;
    int since_best = 0;
    while (report.iterations < max_iterations) {
      const Eigen::VectorXd rf = engine.restrict(r);
      ldlt.factorize(engine.jacobian(x));
      if (ldlt.info() != Eigen::Success) break;
      const Eigen::VectorXd d = -ldlt.solve(rf);
      if (!d.allFinite()) break;
      const double t = engine.line_search(x, d, rf.dot(d));
      engine.add_to_free(x, d, t);
      ++report.iterations;
      r = engine.residual(x);
      norm = engine.restrict(r).norm();
      if (small()) {
        report.converged = true;
        break;
      }
      if (norm < 0.999 * best) {
        best = norm;
        since_best = 0;
      } else if (++since_best >= kStallWindow) {
        break;
      }
    }
    if (!report.converged) {
      report.method = "fixed_point";
      const auto& nodes = engine.free_nodes();
      double modulus = 0.0;
      for (int node : nodes) modulus = std::max(modulus, capped_slope(reaction.derivative(x[node]), kSlopeCap));
      modulus = std::max(modulus, 1.0);
      SparseMatrix A = engine.kff();
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        A.coeffRef(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) +=
            modulus * problem.weights[static_cast<std::size_t>(nodes[k])];
      }
      Eigen::SimplicialLDLT<SparseMatrix> fixed_point(A);
      // The contraction argument needs modulus >= beta' along the path, which a
      // singular reaction can break; keep the best iterate and give up on growth.
      Eigen::VectorXd best_x = x;
      double best_norm = norm;
      const int limit = report.iterations + 20 * max_iterations;
      while (fixed_point.info() == Eigen::Success && report.iterations < limit) {
        const Eigen::VectorXd d = -fixed_point.solve(engine.restrict(r));
        engine.add_to_free(x, d, 1.0);
        ++report.iterations;
        r = engine.residual(x);
        norm = engine.restrict(r).norm();
        if (small()) {
          report.converged = true;
          break;
        }
        if (norm < best_norm) {
          best_norm = norm;
          best_x = x;
        } else if (norm > 10.0 * best_norm) {
          break;
        }
      }
      if (!report.converged && best_norm < norm) {
        x = best_x;
        r = engine.residual(x);
        norm = best_norm;
      }
    }
  }
  report.final_residual = norm;
  report.residual_floor = engine.free_count() == 0 ? 0.0 : engine.rounding_floor(x);
  out.values.assign(x.data(), x.data() + x.size());
  out.residual.assign(r.data(), r.data() + r.size());
  return out;
}

}  // namespace deadcore
