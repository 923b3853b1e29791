#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "deadcore/elliptic.hpp"
#include "deadcore/geometry.hpp"
#include "deadcore/kinetics.hpp"

namespace deadcore {

enum class GradientRecovery {
  /// Normal derivative from the Galerkin residual at the boundary node, which is
  /// second order; tangential part from element averages.
  ConsistentFlux,
  /// Measure-weighted average of adjacent element gradients (first order on the boundary).
  ElementAverage,
};

/// Nodal gradients: element averages everywhere, with the boundary normal
/// component replaced by residual / facet measure when `residual` is given.
std::vector<Point> recover_gradients(const ScalarField& field, const std::vector<double>* residual);

struct ShapeDerivativeResult {
  ScalarField v;
  std::map<int, double> boundary_data;
  /// Euclidean norm of K v + M_L V v over free nodes.
  double residual = 0.0;
  std::vector<int> frozen_nodes;

  /// Derivative of the u-form, -v.
  ScalarField v_u() const;
};

/// -grad w . theta on the boundary, by element averaging.
std::map<int, double> boundary_data(const ScalarField& w, const PerturbationField& theta);
/// -grad w . theta on the boundary from a solve, using the chosen recovery.
std::map<int, double> boundary_data(const SolveResult& w, const PerturbationField& theta,
                                    GradientRecovery recovery = GradientRecovery::ConsistentFlux);

/// Linearised problem -Lap v + beta'(w) v = 0, v = -grad w . theta on the boundary,
/// v = 0 on frozen nodes.
ShapeDerivativeResult solve_v(const SolveResult& w, const Kinetic& kin, const PerturbationField& theta,
                              const std::vector<int>& frozen, double tol,
                              GradientRecovery recovery = GradientRecovery::ConsistentFlux);

/// Same for the u-form: potential g'(u) = beta'(1 - u), data -grad u . theta.
ShapeDerivativeResult solve_v_u(const SolveResult& u, const Kinetic& kin, const PerturbationField& theta,
                                double tol, GradientRecovery recovery = GradientRecovery::ConsistentFlux);

/// max |v_u + v_w| over nodes.
double sign_relation_check(const MeshPtr& mesh, const Kinetic& kin, const ScalarField& f,
                           const PerturbationField& theta, double tol);

struct FiniteDifferenceDerivative {
  ScalarField dU;
  ScalarField du_extended;
};

/// dU = (U_tau - U_0)/tau on the fixed mesh; du_extended from the solve on the
/// moved mesh, interpolated back to the reference nodes and extended by 0.
FiniteDifferenceDerivative finite_difference_derivative(const MeshPtr& mesh, const Kinetic& kin,
                                                        const SourceFn& f, const PerturbationField& theta,
                                                        double tau, double tol);

/// Values of a nodal field at arbitrary points by P1 interpolation; `outside` where
/// a point lies in no element.
std::vector<double> interpolate_at(const ScalarField& field, const std::vector<Point>& points, double outside);

/// Parameter sweep with named error columns and pass/fail assertions.
class ConvergenceReport {
 public:
  ConvergenceReport() = default;
  ConvergenceReport(std::string parameter_name, std::vector<double> parameters);

  const std::string& parameter_name() const noexcept { return parameter_name_; }
  const std::vector<double>& parameters() const noexcept { return parameters_; }

  /// Throws InvalidParameter when the column length differs from the parameter list.
  void add_column(const std::string& name, std::vector<double> values);
  const std::vector<double>& column(const std::string& name) const;
  bool has_column(const std::string& name) const;
  const std::vector<std::pair<std::string, std::vector<double>>>& columns() const noexcept { return columns_; }

  void set_slope(const std::string& column, double slope) { slopes_[column] = slope; }
  double slope(const std::string& column) const;
  const std::map<std::string, double>& slopes() const noexcept { return slopes_; }

  /// Fitted slope of the primary column.
  double fitted_slope = 0.0;

  void set_flag(const std::string& name, bool value) { flags_[name] = value; }
  bool flag(const std::string& name) const;
  const std::map<std::string, bool>& flags() const noexcept { return flags_; }
  bool all_pass() const;

  void set_value(const std::string& name, double value) { values_[name] = value; }
  double value(const std::string& name) const;
  const std::map<std::string, double>& values() const noexcept { return values_; }

  void add_note(std::string note) { notes_.push_back(std::move(note)); }
  const std::vector<std::string>& notes() const noexcept { return notes_; }

  nlohmann::json summary() const;
  void write_csv(const std::string& path) const;

 private:
  std::string parameter_name_;
  std::vector<double> parameters_;
  std::vector<std::pair<std::string, std::vector<double>>> columns_;
  std::map<std::string, double> slopes_;
  std::map<std::string, bool> flags_;
  std::map<std::string, double> values_;
  std::vector<std::string> notes_;
};

/// Least-squares slope of log(errors) against log(params) over entries with
/// error > threshold; NaN when fewer than two entries qualify.
double fit_log_slope(const std::vector<double>& params, const std::vector<double>& errors, double threshold);

/// Errors never grow, except below 3 * floor where they may grow by at most 2x.
bool decreases_to_floor(const std::vector<double>& errors, double floor);

struct StudyOptions {
  int jobs = 1;
};

/// Transported and extended difference quotients against v_u + grad u . theta
/// and -v_w for each tau (positive, decreasing).
ConvergenceReport gateaux_check(const MeshPtr& mesh, const Kinetic& kin, const SourceFn& f,
                                const PerturbationField& theta, const std::vector<double>& tau_list,
                                double tol, const StudyOptions& options = {});

struct SequenceMember {
  double parameter;
  SolveResult w;
  ShapeDerivativeResult v;
};

struct TruncatedSequence {
  ConvergenceReport report;
  std::vector<SequenceMember> members;
  SolveResult w_limit;
  ShapeDerivativeResult v_limit;
};

/// Truncations beta_m of a kinetic singular at 0, their states and derivatives,
/// and the frozen-core limit. Throws HypothesisViolated unless 0 <= f <= beta(1).
TruncatedSequence truncated_shape_sequence(const MeshPtr& mesh, const Kinetic& kin, const ScalarField& f,
                                           const PerturbationField& theta, const std::vector<double>& m_list,
                                           double tol, double eps_dc, const StudyOptions& options = {});

struct KineticPerturbation {
  ConvergenceReport report;
  std::vector<SequenceMember> members;
  SolveResult w;
  ShapeDerivativeResult v;
};

/// Mollified kinetics beta_n against beta: H1 and H2-surrogate state errors per
/// unit sup-gap, and L2 errors of the derivatives.
KineticPerturbation kinetic_perturbation_study(const MeshPtr& mesh, const Kinetic& kin, const ScalarField& f,
                                               const PerturbationField& theta, const std::vector<int>& n_list,
                                               double tol, const StudyOptions& options = {});

}  // namespace deadcore
