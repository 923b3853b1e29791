#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "deadcore/oracle_1d.hpp"
#include "deadcore/shape_derivative.hpp"

using namespace deadcore;

namespace {

const SourceFn kZero = [](const Point&) { return 0.0; };

ScalarField zeros(const MeshPtr& mesh) { return interpolate(mesh, kZero); }

}  // namespace

TEST_CASE("boundary data on the slab") {
  const MeshPtr slab = build_slab_mesh(2.0, 0.01);
  const Kinetic lin = make_linear_kinetic(1.0);
  const SolveResult w = solve_semilinear(slab, lin, zeros(slab), 1.0, 1e-11);
  const int last = static_cast<int>(slab->node_count()) - 1;

  for (const auto& [node, value] : boundary_data(w, zero_field())) CHECK(value == 0.0);
  const auto flux = boundary_data(w, dilation_field());
  CHECK(std::abs(flux.at(last) + 2.0 * std::tanh(2.0)) <= 1e-4);
  CHECK(std::abs(flux.at(0) + 2.0 * std::tanh(2.0)) <= 1e-4);
  // Element averaging is only first order at the boundary.
  const auto averaged = boundary_data(w.field, dilation_field());
  CHECK(std::abs(averaged.at(last) + 2.0 * std::tanh(2.0)) <= 0.05);
  CHECK(std::abs(averaged.at(last) - flux.at(last)) > 1e-4);

  const MeshPtr big = build_slab_mesh(5.0, 0.005);
  const SolveResult wr = solve_semilinear(big, make_root_kinetic(1.0, 0.5), zeros(big), 1.0, 1e-12);
  const auto root_flux = boundary_data(wr, dilation_field());
  CHECK(std::abs(root_flux.at(static_cast<int>(big->node_count()) - 1) + 10.0 / 3.0 * std::sqrt(3.0)) <= 1e-4);
}

TEST_CASE("gradient recovery") {
  const MeshPtr disk = build_disk_mesh(1.0, 0.1);
  const ScalarField affine = interpolate(disk, [](const Point& x) { return 2.0 * x.x() - 3.0 * x.y() + 1.0; });
  for (const Point& g : recover_gradients(affine, nullptr)) {
    CHECK(std::abs(g.x() - 2.0) <= 1e-10);
    CHECK(std::abs(g.y() + 3.0) <= 1e-10);
  }
}

TEST_CASE("solve_v against the analytic derivatives") {
  const Kinetic lin = make_linear_kinetic(1.0);
  std::vector<double> errors;
  for (double h : {0.02, 0.01}) {
    const MeshPtr slab = build_slab_mesh(2.0, h);
    const SolveResult w = solve_semilinear(slab, lin, zeros(slab), 1.0, 1e-11);
    const ShapeDerivativeResult v = solve_v(w, lin, dilation_field(), {}, 1e-11);
    const SlabLinearDerivative exact = slab_exact_v_linear(2.0, -2.0 * std::tanh(2.0));
    double err = 0.0;
    for (std::size_t i = 0; i < slab->node_count(); ++i) {
      err = std::max(err, std::abs(v.v[i] - exact.value(slab->nodes()[i].x())));
    }
    CHECK(err <= 25.0 * h * h);
    CHECK(v.residual <= 1e-9);
    errors.push_back(err);
    const ShapeDerivativeResult zero = solve_v(w, lin, zero_field(), {}, 1e-11);
    for (double x : zero.v.values) CHECK(x == 0.0);
    for (std::size_t i = 0; i < slab->node_count(); ++i) CHECK(v.v_u()[i] == -v.v[i]);
  }
  CHECK(errors[0] / errors[1] >= 3.5);
}

TEST_CASE("sign relation") {
  const double tol = 1e-10;
  const MeshPtr slab = build_slab_mesh(2.0, 0.01);
  CHECK(sign_relation_check(slab, make_linear_kinetic(1.0), zeros(slab), zero_field(), tol) == 0.0);
  CHECK(sign_relation_check(slab, make_linear_kinetic(1.0), zeros(slab), dilation_field(), tol) <= 10.0 * tol);
  const MeshPtr disk = build_disk_mesh(1.0, 0.1);
  CHECK(sign_relation_check(disk, make_lipschitz_ramp(2.0, 0.5), zeros(disk), shear_field(), tol) <= 10.0 * tol);
}

TEST_CASE("finite differences and point location") {
  const MeshPtr disk = build_disk_mesh(1.0, 0.15);
  const ScalarField affine = interpolate(disk, [](const Point& x) { return x.x() + 2.0 * x.y(); });
  const std::vector<Point> probes{Point(0.1, 0.2), Point(-0.5, 0.3), Point(2.0, 0.0), disk->nodes()[17]};
  const auto values = interpolate_at(affine, probes, -7.0);
  CHECK(values[0] == doctest::Approx(0.5));
  CHECK(values[1] == doctest::Approx(0.1));
  CHECK(values[2] == -7.0);
  CHECK(values[3] == doctest::Approx(affine[17]));

  const MeshPtr slab = build_slab_mesh(2.0, 0.01);
  const auto none = finite_difference_derivative(slab, make_linear_kinetic(1.0), kZero, zero_field(), 0.1, 1e-11);
  for (double x : none.dU.values) CHECK(x == 0.0);
  for (double x : none.du_extended.values) CHECK(std::abs(x) <= 1e-9);
  CHECK_THROWS_AS(finite_difference_derivative(slab, make_linear_kinetic(1.0), kZero, dilation_field(), 1.0, 1e-11),
                  Error);
}

TEST_CASE("report helpers") {
  CHECK(fit_log_slope({1.0, 0.1, 0.01}, {2.0, 0.2, 0.02}, 0.0) == doctest::Approx(1.0));
  CHECK(std::isnan(fit_log_slope({1.0, 0.1}, {2.0, 0.2}, 1.0)));
  CHECK(decreases_to_floor({1.0, 0.5, 0.1}, 0.0));
  CHECK_FALSE(decreases_to_floor({1.0, 1.5}, 0.1));
  CHECK(decreases_to_floor({1.0, 0.1, 0.15}, 0.05));
  CHECK_FALSE(decreases_to_floor({1.0, 0.1, 0.25}, 0.05));

  ConvergenceReport r("tau", {0.1, 0.01});
  r.add_column("err", {1.0, 0.1});
  CHECK_THROWS_AS(r.add_column("bad", {1.0}), Error);
  r.set_flag("ok", true);
  CHECK(r.all_pass());
  r.set_flag("other", false);
  CHECK_FALSE(r.all_pass());
  const auto path = std::filesystem::temp_directory_path() / "deadcore_report_test.csv";
  r.write_csv(path.string());
  std::ifstream in(path);
  std::stringstream text;
  text << in.rdbuf();
  CHECK(text.str() == "tau,err\n0.10000000000000001,1\n0.01,0.10000000000000001\n");
  CHECK(r.summary()["flags"]["ok"] == true);
  std::filesystem::remove(path);
}

TEST_CASE("gateaux check") {
  const MeshPtr slab = build_slab_mesh(2.0, 0.002);
  const std::vector<double> taus{1e-1, 1e-2, 1e-3};
  const ConvergenceReport smooth = gateaux_check(slab, make_linear_kinetic(1.0), kZero, dilation_field(), taus, 1e-10);
  CHECK(smooth.fitted_slope >= 0.9);
  CHECK(smooth.flag("transported_decreases_to_floor"));
  const ConvergenceReport none = gateaux_check(slab, make_linear_kinetic(1.0), kZero, zero_field(), taus, 1e-10);
  for (double e : none.column("transported_error")) CHECK(e <= 1e-9);
  for (double e : none.column("extended_error")) CHECK(e <= 1e-9);
  const SourceFn minus_one = [](const Point&) { return -1.0; };
  StudyOptions options;
  options.jobs = 2;
  const ConvergenceReport ramp =
      gateaux_check(slab, make_lipschitz_ramp(2.0, 0.5), minus_one, dilation_field(), taus, 1e-10, options);
  CHECK(ramp.flag("transported_decreases_to_floor"));
  CHECK_THROWS_AS(gateaux_check(slab, make_root_kinetic(1.0, 0.5), kZero, dilation_field(), taus, 1e-10), Error);
  CHECK_THROWS_AS(gateaux_check(slab, make_linear_kinetic(1.0), kZero, dilation_field(), {1e-2, 1e-1}, 1e-10),
                  Error);
}

TEST_CASE("truncated sequence") {
  const MeshPtr slab = build_slab_mesh(5.0, 0.01);
  const Kinetic root = make_root_kinetic(1.0, 0.5);
  const std::vector<double> ms{1, 4, 16, 64, 256};
  const TruncatedSequence seq = truncated_shape_sequence(slab, root, zeros(slab), dilation_field(), ms, 1e-12, 1e-11);
  CHECK(seq.members.size() == ms.size());
  CHECK(seq.report.flag("w_nonincreasing"));
  CHECK(seq.report.flag("v_h1_bounded"));
  CHECK(seq.report.flag("deadcore_vanishing"));
  CHECK(seq.report.flag("v_l2_to_limit_decreasing"));
  const auto& w0 = seq.report.column("w_origin");
  for (std::size_t k = 1; k < w0.size(); ++k) CHECK(w0[k] < w0[k - 1]);
  CHECK(seq.report.column("beta_gap").back() == doctest::Approx(1.0 / 1024.0));

  // Huge m: the truncation is invisible at the solver tolerance.
  const double tol = 1e-10;
  const TruncatedSequence big =
      truncated_shape_sequence(slab, root, zeros(slab), dilation_field(), {1.0 / (4.0 * tol)}, tol, 10 * tol);
  CHECK(big.report.column("w_gap_to_limit")[0] <= 10.0 * tol);

  ScalarField f = zeros(slab);
  f.values[10] = 2.0;
  CHECK_THROWS_AS(truncated_shape_sequence(slab, root, f, dilation_field(), ms, 1e-12, 1e-11), Error);
  try {
    truncated_shape_sequence(slab, root, f, dilation_field(), ms, 1e-12, 1e-11);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::HypothesisViolated);
  }
}

TEST_CASE("kinetic perturbation study") {
  const MeshPtr slab = build_slab_mesh(5.0, 0.01);
  const std::vector<int> ns{4, 8, 16, 32};
  const KineticPerturbation study =
      kinetic_perturbation_study(slab, make_lipschitz_ramp(2.0, 0.5), zeros(slab), dilation_field(), ns, 1e-11);
  CHECK(study.report.flag("h1_ratio_bounded"));
  CHECK(study.report.flag("v_decreases_to_floor"));
  const auto& gap = study.report.column("beta_gap");
  for (std::size_t k = 0; k < ns.size(); ++k) CHECK(gap[k] == 2.0 / (4.0 * ns[k]));

  // Nothing to mollify: every member reproduces the base solve.
  const KineticPerturbation smooth =
      kinetic_perturbation_study(slab, make_linear_kinetic(1.0), zeros(slab), dilation_field(), ns, 1e-11);
  for (double e : smooth.report.column("w_h1_error")) CHECK(e <= 1e-10);
  for (double e : smooth.report.column("v_l2_error")) CHECK(e <= 1e-10);
  CHECK_THROWS_AS(kinetic_perturbation_study(slab, make_root_kinetic(1.0, 0.5), zeros(slab), dilation_field(), ns,
                                             1e-11),
                  Error);
}
