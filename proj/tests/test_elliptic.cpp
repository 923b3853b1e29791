#include <doctest.h>

#include <cmath>
#include <random>

#include "deadcore/elliptic.hpp"
#include "deadcore/oracle_1d.hpp"

using namespace deadcore;

namespace {

ScalarField constant(const MeshPtr& mesh, double c) {
  return ScalarField{mesh, std::vector<double>(mesh->node_count(), c), FieldKind::Derived};
}

double max_error_vs(const ScalarField& field, const auto& exact) {
  double err = 0.0;
  for (std::size_t i = 0; i < field.size(); ++i) {
    err = std::max(err, std::abs(field[i] - exact(field.mesh->nodes()[i])));
  }
  return err;
}

}  // namespace

TEST_CASE("stiffness matrix structure") {
  const MeshPtr slab = build_slab_mesh(1.0, 0.25);
  const SparseMatrix K = assemble_stiffness(*slab);
  const double h = 0.25;
  CHECK(K.coeff(3, 3) == doctest::Approx(2.0 / h));
  CHECK(K.coeff(3, 2) == doctest::Approx(-1.0 / h));
  CHECK(K.coeff(3, 4) == doctest::Approx(-1.0 / h));
  const SparseMatrix asym = K - SparseMatrix(K.transpose());
  CHECK(asym.norm() == 0.0);
  for (int i = 1; i < 8; ++i) {
    double sum = 0.0;
    for (int j = 0; j < 9; ++j) sum += K.coeff(i, j);
    CHECK(std::abs(sum) <= 1e-12);
  }
  const MeshPtr disk = build_disk_mesh(1.0, 0.2);
  const SparseMatrix Kd = assemble_stiffness(*disk);
  CHECK((Kd - SparseMatrix(Kd.transpose())).norm() <= 1e-12);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(disk->node_count()));
  CHECK((Kd * ones).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK_THROWS_AS(assemble_stiffness(*slab, [](const Point&) { return Matrix2(-Matrix2::Identity()); }), Error);
}

TEST_CASE("constant solution when f = beta(1)") {
  const MeshPtr disk = build_disk_mesh(1.0, 0.2);
  for (const Kinetic& k : {make_root_kinetic(1.0, 0.5), make_linear_kinetic(2.0), make_lipschitz_ramp(2.0, 0.5)}) {
    const auto w = solve_semilinear(disk, k, constant(disk, k.value(1.0)), 1.0, 1e-10);
    for (double v : w.field.values) CHECK(v == 1.0);
    const auto u = solve_semilinear_u(disk, k, constant(disk, k.value(1.0)), 1e-10);
    for (double v : u.field.values) CHECK(v == 0.0);
  }
}

TEST_CASE("slab linear oracle with O(h^2) convergence") {
  const double L = 2.0;
  const SlabLinearProfile exact = slab_exact_linear(L);
  std::vector<double> errors;
  for (double h : {0.04, 0.02, 0.01}) {
    const MeshPtr slab = build_slab_mesh(L, h);
    const auto res = solve_semilinear(slab, make_linear_kinetic(1.0), constant(slab, 0.0), 1.0, 1e-12);
    CHECK(res.report.converged);
    CHECK(res.report.bounds_ok);
    errors.push_back(max_error_vs(res.field, [&](const Point& x) { return exact.value(x.x()); }));
    const auto u = solve_semilinear_u(slab, make_linear_kinetic(1.0), constant(slab, 0.0), 1e-12);
    for (std::size_t i = 0; i < slab->node_count(); ++i) {
      CHECK(std::abs(u.field[i] - (1.0 - res.field[i])) <= 1e-10);
    }
  }
  CHECK(errors[0] / errors[1] >= 3.5);
  CHECK(errors[1] / errors[2] >= 3.5);
}

TEST_CASE("slab root oracle: dead core") {
  const double L = 5.0, h = 0.005;
  const SlabRootProfile exact = slab_exact_root(1.0, 0.5, L);
  const MeshPtr slab = build_slab_mesh(L, h);
  const auto res = solve_semilinear(slab, make_root_kinetic(1.0, 0.5), constant(slab, 0.0), 1.0, 1e-12);
  CHECK(res.report.converged);
  CHECK(res.report.method == "newton");
  CHECK(res.report.bounds_ok);
  CHECK(max_error_vs(res.field, [&](const Point& x) { return exact.value(x.x()); }) <= 25.0 * h * h);
}

TEST_CASE("transported solve") {
  const double L = 2.0, h = 0.01;
  const MeshPtr slab = build_slab_mesh(L, h);
  const Kinetic lin = make_linear_kinetic(1.0);
  const SourceFn zero = [](const Point&) { return 0.0; };
  const auto u0 = solve_semilinear_u(slab, lin, interpolate(slab, zero), 1e-12);
  const auto t0 = solve_transported(slab, dilation_field(), 0.0, lin, zero, 1e-12);
  CHECK(u0.field.values == t0.field.values);

  const double tau = 0.1;
  const auto ut = solve_transported(slab, dilation_field(), tau, lin, zero, 1e-12);
  const double err = max_error_vs(ut.field, [&](const Point& x) {
    return 1.0 - std::cosh((1 + tau) * x.x()) / std::cosh(L * (1 + tau));
  });
  CHECK(err <= 25.0 * h * h);

  // Same problem computed on the moved mesh.
  const MeshPtr moved = perturb_mesh(*slab, dilation_field(), tau);
  const auto um = solve_semilinear_u(moved, lin, interpolate(moved, zero), 1e-12);
  CHECK(max_abs(subtract(um.field.values, ut.field.values)) <= 1e-10);
  CHECK_THROWS_AS(solve_transported(slab, dilation_field(), 1.0, lin, zero, 1e-12), Error);
}

TEST_CASE("linear potential solves") {
  const double L = 2.0, h = 0.01;
  const MeshPtr slab = build_slab_mesh(L, h);
  const int last = static_cast<int>(slab->node_count()) - 1;
  const auto v0 = solve_linear_potential(slab, constant(slab, 1.0), {{0, 0.0}, {last, 0.0}}, {}, 1e-12);
  for (double v : v0.values) CHECK(v == 0.0);
  const double c = 0.7;
  const auto v = solve_linear_potential(slab, constant(slab, 1.0), {{0, c}, {last, c}}, {}, 1e-12);
  const SlabLinearDerivative exact = slab_exact_v_linear(L, c);
  CHECK(max_error_vs(v, [&](const Point& x) { return exact.value(x.x()); }) <= 25.0 * h * h);

  ScalarField V = constant(slab, 1.0);
  V.values[100] = kInfiniteSlope;
  CHECK_THROWS_AS(solve_linear_potential(slab, V, {{0, c}, {last, c}}, {}, 1e-12), Error);
  const auto frozen = solve_linear_potential(slab, V, {{0, c}, {last, c}}, {100}, 1e-12);
  CHECK(frozen[100] == 0.0);
  CHECK(frozen[0] == c);
}

TEST_CASE("norms") {
  const MeshPtr disk = build_disk_mesh(1.0, 0.1);
  const auto n = norms(constant(disk, 2.0));
  CHECK(n.L2 == doctest::Approx(2.0 * std::sqrt(disk->total_measure())));
  CHECK(std::abs(n.L2 - 2.0 * std::sqrt(M_PI)) <= 0.02);
  CHECK(n.H1_semi <= 1e-12);
  const MeshPtr slab = build_slab_mesh(1.0, 0.1);
  const auto nx = norms(interpolate(slab, [](const Point& x) { return x.x(); }));
  CHECK(nx.H1_semi == doctest::Approx(std::sqrt(2.0)));
  CHECK(nx.H2_surrogate <= 1e-12);
  const auto nl = norms(interpolate(disk, [](const Point& x) { return 3.0 * x.x() - x.y() + 1.0; }));
  CHECK(nl.H2_surrogate <= 1e-10);
}

TEST_CASE("discrete comparison and bounds on the disk") {
  const MeshPtr disk = build_disk_mesh(1.0, 0.1);
  const double tol = 1e-11;
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> dist(0.0, 0.4);
  for (const Kinetic& k : {make_root_kinetic(1.0, 0.5), make_lipschitz_ramp(2.0, 0.5)}) {
    ScalarField f1 = constant(disk, 0.0);
    for (double& v : f1.values) v = dist(rng) * k.value(1.0);
    ScalarField f2 = f1;
    for (double& v : f2.values) v = std::min(k.value(1.0), v + dist(rng));
    const auto w1 = solve_semilinear(disk, k, f1, 1.0, tol);
    const auto w2 = solve_semilinear(disk, k, f2, 1.0, tol);
    CHECK(w1.report.bounds_ok);
    CHECK(w2.report.bounds_ok);
    for (std::size_t i = 0; i < disk->node_count(); ++i) CHECK(w1.field[i] <= w2.field[i] + 10.0 * tol);
  }
}
