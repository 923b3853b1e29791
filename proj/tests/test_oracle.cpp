#include <doctest.h>

#include <cmath>
#include <string>

#include "deadcore/elliptic.hpp"
#include "deadcore/oracle_1d.hpp"

using namespace deadcore;

TEST_CASE("slab root profile constants") {
  const SlabRootProfile s = slab_exact_root(1.0, 0.5, 5.0);
  CHECK(s.p == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(s.A == doctest::Approx(1.0 / 144.0).epsilon(1e-14));
  CHECK(std::abs(s.rho - (5.0 - 2.0 * std::sqrt(3.0))) <= 1e-12);
  CHECK(s.value(5.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(s.value(-5.0) == s.value(5.0));
  CHECK(s.value(1.0) == 0.0);
  CHECK(s.derivative(5.0) == doctest::Approx(std::pow(2.0 * std::sqrt(3.0), 3) / 36.0));

  CHECK(slab_exact_root(1.0, 0.5, 2.0 * std::sqrt(3.0)).rho == 0.0);
  try {
    slab_exact_root(1.0, 0.5, 1.0);
    FAIL("expected NoDeadCore");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoDeadCore);
    CHECK(std::string(e.what()).find("3.4641016") != std::string::npos);
  }
}

TEST_CASE("dead-core threshold matches the growth function") {
  const GrowthFunctions g = growth_functions(make_root_kinetic(1.0, 0.5), 0.0);
  CHECK(std::abs(g.Psi(1.0) - 2.0 * std::sqrt(3.0)) <= 1e-10);
  for (double q : {0.25, 0.75}) {
    const double threshold = std::sqrt(2.0 * (1.0 + q) / 2.0) / (1.0 - q);
    const GrowthFunctions gq = growth_functions(make_root_kinetic(2.0, q), 0.0);
    CHECK(std::abs(gq.Psi(1.0) - threshold) <= 1e-10);
    CHECK(slab_exact_root(2.0, q, threshold).rho == 0.0);
  }
}

TEST_CASE("Psi inverse reproduces the slab profile") {
  const SlabRootProfile s = slab_exact_root(1.0, 0.5, 5.0);
  const GrowthFunctions g = growth_functions(make_root_kinetic(1.0, 0.5), 0.0);
  for (int k = 0; k <= 200; ++k) {
    const double d = (5.0 - s.rho) * k / 200.0;
    CHECK(std::abs(g.PsiInverse(d) - s.value(s.rho + d)) <= 1e-10);
    CHECK(std::abs(g.PsiInverse(d) - std::pow(d, 4) / 144.0) <= 1e-10);
  }
}

TEST_CASE("slab linearised oracle") {
  const SlabRootDerivative v = slab_exact_v_root(1.0, 0.5, 5.0, 0.7);
  CHECK(v.exponent == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(v.value(v.state.rho) == 0.0);
  CHECK(v.value(5.0) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(v.value(-5.0) == v.value(5.0));
  CHECK(v.value(0.3) == 0.0);
  // -v'' + lambda q w^{q-1} v = 0 off the core.
  for (int k = 1; k < 50; ++k) {
    const double x = v.state.rho + (5.0 - v.state.rho) * k / 50.0;
    const double potential = 0.5 * std::pow(v.state.value(x), -0.5);
    CHECK(std::abs(-v.second_derivative(x) + potential * v.value(x)) <= 1e-10);
  }
  const SlabLinearDerivative lin = slab_exact_v_linear(2.0, -2.0 * std::tanh(2.0));
  CHECK(lin.value(2.0) == doctest::Approx(-2.0 * std::tanh(2.0)));
  const SlabLinearProfile w = slab_exact_linear(2.0);
  CHECK(w.value(0.0) == doctest::Approx(0.265802).epsilon(1e-6));
  CHECK(w.value(2.0) == 1.0);
  CHECK(w.value(-1.3) == w.value(1.3));
  CHECK(w.derivative_at_L() == std::tanh(2.0));
}

TEST_CASE("slab profile in the discrete residual") {
  const double h = 0.01;
  const MeshPtr slab = build_slab_mesh(5.0, h);
  const SlabRootProfile s = slab_exact_root(1.0, 0.5, 5.0);
  const Kinetic beta = make_root_kinetic(1.0, 0.5);
  const ScalarField w = interpolate(slab, [&](const Point& x) { return s.value(x.x()); });
  const SparseMatrix K = assemble_stiffness(*slab);
  const Eigen::Map<const Eigen::VectorXd> x(w.values.data(), static_cast<Eigen::Index>(w.size()));
  const Eigen::VectorXd Kw = K * x;
  double worst = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (slab->is_boundary(static_cast<int>(i))) continue;
    const double m = slab->lumped_mass()[i];
    worst = std::max(worst, std::abs(Kw[static_cast<Eigen::Index>(i)] / m + beta.value(w[i])));
  }
  CHECK(worst <= 10.0 * h * h);
}

TEST_CASE("radial solver") {
  const RadialProfile disk = radial_solve(6.0, make_root_kinetic(1.0, 0.5), 2, 1e-11);
  REQUIRE(disk.dead_core_radius.has_value());
  CHECK(*disk.dead_core_radius > 0.0);
  CHECK(disk.values.back() == 1.0);
  CHECK(disk.radii.back() == 6.0);
  for (std::size_t i = 1; i < disk.values.size(); ++i) CHECK(disk.values[i] >= disk.values[i - 1] - 1e-12);

  // The slab profile in r is a subsolution of the radial problem, so the disk
  // state lies above it and its core is smaller.
  const SlabRootProfile slab = slab_exact_root(1.0, 0.5, 6.0);
  CHECK(*disk.dead_core_radius <= slab.rho + 0.01);
  for (std::size_t i = 0; i < disk.radii.size(); i += 50) {
    CHECK(disk.values[i] >= slab.value(disk.radii[i]) - 1e-6);
  }
  const RadialProfile flat = radial_solve(6.0, make_root_kinetic(1.0, 0.5), 1, 1e-11);
  CHECK(std::abs(*flat.dead_core_radius - slab.rho) <= 0.01);
  for (std::size_t i = 0; i < flat.radii.size(); i += 97) {
    CHECK(std::abs(flat.values[i] - slab.value(flat.radii[i])) <= 1e-5);
  }

  std::vector<double> errors;
  for (int cells : {500, 1000, 2000}) {
    RadialOptions options;
    options.cells = cells;
    const RadialProfile p = radial_solve(2.0, make_linear_kinetic(1.0), 1, 1e-10, options);
    double err = 0.0;
    for (std::size_t i = 0; i < p.radii.size(); ++i) {
      err = std::max(err, std::abs(p.values[i] - std::cosh(p.radii[i]) / std::cosh(2.0)));
    }
    errors.push_back(err);
    CHECK(std::abs(p.derivative_at_R - std::tanh(2.0)) <= 1e-5);
  }
  CHECK(errors[0] / errors[1] >= 3.5);
  CHECK(errors[1] / errors[2] >= 3.5);
  const RadialProfile fine = radial_solve(2.0, make_linear_kinetic(1.0), 1, 1e-10);
  CHECK(fine.values.size() == 4001);
  for (std::size_t i = 0; i < fine.radii.size(); ++i) {
    CHECK(std::abs(fine.values[i] - std::cosh(fine.radii[i]) / std::cosh(2.0)) <= 1e-8);
  }
  CHECK_FALSE(radial_solve(2.0, make_linear_kinetic(1.0), 2, 1e-10).dead_core_radius.has_value());

  const BlowupConstants c = radial_blowup_constants(disk, make_root_kinetic(1.0, 0.5), 0.5);
  CHECK(c.samples > 10);
  CHECK(c.lower > 0.0);
  CHECK(c.upper >= c.lower);
}
