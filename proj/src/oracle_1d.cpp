#include "deadcore/oracle_1d.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "deadcore/elliptic.hpp"
#include "deadcore/errors.hpp"

namespace deadcore {

double SlabRootProfile::value(double x) const {
  const double t = std::max(0.0, std::abs(x) - rho);
  return A * std::pow(t, p);
}

double SlabRootProfile::derivative(double x) const {
  const double t = std::max(0.0, std::abs(x) - rho);
  const double magnitude = p * A * std::pow(t, p - 1.0);
  return x < 0.0 ? -magnitude : magnitude;
}

SlabRootProfile slab_exact_root(double lambda, double q, double L) {
  require(lambda > 0.0 && q > 0.0 && q < 1.0 && L > 0.0, ErrorCode::InvalidParameter,
          "slab oracle needs lambda > 0, 0 < q < 1, L > 0");
  const double threshold = std::sqrt(2.0 * (1.0 + q) / lambda) / (1.0 - q);
  require(L >= threshold * (1.0 - 1e-14), ErrorCode::NoDeadCore,
          fmt::format("no dead core: L = {:.17g} is below Psi(1) = {:.17g}", L, threshold));
  SlabRootProfile profile{};
  profile.lambda = lambda;
  profile.q = q;
  profile.L = L;
  profile.p = 2.0 / (1.0 - q);
  profile.A = std::pow(lambda * (1.0 - q) * (1.0 - q) / (2.0 * (1.0 + q)), 1.0 / (1.0 - q));
  profile.rho = std::max(0.0, L - std::pow(profile.A, -1.0 / profile.p));
  if (profile.rho <= 1e-12 * L) profile.rho = 0.0;
  return profile;
}

double SlabLinearProfile::value(double x) const { return std::cosh(x) / std::cosh(L); }
double SlabLinearProfile::derivative(double x) const { return std::sinh(x) / std::cosh(L); }
double SlabLinearProfile::derivative_at_L() const { return std::tanh(L); }

SlabLinearProfile slab_exact_linear(double L) {
  require(L > 0.0, ErrorCode::InvalidParameter, "L must be positive");
  return {L};
}

double SlabRootDerivative::value(double x) const {
  const double t = std::abs(x) - state.rho;
  if (t <= 0.0) return 0.0;
  return c * std::pow(t / (state.L - state.rho), exponent);
}

double SlabRootDerivative::second_derivative(double x) const {
  const double t = std::abs(x) - state.rho;
  if (t <= 0.0) return 0.0;
  const double scale = state.L - state.rho;
  return c * exponent * (exponent - 1.0) * std::pow(t, exponent - 2.0) / std::pow(scale, exponent);
}

SlabRootDerivative slab_exact_v_root(double lambda, double q, double L, double c) {
  SlabRootDerivative v{slab_exact_root(lambda, q, L), c, 0.0};
  const double p = v.state.p;
  v.exponent = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * q * p * (p - 1.0)));
  return v;
}

double SlabLinearDerivative::value(double x) const { return c * std::cosh(x) / std::cosh(L); }

SlabLinearDerivative slab_exact_v_linear(double L, double c) {
  require(L > 0.0, ErrorCode::InvalidParameter, "L must be positive");
  return {L, c};
}

double RadialProfile::value_at(double r) const {
  if (r <= radii.front()) return values.front();
  if (r >= radii.back()) return values.back();
  const auto it = std::upper_bound(radii.begin(), radii.end(), r);
  const std::size_t j = static_cast<std::size_t>(it - radii.begin());
  const double t = (r - radii[j - 1]) / (radii[j] - radii[j - 1]);
  return (1.0 - t) * values[j - 1] + t * values[j];
}

RadialProfile radial_solve(double R, const Kinetic& kin, int dim_n, double tol, const RadialOptions& options) {
  require(R > 0.0 && dim_n >= 1 && options.cells >= 4, ErrorCode::InvalidParameter,
          "radial solve needs R > 0, dim_n >= 1 and at least 4 cells");
  const int N = options.cells;
  const double dr = R / N;
  const auto nn = static_cast<std::size_t>(N) + 1;
  const double n = dim_n;
  const auto face_weight = [&](double r) { return std::pow(r, n - 1.0); };
  // Control volume of node i in the measure r^{n-1} dr.
  const auto volume = [&](double a, double b) { return (std::pow(b, n) - std::pow(a, n)) / n; };

  RadialProfile profile;
  profile.radii.resize(nn);
  for (std::size_t i = 0; i < nn; ++i) profile.radii[i] = static_cast<double>(i) * dr;
  profile.radii.back() = R;

  std::vector<Eigen::Triplet<double>> triplets;
  MonotoneProblem problem;
  problem.weights.resize(nn);
  for (std::size_t i = 0; i < nn; ++i) {
    const double lo = i == 0 ? 0.0 : (static_cast<double>(i) - 0.5) * dr;
    const double hi = i + 1 == nn ? R : (static_cast<double>(i) + 0.5) * dr;
    problem.weights[i] = volume(lo, hi);
    if (i + 1 < nn) {
      const double k = face_weight((static_cast<double>(i) + 0.5) * dr) / dr;
      const auto a = static_cast<int>(i);
      triplets.emplace_back(a, a, k);
      triplets.emplace_back(a + 1, a + 1, k);
      triplets.emplace_back(a, a + 1, -k);
      triplets.emplace_back(a + 1, a, -k);
    }
  }
  SparseMatrix K(static_cast<Eigen::Index>(nn), static_cast<Eigen::Index>(nn));
  K.setFromTriplets(triplets.begin(), triplets.end());
  problem.stiffness = &K;
  problem.source.assign(nn, 0.0);
  problem.fixed.assign(nn, 0);
  problem.fixed.back() = 1;
  problem.initial.assign(nn, 1.0);
  Reaction beta;
  beta.value = [&kin](double s) { return kin.value(s); };
  beta.derivative = [&kin](double s) { return kin.derivative(s); };
  beta.singular = kin.smoothness() == Smoothness::SingularAtZero;
  MonotoneSolution solution = solve_monotone(problem, beta, tol);
  if (!solution.report.converged) throw NoConvergenceError(solution.report);
  profile.values = std::move(solution.values);
  profile.report = solution.report;
  profile.derivative_at_R = solution.residual.back() / face_weight(R);
  for (std::size_t i = nn; i-- > 0;) {
    if (profile.values[i] <= options.eps_dc) {
      profile.dead_core_radius = profile.radii[i];
      break;
    }
  }
  return profile;
}

BlowupConstants radial_blowup_constants(const RadialProfile& profile, const Kinetic& kin, double band) {
  require(profile.dead_core_radius.has_value(), ErrorCode::EmptyRegion, "radial profile has no dead core");
  const double dr = profile.radii[1] - profile.radii[0];
  BlowupConstants result{std::numeric_limits<double>::infinity(), 0.0, 0};
  for (std::size_t i = 0; i < profile.radii.size(); ++i) {
    const double d = profile.radii[i] - *profile.dead_core_radius;
    if (d <= 3.0 * dr || d > band) continue;
    const double c = kin.derivative(profile.values[i]) * d * d;
    result.lower = std::min(result.lower, c);
    result.upper = std::max(result.upper, c);
    ++result.samples;
  }
  return result;
}

void write_profile_csv(const std::string& path, const std::vector<double>& r, const std::vector<double>& w) {
  require(r.size() == w.size(), ErrorCode::InvalidParameter, "profile columns differ in length");
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::IoError, "cannot open " + path);
  out << "r,w\n";
  for (std::size_t i = 0; i < r.size(); ++i) out << fmt::format("{:.17g},{:.17g}\n", r[i], w[i]);
  require(out.good(), ErrorCode::IoError, "failed writing " + path);
}

}  // namespace deadcore
