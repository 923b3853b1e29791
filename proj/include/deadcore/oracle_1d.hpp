#pragma once

#include <optional>
#include <string>
#include <vector>

#include "deadcore/kinetics.hpp"
#include "deadcore/monotone_newton.hpp"

namespace deadcore {

/// w(x) = A (|x| - rho)_+^p on [-L, L], the exact dead-core solution of
/// -w'' + lambda w^q = 0, w(+-L) = 1.
struct SlabRootProfile {
  double lambda;
  double q;
  double L;
  double rho;
  double A;
  double p;

  double value(double x) const;
  double derivative(double x) const;
};

/// Throws NoDeadCore when L < Psi(1) = sqrt(2(1+q)/lambda)/(1-q).
SlabRootProfile slab_exact_root(double lambda, double q, double L);

/// w(x) = cosh(x)/cosh(L), the solution for beta(s) = s.
struct SlabLinearProfile {
  double L;

  double value(double x) const;
  double derivative(double x) const;
  double derivative_at_L() const;
};

SlabLinearProfile slab_exact_linear(double L);

/// v(x) = c ((|x| - rho)/(L - rho))^s on |x| > rho and 0 on the dead core, with
/// s the positive root of s(s-1) = q p (p-1). Even in x, so c is the value at both ends.
struct SlabRootDerivative {
  SlabRootProfile state;
  double c;
  double exponent;

  double value(double x) const;
  double second_derivative(double x) const;
};

SlabRootDerivative slab_exact_v_root(double lambda, double q, double L, double c);

/// v(x) = c cosh(x)/cosh(L), the linearised solution for beta(s) = s.
struct SlabLinearDerivative {
  double L;
  double c;

  double value(double x) const;
};

SlabLinearDerivative slab_exact_v_linear(double L, double c);

struct RadialProfile {
  std::vector<double> radii;
  std::vector<double> values;
  /// Largest radius with w <= eps_dc.
  std::optional<double> dead_core_radius;
  double derivative_at_R = 0.0;
  SolverReport report;

  /// Piecewise linear interpolation in r.
  double value_at(double r) const;
};

struct RadialOptions {
  int cells = 4000;
  double eps_dc = 1e-11;
};

/// -w'' - ((n-1)/r) w' + beta(w) = 0, w'(0) = 0, w(R) = 1, by a conservative
/// central scheme (equivalent to a ghost point at r = 0) solved with the
/// same Newton engine as the mesh solvers. Throws NoConvergence.
RadialProfile radial_solve(double R, const Kinetic& kin, int dim_n, double tol,
                           const RadialOptions& options = {});

/// Observed constants of C^{-1} d^{-2} <= beta'(w) <= C d^{-2} outside the dead core,
/// over 3 dr < d <= band.
struct BlowupConstants {
  double lower;
  double upper;
  int samples;
};

BlowupConstants radial_blowup_constants(const RadialProfile& profile, const Kinetic& kin, double band);

/// CSV with columns r,w.
void write_profile_csv(const std::string& path, const std::vector<double>& r, const std::vector<double>& w);

}  // namespace deadcore
