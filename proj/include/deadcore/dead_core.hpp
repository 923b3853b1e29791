#pragma once

#include <string>
#include <vector>

#include "deadcore/elliptic.hpp"
#include "deadcore/geometry.hpp"
#include "deadcore/kinetics.hpp"

namespace deadcore {

/// Nodes where the state is numerically zero.
struct DeadCoreRegion {
  std::vector<int> nodes;
  /// Lumped-mass measure of `nodes`.
  double measure = 0.0;
  /// Region nodes with a mesh neighbour outside the region.
  std::vector<int> boundary_nodes;
  double threshold = 0.0;

  bool empty() const noexcept { return nodes.empty(); }
};

/// Default detection threshold for a solver tolerance.
inline double default_eps_dc(double tol) { return 10.0 * tol; }

DeadCoreRegion detect(const ScalarField& w, double eps_dc);

/// alpha = max(0, min over the boundary of H dw/dn), with dw/dn from the
/// consistent boundary flux of the solve. Corner nodes are skipped; throws
/// CornerBoundary when more than 5% of the boundary nodes are corners.
double compute_alpha(const SolveResult& w, const Kinetic& kin);

struct PsiBoundRow {
  int node;
  Point x;
  double d;
  double w;
  double psi_inv_d;
  double violation;
};

struct PsiBoundCheck {
  double max_violation = 0.0;
  double alpha = 0.0;
  double band = 0.0;
  std::vector<PsiBoundRow> rows;
};

/// w - Psi^{-1}(d(x, region)) over nodes with d <= band (region nodes included,
/// at d = 0). Throws EmptyRegion, and HypothesisViolated unless f == 0.
PsiBoundCheck psi_bound_check(const ScalarField& w, const ScalarField& f, const DeadCoreRegion& region,
                              const Kinetic& kin, double alpha, double band);

/// CSV with columns node,x,y,d,w,psi_inv_d,violation.
void write_psi_table_csv(const std::string& path, const PsiBoundCheck& check);

struct BlowupFit {
  double exponent;
  double log_constant;
  double r2;
  int samples;
};

/// Least squares of log beta'(w) against log d over nodes with 3h <= d <= band,
/// h the largest mesh size. Throws EmptyRegion, InvalidKinetic, InsufficientSamples.
BlowupFit blowup_rate_fit(const ScalarField& w, const DeadCoreRegion& region, const Kinetic& kin, double band);

/// One node id per line under the header `node`.
void write_region_csv(const std::string& path, const DeadCoreRegion& region);
/// Point-data mask (1 inside the region) next to the state.
void write_region_vtk(const std::string& path, const ScalarField& w, const DeadCoreRegion& region);

}  // namespace deadcore
