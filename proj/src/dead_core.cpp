#include "deadcore/dead_core.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "deadcore/errors.hpp"
#include "deadcore/shape_derivative.hpp"

namespace deadcore {

DeadCoreRegion detect(const ScalarField& w, double eps_dc) {
  require(eps_dc >= 0.0, ErrorCode::InvalidParameter, "eps_dc must be nonnegative");
  const Mesh& mesh = *w.mesh;
  DeadCoreRegion region;
  region.threshold = eps_dc;
  std::vector<char> inside(w.size(), 0);
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] <= eps_dc) {
      inside[i] = 1;
      region.nodes.push_back(static_cast<int>(i));
      region.measure += mesh.lumped_mass()[i];
    }
  }
  std::vector<char> on_edge(w.size(), 0);
  for (const auto& [a, b] : mesh.edges()) {
    const auto ia = static_cast<std::size_t>(a), ib = static_cast<std::size_t>(b);
    if (inside[ia] != inside[ib]) on_edge[inside[ia] ? ia : ib] = 1;
  }
  for (int i : region.nodes) {
    if (on_edge[static_cast<std::size_t>(i)]) region.boundary_nodes.push_back(i);
  }
  return region;
}

double compute_alpha(const SolveResult& w, const Kinetic&) {
  const Mesh& mesh = *w.field.mesh;
  if (mesh.dimension() == 1) return 0.0;
  const BoundaryCurvature curv = boundary_curvature(mesh);
  const double corner_fraction =
      static_cast<double>(curv.corners.size()) / static_cast<double>(mesh.boundary_nodes().size());
  require(corner_fraction <= 0.05, ErrorCode::CornerBoundary,
          fmt::format("curvature undefined at {} of {} boundary nodes", curv.corners.size(),
                      mesh.boundary_nodes().size()));
  const std::vector<Point> grad = recover_gradients(w.field, &w.residual);
  const auto geometry = boundary_node_geometry(mesh);
  double lowest = std::numeric_limits<double>::infinity();
  for (const auto& [b, H] : curv.curvature) {
    if (curv.corners.count(b) != 0) continue;
    const double dn = grad[static_cast<std::size_t>(b)].dot(geometry.at(b).normal);
    lowest = std::min(lowest, H * dn);
  }
  return std::isfinite(lowest) ? std::max(0.0, lowest) : 0.0;
}

PsiBoundCheck psi_bound_check(const ScalarField& w, const ScalarField& f, const DeadCoreRegion& region,
                              const Kinetic& kin, double alpha, double band) {
  require(!region.empty(), ErrorCode::EmptyRegion, "no dead core detected");
  require(band > 0.0 && alpha >= 0.0, ErrorCode::InvalidParameter, "band must be positive and alpha nonnegative");
  require(f.size() == w.size(), ErrorCode::InvalidParameter, "f does not match the mesh");
  for (std::size_t i = 0; i < f.size(); ++i) {
    require(f[i] == 0.0, ErrorCode::HypothesisViolated, "dead-core proximity bound requires f = 0");
  }
  const GrowthFunctions growth = growth_functions(kin, alpha);
  const ScalarField d = distance_to_nodeset(w.mesh, region.nodes);
  PsiBoundCheck check;
  check.alpha = alpha;
  check.band = band;
  check.max_violation = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (d[i] > band) continue;
    const double bound = growth.PsiInverse(d[i]);
    const double violation = w[i] - bound;
    check.rows.push_back({static_cast<int>(i), w.mesh->nodes()[i], d[i], w[i], bound, violation});
    check.max_violation = std::max(check.max_violation, violation);
  }
  return check;
}

void write_psi_table_csv(const std::string& path, const PsiBoundCheck& check) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::IoError, "cannot open " + path);
  out << "node,x,y,d,w,psi_inv_d,violation\n";
  for (const PsiBoundRow& r : check.rows) {
    out << fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.node, r.x.x(), r.x.y(), r.d, r.w,
                       r.psi_inv_d, r.violation);
  }
  require(out.good(), ErrorCode::IoError, "failed writing " + path);
}

BlowupFit blowup_rate_fit(const ScalarField& w, const DeadCoreRegion& region, const Kinetic& kin, double band) {
  require(!region.empty(), ErrorCode::EmptyRegion, "no dead core detected");
  require(kin.smoothness() == Smoothness::SingularAtZero, ErrorCode::InvalidKinetic,
          "blow-up fit needs a kinetic singular at 0");
  const double h = w.mesh->h_max();
  const ScalarField d = distance_to_nodeset(w.mesh, region.nodes);
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (d[i] < 3.0 * h || d[i] > band || !(w[i] > 0.0)) continue;
    const double slope = kin.derivative(w[i]);
    if (!std::isfinite(slope) || slope <= 0.0) continue;
    xs.push_back(std::log(d[i]));
    ys.push_back(std::log(slope));
  }
  const auto n = static_cast<int>(xs.size());
  require(n >= 10, ErrorCode::InsufficientSamples,
          fmt::format("only {} nodes with 3h <= d <= {} for the blow-up fit", n, band));
  double mx = 0.0, my = 0.0;
  for (int k = 0; k < n; ++k) {
    mx += xs[static_cast<std::size_t>(k)];
    my += ys[static_cast<std::size_t>(k)];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (int k = 0; k < n; ++k) {
    const double dx = xs[static_cast<std::size_t>(k)] - mx, dy = ys[static_cast<std::size_t>(k)] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  require(sxx > 0.0, ErrorCode::InsufficientSamples, "blow-up fit samples share one distance");
  BlowupFit fit{};
  fit.exponent = sxy / sxx;
  fit.log_constant = my - fit.exponent * mx;
  fit.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  fit.samples = n;
  return fit;
}

void write_region_csv(const std::string& path, const DeadCoreRegion& region) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::IoError, "cannot open " + path);
  out << "node\n";
  for (int i : region.nodes) out << i << '\n';
  require(out.good(), ErrorCode::IoError, "failed writing " + path);
}

void write_region_vtk(const std::string& path, const ScalarField& w, const DeadCoreRegion& region) {
  std::vector<double> mask(w.size(), 0.0);
  for (int i : region.nodes) mask[static_cast<std::size_t>(i)] = 1.0;
  write_vtk(path, *w.mesh, {{"w", w.values}, {"dead_core", mask}});
}

}  // namespace deadcore
