#pragma once

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace deadcore {

/// Node coordinates. 1D meshes keep y = 0.
using Point = Eigen::Vector2d;
using Matrix2 = Eigen::Matrix2d;

/// A piece of the boundary: a point in 1D (nodes[1] == -1, measure 1) or an
/// edge in 2D. The normal points out of the domain.
struct BoundaryFacet {
  std::array<int, 2> nodes;
  Point normal;
  double measure;
};

/// Conforming simplicial mesh: segments in 1D, positively oriented triangles in 2D.
/// Immutable once built; the constructor derives measures and boundary data.
class Mesh {
 public:
  /// 1D elements use the first two entries; the third must be -1.
  Mesh(int dimension, std::vector<Point> nodes, std::vector<std::array<int, 3>> elements);

  int dimension() const noexcept { return dimension_; }
  int vertices_per_element() const noexcept { return dimension_ + 1; }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t element_count() const noexcept { return elements_.size(); }

  const std::vector<Point>& nodes() const noexcept { return nodes_; }
  const Point& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
  const std::vector<std::array<int, 3>>& elements() const noexcept { return elements_; }
  const std::vector<double>& element_measures() const noexcept { return measures_; }
  const std::vector<int>& boundary_nodes() const noexcept { return boundary_nodes_; }
  bool is_boundary(int i) const { return on_boundary_[static_cast<std::size_t>(i)] != 0; }
  const std::vector<BoundaryFacet>& boundary_facets() const noexcept { return facets_; }
  /// Row-summed (nodal quadrature) mass.
  const std::vector<double>& lumped_mass() const noexcept { return lumped_mass_; }

  /// Unique edges as sorted node pairs (segments in 1D).
  std::vector<std::array<int, 2>> edges() const;
  /// Boundary polygons in counter-clockwise order (2D only).
  std::vector<std::vector<int>> boundary_loops() const;

  Point barycenter(std::size_t element) const;
  double total_measure() const;
  double h_min() const;
  double h_max() const;

 private:
  int dimension_;
  std::vector<Point> nodes_;
  std::vector<std::array<int, 3>> elements_;
  std::vector<double> measures_;
  std::vector<int> boundary_nodes_;
  std::vector<char> on_boundary_;
  std::vector<BoundaryFacet> facets_;
  std::vector<double> lumped_mass_;
};

using MeshPtr = std::shared_ptr<const Mesh>;

/// Uniform mesh of [-L, L] with spacing 2L/ceil(2L/h).
MeshPtr build_slab_mesh(double L, double h);

/// Concentric-ring triangulation of the disk of radius R: ring k carries 6k
/// nodes, rings are stitched by angle and then made Delaunay by edge flips.
MeshPtr build_disk_mesh(double R, double h);

/// Structured triangulation of [x0, x1] x [y0, y1] with cells no larger than h.
MeshPtr build_rectangle_mesh(double x0, double x1, double y0, double y1, double h);

struct SupNorms {
  double theta;
  double jacobian;
};

/// Deformation direction theta in W^{1,inf}. Jacobian norms are spectral norms.
class PerturbationField {
 public:
  using ValueFn = std::function<Point(const Point&)>;
  using JacobianFn = std::function<Matrix2(const Point&)>;

  PerturbationField(std::string name, ValueFn value, JacobianFn jacobian,
                    std::optional<double> jacobian_bound, nlohmann::json params = {});

  Point value(const Point& x) const { return value_(x); }
  Matrix2 jacobian(const Point& x) const { return jacobian_(x); }
  const std::string& name() const noexcept { return name_; }
  const nlohmann::json& params() const noexcept { return params_; }

  /// Global bound on |D theta| when known in closed form.
  std::optional<double> jacobian_bound() const noexcept { return jacobian_bound_; }
  /// Sampled over nodes and element barycenters.
  SupNorms sup_norms(const Mesh& mesh) const;
  /// Global bound if available, otherwise the sampled value on `mesh`.
  double jacobian_sup(const Mesh& mesh) const;

 private:
  std::string name_;
  ValueFn value_;
  JacobianFn jacobian_;
  std::optional<double> jacobian_bound_;
  nlohmann::json params_;
};

PerturbationField zero_field();
/// theta(x) = a x.
PerturbationField dilation_field(double a = 1.0);
/// theta(x) = a (x1, 0).
PerturbationField shear_field(double a = 1.0);
/// theta(x) = a (sin(k x1), sin(k x2)).
PerturbationField sine_field(double a, double k);
/// theta(x) = a exp(-|x - c|^2 / r^2) (x - c).
PerturbationField bump_field(double a, const Point& center, double radius);

using SourceFn = std::function<double(const Point&)>;

/// Coefficients of the problem pulled back from (I + tau theta) Omega:
/// A = J F^{-1} F^{-T}, J = det F, F = I + tau D theta.
class TransportedCoefficients {
 public:
  TransportedCoefficients(PerturbationField theta, SourceFn f, double tau, int dimension,
                          double tau_max);

  double tau() const noexcept { return tau_; }
  double tau_max() const noexcept { return tau_max_; }
  double J(const Point& x) const;
  Matrix2 A(const Point& x) const;
  double f_pullback(const Point& x) const;

 private:
  Matrix2 deformation_gradient(const Point& x) const;

  PerturbationField theta_;
  SourceFn f_;
  double tau_;
  int dimension_;
  double tau_max_;
};

/// Throws SingularTransform when |tau| |D theta| >= 1 (D theta measured on `mesh`).
TransportedCoefficients transported_coefficients(const PerturbationField& theta, const SourceFn& f,
                                                 double tau, const Mesh& mesh);

/// Nodes moved to x + tau theta(x). Throws InvertedElement on a nonpositive measure.
MeshPtr perturb_mesh(const Mesh& mesh, const PerturbationField& theta, double tau);

struct BoundaryCurvature {
  std::map<int, double> curvature;
  /// Nodes whose turning angle exceeds 45 degrees; curvature there is meaningless.
  std::set<int> corners;
};

/// Signed Menger curvature of consecutive boundary triples, positive on convex
/// boundaries. Collinear triples give 0; 1D endpoints give 0.
BoundaryCurvature boundary_curvature(const Mesh& mesh);

/// Per boundary node: half the adjacent facet measure and the averaged outward normal.
struct BoundaryNodeGeometry {
  double measure;
  Point normal;
};
std::map<int, BoundaryNodeGeometry> boundary_node_geometry(const Mesh& mesh);

enum class FieldKind { Solution, Potential, BoundaryData, Derived };

/// Nodal values over a mesh. Potentials may carry kInfiniteSlope.
struct ScalarField {
  MeshPtr mesh;
  std::vector<double> values;
  FieldKind kind = FieldKind::Derived;

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
};

ScalarField interpolate(const MeshPtr& mesh, const SourceFn& fn, FieldKind kind = FieldKind::Derived);

/// d(x) = min over target nodes of |x - x_t|. Throws EmptyTarget.
ScalarField distance_to_nodeset(const MeshPtr& mesh, const std::vector<int>& target);

/// Legacy ASCII VTK with one POINT_DATA scalar per entry of `fields`.
void write_vtk(const std::string& path, const Mesh& mesh,
               const std::vector<std::pair<std::string, std::vector<double>>>& fields);

nlohmann::json mesh_summary(const Mesh& mesh);

}  // namespace deadcore
