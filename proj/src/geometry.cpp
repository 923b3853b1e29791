#include "deadcore/geometry.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <utility>

#include "deadcore/errors.hpp"

namespace deadcore {

namespace {

double cross(const Point& a, const Point& b) { return a.x() * b.y() - a.y() * b.x(); }

std::array<int, 2> sorted_pair(int a, int b) { return a < b ? std::array{a, b} : std::array{b, a}; }

double spectral_norm(const Matrix2& m, int dimension) {
  if (dimension == 1) return std::abs(m(0, 0));
  return Eigen::JacobiSVD<Matrix2>(m).singularValues()(0);
}

}  // namespace

Mesh::Mesh(int dimension, std::vector<Point> nodes, std::vector<std::array<int, 3>> elements)
    : dimension_(dimension), nodes_(std::move(nodes)), elements_(std::move(elements)) {
  require(dimension_ == 1 || dimension_ == 2, ErrorCode::InvalidParameter,
          "mesh dimension must be 1 or 2");
  const int n = static_cast<int>(nodes_.size());
  measures_.reserve(elements_.size());
  lumped_mass_.assign(nodes_.size(), 0.0);
  for (std::size_t e = 0; e < elements_.size(); ++e) {
    const auto& el = elements_[e];
    for (int k = 0; k < dimension_ + 1; ++k) {
      require(el[k] >= 0 && el[k] < n, ErrorCode::InvalidParameter,
              fmt::format("element {} references node {} out of range", e, el[k]));
    }
    double measure = 0.0;
    if (dimension_ == 1) {
      measure = node(el[1]).x() - node(el[0]).x();
    } else {
      measure = 0.5 * cross(node(el[1]) - node(el[0]), node(el[2]) - node(el[0]));
    }
    require(measure > 0.0, ErrorCode::InvertedElement,
            fmt::format("element {} has nonpositive measure {:.6g}", e, measure));
    measures_.push_back(measure);
    for (int k = 0; k < dimension_ + 1; ++k) {
      lumped_mass_[static_cast<std::size_t>(el[k])] += measure / (dimension_ + 1);
    }
  }

  on_boundary_.assign(nodes_.size(), 0);
  if (dimension_ == 1) {
    std::vector<int> count(nodes_.size(), 0);
    for (const auto& el : elements_) {
      ++count[static_cast<std::size_t>(el[0])];
      ++count[static_cast<std::size_t>(el[1])];
    }
    for (const auto& el : elements_) {
      if (count[static_cast<std::size_t>(el[0])] == 1) {
        facets_.push_back({{el[0], -1}, Point(-1.0, 0.0), 1.0});
      }
      if (count[static_cast<std::size_t>(el[1])] == 1) {
        facets_.push_back({{el[1], -1}, Point(1.0, 0.0), 1.0});
      }
    }
  } else {
    // Directed edges of positively oriented triangles keep the interior on the left.
    std::map<std::array<int, 2>, std::vector<std::array<int, 2>>> edge_use;
    for (const auto& el : elements_) {
      for (int k = 0; k < 3; ++k) {
        const int a = el[k];
        const int b = el[(k + 1) % 3];
        edge_use[sorted_pair(a, b)].push_back({a, b});
      }
    }
    for (const auto& [key, uses] : edge_use) {
      require(uses.size() <= 2, ErrorCode::InvalidParameter,
              fmt::format("edge ({}, {}) is shared by more than two elements", key[0], key[1]));
      if (uses.size() == 1) {
        const auto [a, b] = uses.front();
        const Point t = node(b) - node(a);
        const double length = t.norm();
        facets_.push_back({{a, b}, Point(t.y(), -t.x()) / length, length});
      }
    }
  }
  for (const auto& facet : facets_) {
    for (int v : facet.nodes) {
      if (v >= 0) on_boundary_[static_cast<std::size_t>(v)] = 1;
    }
  }
  for (int i = 0; i < n; ++i) {
    if (on_boundary_[static_cast<std::size_t>(i)] != 0) boundary_nodes_.push_back(i);
  }
}

std::vector<std::array<int, 2>> Mesh::edges() const {
  std::set<std::array<int, 2>> unique;
  for (const auto& el : elements_) {
    if (dimension_ == 1) {
      unique.insert(sorted_pair(el[0], el[1]));
    } else {
      for (int k = 0; k < 3; ++k) unique.insert(sorted_pair(el[k], el[(k + 1) % 3]));
    }
  }
  return {unique.begin(), unique.end()};
}

std::vector<std::vector<int>> Mesh::boundary_loops() const {
  std::vector<std::vector<int>> loops;
  if (dimension_ != 2) return loops;
  std::map<int, int> next;
  for (const auto& facet : facets_) next[facet.nodes[0]] = facet.nodes[1];
  std::set<int> visited;
  for (const auto& [start, unused] : next) {
    if (visited.count(start) != 0) continue;
    std::vector<int> loop;
    int current = start;
    while (visited.insert(current).second) {
      loop.push_back(current);
      current = next.at(current);
    }
    loops.push_back(std::move(loop));
  }
  return loops;
}

Point Mesh::barycenter(std::size_t element) const {
  const auto& el = elements_[element];
  Point sum = Point::Zero();
  for (int k = 0; k < dimension_ + 1; ++k) sum += node(el[k]);
  return sum / (dimension_ + 1);
}

double Mesh::total_measure() const {
  double total = 0.0;
  for (double m : measures_) total += m;
  return total;
}

double Mesh::h_min() const {
  double result = std::numeric_limits<double>::infinity();
  for (const auto& e : edges()) result = std::min(result, (node(e[0]) - node(e[1])).norm());
  return result;
}

double Mesh::h_max() const {
  double result = 0.0;
  for (const auto& e : edges()) result = std::max(result, (node(e[0]) - node(e[1])).norm());
  return result;
}

MeshPtr build_slab_mesh(double L, double h) {
  require(L > 0.0 && std::isfinite(L), ErrorCode::InvalidParameter, "L must be positive");
  require(h > 0.0 && h < L, ErrorCode::InvalidParameter, "h must lie in (0, L)");
  const int segments = static_cast<int>(std::ceil(2.0 * L / h - 1e-9));
  std::vector<Point> nodes;
  nodes.reserve(static_cast<std::size_t>(segments) + 1);
  for (int i = 0; i <= segments; ++i) {
    nodes.emplace_back(-L + 2.0 * L * i / segments, 0.0);
  }
  nodes.back().x() = L;
  std::vector<std::array<int, 3>> elements;
  elements.reserve(static_cast<std::size_t>(segments));
  for (int i = 0; i < segments; ++i) elements.push_back({i, i + 1, -1});
  return std::make_shared<const Mesh>(1, std::move(nodes), std::move(elements));
}

namespace {

// Angle at vertex c of triangle (a, b, c), i.e. the angle opposite edge ab.
double opposite_angle(const Point& a, const Point& b, const Point& c) {
  const Point u = a - c;
  const Point v = b - c;
  return std::atan2(std::abs(cross(u, v)), u.dot(v));
}

// Lawson flips until every interior edge is locally Delaunay.
void make_delaunay(const std::vector<Point>& nodes, std::vector<std::array<int, 3>>& triangles) {
  constexpr double kSlack = 1e-10;
  for (int pass = 0; pass < 200; ++pass) {
    std::map<std::array<int, 2>, std::vector<std::pair<int, int>>> edge_map;
    for (int t = 0; t < static_cast<int>(triangles.size()); ++t) {
      for (int k = 0; k < 3; ++k) {
        const auto& tri = triangles[static_cast<std::size_t>(t)];
        edge_map[sorted_pair(tri[k], tri[(k + 1) % 3])].emplace_back(t, k);
      }
    }
    std::vector<char> touched(triangles.size(), 0);
    int flips = 0;
    for (const auto& [edge, uses] : edge_map) {
      if (uses.size() != 2) continue;
      const auto [t1, k1] = uses[0];
      const auto [t2, k2] = uses[1];
      if (touched[static_cast<std::size_t>(t1)] || touched[static_cast<std::size_t>(t2)]) continue;
      const auto tri1 = triangles[static_cast<std::size_t>(t1)];
      const auto tri2 = triangles[static_cast<std::size_t>(t2)];
      const int a = tri1[k1];
      const int b = tri1[(k1 + 1) % 3];
      const int c = tri1[(k1 + 2) % 3];
      const int d = tri2[(k2 + 2) % 3];
      const double sum = opposite_angle(nodes[a], nodes[b], nodes[c]) +
                         opposite_angle(nodes[a], nodes[b], nodes[d]);
      if (sum <= std::numbers::pi + kSlack) continue;
      triangles[static_cast<std::size_t>(t1)] = {a, d, c};
      triangles[static_cast<std::size_t>(t2)] = {d, b, c};
      touched[static_cast<std::size_t>(t1)] = touched[static_cast<std::size_t>(t2)] = 1;
      ++flips;
    }
    if (flips == 0) return;
  }
}

}  // namespace

MeshPtr build_disk_mesh(double R, double h) {
  require(R > 0.0 && std::isfinite(R), ErrorCode::InvalidParameter, "R must be positive");
  require(h > 0.0 && h < R / 2.0, ErrorCode::InvalidParameter, "h must lie in (0, R/2)");
  const int rings = static_cast<int>(std::ceil(1.5 * R / h));
  std::vector<Point> nodes{Point::Zero()};
  std::vector<int> ring_start{0};
  for (int k = 1; k <= rings; ++k) {
    ring_start.push_back(static_cast<int>(nodes.size()));
    const double r = k == rings ? R : R * k / rings;
    for (int i = 0; i < 6 * k; ++i) {
      const double phi = 2.0 * std::numbers::pi * i / (6 * k);
      nodes.emplace_back(r * std::cos(phi), r * std::sin(phi));
    }
  }
  std::vector<std::array<int, 3>> triangles;
  for (int i = 0; i < 6; ++i) triangles.push_back({0, 1 + i, 1 + (i + 1) % 6});
  for (int k = 1; k < rings; ++k) {
    const int n = 6 * k;
    const int m = 6 * (k + 1);
    const int inner = ring_start[static_cast<std::size_t>(k)];
    const int outer = ring_start[static_cast<std::size_t>(k) + 1];
    int i = 0;
    int j = 0;
    while (i < n || j < m) {
      // Advance along whichever ring has the smaller next angle, compared exactly.
      const bool step_outer = j < m && (i == n || static_cast<long>(j + 1) * n <= static_cast<long>(i + 1) * m);
      if (step_outer) {
        triangles.push_back({inner + i % n, outer + j, outer + (j + 1) % m});
        ++j;
      } else {
        triangles.push_back({inner + i % n, outer + j % m, inner + (i + 1) % n});
        ++i;
      }
    }
  }
  make_delaunay(nodes, triangles);
  return std::make_shared<const Mesh>(2, std::move(nodes), std::move(triangles));
}

MeshPtr build_rectangle_mesh(double x0, double x1, double y0, double y1, double h) {
  require(x1 > x0 && y1 > y0, ErrorCode::InvalidParameter, "rectangle must have positive extent");
  require(h > 0.0 && h < std::min(x1 - x0, y1 - y0), ErrorCode::InvalidParameter,
          "h must be smaller than the rectangle sides");
  const double cell = h / std::sqrt(2.0);
  const int nx = static_cast<int>(std::ceil((x1 - x0) / cell - 1e-9));
  const int ny = static_cast<int>(std::ceil((y1 - y0) / cell - 1e-9));
  std::vector<Point> nodes;
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i <= nx; ++i) {
      nodes.emplace_back(i == nx ? x1 : x0 + (x1 - x0) * i / nx, j == ny ? y1 : y0 + (y1 - y0) * j / ny);
    }
  }
  std::vector<std::array<int, 3>> triangles;
  const auto id = [nx](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      triangles.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      triangles.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  return std::make_shared<const Mesh>(2, std::move(nodes), std::move(triangles));
}

PerturbationField::PerturbationField(std::string name, ValueFn value, JacobianFn jacobian,
                                     std::optional<double> jacobian_bound, nlohmann::json params)
    : name_(std::move(name)),
      value_(std::move(value)),
      jacobian_(std::move(jacobian)),
      jacobian_bound_(jacobian_bound),
      params_(std::move(params)) {}

SupNorms PerturbationField::sup_norms(const Mesh& mesh) const {
  SupNorms norms{0.0, 0.0};
  const auto sample = [&](const Point& x) {
    norms.theta = std::max(norms.theta, value(x).norm());
    norms.jacobian = std::max(norms.jacobian, spectral_norm(jacobian(x), mesh.dimension()));
  };
  for (const Point& x : mesh.nodes()) sample(x);
  for (std::size_t e = 0; e < mesh.element_count(); ++e) sample(mesh.barycenter(e));
  return norms;
}

double PerturbationField::jacobian_sup(const Mesh& mesh) const {
  if (jacobian_bound_) return *jacobian_bound_;
  return sup_norms(mesh).jacobian;
}

PerturbationField zero_field() {
  return PerturbationField(
      "zero", [](const Point&) { return Point(Point::Zero()); },
      [](const Point&) { return Matrix2(Matrix2::Zero()); }, 0.0);
}

PerturbationField dilation_field(double a) {
  return PerturbationField(
      "dilation", [a](const Point& x) { return Point(a * x); },
      [a](const Point&) { return Matrix2(a * Matrix2::Identity()); }, std::abs(a), {{"a", a}});
}

PerturbationField shear_field(double a) {
  return PerturbationField(
      "shear", [a](const Point& x) { return Point(a * x.x(), 0.0); },
      [a](const Point&) {
        Matrix2 m = Matrix2::Zero();
        m(0, 0) = a;
        return m;
      },
      std::abs(a), {{"a", a}});
}

PerturbationField sine_field(double a, double k) {
  return PerturbationField(
      "sine", [a, k](const Point& x) { return Point(a * std::sin(k * x.x()), a * std::sin(k * x.y())); },
      [a, k](const Point& x) {
        Matrix2 m = Matrix2::Zero();
        m(0, 0) = a * k * std::cos(k * x.x());
        m(1, 1) = a * k * std::cos(k * x.y());
        return m;
      },
      std::abs(a * k), {{"a", a}, {"k", k}});
}

PerturbationField bump_field(double a, const Point& center, double radius) {
  require(radius > 0.0, ErrorCode::InvalidParameter, "bump radius must be positive");
  return PerturbationField(
      "bump",
      [a, center, radius](const Point& x) {
        const Point y = x - center;
        return Point(a * std::exp(-y.squaredNorm() / (radius * radius)) * y);
      },
      [a, center, radius](const Point& x) {
        const Point y = x - center;
        const double r2 = radius * radius;
        return Matrix2(a * std::exp(-y.squaredNorm() / r2) *
                       (Matrix2::Identity() - 2.0 * y * y.transpose() / r2));
      },
      std::abs(a), {{"a", a}, {"center", {center.x(), center.y()}}, {"radius", radius}});
}

TransportedCoefficients::TransportedCoefficients(PerturbationField theta, SourceFn f, double tau,
                                                 int dimension, double tau_max)
    : theta_(std::move(theta)), f_(std::move(f)), tau_(tau), dimension_(dimension), tau_max_(tau_max) {}

Matrix2 TransportedCoefficients::deformation_gradient(const Point& x) const {
  Matrix2 F = Matrix2::Identity() + tau_ * theta_.jacobian(x);
  if (dimension_ == 1) {
    F(0, 1) = F(1, 0) = 0.0;
    F(1, 1) = 1.0;
  }
  return F;
}

double TransportedCoefficients::J(const Point& x) const {
  if (tau_ == 0.0) return 1.0;
  const double det = deformation_gradient(x).determinant();
  require(det > 0.0, ErrorCode::SingularTransform,
          fmt::format("I + tau D theta is singular at ({:.6g}, {:.6g})", x.x(), x.y()));
  return det;
}

Matrix2 TransportedCoefficients::A(const Point& x) const {
  if (tau_ == 0.0) return Matrix2::Identity();
  const Matrix2 F = deformation_gradient(x);
  const double det = F.determinant();
  require(det > 0.0, ErrorCode::SingularTransform,
          fmt::format("I + tau D theta is singular at ({:.6g}, {:.6g})", x.x(), x.y()));
  const Matrix2 G = F.inverse();
  Matrix2 A = det * G * G.transpose();
  A(1, 0) = A(0, 1);
  return A;
}

double TransportedCoefficients::f_pullback(const Point& x) const {
  if (tau_ == 0.0) return f_(x);
  Point y = x + tau_ * theta_.value(x);
  if (dimension_ == 1) y.y() = 0.0;
  return f_(y);
}

TransportedCoefficients transported_coefficients(const PerturbationField& theta, const SourceFn& f,
                                                 double tau, const Mesh& mesh) {
  const double bound = theta.jacobian_sup(mesh);
  require(std::abs(tau) * bound < 1.0, ErrorCode::SingularTransform,
          fmt::format("|tau| |D theta| = {:.6g} >= 1", std::abs(tau) * bound));
  const double tau_max = bound > 0.0 ? 0.5 / bound : std::numeric_limits<double>::infinity();
  return TransportedCoefficients(theta, f, tau, mesh.dimension(), tau_max);
}

MeshPtr perturb_mesh(const Mesh& mesh, const PerturbationField& theta, double tau) {
  std::vector<Point> nodes = mesh.nodes();
  if (tau != 0.0) {
    for (Point& x : nodes) {
      x += tau * theta.value(x);
      if (mesh.dimension() == 1) x.y() = 0.0;
    }
  }
  return std::make_shared<const Mesh>(mesh.dimension(), std::move(nodes), mesh.elements());
}

BoundaryCurvature boundary_curvature(const Mesh& mesh) {
  BoundaryCurvature result;
  if (mesh.dimension() == 1) {
    for (int b : mesh.boundary_nodes()) result.curvature[b] = 0.0;
    return result;
  }
  for (const auto& loop : mesh.boundary_loops()) {
    const std::size_t n = loop.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Point& prev = mesh.node(loop[(i + n - 1) % n]);
      const Point& here = mesh.node(loop[i]);
      const Point& next = mesh.node(loop[(i + 1) % n]);
      const Point a = here - prev;
      const Point b = next - here;
      const double c = cross(a, b);
      const double scale = a.norm() * b.norm();
      double kappa = 0.0;
      if (std::abs(c) > 1e-14 * scale) kappa = 2.0 * c / (scale * (next - prev).norm());
      result.curvature[loop[i]] = kappa;
      if (std::abs(std::atan2(c, a.dot(b))) > std::numbers::pi / 4.0) result.corners.insert(loop[i]);
    }
  }
  return result;
}

std::map<int, BoundaryNodeGeometry> boundary_node_geometry(const Mesh& mesh) {
  std::map<int, BoundaryNodeGeometry> result;
  const double share = mesh.dimension() == 1 ? 1.0 : 0.5;
  for (const auto& facet : mesh.boundary_facets()) {
    for (int v : facet.nodes) {
      if (v < 0) continue;
      auto& entry = result.try_emplace(v, BoundaryNodeGeometry{0.0, Point::Zero()}).first->second;
      entry.measure += share * facet.measure;
      entry.normal += share * facet.measure * facet.normal;
    }
  }
  for (auto& [node, geometry] : result) geometry.normal.normalize();
  return result;
}

ScalarField interpolate(const MeshPtr& mesh, const SourceFn& fn, FieldKind kind) {
  ScalarField field{mesh, {}, kind};
  field.values.reserve(mesh->node_count());
  for (const Point& x : mesh->nodes()) field.values.push_back(fn(x));
  return field;
}

ScalarField distance_to_nodeset(const MeshPtr& mesh, const std::vector<int>& target) {
  require(!target.empty(), ErrorCode::EmptyTarget, "distance target set is empty");
  const int n = static_cast<int>(mesh->node_count());
  std::vector<char> in_target(mesh->node_count(), 0);
  for (int t : target) {
    require(t >= 0 && t < n, ErrorCode::InvalidParameter, fmt::format("target node {} out of range", t));
    in_target[static_cast<std::size_t>(t)] = 1;
  }
  ScalarField d{mesh, std::vector<double>(mesh->node_count(), 0.0), FieldKind::Derived};
  for (int i = 0; i < n; ++i) {
    if (in_target[static_cast<std::size_t>(i)] != 0) continue;
    double best = std::numeric_limits<double>::infinity();
    for (int t : target) best = std::min(best, (mesh->node(i) - mesh->node(t)).squaredNorm());
    d.values[static_cast<std::size_t>(i)] = std::sqrt(best);
  }
  return d;
}

void write_vtk(const std::string& path, const Mesh& mesh,
               const std::vector<std::pair<std::string, std::vector<double>>>& fields) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::IoError, "cannot open " + path);
  const int per = mesh.vertices_per_element();
  out << "# vtk DataFile Version 3.0\ndeadcore field\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << fmt::format("POINTS {} double\n", mesh.node_count());
  for (const Point& x : mesh.nodes()) out << fmt::format("{:.17g} {:.17g} 0\n", x.x(), x.y());
  out << fmt::format("CELLS {} {}\n", mesh.element_count(), mesh.element_count() * (per + 1));
  for (const auto& el : mesh.elements()) {
    out << per;
    for (int k = 0; k < per; ++k) out << ' ' << el[k];
    out << '\n';
  }
  out << fmt::format("CELL_TYPES {}\n", mesh.element_count());
  for (std::size_t e = 0; e < mesh.element_count(); ++e) out << (per == 2 ? "3\n" : "5\n");
  if (!fields.empty()) out << fmt::format("POINT_DATA {}\n", mesh.node_count());
  for (const auto& [name, values] : fields) {
    require(values.size() == mesh.node_count(), ErrorCode::InvalidParameter,
            "field " + name + " does not match the node count");
    out << fmt::format("SCALARS {} double 1\nLOOKUP_TABLE default\n", name);
    for (double v : values) out << fmt::format("{:.17g}\n", v);
  }
  require(out.good(), ErrorCode::IoError, "failed writing " + path);
}

nlohmann::json mesh_summary(const Mesh& mesh) {
  return {{"dimension", mesh.dimension()},
          {"nodes", mesh.node_count()},
          {"elements", mesh.element_count()},
          {"boundary_nodes", mesh.boundary_nodes().size()},
          {"h_min", mesh.h_min()},
          {"h_max", mesh.h_max()},
          {"area", mesh.total_measure()}};
}

}  // namespace deadcore
