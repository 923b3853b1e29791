#include "deadcore/experiments.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "deadcore/dead_core.hpp"
#include "deadcore/elliptic.hpp"
#include "deadcore/errors.hpp"
#include "deadcore/oracle_1d.hpp"
#include "deadcore/shape_derivative.hpp"

namespace deadcore {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(ExperimentKind kind) noexcept {
  switch (kind) {
    case ExperimentKind::Solve: return "Solve";
    case ExperimentKind::GateauxCheck: return "GateauxCheck";
    case ExperimentKind::KineticPerturbation: return "KineticPerturbation";
    case ExperimentKind::TruncatedSequence: return "TruncatedSequence";
    case ExperimentKind::DeadCoreAudit: return "DeadCoreAudit";
  }
  return "Solve";
}

namespace {

const std::vector<double> kDefaultTaus{1e-1, 1e-2, 1e-3, 1e-4};
const std::vector<double> kDefaultMs{1, 2, 4, 8, 16, 32, 64, 128, 256};
const std::vector<int> kDefaultNs{4, 8, 16, 32, 64, 128};

[[noreturn]] void invalid(const std::string& field, const std::string& message) {
  throw Error(ErrorCode::ValidationError, field + ": " + message);
}

std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t offset) {
  std::size_t line = 1, column = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return {line, column};
}

void check_keys(const json& object, const std::string& path, const std::set<std::string>& allowed) {
  if (!object.is_object()) invalid(path.empty() ? "config" : path, "must be an object");
  for (const auto& item : object.items()) {
    if (allowed.count(item.key()) == 0) {
      invalid(path.empty() ? item.key() : path + "." + item.key(), "unknown field");
    }
  }
}

std::string field_path(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

double number(const json& object, const std::string& path, const std::string& key) {
  const std::string field = field_path(path, key);
  if (!object.contains(key)) invalid(field, "is required");
  const json& v = object.at(key);
  if (!v.is_number()) invalid(field, "must be a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) invalid(field, "must be finite");
  return x;
}

double number_or(const json& object, const std::string& path, const std::string& key, double fallback) {
  return object.contains(key) ? number(object, path, key) : fallback;
}

std::string text_field(const json& object, const std::string& path, const std::string& key) {
  const std::string field = field_path(path, key);
  if (!object.contains(key)) invalid(field, "is required");
  if (!object.at(key).is_string()) invalid(field, "must be a string");
  return object.at(key).get<std::string>();
}

std::vector<double> number_list(const json& object, const std::string& key) {
  const json& v = object.at(key);
  if (!v.is_array() || v.empty()) invalid(key, "must be a nonempty list of numbers");
  std::vector<double> out;
  for (const json& x : v) {
    if (!x.is_number() || !std::isfinite(x.get<double>())) invalid(key, "must contain only finite numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

DomainSpec parse_domain(const json& j) {
  const std::string path = "domain";
  if (!j.is_object()) invalid(path, "must be an object");
  DomainSpec d;
  d.type = text_field(j, path, "type");
  if (d.type == "slab") {
    check_keys(j, path, {"type", "L", "h"});
    d.size = number(j, path, "L");
    if (d.size <= 0.0) invalid("domain.L", "must be positive");
  } else if (d.type == "disk") {
    check_keys(j, path, {"type", "R", "h"});
    d.size = number(j, path, "R");
    if (d.size <= 0.0) invalid("domain.R", "must be positive");
  } else {
    invalid("domain.type", "must be \"slab\" or \"disk\"");
  }
  d.h = number(j, path, "h");
  if (d.h <= 0.0) invalid("domain.h", "must be positive");
  if (d.type == "slab" && d.h > d.size) invalid("domain.h", "must not exceed L");
  if (d.type == "disk" && d.h >= 0.5 * d.size) invalid("domain.h", "must be below R/2");
  return d;
}

KineticSpec parse_kinetic(const json& j) {
  const std::string path = "kinetic";
  if (!j.is_object()) invalid(path, "must be an object");
  KineticSpec k;
  k.type = text_field(j, path, "type");
  if (k.type == "linear") {
    check_keys(j, path, {"type", "lambda"});
    k.params["lambda"] = number_or(j, path, "lambda", 1.0);
    if (k.params["lambda"] <= 0.0) invalid("kinetic.lambda", "lambda must be positive");
  } else if (k.type == "root") {
    check_keys(j, path, {"type", "lambda", "q"});
    k.params["lambda"] = number_or(j, path, "lambda", 1.0);
    k.params["q"] = number(j, path, "q");
    if (k.params["lambda"] <= 0.0) invalid("kinetic.lambda", "lambda must be positive");
    const double q = k.params["q"];
    if (!(q > 0.0 && q < 1.0)) invalid("kinetic.q", "q must lie in (0,1)");
  } else if (k.type == "ramp") {
    check_keys(j, path, {"type", "slope", "knee"});
    k.params["slope"] = number(j, path, "slope");
    k.params["knee"] = number(j, path, "knee");
    if (k.params["slope"] <= 0.0) invalid("kinetic.slope", "slope must be positive");
    const double knee = k.params["knee"];
    if (!(knee > 0.0 && knee < 1.0)) invalid("kinetic.knee", "knee must lie in (0,1)");
  } else {
    invalid("kinetic.type", "must be \"linear\", \"root\" or \"ramp\"");
  }
  return k;
}

SourceSpec parse_source(const json& j) {
  const std::string path = "f";
  if (!j.is_object()) invalid(path, "must be an object");
  SourceSpec s;
  s.type = text_field(j, path, "type");
  if (s.type == "constant") {
    check_keys(j, path, {"type", "value"});
    s.value = number_or(j, path, "value", 0.0);
  } else if (s.type == "beta_one") {
    check_keys(j, path, {"type"});
  } else if (s.type == "gaussian") {
    check_keys(j, path, {"type", "amplitude", "width"});
    s.amplitude = number(j, path, "amplitude");
    s.width = number_or(j, path, "width", 1.0);
    if (s.width <= 0.0) invalid("f.width", "must be positive");
  } else {
    invalid("f.type", "must be \"constant\", \"beta_one\" or \"gaussian\"");
  }
  return s;
}

ThetaSpec parse_theta(const json& j) {
  const std::string path = "theta";
  if (!j.is_object()) invalid(path, "must be an object");
  ThetaSpec t;
  t.type = text_field(j, path, "type");
  if (t.type == "zero") {
    check_keys(j, path, {"type"});
  } else if (t.type == "dilation" || t.type == "shear") {
    check_keys(j, path, {"type", "a"});
    t.a = number_or(j, path, "a", 1.0);
  } else if (t.type == "sine") {
    check_keys(j, path, {"type", "a", "k"});
    t.a = number_or(j, path, "a", 1.0);
    t.k = number_or(j, path, "k", 1.0);
  } else if (t.type == "bump") {
    check_keys(j, path, {"type", "a", "center", "radius"});
    t.a = number_or(j, path, "a", 1.0);
    t.radius = number_or(j, path, "radius", 1.0);
    if (t.radius <= 0.0) invalid("theta.radius", "must be positive");
    if (j.contains("center")) {
      const json& c = j.at("center");
      if (!c.is_array() || c.size() != 2 || !c[0].is_number() || !c[1].is_number()) {
        invalid("theta.center", "must be a list of two numbers");
      }
      t.center = Point(c[0].get<double>(), c[1].get<double>());
    }
  } else {
    invalid("theta.type", "must be \"zero\", \"dilation\", \"shear\", \"sine\" or \"bump\"");
  }
  return t;
}

ExperimentKind parse_kind(const std::string& name) {
  for (ExperimentKind k : {ExperimentKind::Solve, ExperimentKind::GateauxCheck, ExperimentKind::KineticPerturbation,
                           ExperimentKind::TruncatedSequence, ExperimentKind::DeadCoreAudit}) {
    if (name == to_string(k)) return k;
  }
  invalid("kind", "must be one of Solve, GateauxCheck, KineticPerturbation, TruncatedSequence, DeadCoreAudit");
}

json parse_json(std::string_view text) {
  std::vector<std::set<std::string>> open;
  std::optional<std::string> duplicate;
  const json::parser_callback_t detect = [&](int, json::parse_event_t event, json& parsed) {
    if (event == json::parse_event_t::object_start) {
      open.emplace_back();
    } else if (event == json::parse_event_t::object_end) {
      if (!open.empty()) open.pop_back();
    } else if (event == json::parse_event_t::key && !duplicate && !open.empty()) {
      const auto key = parsed.get<std::string>();
      if (!open.back().insert(key).second) duplicate = key;
    }
    return true;
  };
  json j;
  try {
    j = json::parse(text.begin(), text.end(), detect);
  } catch (const json::parse_error& e) {
    const auto [line, column] = line_column(text, e.byte == 0 ? 0 : e.byte - 1);
    throw Error(ErrorCode::ParseError, fmt::format("line {}, column {}: {}", line, column, e.what()));
  }
  if (duplicate) {
    const std::string quoted = "\"" + *duplicate + "\"";
    const std::size_t first = text.find(quoted);
    const std::size_t second = first == std::string_view::npos ? first : text.find(quoted, first + 1);
    const auto [line, column] = line_column(text, second == std::string_view::npos ? 0 : second);
    throw Error(ErrorCode::ParseError, fmt::format("line {}, column {}: duplicate field \"{}\"", line, column, *duplicate));
  }
  return j;
}

bool sorted_strictly(const std::vector<double>& v, bool increasing) {
  for (std::size_t k = 1; k < v.size(); ++k) {
    if (increasing ? !(v[k] > v[k - 1]) : !(v[k] < v[k - 1])) return false;
  }
  return true;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text) {
  const json j = parse_json(text);
  check_keys(j, "", {"name", "domain", "kinetic", "f", "theta", "kind", "tol", "eps_dc", "tau_list", "m_list",
                     "n_list", "band", "slack", "min_slope", "fit_blowup", "output"});
  ExperimentConfig c;
  c.name = text_field(j, "", "name");
  if (c.name.empty() || c.name.find_first_of("/\\") != std::string::npos) {
    invalid("name", "must be a nonempty string without path separators");
  }
  if (!j.contains("domain")) invalid("domain", "is required");
  c.domain = parse_domain(j.at("domain"));
  if (!j.contains("kinetic")) invalid("kinetic", "is required");
  c.kinetic = parse_kinetic(j.at("kinetic"));
  if (j.contains("f")) c.f = parse_source(j.at("f"));
  if (j.contains("theta")) c.theta = parse_theta(j.at("theta"));
  c.kind = parse_kind(text_field(j, "", "kind"));
  c.tol = number_or(j, "", "tol", 1e-10);
  if (c.tol <= 0.0) invalid("tol", "must be positive");
  c.eps_dc = number_or(j, "", "eps_dc", default_eps_dc(c.tol));
  if (c.eps_dc < 0.0) invalid("eps_dc", "must be nonnegative");

  c.tau_list = j.contains("tau_list") ? number_list(j, "tau_list") : kDefaultTaus;
  for (double t : c.tau_list) {
    if (t <= 0.0) invalid("tau_list", "values must be positive");
  }
  if (!sorted_strictly(c.tau_list, false)) invalid("tau_list", "must be strictly decreasing");
  c.m_list = j.contains("m_list") ? number_list(j, "m_list") : kDefaultMs;
  for (double m : c.m_list) {
    if (m <= 0.0) invalid("m_list", "values must be positive");
  }
  if (!sorted_strictly(c.m_list, true)) invalid("m_list", "must be strictly increasing");
  if (j.contains("n_list")) {
    const std::vector<double> ns = number_list(j, "n_list");
    for (double n : ns) {
      if (n < 1.0 || n != std::floor(n) || n > 1e9) invalid("n_list", "values must be positive integers");
      c.n_list.push_back(static_cast<int>(n));
    }
    if (!sorted_strictly(ns, true)) invalid("n_list", "must be strictly increasing");
  } else {
    c.n_list = kDefaultNs;
  }
  c.band = number_or(j, "", "band", c.domain.type == "disk" ? 0.5 : 1.0);
  if (c.band <= 0.0) invalid("band", "must be positive");
  c.slack = number_or(j, "", "slack", 5.0);
  if (c.slack <= 0.0) invalid("slack", "must be positive");
  if (j.contains("min_slope") && !j.at("min_slope").is_null()) c.min_slope = number(j, "", "min_slope");
  if (j.contains("fit_blowup")) {
    if (!j.at("fit_blowup").is_boolean()) invalid("fit_blowup", "must be true or false");
    c.fit_blowup = j.at("fit_blowup").get<bool>();
  }
  c.output = j.contains("output") ? text_field(j, "", "output") : "out/" + c.name;
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::IoError, "cannot read " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string config_defaults_help() {
  return "Config defaults: f = {\"type\": \"constant\", \"value\": 0}, theta = {\"type\": \"dilation\", \"a\": 1},\n"
         "tol = 1e-10, eps_dc = 10*tol, tau_list = [1e-1, 1e-2, 1e-3, 1e-4], m_list = [1, 2, ..., 256],\n"
         "n_list = [4, 8, ..., 128], band = 1.0 (slab) or 0.5 (disk), slack = 5, fit_blowup = true,\n"
         "min_slope unset, output = out/<name>.";
}

json ExperimentConfig::to_json() const {
  json j;
  j["name"] = name;
  j["domain"] = {{"type", domain.type}, {domain.type == "disk" ? "R" : "L", domain.size}, {"h", domain.h}};
  json k = {{"type", kinetic.type}};
  for (const auto& [key, value] : kinetic.params) k[key] = value;
  j["kinetic"] = k;
  if (f.type == "constant") {
    j["f"] = {{"type", "constant"}, {"value", f.value}};
  } else if (f.type == "gaussian") {
    j["f"] = {{"type", "gaussian"}, {"amplitude", f.amplitude}, {"width", f.width}};
  } else {
    j["f"] = {{"type", f.type}};
  }
  json t = {{"type", theta.type}};
  if (theta.type != "zero") t["a"] = theta.a;
  if (theta.type == "sine") t["k"] = theta.k;
  if (theta.type == "bump") {
    t["center"] = {theta.center.x(), theta.center.y()};
    t["radius"] = theta.radius;
  }
  j["theta"] = t;
  j["kind"] = std::string(to_string(kind));
  j["tol"] = tol;
  j["eps_dc"] = eps_dc;
  j["tau_list"] = tau_list;
  j["m_list"] = m_list;
  j["n_list"] = n_list;
  j["band"] = band;
  j["slack"] = slack;
  j["min_slope"] = min_slope ? json(*min_slope) : json(nullptr);
  j["fit_blowup"] = fit_blowup;
  j["output"] = output;
  return j;
}

MeshPtr build_mesh(const DomainSpec& spec) {
  if (spec.type == "slab") return build_slab_mesh(spec.size, spec.h);
  if (spec.type == "disk") return build_disk_mesh(spec.size, spec.h);
  throw Error(ErrorCode::InvalidParameter, "unknown domain type " + spec.type);
}

Kinetic build_kinetic(const KineticSpec& spec) {
  if (spec.type == "linear") return make_linear_kinetic(spec.params.at("lambda"));
  if (spec.type == "root") return make_root_kinetic(spec.params.at("lambda"), spec.params.at("q"));
  if (spec.type == "ramp") return make_lipschitz_ramp(spec.params.at("slope"), spec.params.at("knee"));
  throw Error(ErrorCode::InvalidParameter, "unknown kinetic type " + spec.type);
}

SourceFn build_source(const SourceSpec& spec, const Kinetic& kin) {
  if (spec.type == "constant") {
    const double c = spec.value;
    return [c](const Point&) { return c; };
  }
  if (spec.type == "beta_one") {
    const double c = kin.value(1.0);
    return [c](const Point&) { return c; };
  }
  if (spec.type == "gaussian") {
    const double a = spec.amplitude, r = spec.width;
    return [a, r](const Point& x) { return a * std::exp(-x.squaredNorm() / (r * r)); };
  }
  throw Error(ErrorCode::InvalidParameter, "unknown source type " + spec.type);
}

PerturbationField build_theta(const ThetaSpec& spec) {
  if (spec.type == "zero") return zero_field();
  if (spec.type == "dilation") return dilation_field(spec.a);
  if (spec.type == "shear") return shear_field(spec.a);
  if (spec.type == "sine") return sine_field(spec.a, spec.k);
  if (spec.type == "bump") return bump_field(spec.a, spec.center, spec.radius);
  throw Error(ErrorCode::InvalidParameter, "unknown theta type " + spec.type);
}

namespace {

class Runner {
 public:
  Runner(const ExperimentConfig& config, const RunOptions& options, fs::path dir)
      : cfg_(config),
        options_(options),
        dir_(std::move(dir)),
        mesh_(build_mesh(config.domain)),
        kin_(build_kinetic(config.kinetic)),
        f_(build_source(config.f, kin_)),
        f_nodal_(interpolate(mesh_, f_)),
        theta_(build_theta(config.theta)) {}

  void execute() {
    log("mesh: {} nodes, {} elements", mesh_->node_count(), mesh_->element_count());
    switch (cfg_.kind) {
      case ExperimentKind::Solve: solve(); break;
      case ExperimentKind::GateauxCheck: gateaux(); break;
      case ExperimentKind::KineticPerturbation: kinetic_perturbation(); break;
      case ExperimentKind::TruncatedSequence: truncated(); break;
      case ExperimentKind::DeadCoreAudit: audit(); break;
    }
  }

  json assertions = json::object();
  json values = json::object();
  json solver = json::object();
  json report = nullptr;
  std::vector<std::string> notes;
  std::vector<std::string> outputs;

  bool all_pass() const {
    for (const auto& item : assertions.items()) {
      if (!item.value().at("pass").get<bool>()) return false;
    }
    return true;
  }

  const MeshPtr& mesh() const { return mesh_; }

 private:
  template <typename... Args>
  void log(fmt::format_string<Args...> format, Args&&... args) const {
    if (options_.verbose) {
      fmt::print(stderr, "[{}] {}\n", cfg_.name, fmt::format(format, std::forward<Args>(args)...));
    }
  }

  void check(const std::string& name, bool pass, double value, double limit) {
    assertions[name] = {{"pass", pass}, {"value", value}, {"limit", limit}};
    log("{} {}: {:.6g} (limit {:.6g})", pass ? "PASS" : "FAIL", name, value, limit);
  }

  void flag(const std::string& name, bool pass) {
    assertions[name] = {{"pass", pass}};
    log("{} {}", pass ? "PASS" : "FAIL", name);
  }

  std::string path(const std::string& file) {
    outputs.push_back(file);
    return (dir_ / file).string();
  }

  double h() const { return mesh_->h_max(); }
  bool slab() const { return cfg_.domain.type == "slab"; }
  bool zero_source() const { return cfg_.f.type == "constant" && cfg_.f.value == 0.0; }
  bool unit_linear() const { return cfg_.kinetic.type == "linear" && cfg_.kinetic.params.at("lambda") == 1.0; }

  // Closed-form slab profile for f = 0, when one applies.
  std::optional<SlabRootProfile> root_oracle() {
    if (!slab() || !zero_source() || cfg_.kinetic.type != "root") return std::nullopt;
    try {
      return slab_exact_root(cfg_.kinetic.params.at("lambda"), cfg_.kinetic.params.at("q"), cfg_.domain.size);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoDeadCore) throw;
      notes.emplace_back("no closed-form dead-core profile: " + std::string(e.what()));
      return std::nullopt;
    }
  }

  template <typename Exact>
  double max_error(const std::vector<double>& values_at_nodes, const Exact& exact) const {
    double err = 0.0;
    for (std::size_t i = 0; i < values_at_nodes.size(); ++i) {
      err = std::max(err, std::abs(values_at_nodes[i] - exact(mesh_->nodes()[i].x())));
    }
    return err;
  }

  SolveResult solve_state() {
    SolveResult w = solve_semilinear(mesh_, kin_, f_nodal_, 1.0, cfg_.tol);
    solver["state"] = w.report.to_json();
    return w;
  }

  void solve() {
    const SolveResult w = solve_state();
    check("converged", w.report.converged, w.report.final_residual, std::max(cfg_.tol, w.report.residual_floor));
    flag("bounds", w.report.bounds_ok);
    const double beta_one = kin_.value(1.0);
    if (std::all_of(f_nodal_.values.begin(), f_nodal_.values.end(), [&](double v) { return v == beta_one; })) {
      double dev = 0.0;
      for (double v : w.field.values) dev = std::max(dev, std::abs(v - 1.0));
      check("constant_solution", dev <= 10.0 * cfg_.tol, dev, 10.0 * cfg_.tol);
    }
    const double limit = 25.0 * h() * h();
    if (slab() && zero_source() && unit_linear()) {
      const SlabLinearProfile exact = slab_exact_linear(cfg_.domain.size);
      check("oracle_error", max_error(w.field.values, [&](double x) { return exact.value(x); }) <= limit,
            max_error(w.field.values, [&](double x) { return exact.value(x); }), limit);
    }
    const DeadCoreRegion region = detect(w.field, cfg_.eps_dc);
    values["dead_core_nodes"] = region.nodes.size();
    values["dead_core_measure"] = region.measure;
    if (const auto exact = root_oracle()) {
      const double err = max_error(w.field.values, [&](double x) { return exact->value(x); });
      check("oracle_error", err <= limit, err, limit);
      values["rho_exact"] = exact->rho;
      if (exact->rho > 0.0 && !region.empty()) {
        double edge = 0.0;
        for (int i : region.nodes) edge = std::max(edge, std::abs(mesh_->node(i).x()));
        values["rho_detected"] = edge;
        check("dead_core_edge", std::abs(edge - exact->rho) <= 2.0 * h(), std::abs(edge - exact->rho), 2.0 * h());
      }
    }
    write_field_csv(path("state.csv"), w.field);
    if (!region.empty()) write_region_csv(path("dead_core_nodes.csv"), region);
    std::vector<double> mask(w.field.size(), 0.0);
    for (int i : region.nodes) mask[static_cast<std::size_t>(i)] = 1.0;
    write_vtk(path("state.vtk"), *mesh_, {{"w", w.field.values}, {"f", f_nodal_.values}, {"dead_core", mask}});
  }

  void record_report(const ConvergenceReport& r) {
    report = r.summary();
    for (const auto& [name, value] : r.flags()) flag(name, value);
    r.write_csv(path("convergence.csv"));
  }

  void gateaux() {
    StudyOptions study{options_.jobs};
    const ConvergenceReport r = gateaux_check(mesh_, kin_, f_, theta_, cfg_.tau_list, cfg_.tol, study);
    record_report(r);
    const double sign = r.value("sign_relation");
    check("sign_relation", sign <= 10.0 * cfg_.tol, sign, 10.0 * cfg_.tol);
    if (cfg_.min_slope) {
      const double slope = r.fitted_slope;
      check("slope", std::isfinite(slope) && slope >= *cfg_.min_slope, slope, *cfg_.min_slope);
    }
    if (cfg_.theta.type == "zero") {
      double worst = 0.0;
      for (const char* column : {"transported_error", "extended_error"}) {
        for (double e : r.column(column)) worst = std::max(worst, e);
      }
      check("zero_direction", worst <= 10.0 * cfg_.tol, worst, 10.0 * cfg_.tol);
    }
    const SolveResult w = solve_state();
    const ShapeDerivativeResult v = solve_v(w, kin_, theta_, {}, cfg_.tol);
    if (slab() && zero_source() && unit_linear() && cfg_.theta.type == "dilation") {
      const double L = cfg_.domain.size;
      const SlabLinearDerivative exact = slab_exact_v_linear(L, -cfg_.theta.a * L * std::tanh(L));
      const double err = max_error(v.v.values, [&](double x) { return exact.value(x); });
      const double limit = 25.0 * h() * h();
      check("v_oracle_error", err <= limit, err, limit);
    }
    write_field_csv(path("v.csv"), v.v);
    write_vtk(path("state.vtk"), *mesh_, {{"w", w.field.values}, {"v", v.v.values}});
  }

  void kinetic_perturbation() {
    StudyOptions study{options_.jobs};
    const KineticPerturbation s =
        kinetic_perturbation_study(mesh_, kin_, f_nodal_, theta_, cfg_.n_list, cfg_.tol, study);
    record_report(s.report);
    solver["state"] = s.w.report.to_json();
    write_field_csv(path("state.csv"), s.w.field);
    write_field_csv(path("v.csv"), s.v.v);
    write_vtk(path("state.vtk"), *mesh_, {{"w", s.w.field.values}, {"v", s.v.v.values}});
  }

  void truncated() {
    StudyOptions study{options_.jobs};
    const TruncatedSequence s =
        truncated_shape_sequence(mesh_, kin_, f_nodal_, theta_, cfg_.m_list, cfg_.tol, cfg_.eps_dc, study);
    record_report(s.report);
    solver["state"] = s.w_limit.report.to_json();
    if (const auto exact = root_oracle(); exact && cfg_.theta.type == "dilation") {
      const double L = cfg_.domain.size;
      const double c = -cfg_.theta.a * L * exact->derivative(L);
      const SlabRootDerivative v = slab_exact_v_root(exact->lambda, exact->q, L, c);
      const double err = max_error(s.v_limit.v.values, [&](double x) { return v.value(x); });
      const double limit = 25.0 * h() * h();
      check("v_limit_oracle_error", err <= limit, err, limit);
      values["v_boundary_exact"] = c;
    }
    write_field_csv(path("state.csv"), s.w_limit.field);
    write_field_csv(path("v_limit.csv"), s.v_limit.v);
    std::vector<std::pair<std::string, std::vector<double>>> fields{{"w", s.w_limit.field.values},
                                                                    {"v_limit", s.v_limit.v.values}};
    for (const SequenceMember& m : s.members) {
      fields.emplace_back(fmt::format("v_m{:g}", m.parameter), m.v.v.values);
    }
    write_vtk(path("state.vtk"), *mesh_, fields);
  }

  void audit() {
    for (double v : f_nodal_.values) {
      require(v == 0.0, ErrorCode::HypothesisViolated, "dead-core proximity bound requires f = 0");
    }
    const SolveResult w = solve_state();
    const DeadCoreRegion region = detect(w.field, cfg_.eps_dc);
    values["dead_core_nodes"] = region.nodes.size();
    values["dead_core_measure"] = region.measure;
    values["band"] = cfg_.band;
    const double alpha = compute_alpha(w, kin_);
    values["alpha"] = alpha;
    const PsiBoundCheck psi = psi_bound_check(w.field, f_nodal_, region, kin_, alpha, cfg_.band);
    const double slack = cfg_.slack * h();
    check("psi_bound", psi.max_violation <= slack, psi.max_violation, slack);
    notes.emplace_back("C1 regularity of the dead-core boundary is assumed, not verified");

    if (const auto exact = root_oracle()) {
      values["rho_exact"] = exact->rho;
      values["measure_exact"] = 2.0 * exact->rho;
    }
    if (cfg_.fit_blowup && kin_.smoothness() == Smoothness::SingularAtZero) {
      const BlowupFit wide = blowup_rate_fit(w.field, region, kin_, cfg_.band);
      const BlowupFit narrow = blowup_rate_fit(w.field, region, kin_, 0.5 * cfg_.band);
      values["blowup_constant"] = std::exp(wide.log_constant);
      values["blowup_samples"] = wide.samples;
      values["blowup_exponent_half_band"] = narrow.exponent;
      check("blowup_exponent", std::abs(wide.exponent + 2.0) <= 0.15, wide.exponent, 0.15);
      check("blowup_r2", wide.r2 >= 0.98, wide.r2, 0.98);
      if (const auto exact = root_oracle()) {
        // beta'(A d^p) = lambda q A^(q-1) d^-2 on the closed-form profile.
        const double c = exact->lambda * exact->q * std::pow(exact->A, exact->q - 1.0);
        const double observed = std::exp(wide.log_constant);
        check("blowup_constant", std::abs(observed / c - 1.0) <= 0.2, std::abs(observed / c - 1.0), 0.2);
        values["blowup_constant_exact"] = c;
      }
      check("blowup_band_stability", std::abs(wide.exponent - narrow.exponent) <= 0.05,
            std::abs(wide.exponent - narrow.exponent), 0.05);
      notes.emplace_back("blow-up fit excludes nodes with d < 3h");
    }
    if (cfg_.domain.type == "disk") {
      const RadialProfile radial = radial_solve(cfg_.domain.size, kin_, 2, cfg_.tol);
      double diff = 0.0;
      for (std::size_t i = 0; i < mesh_->node_count(); ++i) {
        diff = std::max(diff, std::abs(w.field[i] - radial.value_at(mesh_->nodes()[i].norm())));
      }
      values["radial_max_difference"] = diff;
      values["radial_alpha"] = radial.derivative_at_R / cfg_.domain.size;
      if (radial.dead_core_radius) {
        values["radial_dead_core_radius"] = *radial.dead_core_radius;
        if (kin_.smoothness() == Smoothness::SingularAtZero) {
          const BlowupConstants c = radial_blowup_constants(radial, kin_, cfg_.band);
          values["radial_blowup_lower"] = c.lower;
          values["radial_blowup_upper"] = c.upper;
        }
      }
      solver["radial"] = radial.report.to_json();
      write_profile_csv(path("radial_profile.csv"), radial.radii, radial.values);
    }
    write_field_csv(path("state.csv"), w.field);
    write_region_csv(path("dead_core_nodes.csv"), region);
    write_psi_table_csv(path("psi_table.csv"), psi);
    write_region_vtk(path("state.vtk"), w.field, region);
  }

  const ExperimentConfig& cfg_;
  const RunOptions& options_;
  fs::path dir_;
  MeshPtr mesh_;
  Kinetic kin_;
  SourceFn f_;
  ScalarField f_nodal_;
  PerturbationField theta_;
};

void write_summary(const fs::path& dir, const json& summary) {
  std::ofstream out(dir / "summary.json", std::ios::binary);
  require(out.good(), ErrorCode::IoError, "cannot write " + (dir / "summary.json").string());
  out << summary.dump(2) << '\n';
}

}  // namespace

RunOutcome run(const ExperimentConfig& config, const RunOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  RunOutcome outcome;
  outcome.output_dir = options.output.empty() ? config.output : options.output;
  const fs::path dir(outcome.output_dir);
  json summary;
  summary["name"] = config.name;
  summary["kind"] = std::string(to_string(config.kind));
  summary["inputs"] = config.to_json();
  summary["defaults"] = config_defaults_help();
  try {
    fs::create_directories(dir);
  } catch (const fs::filesystem_error& e) {
    outcome.exit_code = 1;
    summary["status"] = "error";
    summary["reason"] = std::string("cannot create output directory: ") + e.what();
    outcome.summary = summary;
    return outcome;
  }
  try {
    Runner runner(config, options, dir);
    summary["mesh"] = mesh_summary(*runner.mesh());
    runner.execute();
    const bool pass = runner.all_pass();
    summary["assertions"] = runner.assertions;
    summary["values"] = runner.values;
    summary["solver"] = runner.solver;
    summary["report"] = runner.report;
    summary["notes"] = runner.notes;
    summary["outputs"] = runner.outputs;
    summary["status"] = pass ? "pass" : "fail";
    outcome.exit_code = pass ? 0 : 2;
  } catch (const Error& e) {
    summary["status"] = "error";
    summary["error_code"] = std::string(to_string(e.code()));
    summary["reason"] = e.what();
    outcome.exit_code = 1;
  } catch (const std::exception& e) {
    summary["status"] = "error";
    summary["reason"] = e.what();
    outcome.exit_code = 1;
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  summary["timings"] = {{"total_seconds", seconds}};
  summary["exit_code"] = outcome.exit_code;
  try {
    write_summary(dir, summary);
  } catch (const Error& e) {
    summary["reason"] = e.what();
    outcome.exit_code = 1;
  }
  outcome.summary = summary;
  return outcome;
}

}  // namespace deadcore
