#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "deadcore/geometry.hpp"
#include "deadcore/kinetics.hpp"

namespace deadcore {

enum class ExperimentKind { Solve, GateauxCheck, KineticPerturbation, TruncatedSequence, DeadCoreAudit };

std::string_view to_string(ExperimentKind kind) noexcept;

struct DomainSpec {
  std::string type;  // "slab" or "disk"
  /// Half-width L of the slab or radius R of the disk.
  double size = 0.0;
  double h = 0.0;
};

struct KineticSpec {
  std::string type;  // "linear", "root" or "ramp"
  ParamMap params;
};

struct SourceSpec {
  std::string type = "constant";  // "constant", "beta_one" or "gaussian"
  double value = 0.0;
  double amplitude = 0.0;
  double width = 1.0;
};

struct ThetaSpec {
  std::string type = "dilation";  // "zero", "dilation", "shear", "sine" or "bump"
  double a = 1.0;
  double k = 1.0;
  Point center = Point::Zero();
  double radius = 1.0;
};

struct ExperimentConfig {
  std::string name;
  DomainSpec domain;
  KineticSpec kinetic;
  SourceSpec f;
  ThetaSpec theta;
  ExperimentKind kind = ExperimentKind::Solve;
  double tol = 1e-10;
  double eps_dc = 1e-9;
  std::vector<double> tau_list;
  std::vector<double> m_list;
  std::vector<int> n_list;
  double band = 1.0;
  double slack = 5.0;
  /// Gateaux slope assertion, off unless given.
  std::optional<double> min_slope;
  bool fit_blowup = true;
  std::string output;

  /// Every field, defaults included.
  nlohmann::json to_json() const;
};

/// Throws ParseError (with line and column) on malformed JSON or duplicate keys
/// and ValidationError naming the offending field.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);

/// Human-readable list of defaults for --help.
std::string config_defaults_help();

MeshPtr build_mesh(const DomainSpec& spec);
Kinetic build_kinetic(const KineticSpec& spec);
SourceFn build_source(const SourceSpec& spec, const Kinetic& kin);
PerturbationField build_theta(const ThetaSpec& spec);

struct RunOptions {
  /// Replaces config.output when nonempty.
  std::string output;
  /// Worker threads for sequence members.
  int jobs = 1;
  bool verbose = false;
};

struct RunOutcome {
  /// 0 all assertions pass, 2 an assertion failed, 1 error.
  int exit_code = 1;
  nlohmann::json summary;
  std::string output_dir;
};

/// Runs the experiment and writes summary.json, CSV tables and VTK fields to the
/// output directory. Errors are caught and recorded in summary.json.
RunOutcome run(const ExperimentConfig& config, const RunOptions& options = {});

}  // namespace deadcore
