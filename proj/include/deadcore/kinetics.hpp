#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace deadcore {

/// Sentinel for an unbounded slope, e.g. the root kinetic at 0. Kinetics never
/// clamp it; consumers that need a finite number go through capped_slope().
inline constexpr double kInfiniteSlope = std::numeric_limits<double>::infinity();

inline bool is_infinite_slope(double slope) noexcept { return std::isinf(slope) && slope > 0.0; }

inline double capped_slope(double slope, double cap) noexcept { return slope < cap ? slope : cap; }

enum class Smoothness { TwiceSmooth, Lipschitz, SingularAtZero };

std::string_view to_string(Smoothness smoothness) noexcept;

/// A point of the s >= 0 branch where the derivative jumps by `jump`
/// (right derivative minus left derivative).
struct Kink {
  double at;
  double jump;
};

using ParamMap = std::map<std::string, double>;

/// The s >= 0 branch of a kinetic. Kinetic supplies the odd extension.
class KineticModel {
 public:
  virtual ~KineticModel() = default;

  virtual double value(double s) const = 0;
  /// Right derivative; may return kInfiniteSlope.
  virtual double derivative(double s) const = 0;
  virtual double antiderivative(double t) const = 0;

  virtual Smoothness smoothness() const = 0;
  virtual std::optional<double> lipschitz_bound() const = 0;
  virtual std::vector<Kink> kinks() const { return {}; }
  virtual std::string type() const = 0;
  virtual ParamMap params() const = 0;
};

/// Nondecreasing reaction rate beta with beta(0) = 0, defined on the real line
/// by odd extension. Immutable and cheap to copy.
class Kinetic {
 public:
  explicit Kinetic(std::shared_ptr<const KineticModel> model);

  double value(double s) const { return s >= 0.0 ? model_->value(s) : -model_->value(-s); }
  double derivative(double s) const { return model_->derivative(std::abs(s)); }
  double antiderivative(double t) const { return model_->antiderivative(std::abs(t)); }

  Smoothness smoothness() const noexcept { return smoothness_; }
  std::optional<double> lipschitz_bound() const noexcept { return lipschitz_bound_; }
  std::span<const Kink> kinks() const noexcept { return kinks_; }
  const ParamMap& params() const noexcept { return params_; }
  const std::string& type() const noexcept { return type_; }

  const KineticModel& model() const noexcept { return *model_; }

 private:
  std::shared_ptr<const KineticModel> model_;
  Smoothness smoothness_;
  std::optional<double> lipschitz_bound_;
  std::vector<Kink> kinks_;
  ParamMap params_;
  std::string type_;
};

/// beta(s) = slope * s.
Kinetic make_linear_kinetic(double slope);

/// beta(s) = lambda |s|^{q-1} s with 0 < q < 1. Derivative is infinite at 0.
Kinetic make_root_kinetic(double lambda, double q);

/// beta(s) = slope * max(0, s - knee): Lipschitz, derivative discontinuous at the knee.
Kinetic make_lipschitz_ramp(double slope, double knee);

struct MollifiedKinetic {
  Kinetic kinetic;
  /// sup |beta_n - beta| over the real line, in closed form.
  double gap;
};

/// Replaces every kink by a quadratic blend over [k - 1/n, k + 1/n]. The result
/// has a Lipschitz derivative and differs from `kin` by |jump|/(4n) at each kink.
/// Requires a finite Lipschitz bound and 1/n no larger than the kink spacing.
MollifiedKinetic mollify(const Kinetic& kin, int n);

/// beta_m with beta_m'(s) = min(m, beta'(s)) and beta_m(0) = 0.
Kinetic truncate(const Kinetic& kin, double m);

/// sup over [0, 1] of |truncate(root(lambda, q), m) - root(lambda, q)|, attained
/// where beta' = m; equals 1/(4m) for lambda = 1, q = 1/2.
double root_truncation_gap(double lambda, double q, double m);

enum class PsiEvaluation { Auto, Quadrature };

/// G(t) = sqrt(2 (B(t) + alpha t)) and Psi(s) = int_0^s dt / G(t), with Psi^{-1}
/// by monotone bisection. Defined for arguments >= 0.
class GrowthFunctions {
 public:
  GrowthFunctions(Kinetic kin, double alpha, PsiEvaluation evaluation);

  double alpha() const noexcept { return alpha_; }
  bool closed_form() const noexcept { return closed_form_; }

  double G(double t) const;
  double Psi(double s) const;
  double PsiInverse(double d) const;

 private:
  Kinetic kin_;
  double alpha_;
  bool closed_form_ = false;
  // Closed form Psi(s) = coefficient_ * s^exponent_ (root kinetic, alpha = 0).
  double coefficient_ = 0.0;
  double exponent_ = 0.0;
};

/// Throws NonIntegrableGrowth when 1/G is not integrable at 0+.
GrowthFunctions growth_functions(const Kinetic& kin, double alpha,
                                 PsiEvaluation evaluation = PsiEvaluation::Auto);

}  // namespace deadcore
