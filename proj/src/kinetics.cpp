#include "deadcore/kinetics.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <cstdint>
#include <utility>

#include "deadcore/errors.hpp"

namespace deadcore {

std::string_view to_string(Smoothness smoothness) noexcept {
  switch (smoothness) {
    case Smoothness::TwiceSmooth: return "TwiceSmooth";
    case Smoothness::Lipschitz: return "Lipschitz";
    case Smoothness::SingularAtZero: return "SingularAtZero";
  }
  return "Unknown";
}

Kinetic::Kinetic(std::shared_ptr<const KineticModel> model)
    : model_(std::move(model)),
      smoothness_(model_->smoothness()),
      lipschitz_bound_(model_->lipschitz_bound()),
      kinks_(model_->kinks()),
      params_(model_->params()),
      type_(model_->type()) {}

namespace {

double integrate_adaptive(const auto& f, double a, double b) {
  if (b <= a) return 0.0;
  double error = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 21>::integrate(f, a, b, 20, 1e-13, &error);
}

class LinearModel final : public KineticModel {
 public:
  explicit LinearModel(double slope) : slope_(slope) {}

  double value(double s) const override { return slope_ * s; }
  double derivative(double) const override { return slope_; }
  double antiderivative(double t) const override { return 0.5 * slope_ * t * t; }
  Smoothness smoothness() const override { return Smoothness::TwiceSmooth; }
  std::optional<double> lipschitz_bound() const override { return slope_; }
  std::string type() const override { return "linear"; }
  ParamMap params() const override { return {{"lambda", slope_}}; }

  double slope() const { return slope_; }

 private:
  double slope_;
};

class RootModel final : public KineticModel {
 public:
  RootModel(double lambda, double q) : lambda_(lambda), q_(q) {}

  double value(double s) const override { return lambda_ * std::pow(s, q_); }
  double derivative(double s) const override {
    return s == 0.0 ? kInfiniteSlope : lambda_ * q_ * std::pow(s, q_ - 1.0);
  }
  double antiderivative(double t) const override {
    return lambda_ * std::pow(t, q_ + 1.0) / (q_ + 1.0);
  }
  Smoothness smoothness() const override { return Smoothness::SingularAtZero; }
  std::optional<double> lipschitz_bound() const override { return std::nullopt; }
  std::string type() const override { return "root"; }
  ParamMap params() const override { return {{"lambda", lambda_}, {"q", q_}}; }

  double lambda() const { return lambda_; }
  double q() const { return q_; }

 private:
  double lambda_;
  double q_;
};

class RampModel final : public KineticModel {
 public:
  RampModel(double slope, double knee) : slope_(slope), knee_(knee) {}

  double value(double s) const override { return slope_ * std::max(0.0, s - knee_); }
  double derivative(double s) const override { return s >= knee_ ? slope_ : 0.0; }
  double antiderivative(double t) const override {
    const double excess = std::max(0.0, t - knee_);
    return 0.5 * slope_ * excess * excess;
  }
  Smoothness smoothness() const override { return Smoothness::Lipschitz; }
  std::optional<double> lipschitz_bound() const override { return slope_; }
  std::vector<Kink> kinks() const override { return {{knee_, slope_}}; }
  std::string type() const override { return "ramp"; }
  ParamMap params() const override { return {{"slope", slope_}, {"knee", knee_}}; }

  double slope() const { return slope_; }
  double knee() const { return knee_; }

 private:
  double slope_;
  double knee_;
};

// Each kink k is replaced by jump * q(s - k), q(x) = (x + d)^2 / (4d) on [-d, d],
// the C^1 blend of x_+ over the window.
class MollifiedModel final : public KineticModel {
 public:
  MollifiedModel(Kinetic base, int n) : base_(std::move(base)), n_(n), half_width_(1.0 / n) {}

  double value(double s) const override {
    double result = base_.model().value(s);
    for (const Kink& kink : base_.kinks()) {
      const double x = s - kink.at;
      if (std::abs(x) < half_width_) result += kink.jump * (blend(x) - std::max(0.0, x));
    }
    return result;
  }

  double derivative(double s) const override {
    double result = base_.model().derivative(s);
    for (const Kink& kink : base_.kinks()) {
      const double x = s - kink.at;
      if (std::abs(x) < half_width_) {
        result += kink.jump * ((x + half_width_) / (2.0 * half_width_) - (x >= 0.0 ? 1.0 : 0.0));
      }
    }
    return result;
  }

  double antiderivative(double t) const override {
    double result = base_.model().antiderivative(t);
    const double d = half_width_;
    for (const Kink& kink : base_.kinks()) {
      const double x = t - kink.at;
      if (x <= -d) continue;
      if (x >= d) {
        result += kink.jump * d * d / 6.0;
      } else {
        const double xp = std::max(0.0, x);
        result += kink.jump * ((x + d) * (x + d) * (x + d) / (12.0 * d) - 0.5 * xp * xp);
      }
    }
    return result;
  }

  Smoothness smoothness() const override { return Smoothness::TwiceSmooth; }
  std::optional<double> lipschitz_bound() const override { return base_.lipschitz_bound(); }
  std::string type() const override { return "mollified_" + base_.type(); }
  ParamMap params() const override {
    ParamMap p = base_.params();
    p["mollify_n"] = n_;
    return p;
  }

 private:
  double blend(double x) const { return (x + half_width_) * (x + half_width_) / (4.0 * half_width_); }

  Kinetic base_;
  int n_;
  double half_width_;
};

class TruncatedModel final : public KineticModel {
 public:
  TruncatedModel(Kinetic base, double m) : base_(std::move(base)), m_(m) {
    if (const auto* root = dynamic_cast<const RootModel*>(&base_.model())) {
      root_ = root;
      threshold_ = std::pow(root->lambda() * root->q() / m_, 1.0 / (1.0 - root->q()));
    }
  }

  double value(double s) const override {
    const KineticModel& b = base_.model();
    if (root_ != nullptr) {
      if (s <= threshold_) return m_ * s;
      return m_ * threshold_ + b.value(s) - b.value(threshold_);
    }
    if (const auto* lin = dynamic_cast<const LinearModel*>(&b)) return std::min(m_, lin->slope()) * s;
    if (const auto* ramp = dynamic_cast<const RampModel*>(&b)) {
      return std::min(m_, ramp->slope()) * std::max(0.0, s - ramp->knee());
    }
    return integrate_pieces(s, [&](double x) { return derivative(x); });
  }

  double derivative(double s) const override { return std::min(m_, base_.model().derivative(s)); }

  double antiderivative(double t) const override {
    if (root_ != nullptr) {
      const KineticModel& b = *root_;
      if (t <= threshold_) return 0.5 * m_ * t * t;
      const double s0 = threshold_;
      return 0.5 * m_ * s0 * s0 + (b.antiderivative(t) - b.antiderivative(s0)) +
             (m_ * s0 - b.value(s0)) * (t - s0);
    }
    return integrate_pieces(t, [&](double x) { return value(x); });
  }

  Smoothness smoothness() const override {
    if (base_.smoothness() == Smoothness::TwiceSmooth) {
      const auto bound = base_.lipschitz_bound();
      if (bound && *bound <= m_) return Smoothness::TwiceSmooth;
    }
    return Smoothness::Lipschitz;
  }
  std::optional<double> lipschitz_bound() const override { return m_; }

  std::vector<Kink> kinks() const override {
    std::vector<Kink> result;
    for (const Kink& kink : base_.kinks()) {
      const double right = base_.model().derivative(kink.at);
      const double left = right - kink.jump;
      const double jump = std::min(m_, right) - std::min(m_, left);
      if (jump != 0.0) result.push_back({kink.at, jump});
    }
    return result;
  }

  std::string type() const override { return "truncated_" + base_.type(); }
  ParamMap params() const override {
    ParamMap p = base_.params();
    p["truncate_m"] = m_;
    return p;
  }

 private:
  // Integrates `f` over [0, upper], splitting at the base kinks.
  template <typename F>
  double integrate_pieces(double upper, F f) const {
    double total = 0.0;
    double lower = 0.0;
    for (const Kink& kink : base_.kinks()) {
      if (kink.at <= lower || kink.at >= upper) continue;
      total += integrate_adaptive(f, lower, kink.at);
      lower = kink.at;
    }
    return total + integrate_adaptive(f, lower, upper);
  }

  Kinetic base_;
  double m_;
  const RootModel* root_ = nullptr;
  double threshold_ = 0.0;
};

}  // namespace

Kinetic make_linear_kinetic(double slope) {
  require(slope > 0.0 && std::isfinite(slope), ErrorCode::InvalidParameter,
          "linear kinetic slope must be positive");
  return Kinetic(std::make_shared<LinearModel>(slope));
}

Kinetic make_root_kinetic(double lambda, double q) {
  require(lambda > 0.0 && std::isfinite(lambda), ErrorCode::InvalidParameter,
          "lambda must be positive");
  require(q > 0.0 && q < 1.0, ErrorCode::InvalidParameter, "q must lie in (0,1)");
  return Kinetic(std::make_shared<RootModel>(lambda, q));
}

Kinetic make_lipschitz_ramp(double slope, double knee) {
  require(slope > 0.0 && std::isfinite(slope), ErrorCode::InvalidParameter,
          "ramp slope must be positive");
  require(knee > 0.0 && knee < 1.0, ErrorCode::InvalidParameter, "knee must lie in (0,1)");
  return Kinetic(std::make_shared<RampModel>(slope, knee));
}

MollifiedKinetic mollify(const Kinetic& kin, int n) {
  require(kin.lipschitz_bound().has_value(), ErrorCode::InvalidKinetic,
          "mollify needs a kinetic with finite Lipschitz bound");
  require(n >= 1, ErrorCode::InvalidParameter, "mollify_n must be a positive integer");
  const double half_width = 1.0 / n;
  double previous = 0.0;
  double gap = 0.0;
  for (const Kink& kink : kin.kinks()) {
    require(kink.at - previous >= (previous == 0.0 ? half_width : 2.0 * half_width),
            ErrorCode::InvalidParameter,
            "mollify_n too small: blending windows overlap each other or the origin");
    previous = kink.at;
    gap = std::max(gap, std::abs(kink.jump) * half_width / 4.0);
  }
  return {Kinetic(std::make_shared<MollifiedModel>(kin, n)), gap};
}

Kinetic truncate(const Kinetic& kin, double m) {
  require(m > 0.0 && std::isfinite(m), ErrorCode::InvalidParameter, "truncate_m must be positive");
  return Kinetic(std::make_shared<TruncatedModel>(kin, m));
}

double root_truncation_gap(double lambda, double q, double m) {
  const double threshold = std::min(1.0, std::pow(lambda * q / m, 1.0 / (1.0 - q)));
  return lambda * std::pow(threshold, q) - m * threshold;
}

GrowthFunctions::GrowthFunctions(Kinetic kin, double alpha, PsiEvaluation evaluation)
    : kin_(std::move(kin)), alpha_(alpha) {
  if (evaluation == PsiEvaluation::Auto && alpha_ == 0.0 && kin_.type() == "root") {
    const double lambda = kin_.params().at("lambda");
    const double q = kin_.params().at("q");
    closed_form_ = true;
    coefficient_ = std::sqrt((q + 1.0) / (2.0 * lambda)) * 2.0 / (1.0 - q);
    exponent_ = 0.5 * (1.0 - q);
  }
}

double GrowthFunctions::G(double t) const {
  if (t <= 0.0) return 0.0;
  return std::sqrt(2.0 * (kin_.antiderivative(t) + alpha_ * t));
}

double GrowthFunctions::Psi(double s) const {
  if (s <= 0.0) return 0.0;
  if (closed_form_) return coefficient_ * std::pow(s, exponent_);
  // t = sigma^2 removes the 1/sqrt(t) singularity that alpha > 0 produces.
  static thread_local boost::math::quadrature::tanh_sinh<double> integrator;
  const auto integrand = [this](double sigma) {
    const double g = G(sigma * sigma);
    return g > 0.0 ? 2.0 * sigma / g : 0.0;
  };
  return integrator.integrate(integrand, 0.0, std::sqrt(s), 1e-13);
}

double GrowthFunctions::PsiInverse(double d) const {
  if (d <= 0.0) return 0.0;
  double upper = 1.0;
  for (int i = 0; Psi(upper) < d; ++i) {
    require(i < 200, ErrorCode::InvalidParameter, "PsiInverse argument out of range");
    upper *= 2.0;
  }
  std::uintmax_t max_iter = 200;
  const auto bracket = boost::math::tools::bisect(
      [&](double s) { return Psi(s) - d; }, 0.0, upper,
      boost::math::tools::eps_tolerance<double>(52), max_iter);
  return 0.5 * (bracket.first + bracket.second);
}

GrowthFunctions growth_functions(const Kinetic& kin, double alpha, PsiEvaluation evaluation) {
  require(alpha >= 0.0 && std::isfinite(alpha), ErrorCode::InvalidParameter,
          "alpha must be nonnegative");
  if (alpha == 0.0) {
    // 1/G ~ t^{-gamma/2} near 0 with B(t) ~ t^gamma; integrable iff gamma < 2.
    constexpr double kNear = 1e-9;
    constexpr double kFar = 1e-6;
    const double near = kin.antiderivative(kNear);
    const double far = kin.antiderivative(kFar);
    require(near > 0.0 && far > 0.0, ErrorCode::NonIntegrableGrowth,
            "1/G is not integrable at 0: the kinetic vanishes near 0 and alpha = 0");
    const double gamma = std::log(far / near) / std::log(kFar / kNear);
    require(gamma < 1.99, ErrorCode::NonIntegrableGrowth,
            "1/G is not integrable at 0: the kinetic grows at least linearly and alpha = 0");
  }
  return GrowthFunctions(kin, alpha, evaluation);
}

}  // namespace deadcore
