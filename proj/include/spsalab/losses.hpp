#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

#include "spsalab/core.hpp"

namespace spsalab {

/// L(t) = |Bt|^2 + 0.1 sum (Bt)_i^3 + 0.01 sum (Bt)_i^4 with
/// B = (1/p) * upper-triangular ones. Minimum 0 at the origin.
struct SkewedQuartic {
  std::size_t p;
};

/// L(t) = |t|^2 + sum exp(t_i / p). Separable, so all cross third
/// derivatives vanish.
struct ExpNorm {
  std::size_t p;
};

/// Ackley function translated so that its global minimum sits at `shift`.
struct ShiftedAckley {
  std::size_t p;
  double a = 20.0;
  double b = 0.2;
  double c = 6.283185307179586;
  Vector shift;
};

/// L(t) = t^T H t, H symmetric positive definite.
struct Quadratic {
  Matrix H;
};

/// Host-supplied loss. Derivatives fall back to finite differences.
struct CallbackLoss {
  std::size_t p;
  std::function<double(const Vector&)> fn;
  Vector theta_star;
  std::string name = "callback";
};

using LossKind = std::variant<SkewedQuartic, ExpNorm, ShiftedAckley, Quadratic, CallbackLoss>;

class LossModel {
 public:
  LossModel(LossKind kind, NoiseModel noise);

  static LossModel skewed_quartic(std::size_t p, NoiseModel noise = {});
  static LossModel expnorm(std::size_t p, NoiseModel noise = {});
  static LossModel ackley(std::size_t p, double shift = 1.0, NoiseModel noise = {});
  static LossModel quadratic(Matrix H, NoiseModel noise = {});
  static LossModel identity_quadratic(std::size_t p, NoiseModel noise = {});
  static LossModel callback(std::size_t p, std::function<double(const Vector&)> fn,
                            Vector theta_star, NoiseModel noise = {});

  /// "skewed_quartic:p=10", "expnorm:p=30", "ackley:p=30,shift=1.0", "quadratic:p=5".
  static LossModel parse(std::string_view text, NoiseModel noise = {});

  std::size_t dim() const noexcept { return p_; }
  const LossKind& kind() const noexcept { return kind_; }
  const NoiseModel& noise() const noexcept { return noise_; }
  const ParamVector& theta_star() const noexcept { return theta_star_; }
  double loss_star() const noexcept { return loss_star_; }
  std::string spec() const;

  /// Noise-free loss. No dimension check; callers guarantee theta.size() == dim().
  double value(const Vector& theta) const;
  /// One noisy measurement y = L(theta) + eps.
  double measure(const Vector& theta, RngStream& rng) const {
    return value(theta) + noise_.draw(rng);
  }

  /// True for kinds whose gradient, Hessian and third-derivative terms are closed form.
  bool analytic_derivatives() const noexcept;

 private:
  LossKind kind_;
  NoiseModel noise_;
  std::size_t p_;
  ParamVector theta_star_;
  double loss_star_;
};

/// Derivative data at a point. third_diag[l] = L'''_lll and
/// third_cross[l] = sum_{i != l} L'''_iil.
struct DerivativeBundle {
  Vector gradient;
  Matrix hessian;
  Vector third_diag;
  Vector third_cross;
};

double evaluate(const LossModel& loss, const ParamVector& theta, bool noisy, RngStream& rng);

DerivativeBundle derivatives(const LossModel& loss, const ParamVector& theta);

/// Analytic or finite-difference gradient only.
Vector gradient(const LossModel& loss, const ParamVector& theta);

std::pair<ParamVector, double> minimizer(const LossModel& loss);

/// Root of d/dt (t^2 + exp(t/p)) = 0 by bisection.
double expnorm_stationary_point(std::size_t p);

/// The matrix B of the skewed quartic.
Matrix skewed_quartic_b(std::size_t p);

}  // namespace spsalab
