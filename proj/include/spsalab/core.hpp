#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace spsalab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Error categories. The CLI maps each one to a distinct exit code.
enum class ErrorKind {
  InvalidArgument,
  InvalidPerturbation,
  InvalidGains,
  RegimeRejected,
  NotDifferentiable,
  Config,
  Io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Dense parameter vector with a fixed length and finite entries.
class ParamVector {
 public:
  explicit ParamVector(Vector values);
  ParamVector(std::initializer_list<double> values);
  explicit ParamVector(std::span<const double> values);

  static ParamVector constant(std::size_t p, double value);
  static ParamVector zeros(std::size_t p) { return constant(p, 0.0); }

  std::size_t size() const noexcept { return static_cast<std::size_t>(v_.size()); }
  double operator[](std::size_t i) const { return v_[static_cast<Eigen::Index>(i)]; }
  const Vector& values() const noexcept { return v_; }
  std::vector<double> to_std() const { return {v_.data(), v_.data() + v_.size()}; }

  friend bool operator==(const ParamVector& a, const ParamVector& b) {
    return a.v_.size() == b.v_.size() && (a.v_.array() == b.v_.array()).all();
  }

 private:
  Vector v_;
};

/// Power-law gain schedule a_k = a / (k + 1 + A)^alpha, c_k = c / (k + 1)^gamma.
/// The perturbation gain c_k never carries the stability offset.
struct GainSequence {
  double a = 0.0;
  double A = 0.0;
  double alpha = 0.602;
  double c = 0.0;
  double gamma = 0.101;

  /// Throws Error(InvalidGains) when a field is outside its domain.
  void validate() const;
};

struct Gains {
  double a_k;
  double c_k;
};

Gains gain_at(const GainSequence& gs, std::size_t k);

struct A1Check {
  bool satisfied;
  std::string diagnostic;
};

/// Sufficient test for the classical step-size conditions on the power-law
/// family: alpha in (0.5, 1] and alpha - gamma > 0.5.
A1Check validate_a1(const GainSequence& gs);

/// Seeded random stream. Equal (seed, stream) pairs replay identical draws;
/// distinct stream ids give independent sequences.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_; }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on (0, 1].
  double uniform_open0();
  /// Uniform on [0, 1).
  double uniform();
  bool coin() { return (engine_() >> 63) != 0; }
  double normal() { return normal_(engine_); }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

enum class NoiseKind { None, Gaussian };

/// Additive measurement noise with variance sigma2.
struct NoiseModel {
  NoiseKind kind = NoiseKind::None;
  double sigma2 = 0.0;

  static NoiseModel none() { return {}; }
  static NoiseModel gaussian(double sigma2);

  bool active() const noexcept { return kind == NoiseKind::Gaussian && sigma2 > 0.0; }
  double draw(RngStream& rng) const;
};

}  // namespace spsalab
