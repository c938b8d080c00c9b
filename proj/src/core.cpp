#include "spsalab/core.hpp"

#include <cmath>
#include <sstream>

namespace spsalab {

namespace {

void require_finite(const Vector& v) {
  if (v.size() == 0) {
    throw Error(ErrorKind::InvalidArgument, "parameter vector must have length >= 1");
  }
  if (!v.allFinite()) {
    throw Error(ErrorKind::InvalidArgument, "parameter vector contains NaN or Inf");
  }
}

}  // namespace

ParamVector::ParamVector(Vector values) : v_(std::move(values)) { require_finite(v_); }

ParamVector::ParamVector(std::initializer_list<double> values)
    : v_(static_cast<Eigen::Index>(values.size())) {
  Eigen::Index i = 0;
  for (double x : values) v_[i++] = x;
  require_finite(v_);
}

ParamVector::ParamVector(std::span<const double> values)
    : v_(Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()))) {
  require_finite(v_);
}

ParamVector ParamVector::constant(std::size_t p, double value) {
  return ParamVector(Vector::Constant(static_cast<Eigen::Index>(p), value));
}

void GainSequence::validate() const {
  std::ostringstream msg;
  if (!(a > 0.0)) msg << "gain a must be > 0 (got " << a << "); ";
  if (!(A >= 0.0)) msg << "stability offset A must be >= 0 (got " << A << "); ";
  if (!(alpha > 0.0 && alpha <= 1.0)) msg << "alpha must lie in (0, 1] (got " << alpha << "); ";
  if (!(c > 0.0)) msg << "gain c must be > 0 (got " << c << "); ";
  if (!(gamma > 0.0)) msg << "gamma must be > 0 (got " << gamma << "); ";
  const std::string s = msg.str();
  if (!s.empty()) throw Error(ErrorKind::InvalidGains, s.substr(0, s.size() - 2));
}

Gains gain_at(const GainSequence& gs, std::size_t k) {
  const double kk = static_cast<double>(k);
  return {gs.a / std::pow(kk + 1.0 + gs.A, gs.alpha), gs.c / std::pow(kk + 1.0, gs.gamma)};
}

A1Check validate_a1(const GainSequence& gs) {
  if (!(gs.alpha > 0.5)) {
    return {false, "alpha <= 0.5: sum of (a_k/c_k)^2 divergence risk"};
  }
  if (gs.alpha > 1.0) {
    return {false, "alpha > 1: sum of a_k is finite, iterates may stall"};
  }
  if (!(gs.alpha - gs.gamma > 0.5)) {
    return {false, "alpha - gamma <= 0.5: sum of (a_k/c_k)^2 divergence risk"};
  }
  return {true, "ok"};
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_(stream_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream_id),
                    static_cast<std::uint32_t>(stream_id >> 32), 0x5eedu};
  engine_.seed(seq);
}

double RngStream::uniform_open0() {
  return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
}

double RngStream::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

NoiseModel NoiseModel::gaussian(double sigma2) {
  if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) {
    throw Error(ErrorKind::InvalidArgument, "noise variance must be finite and >= 0");
  }
  return {NoiseKind::Gaussian, sigma2};
}

double NoiseModel::draw(RngStream& rng) const {
  if (!active()) return 0.0;
  return std::sqrt(sigma2) * rng.normal();
}

}  // namespace spsalab
