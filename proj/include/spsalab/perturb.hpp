#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "spsalab/core.hpp"

namespace spsalab {

enum class PerturbKind { Bernoulli, UShape, Gaussian, UniformSpherical };

/// SP: simultaneous perturbation (divides by each component).
/// RD: random direction (multiplies by the direction itself).
enum class Family { SP, RD };

/// Perturbation law together with the family it is used for. Construction
/// rejects SP members without a finite inverse second moment.
class PerturbationDist {
 public:
  static PerturbationDist bernoulli(Family family = Family::SP);
  /// Density (d+1)|x|^d / (2 cmax^(d+1)) on [-cmax, cmax]; d even, >= 2.
  static PerturbationDist ushape(int order = 10, double halfwidth = 1.17,
                                 Family family = Family::SP);
  static PerturbationDist gaussian(Family family = Family::RD);
  static PerturbationDist spherical(Family family = Family::RD);

  /// Accepts "bernoulli", "ushape:d=10,cmax=1.17", "gaussian", "spherical".
  static PerturbationDist parse(std::string_view text, Family family);

  PerturbKind kind() const noexcept { return kind_; }
  Family family() const noexcept { return family_; }
  int order() const noexcept { return order_; }
  double halfwidth() const noexcept { return halfwidth_; }

  /// Canonical config string, the inverse of parse().
  std::string spec() const;
  /// Human label such as "Bernoulli SP".
  std::string label() const;

 private:
  PerturbationDist(PerturbKind kind, Family family, int order, double halfwidth);

  PerturbKind kind_;
  Family family_;
  int order_ = 0;
  double halfwidth_ = 0.0;
};

/// Exact moments. phi = E[pi^4], upsilon = E[pi_i^2 pi_j^2] (i != j),
/// xi2 = E[Delta^2], rho2 = E[Delta^-2]. Fields outside a law's support are empty.
struct MomentSet {
  std::optional<double> phi;
  std::optional<double> upsilon;
  std::optional<double> xi2;
  std::optional<double> rho2;
};

Vector sample(const PerturbationDist& dist, std::size_t p, RngStream& rng);

/// In-place variant used by the SA loop to avoid reallocation.
void sample_into(const PerturbationDist& dist, RngStream& rng, Vector& out);

MomentSet moments(const PerturbationDist& dist, std::size_t p);

}  // namespace spsalab
