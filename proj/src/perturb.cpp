#include "spsalab/perturb.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace spsalab {

namespace {

constexpr const char* kInfiniteInverse = "infinite inverse moment, invalid SPSA perturbation";

double parse_double(std::string_view s, std::string_view what) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorKind::InvalidPerturbation,
                "cannot parse " + std::string(what) + " from '" + std::string(s) + "'");
  }
  return out;
}

}  // namespace

PerturbationDist::PerturbationDist(PerturbKind kind, Family family, int order, double halfwidth)
    : kind_(kind), family_(family), order_(order), halfwidth_(halfwidth) {
  if (family == Family::SP &&
      (kind == PerturbKind::Gaussian || kind == PerturbKind::UniformSpherical)) {
    throw Error(ErrorKind::InvalidPerturbation, kInfiniteInverse);
  }
  if (kind == PerturbKind::UShape) {
    if (order < 2 || order % 2 != 0) {
      throw Error(ErrorKind::InvalidPerturbation, "U-shape order d must be an even integer >= 2");
    }
    if (!(halfwidth > 0.0) || !std::isfinite(halfwidth)) {
      throw Error(ErrorKind::InvalidPerturbation, "U-shape halfwidth cmax must be > 0");
    }
    if (family == Family::RD) {
      throw Error(ErrorKind::InvalidPerturbation,
                  "U-shape perturbation is not unit-variance, invalid RDSA direction");
    }
  }
}

PerturbationDist PerturbationDist::bernoulli(Family family) {
  return {PerturbKind::Bernoulli, family, 0, 1.0};
}

PerturbationDist PerturbationDist::ushape(int order, double halfwidth, Family family) {
  return {PerturbKind::UShape, family, order, halfwidth};
}

PerturbationDist PerturbationDist::gaussian(Family family) {
  return {PerturbKind::Gaussian, family, 0, 0.0};
}

PerturbationDist PerturbationDist::spherical(Family family) {
  return {PerturbKind::UniformSpherical, family, 0, 0.0};
}

PerturbationDist PerturbationDist::parse(std::string_view text, Family family) {
  const auto colon = text.find(':');
  const std::string_view name = text.substr(0, colon);
  if (name == "bernoulli" && colon == std::string_view::npos) return bernoulli(family);
  if (name == "gaussian" && colon == std::string_view::npos) return gaussian(family);
  if (name == "spherical" && colon == std::string_view::npos) return spherical(family);
  if (name == "ushape") {
    int order = 10;
    double cmax = 1.17;
    if (colon != std::string_view::npos) {
      std::string_view rest = text.substr(colon + 1);
      while (!rest.empty()) {
        const auto comma = rest.find(',');
        const std::string_view item = rest.substr(0, comma);
        const auto eq = item.find('=');
        if (eq == std::string_view::npos) {
          throw Error(ErrorKind::InvalidPerturbation,
                      "expected key=value in '" + std::string(item) + "'");
        }
        const std::string_view key = item.substr(0, eq);
        const std::string_view val = item.substr(eq + 1);
        if (key == "d") {
          const double d = parse_double(val, "d");
          if (d != std::floor(d)) {
            throw Error(ErrorKind::InvalidPerturbation, "U-shape order d must be an integer");
          }
          order = static_cast<int>(d);
        } else if (key == "cmax") {
          cmax = parse_double(val, "cmax");
        } else {
          throw Error(ErrorKind::InvalidPerturbation,
                      "unknown U-shape parameter '" + std::string(key) + "'");
        }
        if (comma == std::string_view::npos) break;
        rest = rest.substr(comma + 1);
      }
    }
    return ushape(order, cmax, family);
  }
  throw Error(ErrorKind::InvalidPerturbation,
              "unknown perturbation distribution '" + std::string(text) + "'");
}

std::string PerturbationDist::spec() const {
  switch (kind_) {
    case PerturbKind::Bernoulli:
      return "bernoulli";
    case PerturbKind::Gaussian:
      return "gaussian";
    case PerturbKind::UniformSpherical:
      return "spherical";
    case PerturbKind::UShape: {
      char buf[32];
      const auto end = std::to_chars(buf, buf + sizeof buf, halfwidth_).ptr;
      return "ushape:d=" + std::to_string(order_) + ",cmax=" + std::string(buf, end);
    }
  }
  return {};
}

std::string PerturbationDist::label() const {
  std::string name;
  switch (kind_) {
    case PerturbKind::Bernoulli:
      name = "Bernoulli";
      break;
    case PerturbKind::Gaussian:
      name = "Gaussian";
      break;
    case PerturbKind::UniformSpherical:
      name = "Uniformly Spherical";
      break;
    case PerturbKind::UShape: {
      std::ostringstream os;
      os << "U-shape(x^" << order_ << ")";
      name = os.str();
      break;
    }
  }
  return name + (family_ == Family::SP ? " SP" : " RD");
}

void sample_into(const PerturbationDist& dist, RngStream& rng, Vector& out) {
  const Eigen::Index p = out.size();
  switch (dist.kind()) {
    case PerturbKind::Bernoulli:
      for (Eigen::Index i = 0; i < p; ++i) out[i] = rng.coin() ? 1.0 : -1.0;
      break;
    case PerturbKind::UShape: {
      // Inverse CDF of |X|: F(r) = (r / cmax)^(d+1).
      const double inv = 1.0 / (dist.order() + 1);
      for (Eigen::Index i = 0; i < p; ++i) {
        const double mag = dist.halfwidth() * std::pow(rng.uniform_open0(), inv);
        out[i] = rng.coin() ? mag : -mag;
      }
      break;
    }
    case PerturbKind::Gaussian:
      for (Eigen::Index i = 0; i < p; ++i) out[i] = rng.normal();
      break;
    case PerturbKind::UniformSpherical: {
      double norm = 0.0;
      do {
        for (Eigen::Index i = 0; i < p; ++i) out[i] = rng.normal();
        norm = out.norm();
      } while (norm == 0.0);
      out *= std::sqrt(static_cast<double>(p)) / norm;
      break;
    }
  }
}

Vector sample(const PerturbationDist& dist, std::size_t p, RngStream& rng) {
  if (p == 0) throw Error(ErrorKind::InvalidArgument, "dimension p must be >= 1");
  Vector out(static_cast<Eigen::Index>(p));
  sample_into(dist, rng, out);
  return out;
}

MomentSet moments(const PerturbationDist& dist, std::size_t p) {
  MomentSet m;
  const double pp = static_cast<double>(p);
  switch (dist.kind()) {
    case PerturbKind::Bernoulli:
      if (dist.family() == Family::SP) {
        m.xi2 = 1.0;
        m.rho2 = 1.0;
      } else {
        m.phi = 1.0;
        m.upsilon = 1.0;
      }
      break;
    case PerturbKind::UShape: {
      const double d = dist.order();
      const double c2 = dist.halfwidth() * dist.halfwidth();
      m.xi2 = (d + 1.0) / (d + 3.0) * c2;
      m.rho2 = (d + 1.0) / (d - 1.0) / c2;
      break;
    }
    case PerturbKind::Gaussian:
      m.phi = 3.0;
      m.upsilon = 1.0;
      break;
    case PerturbKind::UniformSpherical:
      m.phi = 3.0 * pp / (pp + 2.0);
      m.upsilon = pp / (pp + 2.0);
      break;
  }
  return m;
}

}  // namespace spsalab
