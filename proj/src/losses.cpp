#include "spsalab/losses.hpp"

#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

namespace spsalab {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::map<std::string, double, std::less<>> parse_params(std::string_view text,
                                                        std::string_view owner) {
  std::map<std::string, double, std::less<>> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const std::string_view item = text.substr(0, comma);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorKind::Config, std::string(owner) + ": expected key=value, got '" +
                                         std::string(item) + "'");
    }
    double v = 0.0;
    const std::string_view val = item.substr(eq + 1);
    auto [ptr, ec] = std::from_chars(val.data(), val.data() + val.size(), v);
    if (ec != std::errc() || ptr != val.data() + val.size()) {
      throw Error(ErrorKind::Config, std::string(owner) + ": bad number '" + std::string(val) +
                                         "' for '" + std::string(item.substr(0, eq)) + "'");
    }
    out.emplace(std::string(item.substr(0, eq)), v);
    if (comma == std::string_view::npos) break;
    text = text.substr(comma + 1);
  }
  return out;
}

std::size_t dim_param(const std::map<std::string, double, std::less<>>& params,
                      std::string_view owner) {
  auto it = params.find("p");
  if (it == params.end()) {
    throw Error(ErrorKind::Config, std::string(owner) + ": missing dimension 'p'");
  }
  if (!(it->second >= 1.0) || it->second != std::floor(it->second)) {
    throw Error(ErrorKind::Config, std::string(owner) + ": p must be a positive integer");
  }
  return static_cast<std::size_t>(it->second);
}

void reject_unknown(const std::map<std::string, double, std::less<>>& params,
                    std::initializer_list<std::string_view> allowed, std::string_view owner) {
  for (const auto& [k, v] : params) {
    bool ok = false;
    for (auto a : allowed) ok = ok || (k == a);
    if (!ok) throw Error(ErrorKind::Config, std::string(owner) + ": unknown parameter '" + k + "'");
  }
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double skewed_quartic_value(const Vector& t) {
  const Eigen::Index p = t.size();
  const double inv_p = 1.0 / static_cast<double>(p);
  double suffix = 0.0;
  double sum = 0.0;
  for (Eigen::Index i = p - 1; i >= 0; --i) {
    suffix += t[i];
    const double x = suffix * inv_p;
    const double x2 = x * x;
    sum += x2 + 0.1 * x2 * x + 0.01 * x2 * x2;
  }
  return sum;
}

double expnorm_value(const Vector& t) {
  const double inv_p = 1.0 / static_cast<double>(t.size());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < t.size(); ++i) sum += t[i] * t[i] + std::exp(t[i] * inv_p);
  return sum;
}

double ackley_value(const ShiftedAckley& f, const Vector& t) {
  const double inv_p = 1.0 / static_cast<double>(f.p);
  double sq = 0.0;
  double cs = 0.0;
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    const double d = t[i] - f.shift[i];
    sq += d * d;
    cs += std::cos(f.c * d);
  }
  return -f.a * std::exp(-f.b * std::sqrt(sq * inv_p)) - std::exp(cs * inv_p) + f.a +
         std::exp(1.0);
}

Vector ackley_gradient(const ShiftedAckley& f, const Vector& t) {
  const Vector d = t - f.shift;
  const double pp = static_cast<double>(f.p);
  const double r = std::sqrt(d.squaredNorm() / pp);
  if (r < 1e-12) {
    throw Error(ErrorKind::NotDifferentiable, "Ackley function is not differentiable at its minimizer");
  }
  double cs = 0.0;
  for (Eigen::Index i = 0; i < d.size(); ++i) cs += std::cos(f.c * d[i]);
  const double e2 = std::exp(cs / pp);
  const double k1 = f.a * f.b * std::exp(-f.b * r) / (pp * r);
  Vector g(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    g[i] = k1 * d[i] + e2 * (f.c / pp) * std::sin(f.c * d[i]);
  }
  return g;
}

Vector central_gradient(const std::function<double(const Vector&)>& fn, const Vector& t) {
  Vector g(t.size());
  Vector x = t;
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    const double h = 1e-5 * std::max(1.0, std::abs(t[i]));
    x[i] = t[i] + h;
    const double up = fn(x);
    x[i] = t[i] - h;
    const double dn = fn(x);
    x[i] = t[i];
    g[i] = (up - dn) / (2.0 * h);
  }
  return g;
}

Matrix central_jacobian(const std::function<Vector(const Vector&)>& grad, const Vector& t,
                        double rel_step) {
  const Eigen::Index p = t.size();
  Matrix H(p, p);
  Vector x = t;
  for (Eigen::Index i = 0; i < p; ++i) {
    const double h = rel_step * std::max(1.0, std::abs(t[i]));
    x[i] = t[i] + h;
    const Vector up = grad(x);
    x[i] = t[i] - h;
    const Vector dn = grad(x);
    x[i] = t[i];
    H.col(i) = (up - dn) / (2.0 * h);
  }
  return 0.5 * (H + H.transpose());
}

DerivativeBundle bundle_from_gradient(const std::function<Vector(const Vector&)>& grad,
                                      const Vector& t, double hess_step, double third_step) {
  DerivativeBundle out;
  out.gradient = grad(t);
  out.hessian = central_jacobian(grad, t, hess_step);
  const Eigen::Index p = t.size();
  out.third_diag.resize(p);
  out.third_cross.resize(p);
  Vector x = t;
  for (Eigen::Index l = 0; l < p; ++l) {
    const double h = third_step * std::max(1.0, std::abs(t[l]));
    x[l] = t[l] + h;
    const Vector up = central_jacobian(grad, x, hess_step).diagonal();
    x[l] = t[l] - h;
    const Vector dn = central_jacobian(grad, x, hess_step).diagonal();
    x[l] = t[l];
    const Vector dHdiag = (up - dn) / (2.0 * h);  // entry i: L'''_iil
    out.third_diag[l] = dHdiag[l];
    out.third_cross[l] = dHdiag.sum() - dHdiag[l];
  }
  return out;
}

ParamVector star_of(const LossKind& kind, std::size_t p) {
  return std::visit(
      overloaded{
          [&](const SkewedQuartic&) { return ParamVector::zeros(p); },
          [&](const ExpNorm& f) {
            return ParamVector::constant(p, expnorm_stationary_point(f.p));
          },
          [&](const ShiftedAckley& f) { return ParamVector(f.shift); },
          [&](const Quadratic&) { return ParamVector::zeros(p); },
          [&](const CallbackLoss& f) { return ParamVector(f.theta_star); },
      },
      kind);
}

std::size_t dim_of(const LossKind& kind) {
  return std::visit(overloaded{
                        [](const SkewedQuartic& f) { return f.p; },
                        [](const ExpNorm& f) { return f.p; },
                        [](const ShiftedAckley& f) { return f.p; },
                        [](const Quadratic& f) { return static_cast<std::size_t>(f.H.rows()); },
                        [](const CallbackLoss& f) { return f.p; },
                    },
                    kind);
}

}  // namespace

LossModel::LossModel(LossKind kind, NoiseModel noise)
    : kind_(std::move(kind)),
      noise_(noise),
      p_(dim_of(kind_)),
      theta_star_(ParamVector::zeros(p_ == 0 ? 1 : p_)),
      loss_star_(0.0) {
  if (p_ == 0) throw Error(ErrorKind::InvalidArgument, "loss dimension must be >= 1");
  if (auto* q = std::get_if<Quadratic>(&kind_)) {
    if (q->H.rows() != q->H.cols()) {
      throw Error(ErrorKind::InvalidArgument, "quadratic H must be square");
    }
    if (!q->H.isApprox(q->H.transpose(), 1e-12)) {
      throw Error(ErrorKind::InvalidArgument, "quadratic H must be symmetric");
    }
    Eigen::LLT<Matrix> llt(q->H);
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorKind::InvalidArgument, "quadratic H must be positive definite");
    }
  }
  if (auto* a = std::get_if<ShiftedAckley>(&kind_)) {
    if (static_cast<std::size_t>(a->shift.size()) != a->p) {
      throw Error(ErrorKind::InvalidArgument, "Ackley shift length must equal p");
    }
  }
  if (auto* cb = std::get_if<CallbackLoss>(&kind_)) {
    if (!cb->fn) throw Error(ErrorKind::InvalidArgument, "callback loss needs a function");
    if (static_cast<std::size_t>(cb->theta_star.size()) != cb->p) {
      throw Error(ErrorKind::InvalidArgument, "callback theta_star length must equal p");
    }
  }
  theta_star_ = star_of(kind_, p_);
  loss_star_ = value(theta_star_.values());
}

LossModel LossModel::skewed_quartic(std::size_t p, NoiseModel noise) {
  return {SkewedQuartic{p}, noise};
}

LossModel LossModel::expnorm(std::size_t p, NoiseModel noise) { return {ExpNorm{p}, noise}; }

LossModel LossModel::ackley(std::size_t p, double shift, NoiseModel noise) {
  ShiftedAckley f;
  f.p = p;
  f.shift = Vector::Constant(static_cast<Eigen::Index>(p), shift);
  return {std::move(f), noise};
}

LossModel LossModel::quadratic(Matrix H, NoiseModel noise) {
  return {Quadratic{std::move(H)}, noise};
}

LossModel LossModel::identity_quadratic(std::size_t p, NoiseModel noise) {
  const auto n = static_cast<Eigen::Index>(p);
  return quadratic(Matrix::Identity(n, n), noise);
}

LossModel LossModel::callback(std::size_t p, std::function<double(const Vector&)> fn,
                              Vector theta_star, NoiseModel noise) {
  return {CallbackLoss{p, std::move(fn), std::move(theta_star)}, noise};
}

LossModel LossModel::parse(std::string_view text, NoiseModel noise) {
  const auto colon = text.find(':');
  const std::string_view name = text.substr(0, colon);
  const std::string owner = "loss '" + std::string(text) + "'";
  const auto params = parse_params(
      colon == std::string_view::npos ? std::string_view{} : text.substr(colon + 1), owner);
  if (name == "skewed_quartic") {
    reject_unknown(params, {"p"}, owner);
    return skewed_quartic(dim_param(params, owner), noise);
  }
  if (name == "expnorm") {
    reject_unknown(params, {"p"}, owner);
    return expnorm(dim_param(params, owner), noise);
  }
  if (name == "quadratic") {
    reject_unknown(params, {"p"}, owner);
    return identity_quadratic(dim_param(params, owner), noise);
  }
  if (name == "ackley") {
    reject_unknown(params, {"p", "shift", "a", "b", "c"}, owner);
    ShiftedAckley f;
    f.p = dim_param(params, owner);
    const auto get = [&](std::string_view k, double dflt) {
      auto it = params.find(k);
      return it == params.end() ? dflt : it->second;
    };
    f.shift = Vector::Constant(static_cast<Eigen::Index>(f.p), get("shift", 1.0));
    f.a = get("a", f.a);
    f.b = get("b", f.b);
    f.c = get("c", f.c);
    return {std::move(f), noise};
  }
  throw Error(ErrorKind::Config, "unknown loss '" + std::string(name) + "'");
}

std::string LossModel::spec() const {
  return std::visit(
      overloaded{
          [](const SkewedQuartic& f) { return "skewed_quartic:p=" + std::to_string(f.p); },
          [](const ExpNorm& f) { return "expnorm:p=" + std::to_string(f.p); },
          [](const ShiftedAckley& f) {
            std::string s = "ackley:p=" + std::to_string(f.p) + ",shift=" + fmt(f.shift[0]);
            if (f.a != 20.0) s += ",a=" + fmt(f.a);
            if (f.b != 0.2) s += ",b=" + fmt(f.b);
            if (f.c != ShiftedAckley{}.c) s += ",c=" + fmt(f.c);
            return s;
          },
          [](const Quadratic& f) { return "quadratic:p=" + std::to_string(f.H.rows()); },
          [](const CallbackLoss& f) { return f.name + ":p=" + std::to_string(f.p); },
      },
      kind_);
}

double LossModel::value(const Vector& theta) const {
  return std::visit(overloaded{
                        [&](const SkewedQuartic&) { return skewed_quartic_value(theta); },
                        [&](const ExpNorm&) { return expnorm_value(theta); },
                        [&](const ShiftedAckley& f) { return ackley_value(f, theta); },
                        [&](const Quadratic& f) { return theta.dot(f.H * theta); },
                        [&](const CallbackLoss& f) { return f.fn(theta); },
                    },
                    kind_);
}

bool LossModel::analytic_derivatives() const noexcept {
  return std::holds_alternative<SkewedQuartic>(kind_) || std::holds_alternative<ExpNorm>(kind_) ||
         std::holds_alternative<Quadratic>(kind_);
}

double evaluate(const LossModel& loss, const ParamVector& theta, bool noisy, RngStream& rng) {
  if (theta.size() != loss.dim()) {
    throw Error(ErrorKind::InvalidArgument, "theta dimension does not match loss dimension");
  }
  return noisy ? loss.measure(theta.values(), rng) : loss.value(theta.values());
}

Matrix skewed_quartic_b(std::size_t p) {
  const auto n = static_cast<Eigen::Index>(p);
  Matrix B = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) B(i, j) = 1.0 / static_cast<double>(p);
  }
  return B;
}

Vector gradient(const LossModel& loss, const ParamVector& theta) {
  if (theta.size() != loss.dim()) {
    throw Error(ErrorKind::InvalidArgument, "theta dimension does not match loss dimension");
  }
  const Vector& t = theta.values();
  return std::visit(
      overloaded{
          [&](const SkewedQuartic& f) -> Vector {
            const Matrix B = skewed_quartic_b(f.p);
            const Vector x = B * t;
            const Vector d1 = (2.0 * x.array() + 0.3 * x.array().square() +
                               0.04 * x.array().cube())
                                  .matrix();
            return B.transpose() * d1;
          },
          [&](const ExpNorm& f) -> Vector {
            const double pp = static_cast<double>(f.p);
            return (2.0 * t.array() + (t.array() / pp).exp() / pp).matrix();
          },
          [&](const ShiftedAckley& f) -> Vector { return ackley_gradient(f, t); },
          [&](const Quadratic& f) -> Vector { return 2.0 * f.H * t; },
          [&](const CallbackLoss& f) -> Vector { return central_gradient(f.fn, t); },
      },
      loss.kind());
}

DerivativeBundle derivatives(const LossModel& loss, const ParamVector& theta) {
  if (theta.size() != loss.dim()) {
    throw Error(ErrorKind::InvalidArgument, "theta dimension does not match loss dimension");
  }
  const Vector& t = theta.values();
  const auto n = t.size();
  return std::visit(
      overloaded{
          [&](const SkewedQuartic& f) {
            const Matrix B = skewed_quartic_b(f.p);
            const Vector x = B * t;
            const Eigen::ArrayXd xa = x.array();
            const Vector d1 = (2.0 * xa + 0.3 * xa.square() + 0.04 * xa.cube()).matrix();
            const Vector d2 = (2.0 + 0.6 * xa + 0.12 * xa.square()).matrix();
            const Vector d3 = (0.6 + 0.24 * xa).matrix();
            DerivativeBundle out;
            out.gradient = B.transpose() * d1;
            out.hessian = B.transpose() * d2.asDiagonal() * B;
            out.third_diag.resize(n);
            out.third_cross.resize(n);
            // L'''_abc = sum_i d3_i B_ia B_ib B_ic
            for (Eigen::Index l = 0; l < n; ++l) {
              double diag = 0.0;
              double cross = 0.0;
              for (Eigen::Index i = 0; i < n; ++i) {
                const double bl = B(i, l);
                if (bl == 0.0) continue;
                double row_sq = 0.0;
                for (Eigen::Index j = 0; j < n; ++j) {
                  if (j != l) row_sq += B(i, j) * B(i, j);
                }
                diag += d3[i] * bl * bl * bl;
                cross += d3[i] * row_sq * bl;
              }
              out.third_diag[l] = diag;
              out.third_cross[l] = cross;
            }
            return out;
          },
          [&](const ExpNorm& f) {
            const double pp = static_cast<double>(f.p);
            const Eigen::ArrayXd e = (t.array() / pp).exp();
            DerivativeBundle out;
            out.gradient = (2.0 * t.array() + e / pp).matrix();
            out.hessian = Matrix((2.0 + e / (pp * pp)).matrix().asDiagonal());
            out.third_diag = (e / (pp * pp * pp)).matrix();
            out.third_cross = Vector::Zero(n);
            return out;
          },
          [&](const ShiftedAckley& f) {
            return bundle_from_gradient([&f](const Vector& x) { return ackley_gradient(f, x); },
                                        t, 1e-5, 1e-3);
          },
          [&](const Quadratic& f) {
            DerivativeBundle out;
            out.gradient = 2.0 * f.H * t;
            out.hessian = 2.0 * f.H;
            out.third_diag = Vector::Zero(n);
            out.third_cross = Vector::Zero(n);
            return out;
          },
          [&](const CallbackLoss& f) {
            return bundle_from_gradient(
                [&f](const Vector& x) { return central_gradient(f.fn, x); }, t, 1e-4, 1e-2);
          },
      },
      loss.kind());
}

std::pair<ParamVector, double> minimizer(const LossModel& loss) {
  return {loss.theta_star(), loss.loss_star()};
}

double expnorm_stationary_point(std::size_t p) {
  const double pp = static_cast<double>(p);
  const auto f = [pp](double t) { return 2.0 * t + std::exp(t / pp) / pp; };
  double lo = -1.0;
  double hi = 0.0;
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  return std::abs(f(lo)) < std::abs(f(hi)) ? lo : hi;
}

}  // namespace spsalab
