#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "spsalab/commands.hpp"

namespace py = pybind11;
using namespace spsalab;

namespace {

const char* kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidArgument: return "invalid_argument";
    case ErrorKind::InvalidPerturbation: return "invalid_perturbation";
    case ErrorKind::InvalidGains: return "invalid_gains";
    case ErrorKind::RegimeRejected: return "regime_rejected";
    case ErrorKind::NotDifferentiable: return "not_differentiable";
    case ErrorKind::Config: return "config";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

ParamVector to_param(const Vector& v) { return ParamVector(v); }

py::dict moments_dict(const MomentSet& m) {
  py::dict d;
  if (m.phi) d["phi"] = *m.phi;
  if (m.upsilon) d["upsilon"] = *m.upsilon;
  if (m.xi2) d["xi2"] = *m.xi2;
  if (m.rho2) d["rho2"] = *m.rho2;
  return d;
}

std::vector<MethodDist> parse_pairs(const std::vector<std::string>& pairs) {
  std::vector<MethodDist> out;
  for (const auto& p : pairs) out.push_back(MethodDist::parse(p));
  return out;
}

// Python callables need the GIL even when the battery runs worker threads.
LossModel python_loss(std::size_t p, py::function fn, const Vector& theta_star, double sigma2) {
  auto holder = std::make_shared<py::function>(std::move(fn));
  auto call = [holder](const Vector& theta) {
    py::gil_scoped_acquire gil;
    return (*holder)(theta).cast<double>();
  };
  const NoiseModel noise = sigma2 > 0.0 ? NoiseModel::gaussian(sigma2) : NoiseModel::none();
  return LossModel::callback(p, call, theta_star, noise);
}

template <class F>
py::tuple capture(F&& f) {
  std::ostringstream out, err;
  const int code = f(out, err);
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_spsalab, m) {
  m.doc() = "Gradient-free stochastic approximation: estimators, theory and experiments";

  static py::exception<Error> error(m, "SpsalabError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(error.ptr(), (std::string(kind_name(e.kind())) + ": " + e.what()).c_str());
    }
  });

  py::enum_<Family>(m, "Family").value("SP", Family::SP).value("RD", Family::RD);
  py::enum_<Method>(m, "Method")
      .value("SPSA", Method::SPSA)
      .value("RDSA", Method::RDSA)
      .value("FDSA", Method::FDSA);

  py::class_<RngStream>(m, "RngStream")
      .def(py::init<std::uint64_t, std::uint64_t>(), py::arg("seed"), py::arg("stream_id") = 0)
      .def("uniform", &RngStream::uniform)
      .def("normal", &RngStream::normal)
      .def("next_u64", &RngStream::next_u64);

  py::class_<NoiseModel>(m, "NoiseModel")
      .def_static("none", &NoiseModel::none)
      .def_static("gaussian", &NoiseModel::gaussian, py::arg("sigma2"))
      .def_readonly("sigma2", &NoiseModel::sigma2)
      .def("active", &NoiseModel::active);

  py::class_<GainSequence>(m, "GainSequence")
      .def(py::init([](double a, double c, double A, double alpha, double gamma) {
             GainSequence gs{a, A, alpha, c, gamma};
             gs.validate();
             return gs;
           }),
           py::arg("a"), py::arg("c"), py::arg("A") = 0.0, py::arg("alpha") = 0.602,
           py::arg("gamma") = 0.101)
      .def_readonly("a", &GainSequence::a)
      .def_readonly("A", &GainSequence::A)
      .def_readonly("alpha", &GainSequence::alpha)
      .def_readonly("c", &GainSequence::c)
      .def_readonly("gamma", &GainSequence::gamma)
      .def("at", [](const GainSequence& gs, std::size_t k) {
        const Gains g = gain_at(gs, k);
        return py::make_tuple(g.a_k, g.c_k);
      });
  m.def("validate_a1", [](const GainSequence& gs) {
    const A1Check r = validate_a1(gs);
    return py::make_tuple(r.satisfied, r.diagnostic);
  });

  py::class_<PerturbationDist>(m, "PerturbationDist")
      .def_static("bernoulli", &PerturbationDist::bernoulli, py::arg("family") = Family::SP)
      .def_static("ushape", &PerturbationDist::ushape, py::arg("order") = 10,
                  py::arg("halfwidth") = 1.17, py::arg("family") = Family::SP)
      .def_static("gaussian", &PerturbationDist::gaussian, py::arg("family") = Family::RD)
      .def_static("spherical", &PerturbationDist::spherical, py::arg("family") = Family::RD)
      .def_static("parse", &PerturbationDist::parse, py::arg("text"), py::arg("family"))
      .def_property_readonly("family", &PerturbationDist::family)
      .def_property_readonly("spec", &PerturbationDist::spec)
      .def_property_readonly("label", &PerturbationDist::label)
      .def("__repr__", &PerturbationDist::label);
  m.def("moments", [](const PerturbationDist& d, std::size_t p) { return moments_dict(moments(d, p)); },
        py::arg("dist"), py::arg("p"));
  m.def("sample", &sample, py::arg("dist"), py::arg("p"), py::arg("rng"));

  py::class_<LossModel>(m, "LossModel")
      .def_static("parse",
                  [](const std::string& text, double sigma2) {
                    return LossModel::parse(
                        text, sigma2 > 0.0 ? NoiseModel::gaussian(sigma2) : NoiseModel::none());
                  },
                  py::arg("text"), py::arg("noise_sigma2") = 0.0)
      .def_static("quadratic",
                  [](const Matrix& H, double sigma2) {
                    return LossModel::quadratic(
                        H, sigma2 > 0.0 ? NoiseModel::gaussian(sigma2) : NoiseModel::none());
                  },
                  py::arg("H"), py::arg("noise_sigma2") = 0.0)
      .def_static("callback", &python_loss, py::arg("p"), py::arg("fn"), py::arg("theta_star"),
                  py::arg("noise_sigma2") = 0.0)
      .def_property_readonly("dim", &LossModel::dim)
      .def_property_readonly("spec", &LossModel::spec)
      .def_property_readonly("theta_star",
                             [](const LossModel& l) { return Vector(l.theta_star().values()); })
      .def_property_readonly("loss_star", &LossModel::loss_star)
      .def("value", [](const LossModel& l, const Vector& t) {
        if (static_cast<std::size_t>(t.size()) != l.dim()) {
          throw Error(ErrorKind::InvalidArgument, "theta dimension does not match loss dimension");
        }
        return l.value(t);
      })
      .def("gradient", [](const LossModel& l, const Vector& t) { return gradient(l, to_param(t)); })
      .def("hessian",
           [](const LossModel& l, const Vector& t) { return derivatives(l, to_param(t)).hessian; });

  m.def("spsa_gradient",
        [](const LossModel& l, const Vector& theta, double c_k, const PerturbationDist& d,
           RngStream& rng) { return spsa_gradient(l, to_param(theta), c_k, d, rng).g_hat; },
        py::arg("loss"), py::arg("theta"), py::arg("c_k"), py::arg("dist"), py::arg("rng"));
  m.def("rdsa_gradient",
        [](const LossModel& l, const Vector& theta, double c_k, const PerturbationDist& d,
           RngStream& rng) { return rdsa_gradient(l, to_param(theta), c_k, d, rng).g_hat; },
        py::arg("loss"), py::arg("theta"), py::arg("c_k"), py::arg("dist"), py::arg("rng"));
  m.def("fdsa_gradient",
        [](const LossModel& l, const Vector& theta, double c_k, RngStream& rng) {
          return fdsa_gradient(l, to_param(theta), c_k, rng).g_hat;
        },
        py::arg("loss"), py::arg("theta"), py::arg("c_k"), py::arg("rng"));

  m.def("run_sa",
        [](const LossModel& l, const Vector& theta0, const GainSequence& gs, const std::string& pair,
           std::size_t iterations, std::uint64_t seed, std::uint64_t stream, bool full) {
          const MethodDist md = MethodDist::parse(pair);
          SaOptions opts;
          opts.iterations = iterations;
          opts.record = full ? Record::Full : Record::FinalOnly;
          RngStream rng(seed, stream);
          Trajectory t;
          {
            py::gil_scoped_release release;
            t = run_sa(l, to_param(theta0), gs, md.method, md.dist, opts, rng);
          }
          py::dict d;
          d["final"] = Vector(t.final().values());
          if (full) {
            std::vector<Vector> its;
            for (const auto& it : t.iterates) its.push_back(it.values());
            d["iterates"] = its;
          }
          d["loss_evals"] = t.loss_evals;
          d["iterations_run"] = t.iterations_run;
          d["diverged"] = t.diverged();
          return d;
        },
        py::arg("loss"), py::arg("theta0"), py::arg("gains"), py::arg("pair"),
        py::arg("iterations"), py::arg("seed") = 0, py::arg("stream") = 0,
        py::arg("full") = false);

  m.def("predict_bias",
        [](const LossModel& l, const Vector& theta, double c_k, const PerturbationDist& d) {
          return predict_bias(l, to_param(theta), c_k, d);
        });
  m.def("asymptotic_distribution",
        [](const LossModel& l, const GainSequence& gs, const PerturbationDist& d, double s2) {
          const AsymptoticParams a = asymptotic_distribution(l, gs, d, s2);
          py::dict out;
          out["beta"] = a.beta;
          out["beta_plus"] = a.beta_plus;
          out["lambda"] = a.lambda;
          out["mu"] = a.mu;
          out["M_diag"] = a.M_diag;
          out["biased_regime"] = a.biased_regime;
          out["mse"] = a.mse();
          return out;
        },
        py::arg("loss"), py::arg("gains"), py::arg("dist"), py::arg("sigma_eff2"));
  py::class_<MseDecomposition>(m, "MseDecomposition")
      .def_readonly("u1", &MseDecomposition::u1)
      .def_readonly("u2", &MseDecomposition::u2)
      .def_readonly("S", &MseDecomposition::S)
      .def_readonly("u1Su1", &MseDecomposition::u1Su1)
      .def_readonly("u1Su2", &MseDecomposition::u1Su2)
      .def_readonly("u2Su2", &MseDecomposition::u2Su2)
      .def_readonly("Q1", &MseDecomposition::Q1)
      .def_readonly("Q2", &MseDecomposition::Q2)
      .def_readonly("D", &MseDecomposition::D);
  m.def("mse_decomposition", &mse_decomposition, py::arg("loss"), py::arg("a"), py::arg("c"),
        py::arg("beta_plus") = 0.0, py::arg("sigma_eff2") = 0.0);
  m.def("predict_mse", &predict_mse, py::arg("decomposition"), py::arg("dist"), py::arg("p"));
  m.def("prop3_predicate", [](const MseDecomposition& d) {
    const Prop3 r = prop3_predicate(d);
    return py::make_tuple(r.holds, r.value);
  });
  m.def("z_study",
        [](std::size_t p, double a_range, std::size_t n, std::uint64_t seed) {
          ZStudy z;
          {
            py::gil_scoped_release release;
            z = z_study(p, a_range, n, seed);
          }
          py::dict d;
          d["p"] = z.p;
          d["n_trials"] = z.n_trials;
          d["count_leq_0"] = z.count_leq_0;
          d["p_z_leq_0"] = z.p_z_leq_0;
          d["chebyshev_bound"] = z.chebyshev_bound;
          d["chebyshev_bound_exact"] = z.chebyshev_bound_exact;
          d["expected_z"] = z.expected_z;
          d["variance_z"] = z.variance_z;
          return d;
        },
        py::arg("p"), py::arg("a_range") = 1.0, py::arg("n_trials") = 100000, py::arg("seed") = 0);

  m.def("run_battery",
        [](const LossModel& l, const std::vector<std::string>& pairs, const GainSequence& gs,
           const Vector& theta0, std::size_t iterations, std::size_t trials, std::uint64_t seed,
           std::size_t curve_window, std::optional<Vector> reference, unsigned parallelism) {
          TrialBattery tb{l, parse_pairs(pairs), gs, to_param(theta0)};
          tb.iterations = iterations;
          tb.n_trials = trials;
          tb.base_seed = seed;
          tb.curve_window = curve_window;
          if (reference) tb.reference = to_param(*reference);
          MseReport rep;
          {
            py::gil_scoped_release release;
            rep = run_battery(tb, parallelism);
          }
          py::list out;
          for (const auto& pr : rep.pairs) {
            py::dict d;
            d["pair"] = pr.pair.spec();
            d["label"] = pr.pair.label();
            d["mean_mse"] = pr.mean_mse;
            d["ci95"] = py::make_tuple(pr.ci95.first, pr.ci95.second);
            d["sq_errors"] = pr.sq_errors;
            d["diverged"] = pr.diverged;
            d["mean_mse_vs_minimizer"] = pr.mean_mse_vs_minimizer;
            d["curve"] = pr.curve;
            out.append(d);
          }
          return out;
        },
        py::arg("loss"), py::arg("pairs"), py::arg("gains"), py::arg("theta0"),
        py::arg("iterations"), py::arg("trials"), py::arg("seed") = 0,
        py::arg("curve_window") = 200, py::arg("reference") = py::none(),
        py::arg("parallelism") = 1);

  m.def("welch_t_test",
        [](const std::vector<double>& x, const std::vector<double>& y) {
          const WelchResult w = welch_t_test(x, y);
          return py::make_tuple(w.t, w.dof, w.p_value);
        },
        py::arg("x"), py::arg("y"));

  m.def("grid_search",
        [](const LossModel& l, const std::string& pair, const Vector& theta0,
           std::vector<double> a_range, std::vector<double> c_range, double A, double alpha,
           double gamma, std::size_t trials, std::size_t iterations, std::uint64_t seed) {
          if (a_range.size() != 3 || c_range.size() != 3) {
            throw Error(ErrorKind::InvalidArgument, "ranges are (min, max, step)");
          }
          GridSearch g{l, MethodDist::parse(pair),
                       GridSpec{a_range[0], a_range[1], a_range[2], c_range[0], c_range[1], c_range[2]},
                       A, alpha, gamma, to_param(theta0)};
          g.trials_per_point = trials;
          g.iterations = iterations;
          g.base_seed = seed;
          GridResult r;
          {
            py::gil_scoped_release release;
            r = grid_search(g);
          }
          py::list table;
          for (const auto& gp : r.table) table.append(py::make_tuple(gp.a, gp.c, gp.mse, gp.diverged));
          return py::make_tuple(r.a_best, r.c_best, table);
        },
        py::arg("loss"), py::arg("pair"), py::arg("theta0"),
        py::arg("a_range") = std::vector<double>{0.1, 1.0, 0.02},
        py::arg("c_range") = std::vector<double>{0.1, 1.0, 0.02}, py::arg("A") = 10.0,
        py::arg("alpha") = 0.606, py::arg("gamma") = 0.101, py::arg("trials_per_point") = 20,
        py::arg("iterations") = 4000, py::arg("seed") = 0);

  py::class_<ExperimentConfig>(m, "ExperimentConfig")
      .def_static("parse", &ExperimentConfig::parse)
      .def_static("load", [](const std::string& path) { return ExperimentConfig::load(path); })
      .def("serialize", &ExperimentConfig::serialize)
      .def("hash_hex", &ExperimentConfig::hash_hex)
      .def(py::self == py::self);

  const auto opts_from = [](std::optional<std::uint64_t> seed, std::optional<std::string> out) {
    CommandOptions o;
    o.seed = seed;
    o.out = std::move(out);
    return o;
  };
  m.def("cmd_run",
        [opts_from](const std::string& cfg, std::optional<std::uint64_t> seed,
                    std::optional<std::string> out) {
          py::gil_scoped_release release;
          return capture([&](std::ostream& o, std::ostream& e) {
            return cmd_run(cfg, opts_from(seed, out), o, e);
          });
        },
        py::arg("config"), py::arg("seed") = py::none(), py::arg("out") = py::none(),
        "Returns (exit_code, stdout, stderr).");
  m.def("cmd_theory",
        [opts_from](const std::string& cfg, std::optional<std::string> out) {
          return capture([&](std::ostream& o, std::ostream& e) {
            return cmd_theory(std::filesystem::path(cfg), opts_from(std::nullopt, out), o, e);
          });
        },
        py::arg("config"), py::arg("out") = py::none());
  m.def("moments_table", &moments_table, py::arg("p"));
}
