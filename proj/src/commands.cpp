#include "spsalab/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace spsalab {

namespace {

using Json = nlohmann::ordered_json;

const char* const kDefaultTheoryPairs[] = {"spsa bernoulli", "spsa ushape:d=10,cmax=1.17",
                                           "rdsa spherical", "rdsa gaussian"};

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

Json vec_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Json moments_json(const MomentSet& m) {
  Json out = Json::object();
  if (m.phi) out["phi"] = *m.phi;
  if (m.upsilon) out["upsilon"] = *m.upsilon;
  if (m.xi2) out["xi2"] = *m.xi2;
  if (m.rho2) out["rho2"] = *m.rho2;
  return out;
}

Json config_json(const ExperimentConfig& cfg) {
  Json out;
  out["loss"] = cfg.loss;
  out["noise_sigma2"] = cfg.noise_sigma2;
  out["gains"] = {{"a", cfg.a}, {"A", cfg.A}, {"alpha", cfg.alpha}, {"c", cfg.c},
                  {"gamma", cfg.gamma}};
  out["theta0"] = cfg.theta0;
  out["mse_reference"] = cfg.mse_reference.empty() ? Json(nullptr) : Json(cfg.mse_reference);
  out["iterations"] = cfg.iterations;
  out["trials"] = cfg.trials;
  out["seed"] = cfg.seed;
  out["pairs"] = cfg.pairs;
  out["curve_window"] = cfg.curve_window;
  out["divergence_bound"] = cfg.divergence_bound;
  return out;
}

std::vector<MethodDist> theory_pairs(const ExperimentConfig& cfg) {
  if (!cfg.pairs.empty()) return cfg.method_pairs();
  std::vector<MethodDist> out;
  for (const char* text : kDefaultTheoryPairs) out.push_back(MethodDist::parse(text));
  return out;
}

struct TheoryBundle {
  Json doc;
  std::vector<std::pair<std::string, double>> predicted;  // label, predicted asymptotic MSE
};

// Everything the theory module says about one config. Throws on unsupported
// losses or rejected regimes.
TheoryBundle build_theory(const ExperimentConfig& cfg, const LossModel& loss,
                          const std::vector<MethodDist>& pairs) {
  const GainSequence gs = cfg.gains();
  const double sigma_eff2 = 2.0 * cfg.noise_sigma2;
  const std::size_t p = loss.dim();

  // The regime checks do not depend on the law; run them once up front.
  const AsymptoticParams probe =
      asymptotic_distribution(loss, gs, PerturbationDist::bernoulli(Family::SP), sigma_eff2);
  const MseDecomposition dec = mse_decomposition(loss, gs.a, gs.c, probe.beta_plus, sigma_eff2);
  const Prop3 prop3 = prop3_predicate(dec);
  const double horizon = std::pow(static_cast<double>(cfg.iterations), -probe.beta);

  TheoryBundle out;
  Json& doc = out.doc;
  doc["sigma_eff2"] = sigma_eff2;
  doc["beta"] = probe.beta;
  doc["beta_plus"] = probe.beta_plus;
  doc["biased_regime"] = probe.biased_regime;
  Json d;
  d["u1Su1"] = dec.u1Su1;
  d["u1Su2"] = dec.u1Su2;
  d["u2Su2"] = dec.u2Su2;
  d["Q1"] = dec.Q1;
  d["Q2"] = dec.Q2;
  d["D"] = dec.D;
  d["D_trace_route"] =
      probe.beta_plus == 0.0 ? Json(variance_trace_direct(loss, gs.a, gs.c, sigma_eff2)) : Json();
  doc["decomposition"] = d;
  doc["prop3"] = {{"holds", prop3.holds}, {"value", prop3.value}};

  Json rows = Json::array();
  for (const auto& pair : pairs) {
    Json row;
    row["pair"] = pair.spec();
    row["label"] = pair.label();
    if (pair.method == Method::FDSA) {
      row["supported"] = false;
      rows.push_back(row);
      continue;
    }
    const AsymptoticParams ap = asymptotic_distribution(loss, gs, pair.dist, sigma_eff2);
    // Outside the biased regime mu = 0 and only the variance trace survives.
    const double predicted = probe.biased_regime ? predict_mse(dec, pair.dist, p) : ap.mse();
    row["supported"] = true;
    row["moments"] = moments_json(moments(pair.dist, p));
    row["predicted_mse"] = predicted;
    row["asymptotic"] = {{"mu_sq_norm", ap.mu.squaredNorm()},
                         {"trace_M", ap.M_diag.sum()},
                         {"mse", ap.mse()}};
    // Asymptotic MSE of k^(beta/2)(theta_k - theta*) rescaled to k = K.
    row["predicted_mse_at_K"] = predicted * horizon;
    rows.push_back(row);
    out.predicted.emplace_back(pair.label(), predicted);
  }
  doc["pairs"] = rows;

  auto order = out.predicted;
  std::stable_sort(order.begin(), order.end(),
                   [](const auto& x, const auto& y) { return x.second < y.second; });
  Json ranking = Json::array();
  for (const auto& [label, v] : order) ranking.push_back(label);
  doc["predicted_ordering"] = ranking;
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw Error(ErrorKind::Io, "write failed for '" + path.string() + "'");
}

void write_outputs(const std::filesystem::path& dir,
                   const std::vector<std::pair<std::string, std::string>>& files) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create output directory '" + dir.string() + "'");
  for (const auto& [name, text] : files) write_file(dir / name, text);
}

void apply(ExperimentConfig& cfg, const CommandOptions& opts) {
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.parallel) cfg.parallel = *opts.parallel;
  if (opts.out) cfg.out = *opts.out;
  if (!opts.zstudy_p.empty()) cfg.zstudy_p = opts.zstudy_p;
  if (opts.zstudy_trials) cfg.zstudy_trials = *opts.zstudy_trials;
  if (opts.zstudy_a_range) cfg.zstudy_a_range = *opts.zstudy_a_range;
}

template <class Body>
int guarded(std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitGeneric;
  }
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

}  // namespace

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io:
      return kExitMissingFile;
    case ErrorKind::Config:
    case ErrorKind::InvalidArgument:
      return kExitSchema;
    case ErrorKind::InvalidPerturbation:
      return kExitInvalidPerturbation;
    case ErrorKind::InvalidGains:
      return kExitInvalidGains;
    case ErrorKind::RegimeRejected:
    case ErrorKind::NotDifferentiable:
      return kExitRegimeRejected;
  }
  return kExitGeneric;
}

std::string report_json(const ExperimentConfig& cfg, const TrialBattery& tb,
                        const MseReport& report) {
  Json doc;
  doc["config_hash"] = cfg.hash_hex();
  doc["config"] = config_json(cfg);

  const LossModel& loss = tb.loss;
  const Vector reference = tb.reference ? tb.reference->values() : loss.theta_star().values();
  doc["loss"] = {{"spec", loss.spec()},
                 {"dim", loss.dim()},
                 {"theta_star", vec_json(loss.theta_star().values())},
                 {"loss_star", loss.loss_star()},
                 {"mse_reference", vec_json(reference)}};
  const A1Check a1 = validate_a1(tb.gs);
  doc["a1"] = {{"satisfied", a1.satisfied}, {"diagnostic", a1.diagnostic}};

  Json theory;
  std::vector<std::pair<std::string, double>> predicted;
  try {
    TheoryBundle tbd = build_theory(cfg, loss, tb.pairs);
    theory = std::move(tbd.doc);
    predicted = std::move(tbd.predicted);
  } catch (const Error& e) {
    theory = {{"available", false}, {"reason", e.what()}};
  }

  Json pairs = Json::array();
  for (const PairReport& pr : report.pairs) {
    Json row;
    row["pair"] = pr.pair.spec();
    row["label"] = pr.pair.label();
    row["n_trials"] = pr.sq_errors.size();
    row["diverged"] = pr.diverged;
    row["mean_mse"] = pr.mean_mse;
    row["ci95"] = {pr.ci95.first, pr.ci95.second};
    row["mean_mse_vs_minimizer"] = pr.mean_mse_vs_minimizer;
    row["loss_evals"] = pr.loss_evals;
    const auto hit = std::find_if(predicted.begin(), predicted.end(),
                                  [&](const auto& e) { return e.first == pr.pair.label(); });
    row["predicted_mse"] = hit == predicted.end() ? Json() : Json(hit->second);
    // Non-finite entries (diverged trials) serialize as null.
    row["sq_errors"] = pr.sq_errors;
    pairs.push_back(row);
  }
  doc["pairs"] = pairs;

  Json tests = Json::array();
  for (std::size_t i = 0; i < report.pairs.size(); ++i) {
    for (std::size_t j = i + 1; j < report.pairs.size(); ++j) {
      std::vector<double> x, y;
      for (double v : report.pairs[i].sq_errors) if (std::isfinite(v)) x.push_back(v);
      for (double v : report.pairs[j].sq_errors) if (std::isfinite(v)) y.push_back(v);
      Json row;
      row["x"] = report.pairs[i].pair.label();
      row["y"] = report.pairs[j].pair.label();
      if (x.size() >= 2 && y.size() >= 2) {
        const WelchResult w = welch_t_test(x, y);
        row["t"] = w.t;
        row["dof"] = w.dof;
        row["p_value"] = w.p_value;
      } else {
        row["t"] = row["dof"] = row["p_value"] = nullptr;
      }
      tests.push_back(row);
    }
  }
  doc["welch"] = tests;
  doc["curve"] = {{"first_iteration", report.curve_start},
                  {"window", report.pairs.empty() ? 0 : report.pairs.front().curve.size()}};
  doc["theory"] = theory;
  return doc.dump(2) + "\n";
}

std::string curve_csv(const ExperimentConfig& cfg, const MseReport& report) {
  std::ostringstream os;
  os << "# config_hash=" << cfg.hash_hex() << '\n' << "iteration";
  for (const auto& pr : report.pairs) os << ',' << pr.pair.label();
  os << '\n';
  const std::size_t window = report.pairs.empty() ? 0 : report.pairs.front().curve.size();
  for (std::size_t w = 0; w < window; ++w) {
    os << report.curve_start + w;
    for (const auto& pr : report.pairs) os << ',' << format_double(pr.curve[w]);
    os << '\n';
  }
  return os.str();
}

std::string theory_json(const ExperimentConfig& cfg) {
  const LossModel loss = cfg.make_loss();
  Json doc;
  doc["config_hash"] = cfg.hash_hex();
  doc["config"] = config_json(cfg);
  doc["loss"] = {{"spec", loss.spec()},
                 {"dim", loss.dim()},
                 {"theta_star", vec_json(loss.theta_star().values())},
                 {"loss_star", loss.loss_star()}};
  const A1Check a1 = validate_a1(cfg.gains());
  doc["a1"] = {{"satisfied", a1.satisfied}, {"diagnostic", a1.diagnostic}};
  TheoryBundle tb = build_theory(cfg, loss, theory_pairs(cfg));
  for (auto& [k, v] : tb.doc.items()) doc[k] = v;
  return doc.dump(2) + "\n";
}

std::string grid_csv(const ExperimentConfig& cfg,
                     const std::vector<std::pair<MethodDist, GridResult>>& results) {
  std::ostringstream os;
  os << "# config_hash=" << cfg.hash_hex() << '\n' << "pair,a,c,mse,diverged\n";
  for (const auto& [pair, result] : results) {
    for (const GridPoint& gp : result.table) {
      os << pair.label() << ',' << format_double(gp.a) << ',' << format_double(gp.c) << ','
         << (std::isfinite(gp.mse) ? format_double(gp.mse) : "inf") << ',' << gp.diverged
         << '\n';
    }
  }
  return os.str();
}

std::string zstudy_json(const std::optional<std::string>& config_hash, std::uint64_t seed,
                        double a_range, const std::vector<ZStudy>& rows) {
  Json doc;
  doc["config_hash"] = config_hash ? Json(*config_hash) : Json();
  doc["seed"] = seed;
  doc["a_range"] = a_range;
  Json out = Json::array();
  for (const ZStudy& z : rows) {
    const double n = static_cast<double>(z.n_trials);
    out.push_back({{"p", z.p},
                   {"n_trials", z.n_trials},
                   {"count_leq_0", z.count_leq_0},
                   {"p_z_leq_0", z.p_z_leq_0},
                   {"binomial_se", std::sqrt(z.p_z_leq_0 * (1.0 - z.p_z_leq_0) / n)},
                   {"chebyshev_bound", z.chebyshev_bound},
                   {"chebyshev_bound_exact", z.chebyshev_bound_exact},
                   {"expected_z", z.expected_z},
                   {"variance_z", z.variance_z}});
  }
  doc["rows"] = out;
  return doc.dump(2) + "\n";
}

std::string moments_table(std::size_t p) {
  std::ostringstream os;
  os << "distribution                 phi      upsilon  xi^2     rho^2    (p = " << p << ")\n";
  const PerturbationDist rows[] = {PerturbationDist::gaussian(Family::RD),
                                   PerturbationDist::spherical(Family::RD),
                                   PerturbationDist::bernoulli(Family::SP),
                                   PerturbationDist::ushape(10, 1.17, Family::SP)};
  const auto cell = [](const std::optional<double>& v) {
    return pad(v ? fmt("%.4f", *v) : "-", 9);
  };
  for (const auto& dist : rows) {
    const MomentSet m = moments(dist, p);
    os << pad(dist.label(), 29) << cell(m.phi) << cell(m.upsilon) << cell(m.xi2) << cell(m.rho2)
       << '\n';
  }
  return os.str();
}

std::uint64_t zstudy_seed(std::uint64_t seed, std::size_t p) {
  return seed ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(p));
}

int cmd_run(const std::filesystem::path& config, const CommandOptions& opts, std::ostream& out,
            std::ostream& err) {
  return guarded(err, [&] {
    ExperimentConfig cfg = ExperimentConfig::load(config);
    apply(cfg, opts);
    const TrialBattery tb = cfg.battery();
    if (const A1Check a1 = validate_a1(tb.gs); !a1.satisfied) {
      err << "warning: " << a1.diagnostic << '\n';
    }
    const MseReport report = run_battery(tb, cfg.parallel);
    write_outputs(cfg.out, {{"report.json", report_json(cfg, tb, report)},
                            {"curve.csv", curve_csv(cfg, report)}});

    out << "config " << config.string() << "  hash " << cfg.hash_hex() << "  loss "
        << tb.loss.spec() << "  K=" << tb.iterations << "  trials=" << tb.n_trials << '\n';
    out << pad("distribution", 24) << pad("mean_mse", 14) << pad("ci95", 30) << "diverged\n";
    bool all_diverged = true;
    for (const auto& pr : report.pairs) {
      out << pad(pr.pair.label(), 24) << pad(fmt("%.6g", pr.mean_mse), 14)
          << pad("[" + fmt("%.6g", pr.ci95.first) + ", " + fmt("%.6g", pr.ci95.second) + "]", 30)
          << pr.diverged << '\n';
      all_diverged = all_diverged && pr.diverged == pr.sq_errors.size();
    }
    if (tb.reference) {
      out << "(mse measured against mse_reference; distance to the minimizer in report.json)\n";
    }
    out << "wrote " << (std::filesystem::path(cfg.out) / "report.json").string() << '\n';
    if (all_diverged) {
      err << "error: every trial of every pair hit the divergence guard\n";
      return static_cast<int>(kExitAllDiverged);
    }
    return static_cast<int>(kExitOk);
  });
}

int cmd_theory(const std::optional<std::filesystem::path>& config, const CommandOptions& opts,
               std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (opts.moments) {
      std::size_t p = opts.p.value_or(10);
      if (config && !opts.p) p = ExperimentConfig::load(*config).make_loss().dim();
      out << moments_table(p);
      return static_cast<int>(kExitOk);
    }
    if (!config) throw Error(ErrorKind::InvalidArgument, "theory needs a config file");
    ExperimentConfig cfg = ExperimentConfig::load(*config);
    apply(cfg, opts);
    const std::string text = theory_json(cfg);
    write_outputs(cfg.out, {{"theory.json", text}});

    const Json doc = Json::parse(text);
    out << "loss " << doc["loss"]["spec"].get<std::string>() << "  beta "
        << fmt("%.6g", doc["beta"].get<double>()) << "  biased regime "
        << (doc["biased_regime"].get<bool>() ? "yes" : "no") << '\n';
    const Json& d = doc["decomposition"];
    out << "Q1 " << fmt("%.6g", d["Q1"].get<double>()) << "  Q2 "
        << fmt("%.6g", d["Q2"].get<double>()) << "  D " << fmt("%.6g", d["D"].get<double>())
        << "  prop3 " << (doc["prop3"]["holds"].get<bool>() ? "holds" : "fails") << '\n';
    out << pad("distribution", 24) << "predicted asymptotic mse\n";
    for (const Json& row : doc["pairs"]) {
      out << pad(row["label"].get<std::string>(), 24)
          << (row["supported"].get<bool>() ? fmt("%.6g", row["predicted_mse"].get<double>())
                                           : std::string("n/a"))
          << '\n';
    }
    return static_cast<int>(kExitOk);
  });
}

int cmd_grid(const std::filesystem::path& config, const CommandOptions& opts, std::ostream& out,
             std::ostream& err) {
  return guarded(err, [&] {
    ExperimentConfig cfg = ExperimentConfig::load(config);
    apply(cfg, opts);
    const std::vector<MethodDist> pairs = cfg.method_pairs();
    // Validate everything before the first (long) search starts.
    cfg.make_loss();
    cfg.grid.a_values();
    cfg.grid.c_values();
    for (const auto& pair : pairs) check_method_dist(pair.method, pair.dist);

    std::vector<std::pair<MethodDist, GridResult>> results;
    for (const auto& pair : pairs) {
      const GridSearch gs = cfg.grid_search_for(pair);
      results.emplace_back(pair, grid_search(gs, cfg.parallel));
    }
    write_outputs(cfg.out, {{"grid.csv", grid_csv(cfg, results)}});
    out << pad("distribution", 24) << pad("a*", 8) << pad("c*", 8) << "mse\n";
    for (const auto& [pair, r] : results) {
      out << pad(pair.label(), 24) << pad(fmt("%.4g", r.a_best), 8) << pad(fmt("%.4g", r.c_best), 8)
          << fmt("%.6g", r.best_score) << '\n';
    }
    return static_cast<int>(kExitOk);
  });
}

int cmd_zstudy(const std::optional<std::filesystem::path>& config, const CommandOptions& opts,
               std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    ExperimentConfig cfg;
    std::optional<std::string> hash;
    if (config) cfg = ExperimentConfig::load(*config);
    apply(cfg, opts);
    if (config) hash = cfg.hash_hex();
    if (cfg.zstudy_p.empty()) throw Error(ErrorKind::Config, "zstudy needs at least one p");

    std::vector<ZStudy> rows;
    for (const std::size_t p : cfg.zstudy_p) {
      rows.push_back(z_study(p, cfg.zstudy_a_range, cfg.zstudy_trials, zstudy_seed(cfg.seed, p),
                             cfg.parallel));
    }
    write_outputs(cfg.out, {{"zstudy.json", zstudy_json(hash, cfg.seed, cfg.zstudy_a_range, rows)}});
    out << pad("p", 6) << pad("P(z<=0)", 12) << pad("binom se", 12) << "chebyshev bound\n";
    for (const ZStudy& z : rows) {
      const double se =
          std::sqrt(z.p_z_leq_0 * (1.0 - z.p_z_leq_0) / static_cast<double>(z.n_trials));
      out << pad(std::to_string(z.p), 6) << pad(fmt("%.5f", z.p_z_leq_0), 12)
          << pad(fmt("%.5f", se), 12) << fmt("%.5f", z.chebyshev_bound) << '\n';
    }
    return static_cast<int>(kExitOk);
  });
}

}  // namespace spsalab
