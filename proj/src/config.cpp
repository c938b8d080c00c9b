#include "spsalab/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace spsalab {

namespace {

std::string_view trim(std::string_view s) {
  const auto ws = [](char ch) { return ch == ' ' || ch == '\t' || ch == '\r'; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

struct Where {
  std::size_t line;
  std::string_view key;

  [[noreturn]] void fail(const std::string& why) const {
    throw Error(ErrorKind::Config,
                "line " + std::to_string(line) + ": key '" + std::string(key) + "': " + why);
  }
};

double to_double(std::string_view v, const Where& at) {
  v = trim(v);
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty()) {
    at.fail("expected a number, got '" + std::string(v) + "'");
  }
  if (!std::isfinite(out)) at.fail("value must be finite");
  return out;
}

std::uint64_t to_u64(std::string_view v, const Where& at) {
  v = trim(v);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty()) {
    at.fail("expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

std::size_t to_count(std::string_view v, const Where& at) {
  const std::uint64_t n = to_u64(v, at);
  if (n < 1) at.fail("must be >= 1");
  return static_cast<std::size_t>(n);
}

template <class F>
void for_each_item(std::string_view v, F&& f) {
  while (true) {
    const auto comma = v.find(',');
    f(trim(v.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
}

std::vector<double> to_list(std::string_view v, const Where& at) {
  std::vector<double> out;
  for_each_item(v, [&](std::string_view item) { out.push_back(to_double(item, at)); });
  return out;
}

template <class T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_floating_point_v<T>) {
      out += format_double(values[i]);
    } else {
      out += std::to_string(values[i]);
    }
  }
  return out;
}

using Setter = std::function<void(ExperimentConfig&, std::string_view, const Where&)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = [] {
    std::map<std::string, Setter, std::less<>> t;
    const auto real = [](double ExperimentConfig::*field) {
      return [field](ExperimentConfig& c, std::string_view v, const Where& at) {
        c.*field = to_double(v, at);
      };
    };
    const auto grid_real = [](double GridSpec::*field) {
      return [field](ExperimentConfig& c, std::string_view v, const Where& at) {
        c.grid.*field = to_double(v, at);
      };
    };
    const auto count = [](std::size_t ExperimentConfig::*field) {
      return [field](ExperimentConfig& c, std::string_view v, const Where& at) {
        c.*field = to_count(v, at);
      };
    };
    t["loss"] = [](ExperimentConfig& c, std::string_view v, const Where&) { c.loss = v; };
    t["noise_sigma2"] = [](ExperimentConfig& c, std::string_view v, const Where& at) {
      c.noise_sigma2 = to_double(v, at);
      if (c.noise_sigma2 < 0.0) at.fail("noise variance must be >= 0");
    };
    t["a"] = real(&ExperimentConfig::a);
    t["A"] = real(&ExperimentConfig::A);
    t["alpha"] = real(&ExperimentConfig::alpha);
    t["c"] = real(&ExperimentConfig::c);
    t["gamma"] = real(&ExperimentConfig::gamma);
    t["theta0"] = [](ExperimentConfig& c, std::string_view v, const Where& at) {
      c.theta0 = to_list(v, at);
    };
    t["mse_reference"] = [](ExperimentConfig& c, std::string_view v, const Where& at) {
      c.mse_reference = to_list(v, at);
    };
    t["iterations"] = count(&ExperimentConfig::iterations);
    t["trials"] = count(&ExperimentConfig::trials);
    t["seed"] = [](ExperimentConfig& c, std::string_view v, const Where& at) {
      c.seed = to_u64(v, at);
    };
    t["parallel"] = [](ExperimentConfig& c, std::string_view v, const Where& at) {
      const std::uint64_t n = to_u64(v, at);
      if (n < 1 || n > 4096) at.fail("must lie in [1, 4096]");
      c.parallel = static_cast<unsigned>(n);
    };
    t["out"] = [](ExperimentConfig& c, std::string_view v, const Where&) { c.out = v; };
    t["pair"] = [](ExperimentConfig& c, std::string_view v, const Where&) {
      c.pairs.emplace_back(v);
    };
    t["curve_window"] = [](ExperimentConfig& c, std::string_view v, const Where& at) {
      c.curve_window = static_cast<std::size_t>(to_u64(v, at));
    };
    t["divergence_bound"] = [](ExperimentConfig& c, std::string_view v, const Where& at) {
      c.divergence_bound = to_double(v, at);
      if (!(c.divergence_bound > 0.0)) at.fail("must be > 0");
    };
    t["grid_a_min"] = grid_real(&GridSpec::a_min);
    t["grid_a_max"] = grid_real(&GridSpec::a_max);
    t["grid_a_step"] = grid_real(&GridSpec::a_step);
    t["grid_c_min"] = grid_real(&GridSpec::c_min);
    t["grid_c_max"] = grid_real(&GridSpec::c_max);
    t["grid_c_step"] = grid_real(&GridSpec::c_step);
    t["grid_trials"] = count(&ExperimentConfig::grid_trials);
    t["zstudy_p"] = [](ExperimentConfig& c, std::string_view v, const Where& at) {
      c.zstudy_p.clear();
      for_each_item(v, [&](std::string_view item) { c.zstudy_p.push_back(to_count(item, at)); });
    };
    t["zstudy_trials"] = count(&ExperimentConfig::zstudy_trials);
    t["zstudy_a_range"] = [](ExperimentConfig& c, std::string_view v, const Where& at) {
      c.zstudy_a_range = to_double(v, at);
      if (!(c.zstudy_a_range > 0.0)) at.fail("must be > 0");
    };
    return t;
  }();
  return table;
}

std::string serialize_impl(const ExperimentConfig& c, bool with_runtime) {
  std::ostringstream os;
  const auto kv = [&](std::string_view key, const std::string& value) {
    os << key << " = " << value << '\n';
  };
  kv("loss", c.loss);
  kv("noise_sigma2", format_double(c.noise_sigma2));
  kv("a", format_double(c.a));
  kv("A", format_double(c.A));
  kv("alpha", format_double(c.alpha));
  kv("c", format_double(c.c));
  kv("gamma", format_double(c.gamma));
  kv("theta0", join(c.theta0));
  if (!c.mse_reference.empty()) kv("mse_reference", join(c.mse_reference));
  kv("iterations", std::to_string(c.iterations));
  kv("trials", std::to_string(c.trials));
  kv("seed", std::to_string(c.seed));
  if (with_runtime) {
    kv("parallel", std::to_string(c.parallel));
    kv("out", c.out);
  }
  for (const auto& p : c.pairs) kv("pair", p);
  kv("curve_window", std::to_string(c.curve_window));
  kv("divergence_bound", format_double(c.divergence_bound));
  kv("grid_a_min", format_double(c.grid.a_min));
  kv("grid_a_max", format_double(c.grid.a_max));
  kv("grid_a_step", format_double(c.grid.a_step));
  kv("grid_c_min", format_double(c.grid.c_min));
  kv("grid_c_max", format_double(c.grid.c_max));
  kv("grid_c_step", format_double(c.grid.c_step));
  kv("grid_trials", std::to_string(c.grid_trials));
  kv("zstudy_p", join(c.zstudy_p));
  kv("zstudy_trials", std::to_string(c.zstudy_trials));
  kv("zstudy_a_range", format_double(c.zstudy_a_range));
  return os.str();
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

ExperimentConfig ExperimentConfig::parse(std::string_view text) {
  ExperimentConfig cfg;
  std::set<std::string, std::less<>> seen;
  bool pairs_reset = false;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorKind::Config, "line " + std::to_string(line_no) + ": expected 'key = value', got '" +
                                         std::string(line) + "'");
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    const Where at{line_no, key};
    const auto it = setters().find(key);
    if (it == setters().end()) at.fail("unknown key");
    if (value.empty()) at.fail("missing value");
    if (key == "pair") {
      if (!pairs_reset) {
        cfg.pairs.clear();
        pairs_reset = true;
      }
    } else if (!seen.insert(std::string(key)).second) {
      at.fail("duplicate key");
    }
    it->second(cfg, value, at);
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read config file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse(buf.str());
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

std::string ExperimentConfig::serialize() const { return serialize_impl(*this, true); }

std::uint64_t ExperimentConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const unsigned char ch : serialize_impl(*this, false)) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string ExperimentConfig::hash_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
  return buf;
}

LossModel ExperimentConfig::make_loss() const {
  const NoiseModel noise =
      noise_sigma2 > 0.0 ? NoiseModel::gaussian(noise_sigma2) : NoiseModel::none();
  return LossModel::parse(loss, noise);
}

GainSequence ExperimentConfig::gains() const {
  GainSequence gs{a, A, alpha, c, gamma};
  gs.validate();
  return gs;
}

ParamVector ExperimentConfig::theta0_for(std::size_t p) const {
  if (theta0.size() == 1) return ParamVector::constant(p, theta0.front());
  if (theta0.size() != p) {
    throw Error(ErrorKind::Config, "theta0 has " + std::to_string(theta0.size()) +
                                       " entries but the loss dimension is " + std::to_string(p));
  }
  return ParamVector(theta0);
}

std::optional<ParamVector> ExperimentConfig::reference_for(std::size_t p) const {
  if (mse_reference.empty()) return std::nullopt;
  if (mse_reference.size() == 1) return ParamVector::constant(p, mse_reference.front());
  if (mse_reference.size() != p) {
    throw Error(ErrorKind::Config, "mse_reference has " + std::to_string(mse_reference.size()) +
                                       " entries but the loss dimension is " + std::to_string(p));
  }
  return ParamVector(mse_reference);
}

std::vector<MethodDist> ExperimentConfig::method_pairs() const {
  if (pairs.empty()) throw Error(ErrorKind::Config, "config lists no 'pair' entries");
  std::vector<MethodDist> out;
  out.reserve(pairs.size());
  for (const auto& text : pairs) out.push_back(MethodDist::parse(text));
  return out;
}

TrialBattery ExperimentConfig::battery() const {
  LossModel lm = make_loss();
  const std::size_t p = lm.dim();
  TrialBattery tb{std::move(lm), method_pairs(), gains(), theta0_for(p)};
  tb.iterations = iterations;
  tb.n_trials = trials;
  tb.base_seed = seed;
  tb.curve_window = curve_window;
  tb.reference = reference_for(p);
  tb.divergence_bound = divergence_bound;
  return tb;
}

GridSearch ExperimentConfig::grid_search_for(const MethodDist& pair) const {
  LossModel lm = make_loss();
  const std::size_t p = lm.dim();
  GridSearch gs{std::move(lm), pair, grid, A, alpha, gamma, theta0_for(p)};
  gs.trials_per_point = grid_trials;
  gs.iterations = iterations;
  gs.base_seed = seed;
  gs.reference = reference_for(p);
  gs.divergence_bound = divergence_bound;
  return gs;
}

}  // namespace spsalab
