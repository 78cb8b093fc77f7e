#pragma once

// Experiment harness: configuration parsing and validation, single runs and
// seed sweeps with trajectory CSV / JSON report output, and the eps-scaling
// study.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <exception>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "psca/certify.hpp"
#include "psca/drivers.hpp"
#include "psca/errors.hpp"
#include "psca/params.hpp"
#include "psca/registry.hpp"
#include "psca/surrogates.hpp"

namespace psca {

using json = nlohmann::json;

enum class Algo { sca, psca, gd, pgd };

inline std::string to_string(Algo a) {
  switch (a) {
    case Algo::sca: return "sca";
    case Algo::psca: return "psca";
    case Algo::gd: return "gd";
    case Algo::pgd: return "pgd";
  }
  return "unknown";
}

inline std::optional<Algo> algo_from_string(const std::string& s) {
  for (Algo a : {Algo::sca, Algo::psca, Algo::gd, Algo::pgd})
    if (to_string(a) == s) return a;
  return std::nullopt;
}

inline bool is_perturbed(Algo a) { return a == Algo::psca || a == Algo::pgd; }

inline const char* kOutDirEnv = "PSCA_OUT_DIR";

inline std::string default_out_dir() {
  const char* env = std::getenv(kOutDirEnv);
  return env && *env ? std::string(env) : std::string("psca_out");
}

struct ExperimentConfig {
  std::string problem = "saddle_quartic:d=2";
  Algo algo = Algo::psca;
  SurrogateKind surrogate = SurrogateKind::proximal_linear;
  double C = 1.0;
  double inner_tol = 1e-10;
  int inner_max_iters = 100000;
  bool dense_solve = false;
  double eps = 1e-2;
  double delta = 0.1;
  double c = 1.0;
  double s = 0.5;
  std::optional<double> delta_U;
  std::optional<double> eta;  // sca/gd only; defaults to c/L1
  WindowRule window_rule = WindowRule::proof;
  std::uint64_t seed = 0;
  std::optional<int> seeds;
  long long max_iters = 100000;
  /// Radius of a seeded uniform-ball offset added to the canonical start.
  double start_radius = 0.0;
  std::string out_dir = default_out_dir();
  std::optional<int> record_eigen_every;

  SurrogateSpec surrogate_spec() const {
    SurrogateSpec spec;
    spec.kind = surrogate;
    spec.C = C;
    spec.inner_tol = inner_tol;
    spec.inner_max_iters = inner_max_iters;
    spec.dense_solve = dense_solve;
    return spec;
  }
};

inline json to_json(const ExperimentConfig& c) {
  json j;
  j["problem"] = c.problem;
  j["algo"] = to_string(c.algo);
  j["surrogate"] = to_string(c.surrogate);
  j["C"] = c.C;
  j["inner_tol"] = c.inner_tol;
  j["inner_max_iters"] = c.inner_max_iters;
  j["dense_solve"] = c.dense_solve;
  j["eps"] = c.eps;
  j["delta"] = c.delta;
  j["c"] = c.c;
  j["s"] = c.s;
  j["delta_U"] = c.delta_U ? json(*c.delta_U) : json(nullptr);
  j["eta"] = c.eta ? json(*c.eta) : json(nullptr);
  j["window_rule"] = c.window_rule == WindowRule::proof ? "proof" : "algorithm";
  j["seed"] = c.seed;
  j["seeds"] = c.seeds ? json(*c.seeds) : json(nullptr);
  j["max_iters"] = c.max_iters;
  j["start_radius"] = c.start_radius;
  j["out_dir"] = c.out_dir;
  j["record_eigen_every"] =
      c.record_eigen_every ? json(*c.record_eigen_every) : json(nullptr);
  return j;
}

inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  c.problem = j.at("problem").get<std::string>();
  c.algo = algo_from_string(j.at("algo").get<std::string>()).value();
  c.surrogate = surrogate_kind_from_string(j.at("surrogate").get<std::string>());
  c.C = j.at("C").get<double>();
  c.inner_tol = j.at("inner_tol").get<double>();
  c.inner_max_iters = j.at("inner_max_iters").get<int>();
  c.dense_solve = j.at("dense_solve").get<bool>();
  c.eps = j.at("eps").get<double>();
  c.delta = j.at("delta").get<double>();
  c.c = j.at("c").get<double>();
  c.s = j.at("s").get<double>();
  if (!j.at("delta_U").is_null()) c.delta_U = j.at("delta_U").get<double>();
  if (!j.at("eta").is_null()) c.eta = j.at("eta").get<double>();
  c.window_rule =
      j.at("window_rule").get<std::string>() == "proof" ? WindowRule::proof
                                                        : WindowRule::algorithm;
  c.seed = j.at("seed").get<std::uint64_t>();
  if (!j.at("seeds").is_null()) c.seeds = j.at("seeds").get<int>();
  c.max_iters = j.at("max_iters").get<long long>();
  c.start_radius = j.at("start_radius").get<double>();
  c.out_dir = j.at("out_dir").get<std::string>();
  if (!j.at("record_eigen_every").is_null())
    c.record_eigen_every = j.at("record_eigen_every").get<int>();
  return c;
}

/// Every violated precondition of `cfg`, each naming the failing inequality.
inline std::vector<std::string> validate_config(const ExperimentConfig& cfg) {
  std::vector<std::string> v;
  std::optional<ProblemInstance> prob;
  try {
    prob = make_problem(cfg.problem);
  } catch (const Error& e) {
    v.push_back(std::string("problem: ") + e.what());
  }

  if (!(cfg.C > 0.0)) v.push_back("C must satisfy C > 0");
  if (!(cfg.inner_tol > 0.0)) v.push_back("inner_tol must satisfy inner_tol > 0");
  if (cfg.inner_max_iters < 1) v.push_back("inner_max_iters must be >= 1");
  if (!(cfg.delta > 0.0 && cfg.delta < 1.0))
    v.push_back("delta must satisfy 0 < delta < 1");
  if (!(cfg.c > 0.0 && cfg.c <= 1.0)) v.push_back("c must satisfy 0 < c <= 1");
  if (!(cfg.s > 0.0 && cfg.s < 1.0)) v.push_back("s must satisfy 0 < s < 1");
  if (cfg.max_iters < 1) v.push_back("max_iters must be >= 1");
  if (cfg.seeds && *cfg.seeds < 1) v.push_back("seeds must be >= 1");
  if (cfg.record_eigen_every && *cfg.record_eigen_every < 1)
    v.push_back("record_eigen_every must be >= 1");
  if (!(cfg.start_radius >= 0.0)) v.push_back("start_radius must be >= 0");
  if (cfg.delta_U && !(*cfg.delta_U > 0.0))
    v.push_back("delta_U must satisfy delta_U > 0");

  if (prob) {
    const Objective& o = prob->objective;
    const double bound = o.constants.L1 * o.constants.L1 / o.constants.L2;
    if (!(cfg.eps > 0.0 && cfg.eps <= bound))
      v.push_back("eps must satisfy 0 < eps <= L1^2/L2 (L1^2/L2 = " +
                  detail::fmt(bound) + ")");
    if (cfg.surrogate == SurrogateKind::quadratic_split && !o.has_dense_hessian())
      v.push_back("surrogate quadratic_split needs a dense Hessian");
    if (cfg.surrogate == SurrogateKind::custom)
      v.push_back("surrogate custom is only available through the library API");
    if (is_perturbed(cfg.algo) && !cfg.delta_U && !o.f_star)
      v.push_back("delta_U must be supplied: U* is unknown for " + cfg.problem +
                  " (Delta_U >= U(x0) - U*)");
    if (cfg.algo == Algo::sca || cfg.algo == Algo::gd) {
      const double eta = cfg.eta.value_or(cfg.c / o.constants.L1);
      const double C = cfg.algo == Algo::gd ? 1.0 : cfg.C;
      if (!(eta > 0.0 && eta <= 1.0)) v.push_back("eta must satisfy 0 < eta <= 1");
      if (!(eta < 2.0 * C / o.constants.L1))
        v.push_back("eta must satisfy eta < 2C/L1 (2C/L1 = " +
                    detail::fmt(2.0 * C / o.constants.L1) + ")");
    }
  }
  return v;
}

struct ParsedConfig {
  ExperimentConfig config;
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

/// Parses `--flag value` pairs (flags as in the CLI `run` subcommand) and
/// validates the result, collecting every violation.
inline ParsedConfig parse_config(const std::vector<std::string>& args) {
  ParsedConfig out;
  ExperimentConfig& c = out.config;
  auto& v = out.violations;

  auto num = [&](const std::string& flag, const std::string& text, auto& dst) {
    using T = std::decay_t<decltype(dst)>;
    try {
      std::size_t used = 0;
      T val{};
      if constexpr (std::is_same_v<T, double>) val = std::stod(text, &used);
      else if constexpr (std::is_same_v<T, std::uint64_t>) val = std::stoull(text, &used);
      else if constexpr (std::is_same_v<T, long long>) val = std::stoll(text, &used);
      else val = static_cast<T>(std::stoi(text, &used));
      if (used != text.size()) throw std::invalid_argument(text);
      dst = val;
    } catch (const std::exception&) {
      v.push_back(flag + ": cannot parse '" + text + "' as a number");
    }
  };

  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& flag = args[i];
    if (flag == "--dense-solve") {
      c.dense_solve = true;
      continue;
    }
    if (flag.rfind("--", 0) != 0) {
      v.push_back("unexpected argument '" + flag + "'");
      continue;
    }
    if (i + 1 >= args.size()) {
      v.push_back(flag + ": missing value");
      break;
    }
    const std::string& val = args[++i];
    if (flag == "--problem") c.problem = val;
    else if (flag == "--algo") {
      if (auto a = algo_from_string(val)) c.algo = *a;
      else v.push_back("algo: unknown algorithm '" + val + "' (sca|psca|gd|pgd)");
    } else if (flag == "--surrogate") {
      try {
        c.surrogate = surrogate_kind_from_string(val);
      } catch (const Error& e) {
        v.push_back(std::string("surrogate: ") + e.what());
      }
    } else if (flag == "--window-rule") {
      if (val == "proof") c.window_rule = WindowRule::proof;
      else if (val == "algorithm") c.window_rule = WindowRule::algorithm;
      else v.push_back("window-rule: expected proof|algorithm");
    } else if (flag == "--C") num(flag, val, c.C);
    else if (flag == "--inner-tol") num(flag, val, c.inner_tol);
    else if (flag == "--inner-max-iters") num(flag, val, c.inner_max_iters);
    else if (flag == "--eps") num(flag, val, c.eps);
    else if (flag == "--delta") num(flag, val, c.delta);
    else if (flag == "--c") num(flag, val, c.c);
    else if (flag == "--s") num(flag, val, c.s);
    else if (flag == "--delta-u") { double d = 0; num(flag, val, d); c.delta_U = d; }
    else if (flag == "--eta") { double d = 0; num(flag, val, d); c.eta = d; }
    else if (flag == "--seed") num(flag, val, c.seed);
    else if (flag == "--seeds") { int n = 0; num(flag, val, n); c.seeds = n; }
    else if (flag == "--max-iters") num(flag, val, c.max_iters);
    else if (flag == "--start-radius") num(flag, val, c.start_radius);
    else if (flag == "--out-dir") c.out_dir = val;
    else if (flag == "--record-eigen-every") { int n = 0; num(flag, val, n); c.record_eigen_every = n; }
    else v.push_back("unknown flag '" + flag + "'");
  }
  for (auto& msg : validate_config(c)) v.push_back(std::move(msg));
  return out;
}

/// Shortest round-trip representation of a double, as %.17g.
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline const char* kCsvHeader =
    "t,f,grad_norm,step_norm,err_norm,perturbed,inner_iters,event";

inline std::string trajectory_csv(const RunResult& r) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const IterateRecord& rec : r.records) {
    out += std::to_string(rec.t) + ',' + format_double(rec.f) + ',' +
           format_double(rec.grad_norm) + ',' + format_double(rec.step_norm) + ',' +
           format_double(rec.err_norm) + ',' + (rec.perturbed ? "1" : "0") + ',' +
           std::to_string(rec.inner_iters) + ',' + rec.event + "\n";
  }
  return out;
}

struct TrajectoryRow {
  long long t = 0;
  double f = 0.0, grad_norm = 0.0, step_norm = 0.0, err_norm = 0.0;
  bool perturbed = false;
  int inner_iters = 0;
  std::string event;
};

inline std::vector<TrajectoryRow> parse_trajectory_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader)
    throw InvalidArgument("trajectory CSV: unexpected header");
  std::vector<TrajectoryRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 8) throw InvalidArgument("trajectory CSV: bad row '" + line + "'");
    TrajectoryRow r;
    r.t = std::stoll(cells[0]);
    r.f = std::stod(cells[1]);
    r.grad_norm = std::stod(cells[2]);
    r.step_norm = std::stod(cells[3]);
    r.err_norm = std::stod(cells[4]);
    r.perturbed = cells[5] == "1";
    r.inner_iters = std::stoi(cells[6]);
    r.event = cells[7];
    rows.push_back(std::move(r));
  }
  return rows;
}

struct Report {
  json config;
  std::string problem;
  std::string algo;
  std::uint64_t seed = 0;
  std::string status = "ok";  // ok | error
  std::string error;
  std::string termination;
  long long perturbation_count = 0;
  long long iterations = 0;
  double f_out = 0.0;
  double f_final = 0.0;
  std::vector<double> x_out;
  std::optional<Certificate> certificate;
  std::optional<PscaParams> params;
  std::optional<DiagnosticScales> scales;
  long long descent_checks = 0;
  long long descent_passed = 0;
  long long descent_passed_non_perturbed = 0;
  long long non_perturbed_steps = 0;
  double max_err_norm = 0.0;
  std::vector<std::string> warnings;
  double wall_time_ms = 0.0;
};

namespace detail {

inline json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
inline std::optional<double> opt_double(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace detail

inline json to_json(const Report& r) {
  json j;
  j["config"] = r.config;
  j["problem"] = r.problem;
  j["algo"] = r.algo;
  j["seed"] = r.seed;
  j["status"] = r.status;
  j["error"] = r.error;
  j["termination"] = r.termination;
  j["perturbation_count"] = r.perturbation_count;
  j["iterations"] = r.iterations;
  j["f_out"] = r.f_out;
  j["f_final"] = r.f_final;
  j["x_out"] = r.x_out;
  if (r.certificate) {
    const Certificate& c = *r.certificate;
    j["certificate"] = {
        {"grad_norm", c.grad_norm},
        {"lambda_min", detail::opt(c.lambda_min)},
        {"lambda_min_residual", c.lambda_min_residual},
        {"eps", c.eps},
        {"gamma", c.gamma},
        {"classification", to_string(c.classification)},
        {"method", c.method ? json(to_string(*c.method)) : json(nullptr)}};
  } else {
    j["certificate"] = nullptr;
  }
  if (r.params) {
    const PscaParams& p = *r.params;
    j["params"] = {{"eps", p.eps},     {"delta", p.delta}, {"c", p.c},
                   {"s", p.s},         {"delta_U", p.delta_U},
                   {"chi", p.chi},     {"eta", p.eta},     {"r", p.r},
                   {"g_th", p.g_th},   {"f_th", p.f_th},   {"t_th", p.t_th},
                   {"max_iters", p.max_iters},
                   {"window_rule", p.window_rule == WindowRule::proof ? "proof" : "algorithm"},
                   {"dim", p.dim},     {"L1", p.L1},       {"L2", p.L2}};
  } else {
    j["params"] = nullptr;
  }
  if (r.scales) {
    const DiagnosticScales& s = *r.scales;
    j["scales"] = {{"gamma", s.gamma},         {"kappa", s.kappa},
                   {"F", s.F},                 {"G", s.G},
                   {"scriptL", s.scriptL},     {"scriptT", s.scriptT},
                   {"D", detail::opt(s.D)},
                   {"c_rule_residual", detail::opt(s.c_rule_residual)}};
  } else {
    j["scales"] = nullptr;
  }
  j["descent"] = {{"checks", r.descent_checks},
                  {"passed", r.descent_passed},
                  {"non_perturbed_steps", r.non_perturbed_steps},
                  {"passed_non_perturbed", r.descent_passed_non_perturbed}};
  j["max_err_norm"] = r.max_err_norm;
  j["warnings"] = r.warnings;
  j["wall_time_ms"] = r.wall_time_ms;
  return j;
}

inline Report report_from_json(const json& j) {
  Report r;
  r.config = j.at("config");
  r.problem = j.at("problem").get<std::string>();
  r.algo = j.at("algo").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.status = j.at("status").get<std::string>();
  r.error = j.at("error").get<std::string>();
  r.termination = j.at("termination").get<std::string>();
  r.perturbation_count = j.at("perturbation_count").get<long long>();
  r.iterations = j.at("iterations").get<long long>();
  r.f_out = j.at("f_out").get<double>();
  r.f_final = j.at("f_final").get<double>();
  r.x_out = j.at("x_out").get<std::vector<double>>();
  if (const json& c = j.at("certificate"); !c.is_null()) {
    Certificate cert;
    cert.grad_norm = c.at("grad_norm").get<double>();
    cert.lambda_min = detail::opt_double(c.at("lambda_min"));
    cert.lambda_min_residual = c.at("lambda_min_residual").get<double>();
    cert.eps = c.at("eps").get<double>();
    cert.gamma = c.at("gamma").get<double>();
    cert.classification =
        classification_from_string(c.at("classification").get<std::string>());
    if (!c.at("method").is_null())
      cert.method = eigen_method_from_string(c.at("method").get<std::string>());
    r.certificate = cert;
  }
  if (const json& p = j.at("params"); !p.is_null()) {
    PscaParams q;
    q.eps = p.at("eps").get<double>();
    q.delta = p.at("delta").get<double>();
    q.c = p.at("c").get<double>();
    q.s = p.at("s").get<double>();
    q.delta_U = p.at("delta_U").get<double>();
    q.chi = p.at("chi").get<double>();
    q.eta = p.at("eta").get<double>();
    q.r = p.at("r").get<double>();
    q.g_th = p.at("g_th").get<double>();
    q.f_th = p.at("f_th").get<double>();
    q.t_th = p.at("t_th").get<long long>();
    q.max_iters = p.at("max_iters").get<long long>();
    q.window_rule = p.at("window_rule").get<std::string>() == "proof"
                        ? WindowRule::proof
                        : WindowRule::algorithm;
    q.dim = p.at("dim").get<int>();
    q.L1 = p.at("L1").get<double>();
    q.L2 = p.at("L2").get<double>();
    r.params = q;
  }
  if (const json& s = j.at("scales"); !s.is_null()) {
    DiagnosticScales d;
    d.gamma = s.at("gamma").get<double>();
    d.kappa = s.at("kappa").get<double>();
    d.F = s.at("F").get<double>();
    d.G = s.at("G").get<double>();
    d.scriptL = s.at("scriptL").get<double>();
    d.scriptT = s.at("scriptT").get<double>();
    d.D = detail::opt_double(s.at("D"));
    d.c_rule_residual = detail::opt_double(s.at("c_rule_residual"));
    r.scales = d;
  }
  const json& d = j.at("descent");
  r.descent_checks = d.at("checks").get<long long>();
  r.descent_passed = d.at("passed").get<long long>();
  r.non_perturbed_steps = d.at("non_perturbed_steps").get<long long>();
  r.descent_passed_non_perturbed = d.at("passed_non_perturbed").get<long long>();
  r.max_err_norm = j.at("max_err_norm").get<double>();
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  r.wall_time_ms = j.at("wall_time_ms").get<double>();
  return r;
}

struct EigenLogEntry {
  long long t = 0;
  double lambda_min = 0.0;
};

struct RunArtifacts {
  std::optional<RunResult> result;
  Report report;
  std::vector<EigenLogEntry> eigen_log;
  bool ok() const { return report.status == "ok"; }
};

/// Start point for a given seed: canonical start plus a seeded uniform-ball
/// offset of radius cfg.start_radius (drawn from a substream, so the
/// perturbation stream of the run itself is untouched).
inline Vector start_point(const ProblemInstance& p, double start_radius,
                          std::uint64_t seed) {
  Vector x0 = p.canonical_start;
  if (start_radius > 0.0) {
    RngStream rng = RngStream(seed).substream(0xA11CE);
    x0 += sample_uniform_ball(p.objective.dim, start_radius, rng);
  }
  return x0;
}

/// Params for the perturbed drivers (and the diagnostic scales of all
/// drivers). Delta_U defaults to U(x0) - U* when U* is known.
inline std::optional<PscaParams> params_for(const ExperimentConfig& cfg,
                                            const ProblemInstance& p,
                                            const Vector& x0) {
  const Objective& o = p.objective;
  std::optional<double> dU = cfg.delta_U;
  if (!dU && o.f_star) {
    const double gap = o.value(x0) - *o.f_star;
    if (gap > 0.0) dU = gap;
  }
  if (!dU) {
    if (is_perturbed(cfg.algo))
      throw InvalidArgument("delta_U must be supplied (U* unknown or U(x0) = U*)");
    return std::nullopt;
  }
  return derive_params(cfg.eps, cfg.delta, cfg.c, cfg.s, *dU, o, cfg.max_iters,
                       cfg.window_rule);
}

/// One run of `cfg` with the given seed. Never throws for driver errors;
/// they are reported with status "error" and a partial report.
inline RunArtifacts run_single(const ExperimentConfig& cfg, std::uint64_t seed,
                               const RunHooks& extra_hooks = {}) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  RunArtifacts art;
  Report& rep = art.report;
  ExperimentConfig echo = cfg;
  echo.seed = seed;
  rep.config = to_json(echo);
  rep.problem = cfg.problem;
  rep.algo = to_string(cfg.algo);
  rep.seed = seed;

  try {
    const ProblemInstance p = make_problem(cfg.problem);
    const Objective& o = p.objective;
    const Vector x0 = start_point(p, cfg.start_radius, seed);
    const SurrogateSpec spec = cfg.surrogate_spec();
    rep.params = params_for(cfg, p, x0);
    if (rep.params) {
      const double C = (cfg.algo == Algo::gd || cfg.algo == Algo::pgd) ? 1.0 : cfg.C;
      rep.scales = derive_scales(*rep.params, o, C);
    }

    RunHooks hooks = extra_hooks;
    if (cfg.record_eigen_every) {
      const int every = *cfg.record_eigen_every;
      auto user = extra_hooks.observer;
      hooks.observer = [&, every, user](long long t, const Vector& x) {
        if (user) user(t, x);
        if (t % every == 0)
          art.eigen_log.push_back({t, min_eigenvalue(o, x).lambda});
      };
    }

    RngStream rng(seed);
    RunResult res;
    switch (cfg.algo) {
      case Algo::sca:
        res = run_sca(o, spec, cfg.eta.value_or(cfg.c / o.constants.L1), cfg.eps,
                      cfg.max_iters, x0, hooks);
        break;
      case Algo::gd:
        res = run_gd(o, cfg.eta.value_or(cfg.c / o.constants.L1), cfg.eps,
                     cfg.max_iters, x0, hooks);
        break;
      case Algo::psca:
        res = run_psca(o, spec, *rep.params, x0, rng, hooks);
        break;
      case Algo::pgd:
        res = run_pgd(o, *rep.params, x0, rng, hooks);
        break;
    }
    res.seed = seed;

    rep.termination = to_string(res.termination);
    rep.perturbation_count = res.perturbation_count;
    rep.iterations = res.iterations();
    rep.f_out = res.f_out;
    rep.f_final = res.f_final();
    rep.x_out.assign(res.x_out.data(), res.x_out.data() + res.x_out.size());
    rep.warnings = res.warnings;
    for (const IterateRecord& rec : res.records) {
      rep.max_err_norm = std::max(rep.max_err_norm, rec.err_norm);
      if (&rec == &res.records.back() && res.termination != Termination::left_valid_region)
        break;  // terminal row carries no step
      if (!rec.perturbed) ++rep.non_perturbed_steps;
      if (rec.descent_ok) {
        ++rep.descent_checks;
        if (*rec.descent_ok) {
          ++rep.descent_passed;
          if (!rec.perturbed) ++rep.descent_passed_non_perturbed;
        }
      }
    }
    if (res.termination == Termination::left_valid_region) {
      rep.status = "error";
      rep.error = res.diagnostic;
    } else {
      rep.certificate = certify_run(o, res, cfg.eps);
    }
    art.result = std::move(res);
  } catch (const std::exception& e) {
    rep.status = "error";
    rep.error = e.what();
  }
  rep.wall_time_ms =
      std::chrono::duration<double, std::milli>(clock::now() - t0).count();
  return art;
}

/// Clopper-Pearson interval for k successes out of n at the given level.
inline std::pair<double, double> binomial_ci(long long k, long long n,
                                             double level = 0.95) {
  if (n <= 0 || k < 0 || k > n) throw InvalidArgument("binomial_ci: need 0 <= k <= n, n >= 1");
  const double alpha = 1.0 - level;
  using boost::math::beta_distribution;
  const double lo =
      k == 0 ? 0.0
             : quantile(beta_distribution<double>(double(k), double(n - k + 1)), alpha / 2);
  const double hi =
      k == n ? 1.0
             : quantile(beta_distribution<double>(double(k + 1), double(n - k)),
                        1.0 - alpha / 2);
  return {lo, hi};
}

/// Runs fn(i) for i in [0, n) on up to hardware_concurrency workers. The
/// first exception thrown by any fn(i) is rethrown after all workers finish.
template <typename Fn>
void parallel_for(int n, Fn&& fn) {
  const int workers =
      std::max(1, std::min<int>(n, static_cast<int>(std::thread::hardware_concurrency())));
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first;
  std::mutex mu;
  {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (int i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(mu);
            if (!first) first = std::current_exception();
          }
        }
      });
  }
  if (first) std::rethrow_exception(first);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

inline std::string run_stem(const ExperimentConfig& cfg, std::uint64_t seed) {
  return to_string(cfg.algo) + "_seed" + std::to_string(seed);
}

inline void write_artifacts(const ExperimentConfig& cfg, const RunArtifacts& art) {
  namespace fs = std::filesystem;
  const fs::path dir(cfg.out_dir);
  const std::string stem = run_stem(cfg, art.report.seed);
  if (art.result) write_text(dir / (stem + ".csv"), trajectory_csv(*art.result));
  write_text(dir / (stem + ".report.json"), to_json(art.report).dump(2) + "\n");
  if (cfg.record_eigen_every) {
    std::string eig = "t,lambda_min\n";
    for (const auto& e : art.eigen_log)
      eig += std::to_string(e.t) + ',' + format_double(e.lambda_min) + "\n";
    write_text(dir / (stem + ".eigen.csv"), eig);
  }
}

struct SweepSummary {
  int runs = 0;
  int errors = 0;
  int successes = 0;  // certified eps_sosp
  double success_rate = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::vector<Report> reports;
};

inline json to_json(const SweepSummary& s) {
  json runs = json::array();
  for (const Report& r : s.reports)
    runs.push_back({{"seed", r.seed},
                    {"status", r.status},
                    {"termination", r.termination},
                    {"iterations", r.iterations},
                    {"f_out", r.f_out},
                    {"classification", r.certificate
                                           ? json(to_string(r.certificate->classification))
                                           : json(nullptr)}});
  return {{"runs", s.runs},          {"errors", s.errors},
          {"successes", s.successes}, {"success_rate", s.success_rate},
          {"ci95", {s.ci_low, s.ci_high}}, {"per_run", runs}};
}

/// Runs cfg for seeds seed, seed+1, ..., writing one CSV and report per run
/// plus aggregate.json when cfg.seeds is set. Returns the process exit code.
inline int run_experiment(const ExperimentConfig& cfg, SweepSummary* summary = nullptr) {
  std::filesystem::create_directories(cfg.out_dir);
  const int n = cfg.seeds.value_or(1);
  std::vector<RunArtifacts> arts(n);
  parallel_for(n, [&](int i) {
    arts[i] = run_single(cfg, cfg.seed + static_cast<std::uint64_t>(i));
    write_artifacts(cfg, arts[i]);
  });

  SweepSummary s;
  s.runs = n;
  for (auto& a : arts) {
    if (!a.ok()) ++s.errors;
    if (a.report.certificate &&
        a.report.certificate->classification == Classification::eps_sosp)
      ++s.successes;
    s.reports.push_back(a.report);
  }
  s.success_rate = double(s.successes) / n;
  std::tie(s.ci_low, s.ci_high) = binomial_ci(s.successes, n);
  if (cfg.seeds)
    write_text(std::filesystem::path(cfg.out_dir) / "aggregate.json",
               to_json(s).dump(2) + "\n");
  const int code = s.errors == 0 ? 0 : 1;
  if (summary) *summary = std::move(s);
  return code;
}

struct ScalingRow {
  double eps = 0.0;
  std::vector<long long> iterations;  // per seed; -1 when the run failed
  double median = 0.0;
  bool flagged = false;  // some run hit max_iters (or failed)
};

struct ScalingResult {
  std::vector<ScalingRow> rows;
  double slope = 0.0;
  double half_width = 0.0;  // 95% confidence half-width of the slope
  int points_used = 0;
};

struct ScalingOptions {
  long long max_iters = 2000000;
  double start_radius = 0.5;
  std::uint64_t seed = 0;
  double delta = 0.1;
  double c = 1.0;
  double s = 0.5;
  SurrogateSpec surrogate;
};

inline double median(std::vector<double> v) {
  if (v.empty()) throw InvalidArgument("median of empty set");
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// For each eps: median over seeds of the first iteration with
/// |grad U(x_t)| <= eps, then a least-squares fit of log(iterations) against
/// log(1/eps). Flagged eps values are excluded from the fit.
inline ScalingResult scaling_study(const std::string& problem, Algo algo,
                                   const std::vector<double>& eps_list, int seeds,
                                   const ScalingOptions& opt = {}) {
  if (eps_list.size() < 3)
    throw InvalidArgument("scaling_study: need at least 3 eps values");
  for (std::size_t i = 1; i < eps_list.size(); ++i)
    if (!(eps_list[i] < eps_list[i - 1]))
      throw InvalidArgument("scaling_study: eps_list must be strictly decreasing");
  if (seeds < 1) throw InvalidArgument("scaling_study: seeds must be >= 1");

  const ProblemInstance p = make_problem(problem);
  const Objective& o = p.objective;
  ScalingResult out;
  for (double eps : eps_list) {
    ScalingRow row;
    row.eps = eps;
    row.iterations.assign(seeds, -1);
    parallel_for(seeds, [&](int k) {
      const std::uint64_t seed = opt.seed + static_cast<std::uint64_t>(k);
      const Vector x0 = start_point(p, opt.start_radius, seed);
      RunHooks hooks;
      hooks.stop_at_grad = eps;
      RngStream rng(seed);
      RunResult res;
      const double eta = opt.c / o.constants.L1;
      try {
        if (algo == Algo::sca) {
          res = run_sca(o, opt.surrogate, eta, eps, opt.max_iters, x0, hooks);
        } else if (algo == Algo::gd) {
          res = run_gd(o, eta, eps, opt.max_iters, x0, hooks);
        } else {
          const double dU = o.f_star ? o.value(x0) - *o.f_star : 0.0;
          const PscaParams prm =
              derive_params(eps, opt.delta, opt.c, opt.s, dU, o, opt.max_iters);
          res = algo == Algo::psca ? run_psca(o, opt.surrogate, prm, x0, rng, hooks)
                                   : run_pgd(o, prm, x0, rng, hooks);
        }
      } catch (const Error&) {
        return;  // counted as failed and flagged below
      }
      if (res.termination == Termination::gradient_below_threshold)
        row.iterations[k] = res.iterations();
    });
    std::vector<double> ok;
    for (long long it : row.iterations) {
      if (it < 0) row.flagged = true;
      else ok.push_back(static_cast<double>(it));
    }
    row.median = ok.empty() ? 0.0 : median(ok);
    out.rows.push_back(std::move(row));
  }

  std::vector<double> xs, ys;
  for (const ScalingRow& r : out.rows) {
    if (r.flagged || !(r.median > 0.0)) continue;
    xs.push_back(std::log(1.0 / r.eps));
    ys.push_back(std::log(r.median));
  }
  out.points_used = static_cast<int>(xs.size());
  if (xs.size() < 2) return out;
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) mx += xs[i] / n, my += ys[i] / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  out.slope = sxy / sxx;
  if (xs.size() > 2) {
    double sse = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double e = ys[i] - (my + out.slope * (xs[i] - mx));
      sse += e * e;
    }
    const double se = std::sqrt(sse / (n - 2) / sxx);
    const boost::math::students_t t(n - 2);
    out.half_width = quantile(complement(t, 0.025)) * se;
  }
  return out;
}

inline json to_json(const ScalingResult& r) {
  json rows = json::array();
  for (const ScalingRow& row : r.rows)
    rows.push_back({{"eps", row.eps},
                    {"median_iterations", row.median},
                    {"iterations", row.iterations},
                    {"flagged", row.flagged}});
  return {{"rows", rows},
          {"slope", r.slope},
          {"ci95_half_width", r.half_width},
          {"points_used", r.points_used}};
}

}  // namespace psca
