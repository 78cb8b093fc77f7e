// Acceptance suite. Prints one PASS/FAIL line per check and exits nonzero
// if any check fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_dec_float.hpp>

#include "psca/psca.hpp"

using namespace psca;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Failures {
  long long checked = 0;
  long long failed = 0;
  std::string first;

  void check(bool ok, const std::string& what) {
    ++checked;
    if (!ok && failed++ == 0) first = what;
  }
  Outcome outcome(const std::string& summary) const {
    if (failed == 0) return {true, summary + " (" + std::to_string(checked) + " checks)"};
    return {false, std::to_string(failed) + "/" + std::to_string(checked) +
                       " checks failed; first: " + first};
  }
};

std::string num(double x) {
  std::ostringstream os;
  os.precision(4);
  os << x;
  return os.str();
}

SurrogateSpec surrogate(SurrogateKind kind, double C) {
  SurrogateSpec s;
  s.kind = kind;
  s.C = C;
  s.dense_solve = kind == SurrogateKind::quadratic_split;
  return s;
}

struct SuiteRun {
  std::string label;
  Objective obj;
  SurrogateSpec spec;
  double eta = 0.0;
  RunResult result;
  std::optional<PscaParams> params;
};

// The benchmark suite: P-SCA and SCA on every problem, both surrogate kinds.
std::vector<SuiteRun> suite_runs() {
  std::vector<SuiteRun> runs;
  const std::vector<std::string> problems = {
      "saddle_quartic:d=2", "saddle_quartic:d=10", "quadratic:d=10",
      "matrix_factorization:d=6,r=2", "rosenbrock:d=2", "rosenbrock:d=10"};
  for (const std::string& name : problems) {
    const ProblemInstance p = make_problem(name);
    const Objective& o = p.objective;
    const Vector x0 = start_point(p, 0.05, 1);
    const double dU = o.value(x0) - *o.f_star;
    for (SurrogateKind kind : {SurrogateKind::proximal_linear, SurrogateKind::quadratic_split}) {
      for (double C : {1.0, 4.0}) {
        const SurrogateSpec spec = surrogate(kind, C);
        const PscaParams prm = derive_params(1e-2, 0.1, 1.0, 0.5, dU, o, 400000);
        RngStream rng(1);
        SuiteRun ps{name + " psca " + to_string(kind) + " C=" + num(C), o, spec, prm.eta,
                    run_psca(o, spec, prm, x0, rng), prm};
        runs.push_back(std::move(ps));
        SuiteRun sc{name + " sca " + to_string(kind) + " C=" + num(C), o, spec, prm.eta,
                    run_sca(o, spec, prm.eta, 1e-5, 400000, x0), std::nullopt};
        runs.push_back(std::move(sc));
      }
    }
  }
  return runs;
}

const std::vector<SuiteRun>& suite() {
  static const std::vector<SuiteRun> runs = suite_runs();
  return runs;
}

// Descent inequality on every non-perturbed step of every suite run.
Outcome descent() {
  Failures f;
  long long steps = 0;
  for (const SuiteRun& r : suite()) {
    f.check(r.result.termination != Termination::left_valid_region,
            r.label + " left the valid region");
    f.check(r.result.descent_monitor, r.label + " descent monitor disabled");
    const double C = r.spec.C, L1 = r.obj.constants.L1;
    const auto& recs = r.result.records;
    for (std::size_t i = 0; i + 1 < recs.size(); ++i) {
      const IterateRecord& rec = recs[i];
      if (rec.perturbed) continue;
      ++steps;
      const double slack = descent_slack(rec.f, r.eta, rec.inner_tol, rec.step_norm);
      f.check(descent_check(rec.f, rec.f_next, rec.step_norm, r.eta, C, L1, slack),
              r.label + " t=" + std::to_string(rec.t));
    }
  }
  return f.outcome(std::to_string(suite().size()) + " runs, " + std::to_string(steps) +
                   " non-perturbed steps");
}

// Inexact-gradient view: exact reduction at C = 1 and the error bound otherwise.
Outcome inexact_gradient() {
  Failures f;
  // |e_t| at C = 1 over the proximal suite runs.
  double worst_e = 0.0;
  for (const SuiteRun& r : suite()) {
    if (r.spec.kind != SurrogateKind::proximal_linear || r.spec.C != 1.0) continue;
    for (const IterateRecord& rec : r.result.records) {
      if (rec.event != "step" && rec.event != "perturb") continue;
      worst_e = std::max(worst_e, rec.err_norm);
      f.check(rec.err_norm <= 1e-12, r.label + " |e_t| = " + num(rec.err_norm));
    }
  }

  // P-SCA (proximal, C = 1) against PGD with the same seed.
  double worst_gap = 0.0;
  long long compared = 0;
  for (const char* name : {"saddle_quartic:d=10", "rosenbrock:d=2", "matrix_factorization:d=6,r=2"}) {
    const ProblemInstance p = make_problem(name);
    const Objective& o = p.objective;
    const Vector x0 = start_point(p, 0.05, 2);
    const PscaParams prm = derive_params(1e-2, 0.1, 1.0, 0.5, o.value(x0) - *o.f_star, o, 20000);
    std::vector<Vector> xa, xb;
    RunHooks ha, hb;
    ha.observer = [&](long long, const Vector& x) { xa.push_back(x); };
    hb.observer = [&](long long, const Vector& x) { xb.push_back(x); };
    RngStream r1(2), r2(2);
    run_psca(o, surrogate(SurrogateKind::proximal_linear, 1.0), prm, x0, r1, ha);
    run_pgd(o, prm, x0, r2, hb);
    f.check(xa.size() == xb.size(), std::string(name) + " trajectory lengths differ");
    f.check(xa.size() >= 1000, std::string(name) + " fewer than 1000 iterates");
    for (std::size_t i = 0; i < std::min(xa.size(), xb.size()); ++i) {
      const double gap = (xa[i] - xb[i]).lpNorm<Eigen::Infinity>();
      worst_gap = std::max(worst_gap, gap);
      ++compared;
      f.check(gap <= 1e-10, std::string(name) + " t=" + std::to_string(i) + " gap " + num(gap));
    }
  }

  // Error bound for C != 1 on problems that declare L0.
  long long bounded = 0;
  for (const char* name : {"saddle_quartic:d=10", "quadratic:d=10", "matrix_factorization:d=6,r=2"}) {
    const ProblemInstance p = make_problem(name);
    const Objective& o = p.objective;
    const Vector x0 = start_point(p, 0.05, 3);
    for (SurrogateKind kind : {SurrogateKind::proximal_linear, SurrogateKind::quadratic_split}) {
      for (double C : {0.5, 2.0, 10.0}) {
        SurrogateSpec spec = surrogate(kind, C);
        spec.dense_solve = false;
        const PscaParams prm =
            derive_params(1e-2, 0.1, 1.0, 0.5, o.value(x0) - *o.f_star, o, 20000);
        RngStream rng(3);
        const RunResult res = run_psca(o, spec, prm, x0, rng);
        f.check(res.termination != Termination::left_valid_region,
                std::string(name) + " left the valid region");
        const double D = *o.constants.L0 * (1.0 + 1.0 / C);
        for (const IterateRecord& rec : res.records) {
          ++bounded;
          f.check(rec.err_norm <= D + rec.inner_tol / C,
                  std::string(name) + " C=" + num(C) + " |e_t| " + num(rec.err_norm));
        }
      }
    }
  }
  return f.outcome("max |e_t| at C=1 " + num(worst_e) + ", max P-SCA/PGD gap " +
                   num(worst_gap) + " over " + std::to_string(compared) + " iterates, " +
                   std::to_string(bounded) + " bounded steps at C != 1");
}

// First-order optimality of the surrogate step and the direction bound.
Outcome direction_bounds() {
  Failures f;
  for (const SuiteRun& r : suite()) {
    const double C = r.spec.C;
    const auto& recs = r.result.records;
    for (std::size_t i = 0; i + 1 < recs.size(); ++i) {
      const IterateRecord& rec = recs[i];
      if (rec.event != "step" && rec.event != "perturb") continue;
      const double slack = rec.inner_tol * rec.step_norm + 1e-9;
      f.check(rec.directional >= C * rec.step_norm * rec.step_norm - slack,
              r.label + " optimality t=" + std::to_string(rec.t));
      f.check(rec.step_norm <= rec.grad_norm / C + rec.inner_tol / C + 1e-12 * rec.grad_norm,
              r.label + " direction t=" + std::to_string(rec.t));
    }
  }
  return f.outcome(std::to_string(suite().size()) + " runs");
}

std::vector<RunArtifacts> saddle_sweep(Algo algo) {
  ExperimentConfig cfg;
  cfg.problem = "saddle_quartic:d=10";
  cfg.algo = algo;
  cfg.eps = 1e-2;
  cfg.delta = 0.1;
  std::vector<RunArtifacts> out(100);
  parallel_for(100, [&](int i) { out[i] = run_single(cfg, static_cast<std::uint64_t>(i)); });
  return out;
}

const std::vector<RunArtifacts>& psca_saddle_runs() {
  static const std::vector<RunArtifacts> runs = saddle_sweep(Algo::psca);
  return runs;
}

// Escape from the strict saddle of the quartic, and SCA stalling there.
Outcome saddle_escape() {
  int success = 0;
  for (const RunArtifacts& a : psca_saddle_runs()) {
    const Report& r = a.report;
    if (r.status == "ok" && r.certificate &&
        r.certificate->classification == Classification::eps_sosp && r.f_out <= -0.2)
      ++success;
  }
  int pgd_success = 0;
  for (const RunArtifacts& a : saddle_sweep(Algo::pgd)) {
    const Report& r = a.report;
    if (r.status == "ok" && r.certificate &&
        r.certificate->classification == Classification::eps_sosp && r.f_out <= -0.2)
      ++pgd_success;
  }

  const Objective o = make_saddle_quartic(10).objective;
  Vector x = Vector::Zero(10);
  double worst = 0.0;
  for (int t = 0; t < 10000; ++t) {
    x = sca_step(o, SurrogateSpec{}, x, 1.0 / 11.0).x_next;
    worst = std::max(worst, x.norm());
  }
  const auto [lo, hi] = binomial_ci(success, 100);
  Outcome out;
  out.pass = success >= 90 && worst <= 1e-12;
  out.detail = "P-SCA eps_sosp with f_out <= -0.2 in " + std::to_string(success) +
               "/100 (95% CI " + num(lo) + ".." + num(hi) + "), PGD " +
               std::to_string(pgd_success) + "/100 (info), SCA from origin max |x_t| = " +
               num(worst) + " over 1e4 steps";
  return out;
}

// Power-law exponent of iterations to an eps-FOSP on Rosenbrock.
Outcome rate_scaling() {
  const ScalingResult r =
      scaling_study("rosenbrock:d=10", Algo::psca, {1e-1, 3e-2, 1e-2, 3e-3}, 10);
  std::string medians;
  for (const ScalingRow& row : r.rows)
    medians += (medians.empty() ? "" : ", ") + num(row.eps) + ":" + num(row.median) +
               (row.flagged ? "*" : "");
  Outcome out;
  out.pass = r.points_used >= 3 && r.slope >= 1.2 && r.slope <= 2.2;
  out.detail = "slope " + num(r.slope) + " +- " + num(r.half_width) + " from " +
               std::to_string(r.points_used) + " points (median iterations " + medians + ")";
  return out;
}

// Matrix-free lambda_min against the dense eigendecomposition.
Outcome eigen_oracle() {
  Failures f;
  double worst = 0.0;
  EigenOptions mf;
  mf.method = EigenMethod::matrix_free;
  auto compare = [&](const Objective& o, const Vector& x, const std::string& label) {
    const double dense = min_eigenvalue_dense(o.hessian(x)).lambda;
    const double approx = min_eigenvalue(o, x, mf).lambda;
    worst = std::max(worst, std::abs(dense - approx));
    f.check(std::abs(dense - approx) <= 1e-6, label + " |delta| = " + num(std::abs(dense - approx)));
  };
  for (int k = 0; k < 20; ++k) {
    const ProblemInstance p = make_problem("quadratic:d=50,kind=random,seed=" + std::to_string(k));
    RngStream rng(1000 + k);
    compare(p.objective, p.objective.region.sample(50, rng), p.name);
  }
  for (const char* name : {"saddle_quartic:d=10", "matrix_factorization:d=6,r=2"}) {
    const ProblemInstance p = make_problem(name);
    RngStream rng(77);
    for (int k = 0; k < 20; ++k)
      compare(p.objective, p.objective.region.sample(p.objective.dim, rng), name);
  }
  return f.outcome("max |delta| " + num(worst));
}

// Analytic gradients and Hessian-vector products against central differences.
Outcome derivative_oracles() {
  Failures f;
  double worst = 0.0;
  for (const char* name :
       {"quadratic:d=10", "quadratic:d=10,kind=random,seed=4", "quadratic:d=6,kind=saddle",
        "saddle_quartic:d=2", "saddle_quartic:d=10", "matrix_factorization:d=6,r=2",
        "rosenbrock:d=2", "rosenbrock:d=10"}) {
    const ProblemInstance p = make_problem(name);
    const Objective& o = p.objective;
    RngStream rng(5);
    for (int k = 0; k < 20; ++k) {
      Vector x = o.region.sample(o.dim, rng);
      const double inf = x.lpNorm<Eigen::Infinity>();
      if (inf > 2.0) x *= 2.0 / inf;
      const double eg = relative_error(finite_diff_gradient(o.value, x), o.gradient(x));
      const Vector v = sample_uniform_ball(o.dim, 1.0, rng);
      const double eh = relative_error(finite_diff_hvp(o.gradient, x, v), o.hvp(x, v));
      worst = std::max({worst, eg, eh});
      f.check(eg <= 1e-5, std::string(name) + " gradient rel err " + num(eg));
      f.check(eh <= 1e-5, std::string(name) + " hvp rel err " + num(eh));
    }
  }
  return f.outcome("max rel err " + num(worst));
}

// Parameter derivation against a 50-digit evaluation.
Outcome parameter_derivation() {
  using HP = boost::multiprecision::cpp_dec_float_50;
  Failures f;
  RngStream rng(8128);
  auto log_uniform = [&](double lo, double hi) {
    return std::exp(std::log(lo) + rng.uniform() * (std::log(hi) - std::log(lo)));
  };
  auto agree = [](double got, const HP& want) {
    return boost::multiprecision::abs(HP(got) - want) <= HP("1e-12") * boost::multiprecision::abs(want);
  };
  for (int k = 0; k < 50; ++k) {
    Objective o;
    o.dim = 1 + static_cast<int>(rng.uniform() * 500);
    o.constants.L1 = log_uniform(0.1, 1e4);
    o.constants.L2 = log_uniform(0.1, 1e4);
    const double L1 = o.constants.L1, L2 = o.constants.L2;
    const double eps = L1 * L1 / L2 * log_uniform(1e-8, 1.0);
    const double dU = log_uniform(1e-3, 1e3);
    const double c = log_uniform(1e-3, 1.0);
    const double delta = 0.001 + 0.998 * rng.uniform();
    const double s = 0.01 + 0.98 * rng.uniform();
    const PscaParams p = derive_params(eps, delta, c, s, dU, o, 1000);

    const HP hL1(L1), hL2(L2), he(eps), hc(c);
    const HP lg = log(HP(o.dim) * hL1 * HP(dU) / (hc * he * he * HP(delta)));
    const HP chi = 3 * (lg > 4 ? lg : HP(4));
    const HP eta = hc / hL1;
    const HP g_th = he * sqrt(hc) / (chi * chi);
    const HP r = g_th / hL1;
    const HP f_th = hc / (chi * chi * chi) * sqrt(he * he * he / hL2);
    const HP window = chi / (hc * hc) * hL1 / sqrt(hL2 * he);
    const long long t_th = std::max<long long>(1, static_cast<long long>(ceil(window)));

    const std::string tag = "tuple " + std::to_string(k);
    f.check(agree(p.chi, chi), tag + " chi");
    f.check(agree(p.eta, eta), tag + " eta");
    f.check(agree(p.r, r), tag + " r");
    f.check(agree(p.g_th, g_th), tag + " g_th");
    f.check(agree(p.f_th, f_th), tag + " f_th");
    f.check(p.t_th == t_th, tag + " t_th " + std::to_string(p.t_th) + " vs " + std::to_string(t_th));
    f.check(p.chi >= 12.0, tag + " chi < 12");
    f.check(p.t_th >= 1, tag + " t_th < 1");

    bool rejected = false;
    try {
      derive_params(2.0 * L1 * L1 / L2, delta, c, s, dU, o, 1000);
    } catch (const HypothesisViolated&) {
      rejected = true;
    }
    f.check(rejected, tag + " eps > L1^2/L2 accepted");
  }
  return f.outcome("50 tuples, 12 significant digits");
}

// Perturbation spacing, radius and the window decision on every P-SCA run.
Outcome perturbation_protocol() {
  Failures f;
  long long events = 0, returns = 0;
  auto audit = [&](const RunResult& res, const PscaParams& prm, const std::string& label) {
    for (std::size_t i = 0; i < res.perturbations.size(); ++i) {
      ++events;
      f.check(res.perturbations[i].xi_norm <= prm.r, label + " |xi| > r");
      if (i > 0)
        f.check(res.perturbations[i].t - res.perturbations[i - 1].t > prm.t_th,
                label + " perturbations too close");
    }
    long long flagged = 0;
    for (const IterateRecord& rec : res.records) flagged += rec.perturbed;
    f.check(flagged == res.perturbation_count, label + " perturbed rows != count");
    for (const WindowCheck& w : res.window_checks)
      f.check(w.returned == (w.decrement > w.threshold), label + " window decision");
    if (res.termination == Termination::returned_xtilde) {
      ++returns;
      f.check(!res.window_checks.empty() && res.window_checks.back().returned &&
                  res.window_checks.back().decrement > -(1.0 - prm.s) * prm.f_th,
              label + " returned without sufficient-decrease failure");
      f.check(!res.perturbations.empty() && res.x_out == res.perturbations.back().x_tilde,
              label + " x_out != x_tilde");
    }
  };
  for (const RunArtifacts& a : psca_saddle_runs())
    if (a.result && a.report.params)
      audit(*a.result, *a.report.params, "saddle seed " + std::to_string(a.report.seed));
  for (const SuiteRun& r : suite())
    if (r.params) audit(r.result, *r.params, r.label);
  return f.outcome(std::to_string(events) + " perturbations, " + std::to_string(returns) +
                   " returned_xtilde terminations");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Replaying an experiment reproduces its trajectory CSV byte for byte.
Outcome determinism() {
  Failures f;
  const fs::path root = fs::temp_directory_path() / "psca_acceptance_replay";
  fs::remove_all(root);
  struct Case {
    std::string problem;
    Algo algo;
    double start_radius;
  };
  const std::vector<Case> cases = {{"saddle_quartic:d=10", Algo::psca, 0.0},
                                   {"matrix_factorization:d=6,r=2", Algo::pgd, 0.05},
                                   {"rosenbrock:d=2", Algo::sca, 0.0},
                                   {"quadratic:d=10", Algo::gd, 0.0}};
  for (const Case& c : cases) {
    for (std::uint64_t seed : {0ull, 7ull}) {
      ExperimentConfig cfg;
      cfg.problem = c.problem;
      cfg.algo = c.algo;
      cfg.start_radius = c.start_radius;
      cfg.seed = seed;
      cfg.max_iters = 20000;
      std::string csv[2];
      for (int rep = 0; rep < 2; ++rep) {
        cfg.out_dir = (root / std::to_string(rep)).string();
        run_experiment(cfg);
        csv[rep] = slurp(fs::path(cfg.out_dir) / (run_stem(cfg, seed) + ".csv"));
      }
      f.check(!csv[0].empty() && csv[0] == csv[1], c.problem + " " + to_string(c.algo));
    }
  }
  fs::remove_all(root);
  return f.outcome(std::to_string(cases.size() * 2) + " replays byte-identical");
}

// Low-rank factorization solved from small random starts.
Outcome matrix_factorization() {
  ExperimentConfig cfg;
  cfg.problem = "matrix_factorization:d=6,r=2";
  cfg.algo = Algo::psca;
  cfg.start_radius = 0.05;
  cfg.max_iters = 200000;
  std::vector<RunArtifacts> runs(100);
  parallel_for(100, [&](int i) { runs[i] = run_single(cfg, static_cast<std::uint64_t>(i)); });
  int success = 0;
  double worst = 0.0;
  for (const RunArtifacts& a : runs) {
    if (a.report.status != "ok") continue;
    worst = std::max(worst, a.report.f_out);
    if (a.report.f_out <= 1e-4) ++success;
  }
  Outcome out;
  out.pass = success >= 95;
  out.detail = "f <= 1e-4 in " + std::to_string(success) + "/100 runs (worst f_out " +
               num(worst) + ")";
  return out;
}

}  // namespace

int main() {
  struct Check {
    int id;
    const char* name;
    std::function<Outcome()> fn;
  };
  const std::vector<Check> checks = {
      {1, "descent inequality", descent},
      {2, "inexact-gradient identities", inexact_gradient},
      {3, "direction and optimality bounds", direction_bounds},
      {4, "saddle escape", saddle_escape},
      {5, "rate scaling", rate_scaling},
      {6, "eigen oracle equivalence", eigen_oracle},
      {7, "derivative oracles", derivative_oracles},
      {8, "parameter derivation", parameter_derivation},
      {9, "perturbation protocol", perturbation_protocol},
      {10, "determinism", determinism},
      {11, "matrix factorization end-to-end", matrix_factorization},
  };
  int failed = 0;
  for (const Check& c : checks) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %2d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%d/%zu passed\n", static_cast<int>(checks.size()) - failed, checks.size());
  return failed == 0 ? 0 : 1;
}
