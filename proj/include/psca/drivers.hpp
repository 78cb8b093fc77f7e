#pragma once

// Successive convex approximation (SCA) and its perturbed variant (P-SCA),
// gradient-descent baselines sharing the same loop, and the per-step
// inexact-gradient / descent bookkeeping.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "psca/errors.hpp"
#include "psca/numerics.hpp"
#include "psca/params.hpp"
#include "psca/problems.hpp"
#include "psca/surrogates.hpp"

namespace psca {

enum class Termination {
  returned_xtilde,
  gradient_below_threshold,
  max_iters,
  left_valid_region
};

inline std::string to_string(Termination t) {
  switch (t) {
    case Termination::returned_xtilde: return "returned_xtilde";
    case Termination::gradient_below_threshold: return "gradient_below_threshold";
    case Termination::max_iters: return "max_iters";
    case Termination::left_valid_region: return "left_valid_region";
  }
  return "unknown";
}

inline Termination termination_from_string(const std::string& s) {
  for (Termination t : {Termination::returned_xtilde,
                        Termination::gradient_below_threshold,
                        Termination::max_iters, Termination::left_valid_region})
    if (to_string(t) == s) return t;
  throw InvalidArgument("unknown termination '" + s + "'");
}

struct IterateRecord {
  long long t = 0;
  double f = 0.0;          // U(x_t), after any perturbation at t
  double grad_norm = 0.0;  // |grad U(x_t)|
  double step_norm = 0.0;  // |x_hat - x_t|
  double err_norm = 0.0;   // |e_t|
  bool perturbed = false;
  int inner_iters = 0;
  std::string event = "step";

  // Per-step evidence for the descent and optimality inequalities.
  double inner_tol = 0.0;
  double directional = 0.0;  // (x_t - x_hat)' grad U(x_t)
  double f_next = 0.0;       // U(x_t + eta (x_hat - x_t))
  std::optional<bool> descent_ok;
};

struct PerturbationEvent {
  long long t = 0;
  double xi_norm = 0.0;
  double f_tilde = 0.0;
  Vector x_tilde;
};

struct WindowCheck {
  long long t = 0;
  double decrement = 0.0;  // U(x_t) - U(x_tilde)
  double threshold = 0.0;  // -(1 - s) f_th
  bool returned = false;
};

struct RunResult {
  std::vector<IterateRecord> records;
  Termination termination = Termination::max_iters;
  Vector x_out;
  double f_out = 0.0;
  long long perturbation_count = 0;
  std::uint64_t seed = 0;
  std::vector<PerturbationEvent> perturbations;
  std::vector<WindowCheck> window_checks;
  bool descent_monitor = true;
  std::vector<std::string> warnings;
  std::string diagnostic;

  /// Number of update steps taken; the final record is the terminal state.
  long long iterations() const {
    return records.empty() ? 0 : static_cast<long long>(records.size()) - 1;
  }
  /// U at the last visited iterate (last record's f).
  double f_final() const { return records.empty() ? f_out : records.back().f; }
};

struct PerturbationState {
  long long t_noise = 0;
  std::optional<Vector> x_tilde;
  std::optional<double> f_tilde;

  static PerturbationState initial(const PscaParams& p) {
    PerturbationState st;
    st.t_noise = -p.t_th - 1;
    return st;
  }
};

/// e_t = (x_t - x_hat) - grad U(x_t), so that x_{t+1} = x_t - eta (grad + e_t)
/// reproduces x_t + eta (x_hat - x_t).
inline Vector gradient_error(const Vector& x_t, const Vector& x_hat,
                             const Vector& grad) {
  if (x_t.size() != x_hat.size() || x_t.size() != grad.size())
    throw InvalidArgument("gradient_error: dimension mismatch");
  return (x_t - x_hat) - grad;
}

/// eta' = eta C - eta^2 L1 / 2.
inline double descent_coefficient(double eta, double C, double L1) {
  return eta * C - 0.5 * eta * eta * L1;
}

/// True iff f_next <= f_t - eta' step_norm^2 + slack.
inline bool descent_check(double f_t, double f_next, double step_norm,
                          double eta, double C, double L1, double slack) {
  if (!(eta < 2.0 * C / L1))
    throw HypothesisViolated("descent check requires eta < 2C/L1");
  return f_next <= f_t - descent_coefficient(eta, C, L1) * step_norm * step_norm + slack;
}

/// Slack for the descent inequality: roundoff on f plus the effect of an
/// inexact inner solve, eta * tol * |x_hat - x_t|.
inline double descent_slack(double f_t, double eta, double inner_tol,
                            double step_norm) {
  return 1e-9 * (1.0 + std::abs(f_t)) + eta * inner_tol * step_norm;
}

struct StepOutcome {
  Vector x_next;
  Vector x_hat;
  IterateRecord record;
};

/// Optional instrumentation of a run. `observer` sees every iterate x_t
/// (after any perturbation) before its step; `stop_at_grad` ends the run with
/// gradient_below_threshold once |grad U(x_t)| <= the given value.
struct RunHooks {
  std::function<void(long long, const Vector&)> observer;
  std::optional<double> stop_at_grad;
};

namespace detail {

inline void require_eta(double eta) {
  if (!(eta > 0.0 && eta <= 1.0))
    throw InvalidArgument("step size must satisfy 0 < eta <= 1");
}

inline StepOutcome finish_step(const Objective& obj, const Vector& x_t,
                               const Vector& grad, double f_t, Vector x_hat,
                               double eta, int inner_iters, double inner_tol) {
  StepOutcome out;
  IterateRecord& rec = out.record;
  rec.f = f_t;
  rec.grad_norm = grad.norm();
  const Vector d = x_hat - x_t;
  rec.step_norm = d.norm();
  rec.err_norm = gradient_error(x_t, x_hat, grad).norm();
  rec.inner_iters = inner_iters;
  rec.inner_tol = inner_tol;
  rec.directional = -d.dot(grad);
  out.x_next = x_t + eta * d;
  out.x_hat = std::move(x_hat);
  if (!obj.region.contains(out.x_next))
    throw LeftValidRegion("iterate left the valid region of the objective", 0);
  rec.f_next = obj.value(out.x_next);
  return out;
}

}  // namespace detail

/// One SCA update x_{t+1} = x_t + eta (x_hat(x_t) - x_t).
inline StepOutcome sca_step(const Objective& obj, const SurrogateSpec& spec,
                            const Vector& x_t, double eta) {
  detail::require_eta(eta);
  const SurrogateAt s = build_surrogate(obj, x_t, spec);
  auto [x_hat, inner] = minimize_surrogate(s, spec);
  const Vector grad = obj.gradient(x_t);
  return detail::finish_step(obj, x_t, grad, obj.value(x_t), std::move(x_hat),
                             eta, inner.iterations, inner.tolerance);
}

/// Gradient step written in the same form, with x_hat = x_t - grad U(x_t).
inline StepOutcome gradient_step(const Objective& obj, const Vector& x_t,
                                 double eta) {
  detail::require_eta(eta);
  if (!obj.region.contains(x_t))
    throw InvalidArgument("gradient_step: iterate outside the valid region");
  const Vector grad = obj.gradient(x_t);
  StepOutcome out =
      detail::finish_step(obj, x_t, grad, obj.value(x_t), x_t - grad, eta, 0, 0.0);
  // x_t - eta grad exactly, not x_t + eta ((x_t - grad) - x_t).
  out.x_next = x_t - eta * grad;
  out.record.f_next = obj.value(out.x_next);
  return out;
}

struct PerturbOutcome {
  Vector x;
  PerturbationState state;
  bool perturbed = false;
  double xi_norm = 0.0;
};

/// Perturbs iff grad_norm <= g_th and t - t_noise > t_th.
inline PerturbOutcome maybe_perturb(const PscaParams& params,
                                    const PerturbationState& state,
                                    const Objective& obj, const Vector& x_t,
                                    double grad_norm, long long t, RngStream& rng) {
  PerturbOutcome out{x_t, state, false, 0.0};
  if (grad_norm <= params.g_th && t - state.t_noise > params.t_th) {
    out.state.x_tilde = x_t;
    out.state.f_tilde = obj.value(x_t);
    out.state.t_noise = t;
    const Vector xi = sample_uniform_ball(static_cast<int>(x_t.size()), params.r, rng);
    out.x = x_t + xi;
    out.xi_norm = xi.norm();
    out.perturbed = true;
  }
  return out;
}

/// Returns x_tilde iff t - t_noise = t_th and U(x_t) - U(x_tilde) > -(1-s) f_th.
inline std::optional<Vector> check_termination(const PscaParams& params,
                                               const PerturbationState& state,
                                               double f_t, long long t) {
  if (!state.x_tilde || !state.f_tilde) return std::nullopt;
  if (t - state.t_noise != params.t_th) return std::nullopt;
  if (f_t - *state.f_tilde > -(1.0 - params.s) * params.f_th) return state.x_tilde;
  return std::nullopt;
}

namespace detail {

/// Shared iteration loop. `step(x)` performs one update from x; when
/// `params` is set the perturbation and window-termination logic of the
/// perturbed driver is active, otherwise the loop stops once
/// |grad| <= g_th.
template <typename StepFn>
RunResult run_loop(const Objective& obj, StepFn&& step, double eta, double C,
                   double g_th, long long max_iters, const Vector& x0,
                   const PscaParams* params, RngStream* rng,
                   const RunHooks& hooks) {
  if (x0.size() != obj.dim) throw InvalidArgument("x0 dimension mismatch");
  if (max_iters < 0) throw InvalidArgument("max_iters must be >= 0");

  RunResult res;
  res.seed = rng ? rng->seed() : 0;
  const double L1 = obj.constants.L1;
  res.descent_monitor = eta < 2.0 * C / L1;
  if (!res.descent_monitor)
    res.warnings.push_back("eta >= 2C/L1: descent monitor disabled");

  PerturbationState state;
  if (params) state = PerturbationState::initial(*params);

  Vector x = x0;
  auto terminate = [&](Termination why, long long t, double f, double gnorm,
                       bool perturbed) {
    IterateRecord rec;
    rec.t = t;
    rec.f = f;
    rec.grad_norm = gnorm;
    rec.perturbed = perturbed;
    rec.event = to_string(why);
    res.records.push_back(rec);
    res.termination = why;
    if (why != Termination::returned_xtilde) {
      res.x_out = x;
      res.f_out = f;
    }
  };

  for (long long t = 0;; ++t) {
    if (!obj.region.contains(x)) {
      res.termination = Termination::left_valid_region;
      res.diagnostic = "iterate at t=" + std::to_string(t) +
                       " left the valid region (measure " +
                       std::to_string(obj.region.measure(x)) + " > " +
                       std::to_string(obj.region.radius) + ")";
      res.x_out = x;
      res.f_out = obj.value(x);
      return res;
    }
    double gnorm = obj.gradient(x).norm();
    bool perturbed = false;

    if (params) {
      PerturbOutcome po = maybe_perturb(*params, state, obj, x, gnorm, t, *rng);
      if (po.perturbed) {
        perturbed = true;
        state = po.state;
        x = std::move(po.x);
        ++res.perturbation_count;
        res.perturbations.push_back({t, po.xi_norm, *state.f_tilde, *state.x_tilde});
        if (!obj.region.contains(x)) {
          res.termination = Termination::left_valid_region;
          res.diagnostic = "perturbation at t=" + std::to_string(t) +
                           " left the valid region";
          res.x_out = x;
          res.f_out = obj.value(x);
          return res;
        }
        gnorm = obj.gradient(x).norm();
      }
    }
    const double f = obj.value(x);
    if (hooks.observer) hooks.observer(t, x);

    if (hooks.stop_at_grad && gnorm <= *hooks.stop_at_grad) {
      terminate(Termination::gradient_below_threshold, t, f, gnorm, perturbed);
      return res;
    }
    if (params) {
      if (state.x_tilde && t - state.t_noise == params->t_th) {
        const double dec = f - *state.f_tilde;
        const double thr = -(1.0 - params->s) * params->f_th;
        auto hit = check_termination(*params, state, f, t);
        res.window_checks.push_back({t, dec, thr, hit.has_value()});
        if (hit) {
          terminate(Termination::returned_xtilde, t, f, gnorm, perturbed);
          res.x_out = *hit;
          res.f_out = *state.f_tilde;
          return res;
        }
      }
    } else if (gnorm <= g_th) {
      terminate(Termination::gradient_below_threshold, t, f, gnorm, perturbed);
      return res;
    }
    if (t >= max_iters) {
      terminate(Termination::max_iters, t, f, gnorm, perturbed);
      return res;
    }

    StepOutcome so;
    try {
      so = step(x);
    } catch (const LeftValidRegion& e) {
      res.termination = Termination::left_valid_region;
      res.diagnostic = "step at t=" + std::to_string(t) + ": " + e.what();
      res.x_out = x;
      res.f_out = f;
      return res;
    }
    IterateRecord& rec = so.record;
    rec.t = t;
    rec.perturbed = perturbed;
    rec.event = perturbed ? "perturb" : "step";
    if (res.descent_monitor) {
      rec.descent_ok = descent_check(
          rec.f, rec.f_next, rec.step_norm, eta, C, L1,
          descent_slack(rec.f, eta, rec.inner_tol, rec.step_norm));
    }
    res.records.push_back(std::move(rec));
    x = std::move(so.x_next);
  }
}

}  // namespace detail

/// Plain SCA: iterate until |grad U(x_t)| <= g_th or max_iters steps.
/// Requires 0 < eta <= 1 and eta < 2C/L1.
inline RunResult run_sca(const Objective& obj, const SurrogateSpec& spec,
                         double eta, double g_th, long long max_iters,
                         const Vector& x0, const RunHooks& hooks = {}) {
  detail::require_eta(eta);
  spec.validate();
  if (!(eta < 2.0 * spec.C / obj.constants.L1))
    throw HypothesisViolated("run_sca requires eta < 2C/L1");
  return detail::run_loop(
      obj, [&](const Vector& x) { return sca_step(obj, spec, x, eta); }, eta,
      spec.C, g_th, max_iters, x0, nullptr, nullptr, hooks);
}

/// Perturbed SCA with step size params.eta. Deterministic in (inputs, seed).
inline RunResult run_psca(const Objective& obj, const SurrogateSpec& spec,
                          const PscaParams& params, const Vector& x0,
                          RngStream& rng, const RunHooks& hooks = {}) {
  detail::require_eta(params.eta);
  spec.validate();
  return detail::run_loop(
      obj, [&](const Vector& x) { return sca_step(obj, spec, x, params.eta); },
      params.eta, spec.C, params.g_th, params.max_iters, x0, &params, &rng, hooks);
}

inline RunResult run_gd(const Objective& obj, double eta, double g_th,
                        long long max_iters, const Vector& x0,
                        const RunHooks& hooks = {}) {
  detail::require_eta(eta);
  if (!(eta < 2.0 / obj.constants.L1))
    throw HypothesisViolated("run_gd requires eta < 2/L1");
  return detail::run_loop(
      obj, [&](const Vector& x) { return gradient_step(obj, x, eta); }, eta, 1.0,
      g_th, max_iters, x0, nullptr, nullptr, hooks);
}

/// Perturbed gradient descent: the perturbed driver with x_hat = x - grad U.
inline RunResult run_pgd(const Objective& obj, const PscaParams& params,
                         const Vector& x0, RngStream& rng,
                         const RunHooks& hooks = {}) {
  detail::require_eta(params.eta);
  return detail::run_loop(
      obj, [&](const Vector& x) { return gradient_step(obj, x, params.eta); },
      params.eta, 1.0, params.g_th, params.max_iters, x0, &params, &rng, hooks);
}

}  // namespace psca
