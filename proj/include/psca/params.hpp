#pragma once

// Configuration of the perturbed driver derived from (eps, delta, c, s,
// Delta_U) and the objective's smoothness constants, plus the diagnostic
// length/value scales used when analysing escape windows.

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>

#include "psca/errors.hpp"
#include "psca/problems.hpp"

namespace psca {

/// How the escape-window length is computed.
///   proof:     t_th = ceil(chi / c^2 * L1 / sqrt(L2 eps))           (default)
///   algorithm: t_th = ceil((1 - s) chi L1 / (c^2 sqrt(eps L2)))
enum class WindowRule { proof, algorithm };

struct PscaParams {
  double eps = 0.0;
  double delta = 0.0;
  double c = 1.0;
  double s = 0.5;
  double delta_U = 0.0;
  double chi = 0.0;
  double eta = 0.0;
  double r = 0.0;
  double g_th = 0.0;
  double f_th = 0.0;
  long long t_th = 1;
  long long max_iters = 0;
  WindowRule window_rule = WindowRule::proof;
  // Echo of the quantities the derivation used.
  int dim = 0;
  double L1 = 0.0;
  double L2 = 0.0;
};

namespace detail {

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace detail

/// chi = 3 max{log(d L1 Delta_U / (c eps^2 delta)), 4}.
inline double derive_chi(int dim, double L1, double delta_U, double c,
                         double eps, double delta) {
  const double arg = dim * L1 * delta_U / (c * eps * eps * delta);
  return 3.0 * std::max(std::log(arg), 4.0);
}

/// Rejects (never clamps) inputs outside the admissible ranges.
inline PscaParams derive_params(double eps, double delta, double c, double s,
                                double delta_U, const Objective& obj,
                                long long max_iters,
                                WindowRule rule = WindowRule::proof) {
  const double L1 = obj.constants.L1;
  const double L2 = obj.constants.L2;
  if (!(L1 > 0.0) || !(L2 > 0.0))
    throw InvalidArgument("objective must declare L1 > 0 and L2 > 0");
  if (!(eps > 0.0))
    throw InvalidArgument("eps must satisfy 0 < eps <= L1^2/L2");
  if (eps > L1 * L1 / L2)
    throw HypothesisViolated("eps must satisfy 0 < eps <= L1^2/L2 (eps = " +
                             detail::fmt(eps) + ", L1^2/L2 = " +
                             detail::fmt(L1 * L1 / L2) + ")");
  if (!(delta > 0.0 && delta < 1.0))
    throw InvalidArgument("delta must satisfy 0 < delta < 1");
  if (!(c > 0.0)) throw InvalidArgument("c must satisfy 0 < c <= 1");
  if (c > 1.0) throw InvalidArgument("c must satisfy 0 < c <= 1");
  if (!(s > 0.0 && s < 1.0)) throw InvalidArgument("s must satisfy 0 < s < 1");
  if (!(delta_U > 0.0)) throw InvalidArgument("delta_U must satisfy delta_U > 0");
  if (max_iters < 1) throw InvalidArgument("max_iters must be >= 1");

  PscaParams p;
  p.eps = eps;
  p.delta = delta;
  p.c = c;
  p.s = s;
  p.delta_U = delta_U;
  p.max_iters = max_iters;
  p.window_rule = rule;
  p.dim = obj.dim;
  p.L1 = L1;
  p.L2 = L2;

  p.chi = derive_chi(obj.dim, L1, delta_U, c, eps, delta);
  const double chi2 = p.chi * p.chi;
  p.eta = c / L1;
  p.g_th = eps * std::sqrt(c) / chi2;
  p.r = eps * std::sqrt(c) / (L1 * chi2);
  p.f_th = c / (chi2 * p.chi) * std::sqrt(eps * eps * eps / L2);
  const double window = rule == WindowRule::proof
                            ? p.chi / (c * c) * L1 / std::sqrt(L2 * eps)
                            : (1.0 - s) * p.chi * L1 / (c * c * std::sqrt(eps * L2));
  p.t_th = std::max<long long>(1, static_cast<long long>(std::ceil(window)));
  return p;
}

struct DiagnosticScales {
  double gamma = 0.0;   // sqrt(L2 eps)
  double kappa = 0.0;   // L1 / gamma
  double F = 0.0;
  double G = 0.0;
  double scriptL = 0.0;
  double scriptT = 0.0;
  std::optional<double> D;  // L0 (1 + 1/C), only with a declared L0
  /// 16 L2 c^3 D^3 - s f_th: sign of the slack left by the chosen c relative
  /// to the proof's c-selection rule. Reported, never enforced.
  std::optional<double> c_rule_residual;
};

inline DiagnosticScales derive_scales(const PscaParams& p, const Objective& obj,
                                      double C) {
  DiagnosticScales sc;
  const double L1 = obj.constants.L1;
  const double L2 = obj.constants.L2;
  sc.gamma = std::sqrt(L2 * p.eps);
  sc.kappa = L1 / sc.gamma;
  const double lg = std::log(obj.dim * sc.kappa / p.delta);
  const double etaL1 = p.eta * L1;
  sc.F = etaL1 / (L2 * L2) * std::pow(sc.gamma, 3) / (lg * lg * lg);
  sc.G = std::sqrt(etaL1) / L2 * sc.gamma * sc.gamma / (lg * lg);
  sc.scriptL = std::sqrt(etaL1) * sc.gamma / L2 / lg;
  sc.scriptT = lg / (p.eta * sc.gamma);
  if (obj.constants.L0) {
    sc.D = *obj.constants.L0 * (1.0 + 1.0 / C);
    sc.c_rule_residual =
        16.0 * L2 * std::pow(p.c, 3) * std::pow(*sc.D, 3) - p.s * p.f_th;
  }
  return sc;
}

}  // namespace psca
