#pragma once

// Classification of a point as an eps-second-order stationary point, a
// first-order point with a strict-saddle direction, or not first-order
// stationary. lambda_min comes from a dense eigensolve or a matrix-free
// shifted power iteration.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "psca/drivers.hpp"
#include "psca/errors.hpp"
#include "psca/numerics.hpp"
#include "psca/problems.hpp"

namespace psca {

enum class EigenMethod { dense, matrix_free };

inline std::string to_string(EigenMethod m) {
  return m == EigenMethod::dense ? "dense" : "matrix_free";
}

inline EigenMethod eigen_method_from_string(const std::string& s) {
  if (s == "dense") return EigenMethod::dense;
  if (s == "matrix_free") return EigenMethod::matrix_free;
  throw InvalidArgument("unknown eigen method '" + s + "'");
}

struct EigenOptions {
  /// Unset: dense when a dense Hessian exists and dim <= dense_max_dim.
  std::optional<EigenMethod> method;
  int dense_max_dim = 200;
  /// Rayleigh-quotient stagnation tolerance; unset means 1e-8 * L1.
  std::optional<double> tol;
  long long max_iters = 200000;
  int restarts = 5;
  std::uint64_t seed = 0x5eed;
  /// Use central differences of the gradient instead of the analytic HVP.
  bool finite_difference_hvp = false;
  double fd_step = kDefaultFdStep;
};

struct EigenEstimate {
  double lambda = 0.0;
  Vector v;
  double residual = 0.0;  // |H v - lambda v|
  EigenMethod method = EigenMethod::dense;
  long long iterations = 0;
};

inline EigenEstimate min_eigenvalue_dense(const Matrix& H) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(H);
  EigenEstimate est;
  est.method = EigenMethod::dense;
  est.lambda = es.eigenvalues()[0];
  est.v = es.eigenvectors().col(0);
  est.residual = (H * est.v - est.lambda * est.v).norm();
  return est;
}

/// Power iteration on sigma I - H with sigma = L1, whose top eigenvalue is
/// sigma - lambda_min when |H| <= L1. Stops when the Rayleigh quotient
/// changes by at most tol and the eigen-residual is at most 100 tol; keeps the
/// smallest lambda over `restarts` random starts.
inline EigenEstimate min_eigenvalue_matrix_free(const Objective& obj,
                                                const Vector& x,
                                                const EigenOptions& opt = {}) {
  const double sigma = obj.constants.L1;
  const double tol = opt.tol.value_or(1e-8 * sigma);
  if (!(tol > 0.0)) throw InvalidArgument("min_eigenvalue: tol must be > 0");
  if (opt.restarts < 1) throw InvalidArgument("min_eigenvalue: restarts must be >= 1");

  VectorFn grad = obj.gradient;
  auto hvp = [&](const Vector& v) -> Vector {
    if (opt.finite_difference_hvp) return finite_diff_hvp(grad, x, v, opt.fd_step);
    return obj.hvp(x, v);
  };

  const int d = obj.dim;
  const RngStream base(opt.seed);
  std::optional<EigenEstimate> best;
  double best_rho = 0.0;
  bool all_converged = true;

  for (int k = 0; k < opt.restarts; ++k) {
    RngStream rng = base.substream(static_cast<std::uint64_t>(k));
    Vector v(d);
    for (int i = 0; i < d; ++i) v[i] = rng.gaussian();
    v.normalize();

    double rho = 0.0, prev = std::numeric_limits<double>::infinity();
    double residual = std::numeric_limits<double>::infinity();
    long long it = 0;
    bool converged = false;
    for (; it < opt.max_iters; ++it) {
      const Vector w = sigma * v - hvp(v);
      rho = v.dot(w);
      residual = (rho * v - w).norm();  // equals |H v - (sigma - rho) v|
      if (std::abs(rho - prev) <= tol && residual <= 100.0 * tol) {
        converged = true;
        break;
      }
      prev = rho;
      const double wn = w.norm();
      if (wn == 0.0) {  // v spans the kernel of the shifted operator
        converged = true;
        break;
      }
      v = w / wn;
    }
    all_converged = all_converged && converged;
    const double lambda = sigma - rho;
    if (!best || lambda < best->lambda) {
      best = EigenEstimate{lambda, v, residual, EigenMethod::matrix_free, it};
      best_rho = rho;
    }
  }

  if (best_rho < -100.0 * tol)
    throw ContractViolation(
        "shifted operator L1*I - H has a negative dominant eigenvalue; the "
        "declared L1 understates |H| at this point");
  if (!all_converged && best->residual > 100.0 * tol)
    throw ConvergenceFailure("power iteration exhausted max_iters", best->lambda,
                             best->residual);
  return *best;
}

inline EigenEstimate min_eigenvalue(const Objective& obj, const Vector& x,
                                    const EigenOptions& opt = {}) {
  if (x.size() != obj.dim) throw InvalidArgument("min_eigenvalue: dimension mismatch");
  if (!obj.region.contains(x))
    throw InvalidArgument("min_eigenvalue: point outside the valid region");
  const EigenMethod m = opt.method.value_or(
      obj.has_dense_hessian() && obj.dim <= opt.dense_max_dim ? EigenMethod::dense
                                                              : EigenMethod::matrix_free);
  if (m == EigenMethod::dense) {
    if (!obj.has_dense_hessian())
      throw InvalidArgument("min_eigenvalue: dense method needs a dense Hessian");
    return min_eigenvalue_dense(obj.dense_hessian(x));
  }
  return min_eigenvalue_matrix_free(obj, x, opt);
}

enum class Classification { eps_sosp, eps_fosp_strict_saddle, not_fosp };

inline std::string to_string(Classification c) {
  switch (c) {
    case Classification::eps_sosp: return "eps_sosp";
    case Classification::eps_fosp_strict_saddle: return "eps_fosp_strict_saddle";
    case Classification::not_fosp: return "not_fosp";
  }
  return "unknown";
}

inline Classification classification_from_string(const std::string& s) {
  for (Classification c : {Classification::eps_sosp,
                           Classification::eps_fosp_strict_saddle,
                           Classification::not_fosp})
    if (to_string(c) == s) return c;
  throw InvalidArgument("unknown classification '" + s + "'");
}

struct Certificate {
  double grad_norm = 0.0;
  std::optional<double> lambda_min;  // absent when not evaluated
  double lambda_min_residual = 0.0;
  double eps = 0.0;
  double gamma = 0.0;  // sqrt(L2 eps)
  Classification classification = Classification::not_fosp;
  std::optional<EigenMethod> method;
};

/// |grad| <= eps and lambda_min >= -sqrt(L2 eps) is an eps-SOSP.
inline Classification classify_values(double grad_norm,
                                      std::optional<double> lambda_min,
                                      double eps, double L2) {
  if (!(grad_norm <= eps)) return Classification::not_fosp;
  if (!lambda_min)
    throw InvalidArgument("classify: lambda_min required for a first-order point");
  return *lambda_min >= -std::sqrt(L2 * eps) ? Classification::eps_sosp
                                             : Classification::eps_fosp_strict_saddle;
}

inline Certificate classify(const Objective& obj, const Vector& x, double eps,
                            const EigenOptions& opt = {}) {
  if (!(eps > 0.0)) throw InvalidArgument("classify: eps must be > 0");
  Certificate cert;
  cert.eps = eps;
  cert.gamma = std::sqrt(obj.constants.L2 * eps);
  cert.grad_norm = obj.gradient(x).norm();
  if (cert.grad_norm > eps) {
    cert.classification = Classification::not_fosp;
    return cert;
  }
  const EigenEstimate est = min_eigenvalue(obj, x, opt);
  cert.lambda_min = est.lambda;
  cert.lambda_min_residual = est.residual;
  cert.method = est.method;
  cert.classification =
      classify_values(cert.grad_norm, cert.lambda_min, eps, obj.constants.L2);
  return cert;
}

inline Certificate certify_run(const Objective& obj, const RunResult& result,
                               double eps, const EigenOptions& opt = {}) {
  if (result.termination == Termination::left_valid_region)
    throw InvalidArgument("certify_run: run left the valid region");
  return classify(obj, result.x_out, eps, opt);
}

}  // namespace psca
