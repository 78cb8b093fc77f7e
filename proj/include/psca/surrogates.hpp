#pragma once

// Strongly convex local models U~(x; y) of an objective, anchored at y, with
// grad U~(y; y) = grad U(y), and their (possibly inexact) minimization.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "psca/errors.hpp"
#include "psca/numerics.hpp"
#include "psca/problems.hpp"

namespace psca {

enum class SurrogateKind { proximal_linear, quadratic_split, custom };

inline std::string to_string(SurrogateKind k) {
  switch (k) {
    case SurrogateKind::proximal_linear: return "proximal_linear";
    case SurrogateKind::quadratic_split: return "quadratic_split";
    case SurrogateKind::custom: return "custom";
  }
  return "unknown";
}

inline SurrogateKind surrogate_kind_from_string(const std::string& s) {
  if (s == "proximal_linear" || s == "prox") return SurrogateKind::proximal_linear;
  if (s == "quadratic_split") return SurrogateKind::quadratic_split;
  if (s == "custom") return SurrogateKind::custom;
  throw InvalidArgument("unknown surrogate kind '" + s + "'");
}

struct SurrogateAt {
  Vector anchor;
  ScalarFn value;
  VectorFn gradient;
  double C = 1.0;
  std::optional<Vector> closed_form_minimizer;
  std::optional<double> model_smoothness;  // Lipschitz constant of grad U~
  std::optional<Matrix> model_hessian;     // for quadratic models
  double anchor_gradient_norm = 0.0;
};

struct SurrogateSpec;
using SurrogateBuilder =
    std::function<SurrogateAt(const Objective&, const Vector&, const SurrogateSpec&)>;

struct SurrogateSpec {
  SurrogateKind kind = SurrogateKind::proximal_linear;
  double C = 1.0;
  /// Inner stopping tolerance on |grad U~|. When `scale_inner_tol` is set the
  /// effective value is inner_tol * max(1, |grad U(y)|).
  double inner_tol = 1e-10;
  bool scale_inner_tol = true;
  int inner_max_iters = 100000;
  /// quadratic_split only: minimize by a dense eigen-solve instead of
  /// gradient descent on the model.
  bool dense_solve = false;
  SurrogateBuilder custom;

  void validate() const {
    if (!(C > 0.0) || !std::isfinite(C))
      throw InvalidArgument("surrogate: C must satisfy C > 0");
    if (!(inner_tol > 0.0))
      throw InvalidArgument("surrogate: inner_tol must satisfy inner_tol > 0");
    if (inner_max_iters < 1)
      throw InvalidArgument("surrogate: inner_max_iters must be >= 1");
    if (kind == SurrogateKind::custom && !custom)
      throw InvalidArgument("surrogate: custom kind requires a builder");
  }

  double effective_tol(double anchor_gradient_norm) const {
    return scale_inner_tol ? inner_tol * std::max(1.0, anchor_gradient_norm)
                           : inner_tol;
  }
};

struct InnerSolveRecord {
  int iterations = 0;
  double residual = 0.0;   // |grad U~(x_hat; y)| on return
  double tolerance = 0.0;  // effective tolerance used
};

inline SurrogateAt build_surrogate(const Objective& obj, const Vector& y,
                                   const SurrogateSpec& spec) {
  spec.validate();
  if (y.size() != obj.dim)
    throw InvalidArgument("build_surrogate: anchor dimension mismatch");
  if (!obj.region.contains(y))
    throw InvalidArgument("build_surrogate: anchor outside the valid region");

  if (spec.kind == SurrogateKind::custom) {
    SurrogateAt s = spec.custom(obj, y, spec);
    const Vector g = obj.gradient(y);
    if ((s.gradient(y) - g).norm() > 1e-10)
      throw ContractViolation("custom surrogate: grad U~(y;y) != grad U(y)");
    s.anchor = y;
    s.anchor_gradient_norm = g.norm();
    return s;
  }

  const double fy = obj.value(y);
  const Vector gy = obj.gradient(y);
  const double C = spec.C;

  SurrogateAt s;
  s.anchor = y;
  s.C = C;
  s.anchor_gradient_norm = gy.norm();

  if (spec.kind == SurrogateKind::proximal_linear) {
    s.value = [fy, gy, y, C](const Vector& x) {
      const Vector dx = x - y;
      return fy + gy.dot(dx) + 0.5 * C * dx.squaredNorm();
    };
    s.gradient = [gy, y, C](const Vector& x) -> Vector { return gy + C * (x - y); };
    s.closed_form_minimizer = Vector(y - gy / C);
    s.model_smoothness = C;
    s.model_hessian = Matrix(C * Matrix::Identity(obj.dim, obj.dim));
    return s;
  }

  if (!obj.has_dense_hessian())
    throw UnsupportedSurrogate(
        "quadratic_split requires an objective with a dense Hessian");
  Eigen::SelfAdjointEigenSolver<Matrix> es(obj.dense_hessian(y));
  const Vector lam = es.eigenvalues().cwiseMax(0.0).array() + C;
  const Matrix& V = es.eigenvectors();
  const Matrix Q = V * lam.asDiagonal() * V.transpose();
  s.value = [fy, gy, y, Q](const Vector& x) {
    const Vector dx = x - y;
    return fy + gy.dot(dx) + 0.5 * dx.dot(Q * dx);
  };
  s.gradient = [gy, y, Q](const Vector& x) -> Vector { return gy + Q * (x - y); };
  s.model_smoothness = lam.maxCoeff();
  s.model_hessian = Q;
  if (spec.dense_solve) {
    const Vector step = V * (V.transpose() * gy).cwiseQuotient(lam);
    s.closed_form_minimizer = Vector(y - step);
  }
  return s;
}

/// Returns argmin U~(.; y): the closed form when available, otherwise
/// gradient descent with step 1/L~ from the anchor until |grad U~| <= tol.
inline std::pair<Vector, InnerSolveRecord> minimize_surrogate(
    const SurrogateAt& s, const SurrogateSpec& spec) {
  InnerSolveRecord rec;
  rec.tolerance = spec.effective_tol(s.anchor_gradient_norm);

  if (s.closed_form_minimizer) {
    rec.iterations = 0;
    rec.residual = s.gradient(*s.closed_form_minimizer).norm();
    return {*s.closed_form_minimizer, rec};
  }
  if (!s.model_smoothness || !(*s.model_smoothness > 0.0))
    throw UnsupportedSurrogate("surrogate has neither a closed form nor a "
                               "declared model smoothness");

  const double step = 1.0 / *s.model_smoothness;
  Vector x = s.anchor;
  Vector g = s.gradient(x);
  double res = g.norm();
  int it = 0;
  while (res > rec.tolerance) {
    if (it >= spec.inner_max_iters)
      throw InnerSolveFailure("surrogate inner solve hit inner_max_iters", res);
    x -= step * g;
    g = s.gradient(x);
    res = g.norm();
    ++it;
  }
  rec.iterations = it;
  rec.residual = res;
  return {x, rec};
}

}  // namespace psca
