#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "psca/errors.hpp"
#include "psca/numerics.hpp"

namespace psca {

using HvpFn = std::function<Vector(const Vector&, const Vector&)>;
using HessianFn = std::function<Matrix(const Vector&)>;

/// Lipschitz constants of U (L0), grad U (L1) and the Hessian (L2), valid
/// inside the objective's declared region.
struct SmoothnessConstants {
  std::optional<double> L0;
  double L1 = 1.0;
  double L2 = 1.0;
};

/// Origin-centred ball on which the smoothness constants hold.
struct ValidRegion {
  enum class Norm { euclidean, infinity };

  Norm norm = Norm::euclidean;
  double radius = 1.0;

  double measure(const Vector& x) const {
    return norm == Norm::euclidean ? x.norm() : x.lpNorm<Eigen::Infinity>();
  }
  bool contains(const Vector& x) const { return measure(x) <= radius; }

  /// Uniform sample from the region.
  Vector sample(int dim, RngStream& rng) const {
    if (norm == Norm::euclidean) return sample_uniform_ball(dim, radius, rng);
    Vector x(dim);
    for (int i = 0; i < dim; ++i) x[i] = radius * (2.0 * rng.uniform() - 1.0);
    return x;
  }
};

struct Objective {
  int dim = 0;
  ScalarFn value;
  VectorFn gradient;
  HvpFn hvp;
  HessianFn dense_hessian;  // empty when unavailable
  SmoothnessConstants constants;
  std::optional<double> f_star;  // known lower bound U(x*)
  ValidRegion region;

  bool has_dense_hessian() const { return static_cast<bool>(dense_hessian); }

  /// Dense Hessian if declared, otherwise assembled column-by-column from hvp
  /// and symmetrized.
  Matrix hessian(const Vector& x) const {
    if (has_dense_hessian()) return dense_hessian(x);
    Matrix h(dim, dim);
    Vector e = Vector::Zero(dim);
    for (int j = 0; j < dim; ++j) {
      e[j] = 1.0;
      h.col(j) = hvp(x, e);
      e[j] = 0.0;
    }
    return 0.5 * (h + h.transpose());
  }
};

struct KnownMinimum {
  Vector point;
  double value = 0.0;
};

struct ProblemInstance {
  std::string name;
  Objective objective;
  Vector canonical_start;
  std::vector<Vector> known_saddles;
  std::vector<KnownMinimum> known_minima;
};

namespace detail {

inline double min_eig(const Matrix& h) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues()[0];
}

inline double spectral_norm(const Matrix& h) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (h + h.transpose()),
                                           Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace detail

/// Checks every registered saddle and minimum against its defining
/// conditions via the dense Hessian. Throws ContractViolation on failure.
inline void check_known_points(const ProblemInstance& p) {
  const Objective& obj = p.objective;
  for (const Vector& s : p.known_saddles) {
    const double g = obj.gradient(s).norm();
    const double lam = detail::min_eig(obj.hessian(s));
    if (!(g <= 1e-10) || !(lam < 0.0))
      throw ContractViolation(p.name + ": registered saddle fails check (|grad| = " +
                              std::to_string(g) + ", lambda_min = " +
                              std::to_string(lam) + ")");
  }
  for (const KnownMinimum& m : p.known_minima) {
    const double g = obj.gradient(m.point).norm();
    const double f = obj.value(m.point);
    const Matrix h = obj.hessian(m.point);
    const double lam = detail::min_eig(h);
    // Flat directions (e.g. rotations of a factorization) are zero only up
    // to roundoff.
    const double flat = 1e-10 * std::max(1.0, detail::spectral_norm(h));
    if (!(g <= 1e-10) || !(std::abs(f - m.value) <= 1e-12) || !(lam >= -flat))
      throw ContractViolation(p.name + ": registered minimum fails check");
  }
}

/// U(x) = 1/2 x'Hx + b'x. L1 = |H|_2. The Hessian is constant, so any
/// positive L2 is a valid Hessian-Lipschitz constant; `hessian_lipschitz`
/// defaults to L1 to keep eps <= L1^2/L2 scale-consistent.
inline ProblemInstance make_quadratic(const Matrix& H, const Vector& b,
                                      double region_radius = 10.0,
                                      std::optional<double> hessian_lipschitz = {}) {
  const auto d = H.rows();
  if (d < 1 || H.cols() != d || b.size() != d)
    throw InvalidArgument("make_quadratic: H must be square and match b");
  if ((H - H.transpose()).lpNorm<Eigen::Infinity>() > 1e-12)
    throw InvalidArgument("make_quadratic: H must be symmetric");
  if (!(region_radius > 0.0))
    throw InvalidArgument("make_quadratic: region radius must be positive");

  const Matrix Hs = 0.5 * (H + H.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(Hs);
  const Vector eig = es.eigenvalues();
  const double l1 = eig.cwiseAbs().maxCoeff();

  ProblemInstance p;
  p.name = "quadratic";
  Objective& o = p.objective;
  o.dim = static_cast<int>(d);
  o.value = [Hs, b](const Vector& x) { return 0.5 * x.dot(Hs * x) + b.dot(x); };
  o.gradient = [Hs, b](const Vector& x) -> Vector { return Hs * x + b; };
  o.hvp = [Hs](const Vector&, const Vector& v) -> Vector { return Hs * v; };
  o.dense_hessian = [Hs](const Vector&) -> Matrix { return Hs; };
  o.constants.L1 = l1 > 0.0 ? l1 : 1.0;
  o.constants.L2 = hessian_lipschitz.value_or(o.constants.L1);
  o.constants.L0 = l1 * region_radius + b.norm();
  o.region = {ValidRegion::Norm::euclidean, region_radius};

  p.canonical_start = Vector::Ones(d);
  const double tiny = 1e-12 * std::max(1.0, l1);
  if (eig.cwiseAbs().minCoeff() > tiny) {
    const Vector crit = Hs.ldlt().solve(-b);
    if (eig[0] > 0.0) {
      const double fmin = o.value(crit);
      p.known_minima.push_back({crit, fmin});
      o.f_star = fmin;
    } else if (eig[d - 1] > 0.0) {
      p.known_saddles.push_back(crit);
    }
  }
  check_known_points(p);
  return p;
}

/// U(x) = x1^2/2 - x2^2/2 + x2^4/4 + sum_{i>=3} xi^2/2. Strict saddle at the
/// origin, minima at x2 = +-1 with value -1/4. Constants hold on |x|_inf <= 2.
inline ProblemInstance make_saddle_quartic(int dim) {
  if (dim < 2) throw InvalidArgument("make_saddle_quartic: dim must be >= 2");

  ProblemInstance p;
  p.name = "saddle_quartic";
  Objective& o = p.objective;
  o.dim = dim;
  o.value = [](const Vector& x) {
    const double y = x[1];
    return 0.5 * x.squaredNorm() - y * y + 0.25 * y * y * y * y;
  };
  o.gradient = [](const Vector& x) -> Vector {
    Vector g = x;
    g[1] = -x[1] + x[1] * x[1] * x[1];
    return g;
  };
  o.hvp = [](const Vector& x, const Vector& v) -> Vector {
    Vector out = v;
    out[1] = (-1.0 + 3.0 * x[1] * x[1]) * v[1];
    return out;
  };
  o.dense_hessian = [dim](const Vector& x) -> Matrix {
    Matrix h = Matrix::Identity(dim, dim);
    h(1, 1) = -1.0 + 3.0 * x[1] * x[1];
    return h;
  };
  o.constants.L0 = std::sqrt(4.0 * (dim - 1) + 36.0);
  o.constants.L1 = 11.0;
  o.constants.L2 = 12.0;
  o.f_star = -0.25;
  o.region = {ValidRegion::Norm::infinity, 2.0};

  p.canonical_start = Vector::Zero(dim);
  p.known_saddles.push_back(Vector::Zero(dim));
  for (double sign : {1.0, -1.0}) {
    Vector m = Vector::Zero(dim);
    m[1] = sign;
    p.known_minima.push_back({m, -0.25});
  }
  check_known_points(p);
  return p;
}

/// U(V) = 1/4 |VV' - M|_F^2 over V in R^{d x r}, flattened column-major.
/// Constants hold on |V|_F <= 2 |M|_2^{1/2}.
inline ProblemInstance make_matrix_factorization(const Matrix& M, int rank) {
  const auto d = M.rows();
  if (d < 1 || M.cols() != d)
    throw InvalidArgument("make_matrix_factorization: M must be square");
  if (rank < 1 || rank > d)
    throw InvalidArgument("make_matrix_factorization: need 1 <= r <= d");
  if ((M - M.transpose()).lpNorm<Eigen::Infinity>() > 1e-12)
    throw InvalidArgument("make_matrix_factorization: M must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(M);
  if (es.eigenvalues()[0] < -1e-10)
    throw InvalidArgument("make_matrix_factorization: M must be PSD");

  const int n = static_cast<int>(d);
  const int r = rank;
  const double mnorm = std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 0.0);
  const double radius = mnorm > 0.0 ? 2.0 * std::sqrt(mnorm) : 1.0;

  auto as_mat = [n, r](const Vector& v) {
    return Eigen::Map<const Matrix>(v.data(), n, r);
  };
  auto flat = [](const Matrix& m) -> Vector {
    return Eigen::Map<const Vector>(m.data(), m.size());
  };

  ProblemInstance p;
  p.name = "matrix_factorization";
  Objective& o = p.objective;
  o.dim = n * r;
  o.value = [M, as_mat](const Vector& v) {
    const Matrix V = as_mat(v);
    return 0.25 * (V * V.transpose() - M).squaredNorm();
  };
  o.gradient = [M, as_mat, flat](const Vector& v) -> Vector {
    const Matrix V = as_mat(v);
    return flat((V * V.transpose() - M) * V);
  };
  o.hvp = [M, as_mat, flat](const Vector& v, const Vector& dv) -> Vector {
    const Matrix V = as_mat(v);
    const Matrix D = as_mat(dv);
    const Matrix S = D * V.transpose() + V * D.transpose();
    return flat(S * V + (V * V.transpose() - M) * D);
  };
  const int dim = o.dim;
  const HvpFn hvp = o.hvp;
  o.dense_hessian = [dim, hvp](const Vector& v) -> Matrix {
    Matrix h(dim, dim);
    Vector e = Vector::Zero(dim);
    for (int j = 0; j < dim; ++j) {
      e[j] = 1.0;
      h.col(j) = hvp(v, e);
      e[j] = 0.0;
    }
    return 0.5 * (h + h.transpose());
  };
  // |Hess| <= 3|V|^2 + |M|, third derivative <= 6|V|, |grad| <= (|V|^2+|M|)|V|.
  const double R = radius;
  o.constants.L1 = std::max(3.0 * R * R + mnorm, 1e-12);
  o.constants.L2 = std::max(6.0 * R, 1e-12);
  o.constants.L0 = (R * R + mnorm) * R;
  o.f_star = 0.0;
  o.region = {ValidRegion::Norm::euclidean, R};

  // Small generic start; equal columns would never break the symmetry.
  RngStream start_rng(0);
  p.canonical_start = sample_uniform_ball(o.dim, 1e-2 * R, start_rng);
  if (mnorm > 0.0) p.known_saddles.push_back(Vector::Zero(o.dim));

  // Best rank-r factor from the top eigenpairs (Eckart-Young).
  Matrix Vopt(n, r);
  for (int j = 0; j < r; ++j) {
    const double lam = std::max(es.eigenvalues()[n - 1 - j], 0.0);
    Vopt.col(j) = es.eigenvectors().col(n - 1 - j) * std::sqrt(lam);
  }
  const Vector vopt = flat(Vopt);
  const double fopt = o.value(vopt);
  p.known_minima.push_back({vopt, fopt});
  if (fopt > 1e-12) o.f_star = fopt;
  check_known_points(p);
  return p;
}

/// Chained Rosenbrock: sum_i 100 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2.
/// Constants hold on |x|_inf <= 2; L1 from Gershgorin, L2 from row sums of
/// the Hessian difference. L0 is not declared.
inline ProblemInstance make_rosenbrock(int dim) {
  if (dim < 2) throw InvalidArgument("make_rosenbrock: dim must be >= 2");

  ProblemInstance p;
  p.name = "rosenbrock";
  Objective& o = p.objective;
  o.dim = dim;
  o.value = [](const Vector& x) {
    double f = 0.0;
    for (Eigen::Index i = 0; i + 1 < x.size(); ++i) {
      const double a = x[i + 1] - x[i] * x[i];
      const double b = 1.0 - x[i];
      f += 100.0 * a * a + b * b;
    }
    return f;
  };
  o.gradient = [](const Vector& x) -> Vector {
    Vector g = Vector::Zero(x.size());
    for (Eigen::Index i = 0; i + 1 < x.size(); ++i) {
      const double a = x[i + 1] - x[i] * x[i];
      g[i] += -400.0 * x[i] * a - 2.0 * (1.0 - x[i]);
      g[i + 1] += 200.0 * a;
    }
    return g;
  };
  o.dense_hessian = [](const Vector& x) -> Matrix {
    const auto n = x.size();
    Matrix h = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
      h(i, i) += 1200.0 * x[i] * x[i] - 400.0 * x[i + 1] + 2.0;
      h(i + 1, i + 1) += 200.0;
      h(i, i + 1) += -400.0 * x[i];
      h(i + 1, i) += -400.0 * x[i];
    }
    return h;
  };
  o.hvp = [](const Vector& x, const Vector& v) -> Vector {
    Vector out = Vector::Zero(x.size());
    for (Eigen::Index i = 0; i + 1 < x.size(); ++i) {
      const double dii = 1200.0 * x[i] * x[i] - 400.0 * x[i + 1] + 2.0;
      const double off = -400.0 * x[i];
      out[i] += dii * v[i] + off * v[i + 1];
      out[i + 1] += off * v[i] + 200.0 * v[i + 1];
    }
    return out;
  };
  o.constants.L1 = dim == 2 ? 6402.0 : 7402.0;
  o.constants.L2 = 6000.0;
  o.f_star = 0.0;
  o.region = {ValidRegion::Norm::infinity, 2.0};

  p.canonical_start = Vector::Ones(dim);
  p.canonical_start[0] = -1.2;
  p.known_minima.push_back({Vector::Ones(dim), 0.0});
  check_known_points(p);
  return p;
}

/// Largest observed Lipschitz ratios over sampled pairs in the valid region.
struct ContractReport {
  int samples = 0;
  double max_value_ratio = 0.0;
  double max_gradient_ratio = 0.0;
  double max_hessian_ratio = 0.0;
  bool value_violation = false;
  bool gradient_violation = false;
  bool hessian_violation = false;

  bool ok() const {
    return !value_violation && !gradient_violation && !hessian_violation;
  }
};

/// Samples pairs in the valid region (half far apart, half nearby, which
/// probes local curvature) and flags any ratio exceeding its declared
/// constant by more than 1%.
inline ContractReport validate_contracts(const ProblemInstance& p,
                                         RngStream& rng, int samples = 1000) {
  if (samples < 100)
    throw InvalidArgument("validate_contracts: need at least 100 samples");
  const Objective& o = p.objective;
  ContractReport rep;
  rep.samples = samples;
  const double local = 1e-3 * o.region.radius;

  for (int k = 0; k < samples; ++k) {
    const Vector x = o.region.sample(o.dim, rng);
    Vector y;
    if (k % 2 == 0) {
      y = o.region.sample(o.dim, rng);
    } else {
      y = x + sample_uniform_ball(o.dim, local, rng);
      if (!o.region.contains(y)) y = x * (1.0 - 1e-3);
    }
    const double dist = (x - y).norm();
    if (!(dist > 0.0)) continue;
    rep.max_value_ratio =
        std::max(rep.max_value_ratio, std::abs(o.value(x) - o.value(y)) / dist);
    rep.max_gradient_ratio = std::max(
        rep.max_gradient_ratio, (o.gradient(x) - o.gradient(y)).norm() / dist);
    rep.max_hessian_ratio = std::max(
        rep.max_hessian_ratio,
        detail::spectral_norm(o.hessian(x) - o.hessian(y)) / dist);
  }
  const auto exceeds = [](double observed, double declared) {
    return observed > 1.01 * declared;
  };
  if (o.constants.L0)
    rep.value_violation = exceeds(rep.max_value_ratio, *o.constants.L0);
  rep.gradient_violation = exceeds(rep.max_gradient_ratio, o.constants.L1);
  rep.hessian_violation = exceeds(rep.max_hessian_ratio, o.constants.L2);
  return rep;
}

}  // namespace psca
