#pragma once

// Dense vector helpers, a portable seeded generator, uniform-ball sampling
// and central finite-difference oracles.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>

#include <Eigen/Dense>

#include "psca/errors.hpp"

namespace psca {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

using ScalarFn = std::function<double(const Vector&)>;
using VectorFn = std::function<Vector(const Vector&)>;

inline constexpr double kDefaultFdStep = 1e-5;

inline bool all_finite(const Vector& v) { return v.allFinite(); }

/// Counter-based generator: draw k is splitmix64(seed + k * golden gamma).
/// Pure integer arithmetic, so sequences are identical on every platform.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0) noexcept : seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t draws() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept {
    ++counter_;
    return mix(seed_ + counter_ * kGamma);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; always consumes exactly two draws.
  double gaussian() noexcept {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  /// Independent stream keyed by `index`; does not advance this stream.
  RngStream substream(std::uint64_t index) const noexcept {
    return RngStream(mix(seed_ ^ mix(index + 0x632BE59BD9B4E019ULL)));
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  static std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

/// Uniform sample from the solid ball of the given radius centred at 0.
/// Gaussian direction, radius scaled by u^(1/dim). Consumes 2*dim + 1 draws.
/// The returned norm never exceeds `radius`.
inline Vector sample_uniform_ball(int dim, double radius, RngStream& rng) {
  if (dim < 1) throw InvalidArgument("sample_uniform_ball: dim must be >= 1");
  if (!(radius >= 0.0) || !std::isfinite(radius))
    throw InvalidArgument("sample_uniform_ball: radius must be finite and >= 0");

  Vector dir(dim);
  for (int i = 0; i < dim; ++i) dir[i] = rng.gaussian();
  const double u = rng.uniform();

  if (radius == 0.0) return Vector::Zero(dim);
  double n = dir.norm();
  if (n == 0.0) {  // probability zero; keep the result inside the ball
    dir.setZero();
    dir[0] = 1.0;
    n = 1.0;
  }
  Vector xi = dir * (radius * std::pow(u, 1.0 / dim) / n);
  while (xi.norm() > radius) xi *= std::nextafter(1.0, 0.0);
  return xi;
}

/// Central differences: entry i = (f(x + h e_i) - f(x - h e_i)) / 2h.
inline Vector finite_diff_gradient(const ScalarFn& f, const Vector& x,
                                   double h = kDefaultFdStep) {
  if (!(h > 0.0)) throw InvalidArgument("finite_diff_gradient: h must be > 0");
  Vector g(x.size());
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double fp = f(probe);
    probe[i] = x[i] - h;
    const double fm = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericDomainError("finite_diff_gradient: non-finite evaluation",
                               static_cast<std::size_t>(i));
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Directional central difference of the gradient along v / |v|, rescaled
/// by |v| so the result approximates Hessian(x) * v.
inline Vector finite_diff_hvp(const VectorFn& grad, const Vector& x,
                              const Vector& v, double h = kDefaultFdStep) {
  if (!(h > 0.0)) throw InvalidArgument("finite_diff_hvp: h must be > 0");
  const double vn = v.norm();
  if (!(vn > 0.0)) throw InvalidArgument("finite_diff_hvp: v must be nonzero");
  const Vector u = v / vn;
  const Vector gp = grad(x + h * u);
  const Vector gm = grad(x - h * u);
  Vector out = (gp - gm) * (vn / (2.0 * h));
  for (Eigen::Index i = 0; i < out.size(); ++i)
    if (!std::isfinite(out[i]))
      throw NumericDomainError("finite_diff_hvp: non-finite gradient",
                               static_cast<std::size_t>(i));
  return out;
}

/// |a - b| / max(|b|, floor), infinity-norm based.
inline double relative_error(const Vector& a, const Vector& b,
                             double floor = 1.0) {
  return (a - b).lpNorm<Eigen::Infinity>() /
         std::max(b.lpNorm<Eigen::Infinity>(), floor);
}

}  // namespace psca
