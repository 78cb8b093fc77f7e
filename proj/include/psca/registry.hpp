#pragma once

// Name-addressable benchmark problems, e.g. "saddle_quartic:d=10" or
// "matrix_factorization:d=6,r=2,seed=3".

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "psca/errors.hpp"
#include "psca/numerics.hpp"
#include "psca/problems.hpp"

namespace psca {

struct ProblemSpec {
  std::string name;
  std::map<std::string, std::string> params;
};

inline ProblemSpec parse_problem_spec(const std::string& text) {
  ProblemSpec spec;
  const auto colon = text.find(':');
  spec.name = text.substr(0, colon);
  if (spec.name.empty()) throw InvalidArgument("empty problem name");
  if (colon == std::string::npos) return spec;
  std::string rest = text.substr(colon + 1);
  std::size_t pos = 0;
  while (pos <= rest.size()) {
    const auto comma = rest.find(',', pos);
    const std::string item =
        rest.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (!item.empty()) {
      const auto eq = item.find('=');
      if (eq == std::string::npos || eq == 0)
        throw InvalidArgument("malformed problem parameter '" + item + "'");
      spec.params[item.substr(0, eq)] = item.substr(eq + 1);
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return spec;
}

inline const std::vector<std::string>& registered_problems() {
  static const std::vector<std::string> names = {
      "quadratic", "saddle_quartic", "matrix_factorization", "rosenbrock"};
  return names;
}

namespace detail {

inline long long param_int(const ProblemSpec& s, const std::string& key,
                           long long fallback) {
  auto it = s.params.find(key);
  if (it == s.params.end()) return fallback;
  try {
    std::size_t used = 0;
    const long long v = std::stoll(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument("problem parameter " + key + " must be an integer");
  }
}

inline void reject_unknown(const ProblemSpec& s,
                           const std::vector<std::string>& allowed) {
  for (const auto& [k, v] : s.params) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      throw InvalidArgument("unknown parameter '" + k + "' for problem " + s.name);
  }
}

}  // namespace detail

/// Builds a registered problem. Quadratic kinds: `spread` (diag(i/d), the
/// default), `identity`, `saddle` (diag(1,-1,1,...)) and `random` (seeded
/// symmetric Gaussian matrix).
inline ProblemInstance make_problem(const std::string& text) {
  const ProblemSpec s = parse_problem_spec(text);
  ProblemInstance p;
  if (s.name == "saddle_quartic") {
    detail::reject_unknown(s, {"d"});
    p = make_saddle_quartic(static_cast<int>(detail::param_int(s, "d", 2)));
  } else if (s.name == "rosenbrock") {
    detail::reject_unknown(s, {"d"});
    p = make_rosenbrock(static_cast<int>(detail::param_int(s, "d", 2)));
  } else if (s.name == "matrix_factorization") {
    detail::reject_unknown(s, {"d", "r", "seed"});
    const auto d = detail::param_int(s, "d", 6);
    const auto r = detail::param_int(s, "r", 2);
    if (d < 1 || r < 1) throw InvalidArgument("matrix_factorization: d, r must be >= 1");
    RngStream rng(static_cast<std::uint64_t>(detail::param_int(s, "seed", 0)));
    Matrix vstar(d, r);
    for (Eigen::Index j = 0; j < vstar.cols(); ++j)
      for (Eigen::Index i = 0; i < vstar.rows(); ++i) vstar(i, j) = rng.gaussian();
    p = make_matrix_factorization(vstar * vstar.transpose(), static_cast<int>(r));
  } else if (s.name == "quadratic") {
    detail::reject_unknown(s, {"d", "kind", "seed"});
    const auto d = detail::param_int(s, "d", 2);
    if (d < 1) throw InvalidArgument("quadratic: d must be >= 1");
    const auto kind_it = s.params.find("kind");
    const std::string kind = kind_it == s.params.end() ? "spread" : kind_it->second;
    Matrix H = Matrix::Zero(d, d);
    if (kind == "spread") {
      for (Eigen::Index i = 0; i < d; ++i) H(i, i) = double(i + 1) / double(d);
    } else if (kind == "identity") {
      H.setIdentity();
    } else if (kind == "saddle") {
      H.setIdentity();
      if (d >= 2) H(1, 1) = -1.0;
    } else if (kind == "random") {
      RngStream rng(static_cast<std::uint64_t>(detail::param_int(s, "seed", 0)));
      for (Eigen::Index j = 0; j < d; ++j)
        for (Eigen::Index i = 0; i < d; ++i) H(i, j) = rng.gaussian();
      H = 0.5 * (H + H.transpose()).eval();
    } else {
      throw InvalidArgument("quadratic: unknown kind '" + kind + "'");
    }
    p = make_quadratic(H, Vector::Zero(d));
  } else {
    throw InvalidArgument("unknown problem '" + s.name + "'");
  }
  p.name = text;
  return p;
}

}  // namespace psca
