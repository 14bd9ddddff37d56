#pragma once

// Test-only helpers: independent numeric oracles kept separate from the
// implementation paths they check.

#include <Eigen/Core>
#include <functional>
#include <random>

namespace divsim::test {

// Central finite differences with step h.
inline Eigen::VectorXd finite_difference_grad(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (int i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x;
    Eigen::VectorXd xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double scale = std::max(1e-12, std::max(a.norm(), b.norm()));
  return (a - b).norm() / scale;
}

inline Eigen::VectorXd random_vector(std::mt19937_64& rng, int d) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(d);
  for (int i = 0; i < d; ++i) v[i] = normal(rng);
  return v;
}

inline Eigen::VectorXd random_unit(std::mt19937_64& rng, int d) {
  return random_vector(rng, d).normalized();
}

}  // namespace divsim::test
