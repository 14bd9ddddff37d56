#pragma once

#include <Eigen/Core>

#include "divsim/errors.hpp"

namespace divsim {

// Unit vector in R^d. Produced by normalize(); all similarity math below
// assumes unit norm so cosine similarity reduces to a dot product.
using Embedding = Eigen::VectorXd;

// Shared numeric tolerances. Single source of truth for the test suites.
inline constexpr double kNormTol = 1e-9;
inline constexpr double kZeroNormEps = 1e-12;
inline constexpr double kGradCheckRelTol = 1e-5;

template <typename Derived>
Embedding normalize(const Eigen::MatrixBase<Derived>& v) {
  const double n = v.norm();
  if (n < kZeroNormEps) throw ZeroVectorError();
  return v / n;
}

inline void check_same_dim(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw DimensionMismatchError(a.size(), b.size());
}

// Cosine dissimilarity 1 - cos(a, b) for unit vectors; range [0, 2].
template <typename DerivedA, typename DerivedB>
double dissimilarity(const Eigen::MatrixBase<DerivedA>& a,
                     const Eigen::MatrixBase<DerivedB>& b) {
  if (a.size() != b.size()) throw DimensionMismatchError(a.size(), b.size());
  return 1.0 - a.dot(b);
}

// Gradient of 1 - a.b/(|a||b|) with respect to the raw (pre-normalization)
// vector a, so optimizers can chain through a trailing normalization step.
template <typename DerivedA, typename DerivedB>
Eigen::VectorXd dissimilarity_grad(const Eigen::MatrixBase<DerivedA>& a,
                                   const Eigen::MatrixBase<DerivedB>& b) {
  if (a.size() != b.size()) throw DimensionMismatchError(a.size(), b.size());
  const double na = a.norm();
  const double nb = b.norm();
  const double dot = a.dot(b);
  return (dot / (na * na * na * nb)) * a - b / (na * nb);
}

}  // namespace divsim
