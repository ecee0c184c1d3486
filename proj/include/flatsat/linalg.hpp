#pragma once

#include "flatsat/types.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace flatsat::linalg {

template <typename Derived>
bool is_symmetric(const Eigen::MatrixBase<Derived>& m, double tol = 1e-10) {
  if (m.rows() != m.cols()) return false;
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol;
}

template <typename Derived>
auto symmetric_eigenvalues(const Eigen::MatrixBase<Derived>& m) {
  using Plain = typename Derived::PlainObject;
  Plain sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Plain> solver(sym, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().eval();
}

template <typename Derived>
double max_eigenvalue(const Eigen::MatrixBase<Derived>& m) {
  return symmetric_eigenvalues(m).maxCoeff();
}

template <typename Derived>
double min_eigenvalue(const Eigen::MatrixBase<Derived>& m) {
  return symmetric_eigenvalues(m).minCoeff();
}

template <typename Derived>
bool is_spd(const Eigen::MatrixBase<Derived>& m, double sym_tol = 1e-10) {
  return is_symmetric(m, sym_tol) && min_eigenvalue(m) > 0.0;
}

/// Symmetric inverse square root M^{-1/2} of an SPD matrix.
template <typename Derived>
auto inverse_sqrt(const Eigen::MatrixBase<Derived>& m) {
  using Plain = typename Derived::PlainObject;
  Plain sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Plain> solver(sym);
  Plain out = solver.eigenvectors() * solver.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
              solver.eigenvectors().transpose();
  return out;
}

template <typename Derived>
double spectral_radius(const Eigen::MatrixBase<Derived>& m) {
  Eigen::EigenSolver<typename Derived::PlainObject> solver(m, false);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace flatsat::linalg
