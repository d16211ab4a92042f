#pragma once

#include <cstdint>
#include <random>

#include <Eigen/QR>

#include "mpsstab/core.hpp"
#include "mpsstab/linalg.hpp"

namespace mpsstab {

using Rng = std::mt19937_64;

// Deterministic seed mixing (splitmix64 finalizer) for deriving independent
// streams from a base seed and a tag.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  std::normal_distribution<double> g;
  Matrix X(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index j = 0; j < X.cols(); ++j)
    for (Eigen::Index i = 0; i < X.rows(); ++i) X(i, j) = cplx(g(rng), g(rng));
  return X;
}

// Haar-distributed isometry (rows >= cols) from the QR of a Gaussian matrix
// with the phases of R's diagonal divided out.
inline Matrix haar_isometry(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix G = gaussian_matrix(rows, cols, rng);
  Eigen::HouseholderQR<Matrix> qr(G);
  Matrix Q = qr.householderQ() * Matrix::Identity(G.rows(), G.cols());
  Matrix R = qr.matrixQR().topRows(G.cols()).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < Q.cols(); ++j) {
    cplx r = R(j, j);
    if (std::abs(r) > 0) Q.col(j) *= r / std::abs(r);
  }
  return Q;
}

inline Matrix haar_unitary(std::size_t n, Rng& rng) { return haar_isometry(n, n, rng); }

// Hermitian matrix from the Gaussian unitary ensemble.
inline Matrix gue_matrix(std::size_t n, Rng& rng) {
  Matrix G = gaussian_matrix(n, n, rng);
  return (G + G.adjoint()) / 2.0;
}

// Positive semidefinite matrix of the given rank with trace one.
inline Matrix random_density(std::size_t n, std::size_t rank, Rng& rng) {
  Matrix G = gaussian_matrix(n, rank, rng);
  Matrix rho = G * G.adjoint();
  return rho / rho.trace().real();
}

}  // namespace mpsstab
