#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>

#include <Eigen/Sparse>

#include "mpsstab/core.hpp"
#include "mpsstab/linalg.hpp"
#include "mpsstab/product_space.hpp"

namespace mpsstab {

struct HermitianOperator {
  std::size_t dim = 0;
  BlockMap apply;
};

inline HermitianOperator as_operator(const Matrix& H) {
  auto M = std::make_shared<const Matrix>(H);
  return {static_cast<std::size_t>(H.rows()), [M](const Matrix& X) -> Matrix { return (*M) * X; }};
}

inline HermitianOperator as_operator(const SparseMatrix& H) {
  auto M = std::make_shared<const SparseMatrix>(H);
  return {static_cast<std::size_t>(H.rows()), [M](const Matrix& X) -> Matrix { return (*M) * X; }};
}

inline HermitianOperator as_operator(const LocalSum& H) { return {H.dim(), H.as_map()}; }

inline HermitianOperator scaled(const HermitianOperator& H, double a, double shift = 0.0) {
  return {H.dim, [H, a, shift](const Matrix& X) -> Matrix {
            Matrix Y = a * H.apply(X);
            if (shift != 0.0) Y += shift * X;
            return Y;
          }};
}

inline Matrix to_dense(const HermitianOperator& H) {
  if (H.dim > kDenseLimit) throw CapExceeded("to_dense: dimension above dense limit");
  const auto n = static_cast<Eigen::Index>(H.dim);
  Matrix M(n, n);
  const Eigen::Index chunk = 256;
  for (Eigen::Index c = 0; c < n; c += chunk) {
    Eigen::Index w = std::min(chunk, n - c);
    Matrix E = Matrix::Zero(n, w);
    for (Eigen::Index j = 0; j < w; ++j) E(c + j, j) = 1.0;
    M.middleCols(c, w) = H.apply(E);
  }
  return M;
}

inline Matrix random_block(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Matrix X(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index j = 0; j < X.cols(); ++j)
    for (Eigen::Index i = 0; i < X.rows(); ++i) X(i, j) = cplx(g(rng), g(rng));
  return X;
}

struct KrylovOptions {
  std::size_t block_size = 0;  // 0 selects max(k, 3)
  std::size_t max_basis = 0;   // 0 selects max(8 * block, 48)
  int max_restarts = 2000;
  double tol = 1e-9;           // residual tolerance, scaled by max(1, |theta|)
  std::uint64_t seed = 0x6b72796c6f76ULL;
  Matrix initial;              // optional starting block (n x any)
};

struct EigenResult {
  RealVector values;
  Matrix vectors;
  RealVector residuals;
  bool converged = false;
  int restarts = 0;
  std::size_t matvecs = 0;
  std::string method;
  double max_residual() const { return residuals.size() ? residuals.maxCoeff() : 0.0; }
};

namespace detail {

// Orthonormalizes the columns of Z against V and among themselves. Columns that
// collapse are replaced by fresh random directions.
inline Matrix orthonormalize_against(const Matrix& V, Matrix Z, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  const Eigen::Index n = Z.rows();
  Matrix Q(n, 0);
  for (Eigen::Index c = 0; c < Z.cols(); ++c) {
    Vector z = Z.col(c);
    for (int attempt = 0; attempt < 4; ++attempt) {
      double before = z.norm();
      if (before == 0.0) before = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        if (V.cols()) z -= V * (V.adjoint() * z);
        if (Q.cols()) z -= Q * (Q.adjoint() * z);
      }
      double after = z.norm();
      if (after > 1e-8 * before && after > 1e-300) {
        Q.conservativeResize(n, Q.cols() + 1);
        Q.col(Q.cols() - 1) = z / after;
        break;
      }
      for (Eigen::Index i = 0; i < n; ++i) z(i) = cplx(g(rng), g(rng));
    }
  }
  return Q;
}

}  // namespace detail

// k lowest eigenpairs of a Hermitian operator by a thick-restart block Krylov
// method with full reorthogonalization.
inline EigenResult lowest_eigenpairs(const HermitianOperator& H, std::size_t k, const KrylovOptions& opt = {}) {
  const std::size_t n = H.dim;
  if (k == 0 || k > n) throw Error("lowest_eigenpairs: invalid eigenpair count");
  const std::size_t b = std::min(n, opt.block_size ? opt.block_size : std::max<std::size_t>(k, 3));
  const std::size_t mmax = std::min(n, opt.max_basis ? opt.max_basis : std::max<std::size_t>(8 * b, 48));

  EigenResult res;
  if (n <= std::max<std::size_t>(3 * mmax, 128)) {
    HermitianEigen e = hermitian_eigen(to_dense(H));
    res.values = e.values.head(static_cast<Eigen::Index>(k));
    res.vectors = e.vectors.leftCols(static_cast<Eigen::Index>(k));
    res.residuals = RealVector::Zero(static_cast<Eigen::Index>(k));
    res.converged = true;
    res.matvecs = n;
    res.method = "dense";
    return res;
  }
  res.method = "krylov";

  std::mt19937_64 rng(opt.seed);
  const auto N = static_cast<Eigen::Index>(n);
  const auto K = static_cast<Eigen::Index>(k);
  Matrix V(N, 0), AV(N, 0);
  Matrix Z;
  if (opt.initial.rows() == N && opt.initial.cols() > 0) {
    Z = opt.initial.leftCols(std::min<Eigen::Index>(opt.initial.cols(), static_cast<Eigen::Index>(b)));
    if (Z.cols() < static_cast<Eigen::Index>(b)) {
      Matrix extra = random_block(n, b - static_cast<std::size_t>(Z.cols()), opt.seed);
      Matrix both(N, static_cast<Eigen::Index>(b));
      both << Z, extra;
      Z = both;
    }
  } else {
    Z = random_block(n, b, opt.seed);
  }

  RealVector theta;
  Matrix Y, AY;
  for (int restart = 0; restart <= opt.max_restarts; ++restart) {
    while (static_cast<std::size_t>(V.cols()) < mmax) {
      Matrix Q = detail::orthonormalize_against(V, Z, rng);
      Eigen::Index room = static_cast<Eigen::Index>(mmax) - V.cols();
      if (Q.cols() > room) Q = Q.leftCols(room).eval();
      if (Q.cols() == 0) break;
      Matrix AQ = H.apply(Q);
      res.matvecs += static_cast<std::size_t>(Q.cols());
      Eigen::Index c0 = V.cols();
      V.conservativeResize(N, c0 + Q.cols());
      AV.conservativeResize(N, c0 + Q.cols());
      V.rightCols(Q.cols()) = Q;
      AV.rightCols(Q.cols()) = AQ;
      Z = AQ;
    }
    Matrix T = hermitize(V.adjoint() * AV);
    HermitianEigen e = hermitian_eigen(T);
    Eigen::Index m = V.cols();
    Eigen::Index keep = std::min<Eigen::Index>(m, std::max<Eigen::Index>(K + static_cast<Eigen::Index>(b), m / 2));
    if (keep + static_cast<Eigen::Index>(b) > m) keep = std::max<Eigen::Index>(K, m - static_cast<Eigen::Index>(b));
    Matrix S = e.vectors.leftCols(keep);
    Y = V * S;
    AY = AV * S;
    theta = e.values.head(keep);
    res.residuals.resize(K);
    std::vector<Eigen::Index> open;
    bool all = true;
    for (Eigen::Index j = 0; j < K; ++j) {
      res.residuals(j) = (AY.col(j) - theta(j) * Y.col(j)).norm();
      if (res.residuals(j) > opt.tol * std::max(1.0, std::abs(theta(j)))) {
        all = false;
        open.push_back(j);
      }
    }
    res.restarts = restart;
    if (all) {
      res.converged = true;
      break;
    }
    for (Eigen::Index j = K; j < keep && open.size() < b; ++j) open.push_back(j);
    Z.resize(N, static_cast<Eigen::Index>(std::min(open.size(), b)));
    for (Eigen::Index c = 0; c < Z.cols(); ++c) Z.col(c) = AY.col(open[c]) - theta(open[c]) * Y.col(open[c]);
    V = Y;
    AV = AY;
  }
  res.values = theta.head(K);
  res.vectors = Y.leftCols(K);
  return res;
}

inline EigenResult highest_eigenpairs(const HermitianOperator& H, std::size_t k, const KrylovOptions& opt = {}) {
  EigenResult r = lowest_eigenpairs(scaled(H, -1.0), k, opt);
  r.values = -r.values;
  return r;
}

enum class SpectrumMode { automatic, dense, sparse };

inline const char* to_string(SpectrumMode m) {
  switch (m) {
    case SpectrumMode::dense: return "dense";
    case SpectrumMode::sparse: return "sparse";
    default: return "auto";
  }
}

struct Spectrum {
  RealVector values;  // ascending
  Matrix vectors;     // filled on request
  std::string method;
  double max_residual = 0.0;
  std::size_t matvecs = 0;
};

namespace detail {

inline Spectrum dense_spectrum(const Matrix& H, bool want_vectors) {
  Spectrum s;
  s.method = "dense";
  if (want_vectors) {
    HermitianEigen e = hermitian_eigen(H);
    s.values = e.values;
    s.vectors = e.vectors;
  } else {
    Eigen::SelfAdjointEigenSolver<Matrix> es(hermitize(H), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw Error("hermitian_spectrum: dense solver failed");
    s.values = es.eigenvalues();
  }
  return s;
}

inline Spectrum sparse_spectrum(const HermitianOperator& H, std::size_t k, bool want_vectors,
                                const KrylovOptions& opt) {
  if (k == 0 || k >= H.dim) throw Error("hermitian_spectrum: sparse mode requires 0 < k < dimension");
  EigenResult r = lowest_eigenpairs(H, k, opt);
  if (!r.converged)
    throw ConvergenceError("hermitian_spectrum: Krylov solver did not converge, residual " +
                               std::to_string(r.max_residual()),
                           r.max_residual());
  Spectrum s;
  s.method = "sparse";
  s.values = r.values;
  if (want_vectors) s.vectors = r.vectors;
  s.max_residual = r.max_residual();
  s.matvecs = r.matvecs;
  return s;
}

}  // namespace detail

inline Spectrum hermitian_spectrum(const HermitianOperator& H, SpectrumMode mode, std::size_t k,
                                   bool want_vectors = false, const KrylovOptions& opt = {}) {
  if (mode == SpectrumMode::automatic) mode = H.dim <= kDenseLimit ? SpectrumMode::dense : SpectrumMode::sparse;
  if (mode == SpectrumMode::dense) return detail::dense_spectrum(to_dense(H), want_vectors);
  return detail::sparse_spectrum(H, k, want_vectors, opt);
}

inline Spectrum hermitian_spectrum(const Matrix& H, SpectrumMode mode, std::size_t k,
                                   bool want_vectors = false, const KrylovOptions& opt = {}) {
  if (!all_finite(H)) throw Error("hermitian_spectrum: non-finite entries");
  if (!is_hermitian(H, 1e-10)) throw Error("hermitian_spectrum: input is not Hermitian");
  if (mode == SpectrumMode::automatic)
    mode = static_cast<std::size_t>(H.rows()) <= kDenseLimit ? SpectrumMode::dense : SpectrumMode::sparse;
  if (mode == SpectrumMode::dense) return detail::dense_spectrum(H, want_vectors);
  return detail::sparse_spectrum(as_operator(H), k, want_vectors, opt);
}

inline bool is_hermitian(const SparseMatrix& S, double rel_tol = 1e-12) {
  if (S.rows() != S.cols()) return false;
  SparseMatrix diff = S - SparseMatrix(S.adjoint());
  double scale = 1.0;
  for (int o = 0; o < S.outerSize(); ++o)
    for (SparseMatrix::InnerIterator it(S, o); it; ++it) scale = std::max(scale, std::abs(it.value()));
  for (int o = 0; o < diff.outerSize(); ++o)
    for (SparseMatrix::InnerIterator it(diff, o); it; ++it)
      if (std::abs(it.value()) > rel_tol * scale) return false;
  return true;
}

inline Spectrum hermitian_spectrum(const SparseMatrix& H, SpectrumMode mode, std::size_t k,
                                   bool want_vectors = false, const KrylovOptions& opt = {}) {
  if (!is_hermitian(H, 1e-10)) throw Error("hermitian_spectrum: sparse input is not Hermitian");
  if (mode == SpectrumMode::automatic)
    mode = static_cast<std::size_t>(H.rows()) <= kDenseLimit ? SpectrumMode::dense : SpectrumMode::sparse;
  if (mode == SpectrumMode::dense) return detail::dense_spectrum(Matrix(H), want_vectors);
  return detail::sparse_spectrum(as_operator(H), k, want_vectors, opt);
}

// Builds a Hermitian sparse matrix from coordinate entries, rejecting input
// whose mirrored entries do not match.
inline SparseMatrix sparse_hermitian(std::size_t dim, const std::vector<Eigen::Triplet<cplx>>& entries) {
  SparseMatrix S(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  S.setFromTriplets(entries.begin(), entries.end());
  S.makeCompressed();
  if (!is_hermitian(S, 1e-12)) throw Error("sparse_hermitian: entries are not Hermitian-symmetric");
  return S;
}

// Operator norm of a Hermitian operator from both spectral ends.
inline double operator_norm(const HermitianOperator& H, double tol = 1e-10) {
  KrylovOptions o;
  o.tol = tol;
  EigenResult lo = lowest_eigenpairs(H, 1, o);
  EigenResult hi = highest_eigenpairs(H, 1, o);
  if (!lo.converged || !hi.converged)
    throw ConvergenceError("operator_norm: Krylov solver did not converge", std::max(lo.max_residual(), hi.max_residual()));
  return std::max(std::abs(lo.values(0)), std::abs(hi.values(0)));
}

}  // namespace mpsstab
