#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/SVD>

#include "mpsstab/core.hpp"

namespace mpsstab {

enum class Schatten { one, two, inf };

inline bool all_finite(const Matrix& M) {
  for (Eigen::Index j = 0; j < M.cols(); ++j)
    for (Eigen::Index i = 0; i < M.rows(); ++i)
      if (!std::isfinite(M(i, j).real()) || !std::isfinite(M(i, j).imag())) return false;
  return true;
}

inline RealVector singular_values(const Matrix& M) {
  if (M.size() == 0) return RealVector();
  Eigen::BDCSVD<Matrix> svd(M);
  return svd.singularValues();
}

inline double schatten_norm(const Matrix& M, Schatten p) {
  if (!all_finite(M)) throw Error("schatten_norm: non-finite entries");
  if (p == Schatten::two) return M.norm();
  RealVector s = singular_values(M);
  if (s.size() == 0) return 0.0;
  return p == Schatten::one ? s.sum() : s.maxCoeff();
}

inline Matrix hermitize(const Matrix& M) { return (M + M.adjoint()) / 2.0; }

inline bool is_hermitian(const Matrix& M, double rel_tol = 1e-12) {
  if (M.rows() != M.cols()) return false;
  double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  return (M - M.adjoint()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix r(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      r.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return r;
}

// Hermitian eigendecomposition with eigenvalues ascending.
struct HermitianEigen {
  RealVector values;
  Matrix vectors;
};

inline HermitianEigen hermitian_eigen(const Matrix& H) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(hermitize(H));
  if (es.info() != Eigen::Success) throw Error("hermitian_eigen: decomposition failed");
  return {es.eigenvalues(), es.eigenvectors()};
}

inline double hermitian_norm(const Matrix& H) {
  if (H.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(hermitize(H), Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

// Columns spanning the eigenvectors of H whose eigenvalue magnitude exceeds
// rank_tol * ||H||.
inline Matrix image_basis(const Matrix& H, double rank_tol = kRankTol) {
  HermitianEigen e = hermitian_eigen(H);
  double cut = rank_tol * std::max(e.values.cwiseAbs().maxCoeff(), 0.0);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = e.values.size(); i-- > 0;)
    if (std::abs(e.values(i)) > cut) keep.push_back(i);
  Matrix B(H.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) B.col(c) = e.vectors.col(keep[c]);
  return B;
}

inline Matrix pseudo_inverse(const Matrix& H, double rank_tol = kRankTol) {
  if (!is_hermitian(H, 1e-10)) throw Error("pseudo_inverse: input is not Hermitian");
  HermitianEigen e = hermitian_eigen(H);
  if (e.values.size() == 0) return H;
  double cut = rank_tol * e.values.cwiseAbs().maxCoeff();
  RealVector inv = RealVector::Zero(e.values.size());
  for (Eigen::Index i = 0; i < e.values.size(); ++i)
    if (std::abs(e.values(i)) > cut) inv(i) = 1.0 / e.values(i);
  return e.vectors * inv.asDiagonal() * e.vectors.adjoint();
}

inline Matrix image_projector(const Matrix& H, double rank_tol = kRankTol) {
  Matrix B = image_basis(H, rank_tol);
  return B * B.adjoint();
}

// Orthonormal basis for the column span of M (rank decided by rank_tol
// relative to the largest singular value).
inline Matrix orthonormal_range(const Matrix& M, double rank_tol = kRankTol) {
  if (M.cols() == 0 || M.rows() == 0) return Matrix(M.rows(), 0);
  Eigen::BDCSVD<Matrix> svd(M, Eigen::ComputeThinU);
  const RealVector& s = svd.singularValues();
  Eigen::Index r = 0;
  double cut = rank_tol * (s.size() ? s(0) : 0.0);
  while (r < s.size() && s(r) > cut) ++r;
  return svd.matrixU().leftCols(r);
}

inline std::size_t numerical_rank(const Matrix& M, double rank_tol = kRankTol) {
  RealVector s = singular_values(M);
  if (s.size() == 0 || s(0) == 0.0) return 0;
  std::size_t r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > rank_tol * s(0)) ++r;
  return r;
}

// ||B1 B1^dag - B2 B2^dag||_inf for orthonormal column sets, computed on the
// joint span so the ambient dimension never enters.
inline double projector_distance(const Matrix& B1, const Matrix& B2) {
  Matrix joint(B1.rows(), B1.cols() + B2.cols());
  joint << B1, B2;
  Matrix Q = orthonormal_range(joint, 1e-14);
  Matrix a = Q.adjoint() * B1;
  Matrix b = Q.adjoint() * B2;
  return hermitian_norm(a * a.adjoint() - b * b.adjoint());
}

// Partial trace keeping the listed factors (in ascending order) of a
// big-endian tensor product with the given factor dimensions.
inline Matrix partial_trace(const Matrix& M, std::span<const std::size_t> dims,
                            std::span<const std::size_t> keep) {
  std::size_t n = dims.size();
  std::size_t total = 1;
  for (auto d : dims) {
    if (d == 0) throw Error("partial_trace: zero factor dimension");
    total *= d;
  }
  if (M.rows() != static_cast<Eigen::Index>(total) || M.cols() != M.rows())
    throw Error("partial_trace: dims do not match the matrix dimension");
  std::vector<bool> kept(n, false);
  for (auto k : keep) {
    if (k >= n) throw Error("partial_trace: keep index out of range");
    kept[k] = true;
  }
  std::vector<std::size_t> stride(n);
  std::size_t s = 1;
  for (std::size_t i = n; i-- > 0;) {
    stride[i] = s;
    s *= dims[i];
  }
  std::vector<std::size_t> kdims, tdims, kstride, tstride;
  for (std::size_t i = 0; i < n; ++i) {
    if (kept[i]) {
      kdims.push_back(dims[i]);
      kstride.push_back(stride[i]);
    } else {
      tdims.push_back(dims[i]);
      tstride.push_back(stride[i]);
    }
  }
  auto offsets = [](const std::vector<std::size_t>& ds, const std::vector<std::size_t>& st) {
    std::vector<std::size_t> out{0};
    for (std::size_t f = 0; f < ds.size(); ++f) {
      std::vector<std::size_t> next;
      next.reserve(out.size() * ds[f]);
      for (auto o : out)
        for (std::size_t v = 0; v < ds[f]; ++v) next.push_back(o + v * st[f]);
      out.swap(next);
    }
    return out;
  };
  std::vector<std::size_t> ko = offsets(kdims, kstride), to = offsets(tdims, tstride);
  Matrix R = Matrix::Zero(static_cast<Eigen::Index>(ko.size()), static_cast<Eigen::Index>(ko.size()));
  for (std::size_t a = 0; a < ko.size(); ++a)
    for (std::size_t b = 0; b < ko.size(); ++b) {
      cplx acc = 0;
      for (auto t : to) acc += M(static_cast<Eigen::Index>(ko[a] + t), static_cast<Eigen::Index>(ko[b] + t));
      R(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = acc;
    }
  return R;
}

inline Matrix partial_trace(const Matrix& M, std::initializer_list<std::size_t> dims,
                            std::initializer_list<std::size_t> keep) {
  std::vector<std::size_t> d(dims), k(keep);
  return partial_trace(M, std::span<const std::size_t>(d), std::span<const std::size_t>(k));
}

// Hermitian square root and inverse square root of a positive definite matrix.
inline std::pair<Matrix, Matrix> sqrt_and_inverse_sqrt(const Matrix& M) {
  HermitianEigen e = hermitian_eigen(M);
  if (e.values.minCoeff() <= 0.0) throw Error("sqrt_and_inverse_sqrt: matrix is not positive definite");
  RealVector s = e.values.cwiseSqrt();
  RealVector si = s.cwiseInverse();
  return {e.vectors * s.asDiagonal() * e.vectors.adjoint(),
          e.vectors * si.asDiagonal() * e.vectors.adjoint()};
}

// Closest unitary in Frobenius norm (polar factor).
inline Matrix polar_unitary(const Matrix& M) {
  Eigen::JacobiSVD<Matrix> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().adjoint();
}

// Fix the global phase of each column so its largest-magnitude entry is real
// positive (first such entry on ties).
inline void fix_column_phases(Matrix& M) {
  for (Eigen::Index j = 0; j < M.cols(); ++j) {
    Eigen::Index best = 0;
    double bmag = -1;
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
      double a = std::abs(M(i, j));
      if (a > bmag * (1 + 1e-12) + 1e-15) {
        bmag = a;
        best = i;
      }
    }
    if (bmag > 0) M.col(j) *= std::conj(M(best, j)) / bmag;
  }
}

}  // namespace mpsstab
