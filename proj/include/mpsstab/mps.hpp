#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mpsstab/channel.hpp"
#include "mpsstab/numerics.hpp"

namespace mpsstab {

enum class RandomEnsemble { isometry, gaussian };

// Site matrices {A_i} of a translation-invariant MPS.
struct MpsTensors {
  std::size_t d = 0;
  std::size_t D = 0;
  std::vector<Matrix> A;

  MpsTensors() = default;
  explicit MpsTensors(std::vector<Matrix> mats) : A(std::move(mats)) {
    if (A.empty()) throw Error("MpsTensors: no site matrices");
    d = A.size();
    D = static_cast<std::size_t>(A[0].rows());
    bool nonzero = false;
    for (const auto& a : A) {
      if (a.rows() != static_cast<Eigen::Index>(D) || a.cols() != a.rows() || D == 0)
        throw Error("MpsTensors: site matrices must share a square D x D shape");
      if (!all_finite(a)) throw Error("MpsTensors: non-finite entries");
      nonzero = nonzero || a.cwiseAbs().maxCoeff() > 0.0;
    }
    if (!nonzero) throw Error("MpsTensors: all site matrices vanish");
  }

  // {sigma_z, sqrt2 sigma+, -sqrt2 sigma-}
  static MpsTensors aklt() {
    Matrix z = Matrix::Zero(2, 2), p = Matrix::Zero(2, 2), m = Matrix::Zero(2, 2);
    z(0, 0) = 1;
    z(1, 1) = -1;
    p(0, 1) = std::sqrt(2.0);
    m(1, 0) = -std::sqrt(2.0);
    return MpsTensors({z, p, m});
  }

  // isometry: Kraus operators of a Haar-random Stinespring isometry (already
  // unital). gaussian: independent complex Gaussian entries.
  static MpsTensors random(std::size_t d, std::size_t D, std::uint64_t seed,
                           RandomEnsemble ens = RandomEnsemble::isometry) {
    if (d == 0 || D == 0) throw Error("MpsTensors::random: d and D must be positive");
    Rng rng(seed);
    std::vector<Matrix> mats;
    if (ens == RandomEnsemble::gaussian) {
      for (std::size_t i = 0; i < d; ++i) mats.push_back(gaussian_matrix(D, D, rng));
    } else {
      Matrix V = haar_isometry(d * D, D, rng);
      for (std::size_t i = 0; i < d; ++i) {
        Matrix Ad(static_cast<Eigen::Index>(D), static_cast<Eigen::Index>(D));
        for (std::size_t a = 0; a < D; ++a) Ad.row(static_cast<Eigen::Index>(a)) = V.row(static_cast<Eigen::Index>(a * d + i));
        mats.push_back(Ad.adjoint());
      }
    }
    return MpsTensors(std::move(mats));
  }

  QuantumChannel channel() const { return QuantumChannel(A); }
};

// d^L x D^2 matrix whose row (i1..iL) (big-endian) is vec(A_i1 ... A_iL).
inline Matrix product_matrix(const MpsTensors& t, std::size_t L) {
  if (L == 0) throw Error("product_matrix: L must be positive");
  const std::size_t rows = checked_pow(t.d, L, kEnumerationCap, "product enumeration d^L");
  const auto D = static_cast<Eigen::Index>(t.D);
  std::vector<Matrix> cur(t.A.begin(), t.A.end());
  for (std::size_t l = 1; l < L; ++l) {
    std::vector<Matrix> next;
    next.reserve(cur.size() * t.d);
    for (const auto& P : cur)
      for (const auto& a : t.A) next.push_back(P * a);
    cur.swap(next);
  }
  Matrix M(static_cast<Eigen::Index>(rows), D * D);
  for (std::size_t r = 0; r < rows; ++r) M.row(static_cast<Eigen::Index>(r)) = vec(cur[r]).transpose();
  return M;
}

inline std::size_t g1_span_dim(const MpsTensors& t, std::size_t L) {
  return numerical_rank(product_matrix(t, L));
}

inline std::size_t minimal_L0(const MpsTensors& t, std::size_t cap = 8) {
  if (cap == 0) throw Error("minimal_L0: cap must be at least 1");
  for (std::size_t L = 1; L <= cap; ++L)
    if (g1_span_dim(t, L) == t.D * t.D) return L;
  throw NotGeneric("G1 not established up to cap " + std::to_string(cap));
}

struct CanonicalForm {
  MpsTensors tensors;
  RealVector xi;             // descending, sums to one
  double normalization = 1;  // factor applied to the raw matrices
  std::size_t L0 = 0;
  ChannelSpectrum spectrum;

  QuantumChannel channel() const { return tensors.channel(); }
  double lambda2() const { return spectrum.lambda2; }
};

namespace detail {

inline Matrix dominant_fixed_point(const Matrix& E, Eigen::Index D, const char* which) {
  Eigen::ComplexEigenSolver<Matrix> es(E);
  if (es.info() != Eigen::Success) throw Error(std::string("canonical_form: eigensolver failed for ") + which);
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < es.eigenvalues().size(); ++i)
    if (std::abs(es.eigenvalues()(i)) > std::abs(es.eigenvalues()(best))) best = i;
  Matrix X = unvec(es.eigenvectors().col(best), D, D);
  cplx tr = X.trace();
  if (std::abs(tr) < 1e-300) throw NotGeneric("not generic / G1 violated: traceless fixed point");
  X *= std::conj(tr) / std::abs(tr);
  X = hermitize(X);
  return X / X.trace().real();
}

}  // namespace detail

inline CanonicalForm canonical_form(const MpsTensors& raw) {
  CanonicalForm cf;
  try {
    cf.L0 = minimal_L0(raw, 8);
  } catch (const CapExceeded&) {
    throw;
  } catch (const NotGeneric& e) {
    throw NotGeneric(std::string("not generic / G1 violated: ") + e.what());
  }
  const auto D = static_cast<Eigen::Index>(raw.D);

  ChannelSpectrum s0 = transfer_spectrum(transfer_matrix(raw.A));
  double radius = std::abs(s0.eigenvalues.at(0));
  if (!(radius > 0.0)) throw NotGeneric("not generic / G1 violated: nilpotent transfer map");
  std::vector<Matrix> A;
  cf.normalization = 1.0 / std::sqrt(radius);
  for (const auto& a : raw.A) A.push_back(a * cf.normalization);

  ChannelSpectrum s1 = transfer_spectrum(transfer_matrix(A));
  if (!s1.peripheral_trivial) throw NotGeneric("not generic / G1 violated: degenerate peripheral spectrum");

  Matrix M = detail::dominant_fixed_point(transfer_matrix(A), D, "the fixed point");
  HermitianEigen me = hermitian_eigen(M);
  if (me.values.minCoeff() <= kRankTol * me.values.maxCoeff())
    throw NotGeneric("not generic / G1 violated: fixed point not strictly positive");
  auto [Mh, Mih] = sqrt_and_inverse_sqrt(M);
  for (auto& a : A) a = (Mih * a * Mh).eval();

  Matrix Xi = detail::dominant_fixed_point(transfer_matrix(A).adjoint(), D, "the dual fixed point");
  HermitianEigen xe = hermitian_eigen(Xi);
  if (xe.values.minCoeff() <= kRankTol * xe.values.maxCoeff())
    throw NotGeneric("not generic / G1 violated: dual fixed point not strictly positive");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(D));
  for (Eigen::Index i = 0; i < D; ++i) order[static_cast<std::size_t>(i)] = D - 1 - i;
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return xe.values(x) > xe.values(y) + 1e-14; });
  Matrix U(D, D);
  cf.xi.resize(D);
  for (Eigen::Index c = 0; c < D; ++c) {
    U.col(c) = xe.vectors.col(order[static_cast<std::size_t>(c)]);
    cf.xi(c) = xe.values(order[static_cast<std::size_t>(c)]);
    for (Eigen::Index r = 0; r < D; ++r)
      if (std::abs(U(r, c)) > 1e-12) {
        U.col(c) *= std::conj(U(r, c)) / std::abs(U(r, c));
        break;
      }
  }
  cf.xi /= cf.xi.sum();
  for (auto& a : A) a = (U.adjoint() * a * U).eval();
  cf.tensors = MpsTensors(A);

  QuantumChannel T = cf.tensors.channel();
  if (!T.unital()) throw Error("canonical_form: result is not unital");
  Matrix Xd = cf.xi.cast<cplx>().asDiagonal();
  if ((T.dual_apply(Xd) - Xd).cwiseAbs().maxCoeff() > 1e-10)
    throw Error("canonical_form: diagonal Xi is not a dual fixed point");
  cf.spectrum = T.spectrum();
  if (!cf.spectrum.peripheral_trivial) throw NotGeneric("not generic / G1 violated: degenerate peripheral spectrum");
  return cf;
}

// Coefficients Tr[X A_i1 ... A_iN] over the d^N basis states (big-endian).
inline Vector expand_state(const MpsTensors& t, std::size_t N, const std::optional<Matrix>& X = std::nullopt) {
  if (N == 0) throw Error("expand_state: N must be positive");
  const std::size_t dim = checked_pow(t.d, N, kStateCap, "expand_state d^N");
  const auto D = static_cast<Eigen::Index>(t.D);
  Matrix Xm = X ? *X : Matrix::Identity(D, D);
  if (Xm.rows() != D || Xm.cols() != D) throw Error("expand_state: X must be D x D");
  Matrix XT = Xm.transpose();
  Vector psi(static_cast<Eigen::Index>(dim));
  std::vector<Matrix> prefix(N + 1);
  prefix[0] = Matrix::Identity(D, D);
  std::size_t idx = 0;
  std::function<void(std::size_t)> rec = [&](std::size_t depth) {
    if (depth == N) {
      psi(static_cast<Eigen::Index>(idx++)) = XT.cwiseProduct(prefix[N]).sum();
      return;
    }
    for (std::size_t i = 0; i < t.d; ++i) {
      prefix[depth + 1].noalias() = prefix[depth] * t.A[i];
      rec(depth + 1);
    }
  };
  rec(0);
  return psi;
}

}  // namespace mpsstab
