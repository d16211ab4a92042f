#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "mpsstab/numerics.hpp"

namespace mpsstab {

// Row-major vectorization: vec(X)[a*D + b] = X(a, b).
inline Vector vec(const Matrix& X) {
  Vector v(X.size());
  for (Eigen::Index a = 0; a < X.rows(); ++a)
    for (Eigen::Index b = 0; b < X.cols(); ++b) v(a * X.cols() + b) = X(a, b);
  return v;
}

inline Matrix unvec(const Vector& v, Eigen::Index rows, Eigen::Index cols) {
  Matrix X(rows, cols);
  for (Eigen::Index a = 0; a < rows; ++a)
    for (Eigen::Index b = 0; b < cols; ++b) X(a, b) = v(a * cols + b);
  return X;
}

// Matrix of X -> sum_i A_i X A_i^dag acting on row-major vectorizations.
inline Matrix transfer_matrix(const std::vector<Matrix>& kraus) {
  const Eigen::Index D = kraus.at(0).rows();
  Matrix E = Matrix::Zero(D * D, D * D);
  for (const auto& A : kraus) E += kron(A, A.conjugate());
  return E;
}

struct ChannelSpectrum {
  std::vector<cplx> eigenvalues;  // descending magnitude
  double lambda2 = 0.0;           // second-largest magnitude
  bool peripheral_trivial = false;
};

inline ChannelSpectrum transfer_spectrum(const Matrix& E) {
  Eigen::ComplexEigenSolver<Matrix> es(E, false);
  if (es.info() != Eigen::Success) throw Error("transfer_spectrum: eigensolver failed");
  std::vector<cplx> ev(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
  std::sort(ev.begin(), ev.end(), [](cplx a, cplx b) {
    double ma = std::abs(a), mb = std::abs(b);
    if (std::abs(ma - mb) > 1e-12) return ma > mb;
    if (std::abs(a.real() - b.real()) > 1e-12) return a.real() > b.real();
    return a.imag() > b.imag();
  });
  ChannelSpectrum s;
  s.eigenvalues = ev;
  s.lambda2 = ev.size() > 1 ? std::abs(ev[1]) : 0.0;
  std::size_t peripheral = 0;
  for (auto z : ev)
    if (std::abs(z) >= 1.0 - 1e-10) ++peripheral;
  s.peripheral_trivial = peripheral == 1;
  return s;
}

// Completely positive map X -> sum_i A_i X A_i^dag on D x D matrices.
class QuantumChannel {
 public:
  QuantumChannel() = default;
  explicit QuantumChannel(std::vector<Matrix> kraus) : kraus_(std::move(kraus)) {
    if (kraus_.empty()) throw Error("QuantumChannel: empty Kraus list");
    const Eigen::Index D = kraus_[0].rows();
    for (const auto& A : kraus_)
      if (A.rows() != D || A.cols() != D || D == 0)
        throw Error("QuantumChannel: Kraus operators must share a square shape");
    transfer_ = transfer_matrix(kraus_);
    spectrum_ = transfer_spectrum(transfer_);
    Matrix s1 = Matrix::Zero(D, D), s2 = Matrix::Zero(D, D);
    for (const auto& A : kraus_) {
      s1 += A * A.adjoint();
      s2 += A.adjoint() * A;
    }
    unital_ = (s1 - Matrix::Identity(D, D)).cwiseAbs().maxCoeff() <= 1e-10;
    trace_preserving_ = (s2 - Matrix::Identity(D, D)).cwiseAbs().maxCoeff() <= 1e-10;
  }

  const std::vector<Matrix>& kraus() const { return kraus_; }
  std::size_t dim() const { return static_cast<std::size_t>(kraus_.at(0).rows()); }
  std::size_t kraus_count() const { return kraus_.size(); }
  const Matrix& transfer() const { return transfer_; }
  const ChannelSpectrum& spectrum() const { return spectrum_; }
  bool unital() const { return unital_; }
  bool trace_preserving() const { return trace_preserving_; }

  Matrix apply(const Matrix& X) const {
    check(X);
    Matrix Y = Matrix::Zero(X.rows(), X.cols());
    for (const auto& A : kraus_) Y += A * X * A.adjoint();
    return Y;
  }

  Matrix dual_apply(const Matrix& X) const {
    check(X);
    Matrix Y = Matrix::Zero(X.rows(), X.cols());
    for (const auto& A : kraus_) Y += A.adjoint() * X * A;
    return Y;
  }

 private:
  void check(const Matrix& X) const {
    if (static_cast<std::size_t>(X.rows()) != dim() || X.cols() != X.rows())
      throw Error("QuantumChannel: argument dimension mismatch");
  }

  std::vector<Matrix> kraus_;
  Matrix transfer_;
  ChannelSpectrum spectrum_;
  bool unital_ = false;
  bool trace_preserving_ = false;
};

inline const ChannelSpectrum& spectrum(const QuantumChannel& T) { return T.spectrum(); }

// Choi matrix sum_ij |i><j| (x) T(|i><j|), row index i*D + a.
inline Matrix choi(const QuantumChannel& T) {
  const auto D = static_cast<Eigen::Index>(T.dim());
  Matrix J = Matrix::Zero(D * D, D * D);
  for (const auto& A : T.kraus()) {
    Vector v = vec(Matrix(A.transpose()));
    J += v * v.adjoint();
  }
  return J;
}

// Choi matrix read off a transfer matrix: J[(i,a),(j,b)] = E[(a,b),(i,j)].
inline Matrix choi_from_transfer(const Matrix& E, Eigen::Index D) {
  Matrix J(D * D, D * D);
  for (Eigen::Index i = 0; i < D; ++i)
    for (Eigen::Index a = 0; a < D; ++a)
      for (Eigen::Index j = 0; j < D; ++j)
        for (Eigen::Index b = 0; b < D; ++b) J(i * D + a, j * D + b) = E(a * D + b, i * D + j);
  return J;
}

struct CbDistanceBound {
  double lower = 0.0;
  double upper = 0.0;
};

inline CbDistanceBound cb_bound_from_choi(const Matrix& J1, const Matrix& J2, std::size_t D) {
  if (J1.rows() != J2.rows()) throw Error("cb_distance_bound: dimension mismatch");
  double up = schatten_norm(hermitize(J1 - J2), Schatten::one);
  if (up < kRankTol * std::max(1.0, schatten_norm(J1, Schatten::one))) up = 0.0;
  return {up / static_cast<double>(D), up};
}

inline CbDistanceBound cb_distance_bound(const QuantumChannel& T, const QuantumChannel& Tt) {
  if (T.dim() != Tt.dim()) throw Error("cb_distance_bound: channels act on different dimensions");
  return cb_bound_from_choi(choi(T), choi(Tt), T.dim());
}

// Stinespring isometry V = sum_i A_i^dag (x) |i>, row index a*d + i.
inline Matrix stinespring(const QuantumChannel& T) {
  if (!T.unital()) throw Error("stinespring: channel is not unital, V is not an isometry");
  const auto D = static_cast<Eigen::Index>(T.dim());
  const auto d = static_cast<Eigen::Index>(T.kraus_count());
  Matrix V(D * d, D);
  for (Eigen::Index i = 0; i < d; ++i) {
    Matrix Ad = T.kraus()[static_cast<std::size_t>(i)].adjoint();
    for (Eigen::Index a = 0; a < D; ++a) V.row(a * d + i) = Ad.row(a);
  }
  return V;
}

struct Alignment {
  Matrix unitary;               // U_E, d x d
  double achieved_distance = 0;  // ||(1 (x) U^T) V - V~||_inf in the dilation frame
  CbDistanceBound cb;
  bool within_bound = false;    // achieved_distance^2 <= cb.upper
};

// Unitary on the Kraus index that best aligns the Stinespring isometry of T
// with that of T~. With Kraus sets related by A~_j = sum_i u_ji A_i the
// returned unitary is u.
inline Alignment align_unitary(const QuantumChannel& T, const QuantumChannel& Tt) {
  if (!T.unital() || !Tt.unital()) throw Error("align_unitary: both channels must be unital");
  if (T.dim() != Tt.dim() || T.kraus_count() != Tt.kraus_count())
    throw Error("align_unitary: channels differ in D or in the number of Kraus operators");
  const auto D = static_cast<Eigen::Index>(T.dim());
  const auto d = static_cast<Eigen::Index>(T.kraus_count());
  Matrix V = stinespring(T), Vt = stinespring(Tt);
  Matrix O = Vt * V.adjoint();
  Matrix M = Matrix::Zero(d, d);
  for (Eigen::Index a = 0; a < D; ++a) M += O.block(a * d, a * d, d, d);
  Eigen::JacobiSVD<Matrix> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix cU = svd.matrixV() * svd.matrixU().adjoint();
  Matrix U = cU.conjugate();  // (1 (x) U^T) V ~ V~
  Matrix aligned = kron(Matrix::Identity(D, D), Matrix(U.transpose())) * V;
  Alignment out;
  out.unitary = U.adjoint();
  out.achieved_distance = schatten_norm(aligned - Vt, Schatten::inf);
  out.cb = cb_distance_bound(T, Tt);
  out.within_bound = out.achieved_distance * out.achieved_distance <= out.cb.upper + 1e-12;
  return out;
}

// A density operator, the projector onto its image, and the smallest nonzero
// eigenvalue.
struct LocalProjectorPair {
  Matrix rho;
  Matrix projector;
  std::size_t rank = 0;
  double mu = 0.0;

  static LocalProjectorPair from_rho(const Matrix& rho, double rank_tol = kRankTol) {
    LocalProjectorPair p;
    p.rho = hermitize(rho);
    HermitianEigen e = hermitian_eigen(p.rho);
    double cut = rank_tol * e.values.cwiseAbs().maxCoeff();
    Matrix B(rho.rows(), 0);
    p.mu = 0.0;
    for (Eigen::Index i = 0; i < e.values.size(); ++i)
      if (std::abs(e.values(i)) > cut) {
        B.conservativeResize(Eigen::NoChange, B.cols() + 1);
        B.col(B.cols() - 1) = e.vectors.col(i);
        p.mu = p.rank == 0 ? e.values(i) : std::min(p.mu, e.values(i));
        ++p.rank;
      }
    p.projector = B * B.adjoint();
    return p;
  }
};

// rho_EE' = (1/D) sum_ab |v_ab><v_ab| with v_ab[i1*d + i2] = (A_i1 A_i2)_ab.
inline LocalProjectorPair rho_ee(const QuantumChannel& T) {
  const auto D = static_cast<Eigen::Index>(T.dim());
  const auto d = static_cast<Eigen::Index>(T.kraus_count());
  const auto& K = T.kraus();
  Matrix Vm(d * d, D * D);
  for (Eigen::Index i1 = 0; i1 < d; ++i1)
    for (Eigen::Index i2 = 0; i2 < d; ++i2) {
      Matrix P = K[static_cast<std::size_t>(i1)] * K[static_cast<std::size_t>(i2)];
      Vm.row(i1 * d + i2) = vec(P).transpose();
    }
  Matrix rho = Vm * Vm.adjoint() / static_cast<double>(D);
  return LocalProjectorPair::from_rho(rho);
}

struct RhoAlignment {
  double distance = 0.0;  // ||(U (x) U) rho (U (x) U)^dag - rho~||_1
  double bound = 0.0;     // 4 d^2 (cb upper)^(1/2)
  bool holds = false;
  Alignment alignment;
};

inline RhoAlignment align_rho_distance(const QuantumChannel& T, const QuantumChannel& Tt) {
  RhoAlignment r;
  r.alignment = align_unitary(T, Tt);
  const Matrix& U = r.alignment.unitary;
  Matrix UU = kron(U, U);
  Matrix rho = rho_ee(T).rho, rhot = rho_ee(Tt).rho;
  r.distance = schatten_norm(hermitize(UU * rho * UU.adjoint() - rhot), Schatten::one);
  const double d = static_cast<double>(T.kraus_count());
  r.bound = 4.0 * d * d * std::sqrt(r.alignment.cb.upper);
  r.holds = r.distance <= r.bound + 1e-12;
  return r;
}

// Pads a Kraus list with zero operators up to the requested count.
inline std::vector<Matrix> pad_kraus(std::vector<Matrix> K, std::size_t count) {
  const Eigen::Index D = K.at(0).rows();
  while (K.size() < count) K.push_back(Matrix::Zero(D, D));
  return K;
}

}  // namespace mpsstab
