#pragma once

#include <chrono>
#include <limits>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mpsstab/mps.hpp"
#include "mpsstab/numerics.hpp"

namespace mpsstab {

struct GroundSpaceBasis {
  std::size_t L = 0;
  Matrix basis;  // d^L x rank, orthonormal columns

  std::size_t dim() const { return static_cast<std::size_t>(basis.cols()); }
};

// Span of Psi(X)[i1..iL] = Tr[X A_i1 ... A_iL], i.e. the range of the product matrix.
inline GroundSpaceBasis ground_space(const MpsTensors& t, std::size_t L) {
  GroundSpaceBasis g;
  g.L = L;
  g.basis = orthonormal_range(product_matrix(t, L));
  const auto r = g.basis.cols();
  if ((g.basis.adjoint() * g.basis - Matrix::Identity(r, r)).cwiseAbs().maxCoeff() > 1e-12)
    throw Error("ground_space: basis is not orthonormal");
  return g;
}

inline Vector psi_of(const MpsTensors& t, std::size_t L, const Matrix& X) {
  return product_matrix(t, L) * vec(Matrix(X.transpose()));
}

// Projector onto the orthogonal complement of G_L.
inline Matrix interaction_term(const MpsTensors& t, std::size_t L) {
  GroundSpaceBasis g = ground_space(t, L);
  const auto n = g.basis.rows();
  Matrix h = Matrix::Identity(n, n) - g.basis * g.basis.adjoint();
  h = hermitize(h);
  if ((h * h - h).cwiseAbs().maxCoeff() > 1e-10) throw Error("interaction_term: h is not a projector");
  return h;
}

// Sites i, i+1, ..., i+len-1 of a ring of N sites.
inline std::vector<std::size_t> ring_window(std::size_t i, std::size_t len, std::size_t N) {
  std::vector<std::size_t> f(len);
  for (std::size_t j = 0; j < len; ++j) f[j] = (i + j) % N;
  return f;
}

struct RingHamiltonian {
  std::size_t N = 0;
  std::size_t L = 0;  // interaction range
  std::size_t d = 0;
  Matrix term;
  LocalSum H;

  std::size_t dim() const { return H.dim(); }
  HermitianOperator op() const { return as_operator(H); }
};

// H = sum_i tau^i(h) with periodic wraparound.
inline RingHamiltonian assemble_ring(const Matrix& h, std::size_t d, std::size_t N) {
  if (d < 1) throw Error("assemble_ring: d must be positive");
  std::size_t L = 0;
  for (std::size_t n = 1; n < static_cast<std::size_t>(h.rows()); n *= d) ++L;
  if (ipow(d, L) != static_cast<std::size_t>(h.rows()) || h.rows() != h.cols())
    throw Error("assemble_ring: term is not an operator on d^L");
  if (N < L) throw Error("assemble_ring: ring shorter than the interaction range");
  checked_pow(d, N, kStateCap, "assemble_ring d^N");
  if (!is_hermitian(h, 1e-10)) throw Error("assemble_ring: term is not Hermitian");
  RingHamiltonian r;
  r.N = N;
  r.L = L;
  r.d = d;
  r.term = h;
  r.H = LocalSum(ProductSpace::uniform(d, N));
  for (std::size_t i = 0; i < N; ++i) r.H.add(ring_window(i, L, N), h);
  return r;
}

// Parent Hamiltonian of range L on N sites; checks that the MPS is annihilated.
inline RingHamiltonian parent_hamiltonian(const MpsTensors& t, std::size_t L, std::size_t N) {
  RingHamiltonian r = assemble_ring(interaction_term(t, L), t.d, N);
  Vector psi = expand_state(t, N);
  double nrm = psi.norm();
  if (nrm > 0 && r.H.apply(psi).norm() > 1e-8 * nrm) throw Error("parent_hamiltonian: MPS is not a zero-energy state");
  return r;
}

// Vector with its sites cyclically shifted by one (site j -> j+1).
inline Vector cyclic_shift(const Vector& x, std::size_t d, std::size_t N) {
  const std::size_t n = ipow(d, N), top = n / d;
  Vector y(x.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t last = i % d;
    y(static_cast<Eigen::Index>(last * top + i / d)) = x(static_cast<Eigen::Index>(i));
  }
  return y;
}

struct LocalGap {
  std::size_t m = 0;
  double gap = 0.0;
  std::size_t kernel_dim = 0;
  Matrix kernel_projector;
};

// Open chain of m sites holding the translates of h that fit inside.
inline LocalSum open_chain(const Matrix& h, std::size_t d, std::size_t L, std::size_t m) {
  if (m < L) throw Error("open_chain: region shorter than the interaction range");
  LocalSum H(ProductSpace::uniform(d, m));
  for (std::size_t i = 0; i + L <= m; ++i) H.add(ring_window(i, L, m), h);
  return H;
}

inline LocalGap gap_of_dense(const Matrix& H, std::size_t m) {
  HermitianEigen e = hermitian_eigen(H);
  LocalGap g;
  g.m = m;
  Matrix B(H.rows(), 0);
  g.gap = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < e.values.size(); ++i) {
    if (std::abs(e.values(i)) <= kDegeneracyTol) {
      B.conservativeResize(Eigen::NoChange, B.cols() + 1);
      B.col(B.cols() - 1) = e.vectors.col(i);
    } else {
      g.gap = std::min(g.gap, e.values(i));
    }
  }
  g.kernel_dim = static_cast<std::size_t>(B.cols());
  g.kernel_projector = B * B.adjoint();
  return g;
}

inline LocalGap local_gap(const MpsTensors& t, std::size_t m, std::size_t L) {
  checked_pow(t.d, m, kDenseLimit, "local_gap d^m");
  return gap_of_dense(open_chain(interaction_term(t, L), t.d, L, m).dense(), m);
}

struct KernelComparison {
  bool equal = false;
  double distance = 0.0;
  std::size_t rho_rank = 0;
  std::size_t kernel_dim = 0;
};

// Image of rho_{2L} = (1/D) sum Tr[A_I A_J^dag] |I><J| against the kernel of the
// region Hamiltonian built from range-P terms.
inline KernelComparison kernel_vs_rho(const MpsTensors& t, std::size_t region, std::size_t P) {
  checked_pow(t.d, region, kDenseLimit, "kernel_vs_rho d^region");
  Matrix Pm = product_matrix(t, region);
  LocalProjectorPair rho = LocalProjectorPair::from_rho(Pm * Pm.adjoint() / static_cast<double>(t.D));
  LocalGap g = local_gap(t, region, P);
  KernelComparison k;
  k.rho_rank = rho.rank;
  k.kernel_dim = g.kernel_dim;
  k.distance = hermitian_norm(rho.projector - g.kernel_projector);
  k.equal = k.distance < 1e-8;
  return k;
}

struct GapReport {
  std::size_t N = 0;
  std::size_t L = 0;
  double ground_energy = 0.0;
  std::size_t degeneracy = 0;
  double gap = 0.0;
  std::string method;
  double max_residual = 0.0;
  double wall_time = 0.0;
  Matrix ground_vectors;  // filled on request
};

struct GapOptions {
  SpectrumMode mode = SpectrumMode::automatic;
  std::size_t k = 4;
  double tol = 1e-10;
  bool want_vectors = false;
  std::optional<Matrix> initial;
};

inline GapReport gap_from_values(const RealVector& v) {
  GapReport r;
  r.ground_energy = v(0);
  r.degeneracy = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (v(i) - v(0) <= kDegeneracyTol) ++r.degeneracy;
  r.gap = r.degeneracy < static_cast<std::size_t>(v.size()) ? v(static_cast<Eigen::Index>(r.degeneracy)) - v(0)
                                                           : std::numeric_limits<double>::quiet_NaN();
  return r;
}

// Ground energy, degeneracy and gap above the ground space. In sparse mode the
// number of requested eigenvalues doubles while every one of them is degenerate.
inline GapReport spectral_gap(const HermitianOperator& H, const GapOptions& opt = {}) {
  auto t0 = std::chrono::steady_clock::now();
  SpectrumMode mode = opt.mode;
  if (mode == SpectrumMode::automatic) mode = H.dim <= kDenseLimit ? SpectrumMode::dense : SpectrumMode::sparse;
  GapReport r;
  Spectrum s;
  if (mode == SpectrumMode::dense) {
    s = hermitian_spectrum(H, mode, H.dim, opt.want_vectors);
    r = gap_from_values(s.values);
  } else {
    std::size_t k = std::min(opt.k, H.dim - 1);
    KrylovOptions ko;
    ko.tol = opt.tol;
    if (opt.initial) ko.initial = *opt.initial;
    for (;;) {
      s = hermitian_spectrum(H, mode, k, opt.want_vectors, ko);
      r = gap_from_values(s.values);
      if (r.degeneracy < k || k + 1 >= H.dim) break;
      k = std::min(2 * k, H.dim - 1);
    }
  }
  r.method = s.method;
  r.max_residual = s.max_residual;
  if (opt.want_vectors) r.ground_vectors = s.vectors.leftCols(static_cast<Eigen::Index>(r.degeneracy));
  r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline GapReport global_gap(const RingHamiltonian& H, const GapOptions& opt = {}) {
  GapReport r = spectral_gap(H.op(), opt);
  r.N = H.N;
  r.L = H.L;
  return r;
}

inline void write_gap_csv_header(std::ostream& os) { os << "N,L,ground_energy,degeneracy,gap,method,wall_time\n"; }

inline void write_gap_csv_row(std::ostream& os, const GapReport& r) {
  os << r.N << ',' << r.L << ',' << r.ground_energy << ',' << r.degeneracy << ',' << r.gap << ',' << r.method << ','
     << r.wall_time << '\n';
}

}  // namespace mpsstab
