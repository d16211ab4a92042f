#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "mpsstab/parent.hpp"
#include "mpsstab/renorm.hpp"

namespace mpsstab {

// Two-block region split into slots A, B, C, D of dimension s = d^(L/2), each
// C^D (+) H_X with C^D on the first D coordinates.
struct HalfShiftedFrame {
  std::size_t L = 0, d = 0, D = 0, s = 0;
  RealVector xi;
  Vector phi;            // sum_i sqrt(xi_i)|ii> on a slot pair
  Matrix embedding;      // s x D
  Matrix hs;             // 1 - |phi><phi|
  Matrix pair_rotation;  // unitary on a slot pair, first column phi

  std::size_t extra_dim() const { return s - D; }

  // Orthonormal basis e_a (x) phi (x) e_delta of the asymptotic region kernel.
  Matrix ginf_basis() const {
    const auto S = static_cast<Eigen::Index>(s), DD = static_cast<Eigen::Index>(D);
    Matrix B = Matrix::Zero(S * S * S * S, DD * DD);
    for (Eigen::Index a = 0; a < DD; ++a)
      for (Eigen::Index e = 0; e < DD; ++e)
        for (Eigen::Index i = 0; i < DD; ++i) B(((a * S + i) * S + i) * S + e, a * DD + e) = std::sqrt(xi(i));
    return B;
  }

  Matrix ginf() const {
    checked_pow(s, 4, kDenseLimit, "half_shifted_frame G_inf");
    Matrix B = ginf_basis();
    return B * B.adjoint();
  }
};

inline HalfShiftedFrame half_shifted_frame(const CanonicalForm& cf, std::size_t L) {
  if (L == 0 || L % 2) throw Error("half_shifted_frame: L must be a positive even integer");
  HalfShiftedFrame f;
  f.L = L;
  f.d = cf.tensors.d;
  f.D = cf.tensors.D;
  f.s = checked_pow(f.d, L / 2, kEnumerationCap, "half_shifted_frame d^(L/2)");
  if (f.s < f.D) throw Error("half_shifted_frame: requires d^(L/2) >= D");
  f.xi = cf.xi;
  const auto S = static_cast<Eigen::Index>(f.s), DD = static_cast<Eigen::Index>(f.D);
  f.embedding = Matrix::Identity(S, DD);
  if ((f.embedding.adjoint() * f.embedding - Matrix::Identity(DD, DD)).cwiseAbs().maxCoeff() > 1e-12)
    throw Error("half_shifted_frame: slot embedding is not isometric");
  f.phi = Vector::Zero(S * S);
  for (Eigen::Index i = 0; i < DD; ++i) f.phi(i * S + i) = std::sqrt(cf.xi(i));
  if (std::abs(f.phi.norm() - 1.0) > 1e-12) throw Error("half_shifted_frame: phi is not normalized");
  f.hs = Matrix::Identity(S * S, S * S) - f.phi * f.phi.adjoint();
  Eigen::HouseholderQR<Matrix> qr(Matrix(f.phi));
  f.pair_rotation = qr.householderQ();
  f.pair_rotation.col(0) *= f.pair_rotation.col(0).dot(f.phi);
  if ((f.pair_rotation.col(0) - f.phi).norm() > 1e-12) throw Error("half_shifted_frame: rotation misses phi");
  return f;
}

// Slots [A_0, B_0, A_1, B_1, ...] of a ring of m blocks.
struct SlotRing {
  std::size_t m = 0, s = 0;
  ProductSpace space;

  SlotRing() = default;
  SlotRing(std::size_t m_, std::size_t s_) : m(m_), s(s_) {
    checked_pow(s, 2 * m, kStateCap, "slot ring dimension");
    space = ProductSpace::uniform(s, 2 * m);
  }
  std::size_t n() const { return 2 * m; }
  std::vector<std::size_t> pair(std::size_t k) const {  // (B_k, A_{k+1})
    return {(2 * k + 1) % n(), (2 * k + 2) % n()};
  }
  std::vector<std::size_t> region(std::size_t k) const {  // (A_k, B_k, A_{k+1}, B_{k+1})
    return {(2 * k) % n(), (2 * k + 1) % n(), (2 * k + 2) % n(), (2 * k + 3) % n()};
  }
  std::size_t dim() const { return space.dim(); }
};

struct ClassicalHamiltonian {
  std::size_t m = 0, L = 0;
  double scale = 0.0;  // 3L
  SlotRing ring;
  LocalSum H;
  double max_commutator = 0.0;

  HermitianOperator op() const { return as_operator(H); }
};

inline ClassicalHamiltonian classical_hamiltonian(const HalfShiftedFrame& f, std::size_t m) {
  if (m < 3) throw Error("classical_hamiltonian: at least 3 blocks are required");
  ClassicalHamiltonian c;
  c.m = m;
  c.L = f.L;
  c.scale = 3.0 * static_cast<double>(f.L);
  c.ring = SlotRing(m, f.s);
  c.H = LocalSum(c.ring.space);
  for (std::size_t k = 0; k < m; ++k) c.H.add(c.ring.pair(k), f.hs, c.scale);
  // classicality: every pair of terms commutes (probe vector)
  Rng rng(mix_seed(0x636c, m));
  Vector x = gaussian_matrix(c.ring.dim(), 1, rng).col(0);
  x.normalize();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) {
      Placement pi(c.ring.space, c.ring.pair(i)), pj(c.ring.space, c.ring.pair(j));
      Vector ab = pi.apply(f.hs, pj.apply(f.hs, x)), ba = pj.apply(f.hs, pi.apply(f.hs, x));
      c.max_commutator = std::max(c.max_commutator, (ab - ba).norm());
    }
  if (c.max_commutator > 1e-10) throw Error("classical_hamiltonian: terms do not commute");
  return c;
}

struct BoundCheck {
  std::string name;
  double value = 0.0;
  double bound = 0.0;
  bool holds = false;
};

struct Decomposition {
  std::size_t L = 0, m = 0, P = 0;
  HalfShiftedFrame frame;
  BlockUnitary block;
  MpsTensors tensors;
  Matrix h;         // range-P interaction term
  Matrix H_region;  // site frame, 2L sites
  Matrix H_kk;      // 1/2 H_region + 1/2 (terms crossing the block boundary)
  Matrix G;         // kernel projector of H_region
  Matrix W2;        // W (x) W in the slot frame
  Matrix K;         // W2 H_kk W2^dag
  Matrix G_inf;
  Matrix phi_b;         // on (A_k, B_k, A_{k+1}, B_{k+1})
  Matrix phi_r_region;  // (1 - G_inf) K (1 - G_inf)

  double lambda2 = 0, C = 0, mu = 0;
  double gamma = 0;     // region gap of H_region
  double gamma_kk = 0;  // smallest nonzero eigenvalue of H_kk
  double projector_distance = 0;
  double alpha = std::numeric_limits<double>::quiet_NaN();
  double alpha_reference = 0;  // 1 - gamma / (6L)

  BoundCheck reconstruction, phi_b_bound, phi_r_negative, sandwich_lower, sandwich_upper, gap_consistency, alpha_check;

  std::vector<const BoundCheck*> checks() const {
    return {&reconstruction, &phi_b_bound, &phi_r_negative, &sandwich_lower, &sandwich_upper, &gap_consistency,
            &alpha_check};
  }
  bool all_ok() const {
    for (auto* c : checks())
      if (!c->holds) return false;
    return true;
  }
  std::string failing() const {
    std::string out;
    for (auto* c : checks())
      if (!c->holds) out += (out.empty() ? "" : "; ") + c->name;
    return out;
  }
};

namespace detail {

inline double smallest_nonzero(const RealVector& v, double tol = kDegeneracyTol) {
  double g = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (v(i) > tol) g = std::min(g, v(i));
  return g;
}

inline double extreme_eigenvalue(const HermitianOperator& H, bool highest, double tol) {
  KrylovOptions o;
  o.tol = tol;
  EigenResult r = highest ? highest_eigenpairs(H, 1, o) : lowest_eigenpairs(H, 1, o);
  if (!r.converged) throw ConvergenceError("extreme_eigenvalue: Krylov solver did not converge", r.max_residual());
  return r.values(0);
}

inline HermitianOperator sum_op(std::vector<std::pair<HermitianOperator, double>> parts) {
  const std::size_t n = parts.at(0).first.dim;
  return {n, [parts](const Matrix& X) {
            Matrix Y = Matrix::Zero(X.rows(), X.cols());
            for (const auto& [op, c] : parts)
              if (c != 0.0) Y += c * op.apply(X);
            return Y;
          }};
}

}  // namespace detail

// Block unitaries W on each of the m blocks of the ring (block index = slots A_k B_k).
inline HermitianOperator rotated_hamiltonian(const LocalSum& H_sites, const Matrix& W, std::size_t m) {
  const std::size_t nb = static_cast<std::size_t>(W.rows());
  ProductSpace blocks = ProductSpace::uniform(nb, m);
  if (blocks.dim() != H_sites.dim()) throw Error("rotated_hamiltonian: block and site spaces differ");
  std::vector<Placement> pl;
  for (std::size_t k = 0; k < m; ++k) pl.emplace_back(blocks, std::vector<std::size_t>{k});
  auto Wp = std::make_shared<const Matrix>(W);
  auto Wd = std::make_shared<const Matrix>(W.adjoint());
  BlockMap Hm = H_sites.as_map();
  return {H_sites.dim(), [pl, Wp, Wd, Hm](const Matrix& X) {
            return apply_product(pl, *Wp, Hm(apply_product(pl, *Wd, X)));
          }};
}

inline LocalSum ring_hamiltonian_sites(const Matrix& h, std::size_t d, std::size_t P, std::size_t N) {
  LocalSum H(ProductSpace::uniform(d, N));
  for (std::size_t i = 0; i < N; ++i) H.add(ring_window(i, P, N), h);
  return H;
}

// Sum_k phi_b on region k.
inline LocalSum phi_b_sum(const Decomposition& dec, const SlotRing& ring) {
  LocalSum S(ring.space);
  for (std::size_t k = 0; k < dec.m; ++k) S.add(ring.region(k), dec.phi_b);
  return S;
}

// Sum_k phi_r(k,k+1) = sum_k (1 - G_inf)K(1 - G_inf) on region k - 3L sum_k HS_k.
inline LocalSum phi_r_sum(const Decomposition& dec, const SlotRing& ring) {
  LocalSum S(ring.space);
  for (std::size_t k = 0; k < dec.m; ++k) S.add(ring.region(k), dec.phi_r_region);
  for (std::size_t k = 0; k < dec.m; ++k) S.add(ring.pair(k), dec.frame.hs, -3.0 * static_cast<double>(dec.L));
  return S;
}

// phi_r of one region on the six slots (B_{k-1}, A_k, B_k, A_{k+1}, B_{k+1}, A_{k+2}).
inline LocalSum phi_r_local(const Decomposition& dec) {
  LocalSum S(ProductSpace::uniform(dec.frame.s, 6));
  S.add({1, 2, 3, 4}, dec.phi_r_region);
  for (std::size_t p : {0u, 2u, 4u}) S.add({p, p + 1}, dec.frame.hs, -static_cast<double>(dec.L));
  return S;
}

// Exact ||phi_b|| of a region through the span of G_inf and K G_inf, with K
// applied matrix-free. Uses (1 - G')K(1 - G') = K since G' is the kernel of K.
inline double phi_b_norm_lowrank(const BlockMap& K, const Matrix& Binf) {
  Matrix KB = K(Binf);
  Matrix span(Binf.rows(), Binf.cols() * 2);
  span << Binf, KB;
  Matrix Q = orthonormal_range(span, 1e-12);
  auto project_out = [&](const Matrix& X) { return X - Binf * (Binf.adjoint() * X); };
  Matrix KQ = K(Q);
  Matrix PQ = project_out(Q);
  Matrix phiQ = KQ - project_out(K(PQ));
  Matrix small = hermitize(Q.adjoint() * phiQ);
  return hermitian_norm(small);
}

// Region Hamiltonians for range-P terms on 2L sites (site frame).
inline std::pair<LocalSum, LocalSum> region_sums(const Matrix& h, std::size_t d, std::size_t P, std::size_t L) {
  LocalSum region = open_chain(h, d, P, 2 * L);
  LocalSum cross(ProductSpace::uniform(d, 2 * L));
  for (std::size_t i = L - P + 1; i < L; ++i) cross.add(ring_window(i, P, 2 * L), h);
  return {region, cross};
}

// (W (x) W) as a map on 2L-site vectors, W in the slot frame.
inline BlockMap two_block_map(const Matrix& W) {
  auto Wp = std::make_shared<const Matrix>(W);
  return [Wp](const Matrix& X) {
    const Eigen::Index n = Wp->rows();
    Matrix Y(X.rows(), X.cols());
    for (Eigen::Index c = 0; c < X.cols(); ++c) Y.col(c) = vec((*Wp) * unvec(X.col(c), n, n) * Wp->transpose());
    return Y;
  };
}

struct PhiBSample {
  std::size_t L = 0;
  double norm = 0.0;
  double bound = 0.0;  // +inf when vacuous
};

// ||phi_b|| for block length L through the low-rank route (no dense region operator).
inline PhiBSample phi_b_norm_at(const CanonicalForm& cf, std::size_t L, std::size_t P, double C, double mu) {
  if (P > L) throw Error("phi_b_norm_at: interaction range exceeds block length");
  HalfShiftedFrame f = half_shifted_frame(cf, L);
  BlockUnitary bu = build_block_unitary(cf, L);
  Matrix h = interaction_term(cf.tensors, P);
  auto [region, cross] = region_sums(h, cf.tensors.d, P, L);
  BlockMap Rm = region.as_map(), Cm = cross.as_map();
  BlockMap W2 = two_block_map(bu.W_frame), W2d = two_block_map(Matrix(bu.W_frame.adjoint()));
  BlockMap K = [=](const Matrix& X) { Matrix Y = W2d(X); return W2(Matrix(0.5 * Rm(Y) + 0.5 * Cm(Y))); };
  PhiBSample s;
  s.L = L;
  s.norm = phi_b_norm_lowrank(K, f.ginf_basis());
  s.bound = projdistance_rhs(32.0 * static_cast<double>(L), cf.tensors.D, C, cf.spectrum.lambda2, L, mu);
  return s;
}

struct DecomposeOptions {
  std::size_t P = 0;                        // interaction range, 0 = L0 + 1
  std::vector<std::size_t> fit_L;           // window for C, default {1..12}
  double tol = 1e-10;
  bool compute_alpha = true;
};

inline std::vector<std::size_t> default_fit_window() { return {2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}; }

inline double relative_bound_alpha(const Decomposition& dec, double tol = 1e-10);

inline Decomposition decompose(const CanonicalForm& cf, std::size_t L, std::size_t m, const DecomposeOptions& opt = {}) {
  Decomposition dec;
  dec.L = L;
  dec.m = m;
  dec.P = opt.P ? opt.P : cf.L0 + 1;
  dec.tensors = cf.tensors;
  const std::size_t d = cf.tensors.d, D = cf.tensors.D;
  if (dec.P > L) throw Error("decompose: interaction range exceeds block length");
  if (m < 3) throw Error("decompose: at least 3 blocks are required");
  checked_pow(d, m * L, kStateCap, "decompose d^(mL)");
  checked_pow(d, 2 * L, kDenseLimit, "decompose region d^(2L)");
  dec.frame = half_shifted_frame(cf, L);
  dec.block = build_block_unitary(cf, L);
  dec.h = interaction_term(cf.tensors, dec.P);

  auto [region, cross] = region_sums(dec.h, d, dec.P, L);
  dec.H_region = region.dense();
  dec.H_kk = 0.5 * dec.H_region + 0.5 * cross.dense();
  LocalGap lg = gap_of_dense(dec.H_region, 2 * L);
  dec.G = lg.kernel_projector;
  dec.gamma = lg.gap;
  dec.gamma_kk = detail::smallest_nonzero(hermitian_eigen(dec.H_kk).values);
  const auto n2 = dec.H_region.rows();
  const Matrix I = Matrix::Identity(n2, n2);

  dec.W2 = kron(dec.block.W_frame, dec.block.W_frame);
  dec.K = hermitize(dec.W2 * dec.H_kk * dec.W2.adjoint());
  Matrix Gp = hermitize(dec.W2 * dec.G * dec.W2.adjoint());
  dec.G_inf = dec.frame.ginf();
  dec.projector_distance = hermitian_norm(Gp - dec.G_inf);
  dec.phi_b = hermitize((I - Gp) * dec.K * (I - Gp) - (I - dec.G_inf) * dec.K * (I - dec.G_inf));
  dec.phi_r_region = hermitize((I - dec.G_inf) * dec.K * (I - dec.G_inf));

  dec.lambda2 = cf.spectrum.lambda2;
  dec.mu = asymptotic_projector(cf).mu;
  if (dec.lambda2 < 1e-12) {
    dec.C = 0.0;
  } else {
    dec.C = convergence_fit(cf, opt.fit_L.empty() ? default_fit_window() : opt.fit_L).envelope;
  }

  // (i) reconstruction on the full slot ring
  SlotRing ring(m, dec.frame.s);
  ClassicalHamiltonian hcl = classical_hamiltonian(dec.frame, m);
  LocalSum Hs = ring_hamiltonian_sites(dec.h, d, dec.P, m * L);
  HermitianOperator Hrot = rotated_hamiltonian(Hs, dec.block.W_frame, m);
  LocalSum pb = phi_b_sum(dec, ring), pr = phi_r_sum(dec, ring);
  HermitianOperator resid = detail::sum_op(
      {{Hrot, 1.0}, {hcl.op(), -1.0}, {as_operator(pb), -1.0}, {as_operator(pr), -1.0}});
  Rng rng(mix_seed(0x7265636f, m * L));
  Matrix probe = gaussian_matrix(ring.dim(), 4, rng);
  double probe_norm = 0.0;
  Matrix rp = resid.apply(probe);
  for (Eigen::Index c = 0; c < probe.cols(); ++c) probe_norm = std::max(probe_norm, rp.col(c).norm() / probe.col(c).norm());
  double krylov_norm = std::max(std::abs(detail::extreme_eigenvalue(resid, true, 1e-6)),
                                std::abs(detail::extreme_eigenvalue(resid, false, 1e-6)));
  dec.reconstruction = {"reconstruction (W)H(W)^dag = H_CL + sum phi_b + sum phi_r", std::max(probe_norm, krylov_norm),
                        1e-8, false};
  dec.reconstruction.holds = dec.reconstruction.value < dec.reconstruction.bound;

  // (ii) ||phi_b|| against its explicit bound
  double nb = hermitian_norm(dec.phi_b);
  double bb = dec.lambda2 < 1e-12 ? 0.0
                                  : projdistance_rhs(32.0 * static_cast<double>(L), D, dec.C, dec.lambda2, L, dec.mu);
  dec.phi_b_bound = {"||phi_b|| <= 32 L D^4 sqrt(C)|l2|^(L/2) / (mu - 4 D^4 sqrt(C)|l2|^(L/2))^2", nb, bb,
                     nb <= bb * (1 + 1e-10) + 1e-10};

  // (iii) phi_r <= 0 and (iv) the sandwich, on the six slots around region k
  HermitianOperator phr = as_operator(phi_r_local(dec));
  double top = detail::extreme_eigenvalue(phr, true, opt.tol);
  dec.phi_r_negative = {"phi_r <= 0", top, 1e-10, top <= 1e-10};
  ProductSpace six = ProductSpace::uniform(dec.frame.s, 6);
  Matrix one_minus_ginf = Matrix::Identity(n2, n2) - dec.G_inf;
  LocalSum low(six), up(six);
  low.add({1, 2, 3, 4}, one_minus_ginf);
  low.add({2, 3}, dec.frame.hs, -1.0);
  for (std::size_t p : {0u, 2u, 4u}) up.add({p, p + 1}, dec.frame.hs);
  up.add({1, 2, 3, 4}, one_minus_ginf, -1.0);
  double lmin = detail::extreme_eigenvalue(as_operator(low), false, opt.tol);
  double umin = detail::extreme_eigenvalue(as_operator(up), false, opt.tol);
  dec.sandwich_lower = {"HS_k <= 1 - G_inf", lmin, -1e-10, lmin >= -1e-10};
  dec.sandwich_upper = {"1 - G_inf <= HS_(k-1) + HS_k + HS_(k+1)", umin, -1e-10, umin >= -1e-10};

  // region gap consistency H_region >= gamma (1 - G)
  LocalGap lg2 = local_gap(cf.tensors, 2 * L, dec.P);
  double cmin = hermitian_eigen(hermitize(dec.H_region - lg2.gap * (I - dec.G))).values(0);
  dec.gap_consistency = {"H_region >= gamma (1 - G)", cmin, -1e-10,
                         cmin >= -1e-10 && std::abs(lg2.gap - dec.gamma) < 1e-10};

  dec.alpha_reference = 1.0 - dec.gamma / (6.0 * static_cast<double>(L));
  if (opt.compute_alpha) {
    dec.alpha = relative_bound_alpha(dec, opt.tol);
    dec.alpha_check = {"alpha < 1", dec.alpha, 1.0, dec.alpha < 1.0};
  } else {
    dec.alpha_check = {"alpha < 1", dec.alpha, 1.0, true};
  }
  return dec;
}

// Smallest alpha with X <= alpha H_CL off the kernel of H_CL, for X = -sum phi_r
// given as a map on the slot ring. Each slot pair is rotated so that phi is its
// first basis vector; there H_CL is diagonal with entries 3L * (number of pairs
// not in phi).
inline double relative_bound(const HalfShiftedFrame& frame, std::size_t m, const BlockMap& X, double tol = 1e-10) {
  SlotRing ring(m, frame.s);
  const Matrix& R = frame.pair_rotation;
  {
    Matrix diag = R.adjoint() * frame.hs * R;
    Matrix expect = Matrix::Identity(diag.rows(), diag.cols());
    expect(0, 0) = 0;
    if ((diag - expect).cwiseAbs().maxCoeff() > 1e-12) throw Error("relative_bound: rotation does not diagonalize HS");
  }
  std::vector<Placement> pairs;
  for (std::size_t k = 0; k < m; ++k) pairs.emplace_back(ring.space, ring.pair(k));
  const std::size_t n = ring.dim(), s = frame.s;
  const double scale = 3.0 * static_cast<double>(frame.L);
  std::vector<double> dvec(n);
  std::vector<Eigen::Index> nz;
  for (std::size_t x = 0; x < n; ++x) {
    std::size_t excited = 0;
    for (std::size_t k = 0; k < m; ++k) {
      auto f = ring.pair(k);
      std::size_t a = (x / ring.space.stride(f[0])) % s, b = (x / ring.space.stride(f[1])) % s;
      if (a * s + b != 0) ++excited;
    }
    dvec[x] = scale * static_cast<double>(excited);
    if (excited) nz.push_back(static_cast<Eigen::Index>(x));
  }
  auto Rp = std::make_shared<const Matrix>(R);
  auto Rd = std::make_shared<const Matrix>(R.adjoint());
  // X must annihilate the classical ground state
  Matrix ground = Matrix::Zero(static_cast<Eigen::Index>(n), 1);
  ground(0, 0) = 1;
  ground = apply_product(pairs, *Rp, ground);
  if (X(ground).norm() > 1e-8) return std::numeric_limits<double>::infinity();
  auto nzp = std::make_shared<const std::vector<Eigen::Index>>(nz);
  auto dp = std::make_shared<const std::vector<double>>(dvec);
  HermitianOperator M{nz.size(), [=](const Matrix& Y) {
                        Matrix Z = Matrix::Zero(static_cast<Eigen::Index>(n), Y.cols());
                        for (std::size_t i = 0; i < nzp->size(); ++i)
                          Z.row((*nzp)[i]) = Y.row(static_cast<Eigen::Index>(i)) / std::sqrt((*dp)[static_cast<std::size_t>((*nzp)[i])]);
                        Matrix U = apply_product(pairs, *Rd, X(apply_product(pairs, *Rp, Z)));
                        Matrix out(static_cast<Eigen::Index>(nzp->size()), Y.cols());
                        for (std::size_t i = 0; i < nzp->size(); ++i)
                          out.row(static_cast<Eigen::Index>(i)) =
                              U.row((*nzp)[i]) / std::sqrt((*dp)[static_cast<std::size_t>((*nzp)[i])]);
                        return out;
                      }};
  return detail::extreme_eigenvalue(M, true, tol);
}

inline double relative_bound_alpha(const Decomposition& dec, double tol) {
  SlotRing ring(dec.m, dec.frame.s);
  BlockMap pr = phi_r_sum(dec, ring).as_map();
  return relative_bound(dec.frame, dec.m, [pr](const Matrix& V) { return Matrix(-pr(V)); }, tol);
}

struct PhaseStep {
  double t = 0.0;
  GapReport gap;
  bool ok = false;
  std::string error;
};

struct PhasePath {
  std::vector<PhaseStep> steps;
  double min_gap = std::numeric_limits<double>::infinity();
  bool verdict = false;
  bool withheld = false;
  double endpoint_gap = 0.0;  // global gap of the untransformed parent Hamiltonian
  double endpoint_difference = 0.0;
};

// H(t) = H_CL + t (sum phi_b + sum phi_r) = (1 - t) H_CL + t (W)H(W)^dag.
inline PhasePath phase_path(const Decomposition& dec, std::size_t steps, double tol = 1e-10) {
  if (steps == 0) throw Error("phase_path: at least one step is required");
  ClassicalHamiltonian hcl = classical_hamiltonian(dec.frame, dec.m);
  LocalSum Hs = ring_hamiltonian_sites(dec.h, dec.tensors.d, dec.P, dec.m * dec.L);
  HermitianOperator Hrot = rotated_hamiltonian(Hs, dec.block.W_frame, dec.m);
  HermitianOperator Hcl = hcl.op();
  PhasePath p;
  std::optional<Matrix> warm;
  for (std::size_t i = 0; i <= steps; ++i) {
    PhaseStep st;
    st.t = static_cast<double>(i) / static_cast<double>(steps);
    HermitianOperator Ht = detail::sum_op({{Hcl, 1.0 - st.t}, {Hrot, st.t}});
    GapOptions o;
    o.mode = SpectrumMode::sparse;
    o.tol = tol;
    o.want_vectors = true;
    o.initial = warm;
    try {
      st.gap = spectral_gap(Ht, o);
      st.ok = st.gap.degeneracy == 1 && st.gap.gap > 0;
      warm = st.gap.ground_vectors;
    } catch (const ConvergenceError& e) {
      st.error = e.what();
      p.withheld = true;
    }
    if (st.error.empty()) p.min_gap = std::min(p.min_gap, st.gap.gap);
    p.steps.push_back(st);
  }
  GapOptions o;
  o.mode = SpectrumMode::sparse;
  o.tol = tol;
  p.endpoint_gap = spectral_gap(as_operator(Hs), o).gap;
  if (!p.withheld) p.endpoint_difference = std::abs(p.steps.back().gap.gap - p.endpoint_gap);
  p.verdict = !p.withheld && p.min_gap > 0 &&
              std::all_of(p.steps.begin(), p.steps.end(), [](const PhaseStep& s) { return s.ok; });
  return p;
}

struct SandwichResult {
  bool kernels_equal = false;
  double kernel_distance = 0.0;
  double c1 = 0.0, c2 = 0.0;
};

// c1 h_{G_L} <= sum_j h_(j,j+1) <= c2 h_{G_L} for a two-site term h_hat.
inline SandwichResult two_site_sandwich(const Matrix& h_hat, const MpsTensors& t, std::size_t L) {
  checked_pow(t.d, L, kDenseLimit, "two_site_sandwich d^L");
  if (h_hat.rows() != static_cast<Eigen::Index>(t.d * t.d)) throw Error("two_site_sandwich: h_hat must act on two sites");
  if (hermitian_eigen(hermitize(h_hat)).values(0) < -1e-12) throw Error("two_site_sandwich: h_hat is not positive");
  Matrix S = open_chain(hermitize(h_hat), t.d, 2, L).dense();
  Matrix hG = interaction_term(t, L);
  LocalGap ks = gap_of_dense(S, L);
  const auto n = S.rows();
  SandwichResult r;
  r.kernel_distance = hermitian_norm(ks.kernel_projector - (Matrix::Identity(n, n) - hG));
  r.kernels_equal = r.kernel_distance < 1e-8;
  if (!r.kernels_equal) return r;
  Matrix Q = image_basis(hG);
  RealVector ev = hermitian_eigen(hermitize(Q.adjoint() * S * Q)).values;
  r.c1 = ev.minCoeff();
  r.c2 = ev.maxCoeff();
  return r;
}

// Regrouping rule: a perturbation of range r needs blocks of at least r sites.
inline std::size_t effective_block_length(std::size_t L, std::size_t range) {
  std::size_t e = std::max(L, range);
  return e + (e % 2);
}

struct SweepConfig {
  MpsTensors tensors;
  std::size_t P = 3;                      // interaction range of the parent Hamiltonian
  std::vector<std::size_t> N_list;
  std::vector<double> beta_factors;       // beta' in units of gamma
  std::vector<std::uint64_t> seeds;
  std::size_t range = 2;                  // perturbation support
  double tol = 1e-10;
  double verdict_factor = 0.05;
  double retained = 0.5;
  std::size_t workers = 1;
};

struct SweepPoint {
  std::size_t N = 0;
  std::uint64_t seed = 0;
  double beta_factor = 0.0;
  double beta = 0.0;
  GapReport gap;
  std::string error;
};

struct SweepCurve {
  std::size_t N = 0;
  std::uint64_t seed = 0;
  double perturbation_norm = 0.0;
  std::vector<SweepPoint> points;
  double max_jump_excess = -std::numeric_limits<double>::infinity();  // max(jump - allowed)
  bool continuous = true;
};

struct StabilityReport {
  double gamma = 0.0;  // min over N of the unperturbed gap
  std::vector<GapReport> unperturbed;
  std::vector<SweepCurve> curves;  // ordered by (N, seed)
  bool stable = false;              // gap >= retained * gamma and unique ground state at beta' <= verdict_factor * gamma
  bool continuous = false;
  std::vector<std::string> failures;
};

// Unit-norm Hermitian terms on windows (i, ..., i + range - 1).
inline LocalSum random_perturbation(std::size_t d, std::size_t N, std::size_t range, std::uint64_t seed) {
  Rng rng(mix_seed(seed, N));
  const std::size_t n = ipow(d, range);
  LocalSum Phi(ProductSpace::uniform(d, N));
  for (std::size_t i = 0; i < N; ++i) {
    Matrix g = gue_matrix(n, rng);
    Phi.add(ring_window(i, range, N), g / hermitian_norm(g));
  }
  return Phi;
}

inline SweepCurve sweep_curve(const SweepConfig& cfg, const Matrix& h, std::size_t N, std::uint64_t seed, double gamma) {
  SweepCurve c;
  c.N = N;
  c.seed = seed;
  LocalSum H = ring_hamiltonian_sites(h, cfg.tensors.d, cfg.P, N);
  LocalSum Phi = random_perturbation(cfg.tensors.d, N, cfg.range, seed);
  HermitianOperator Hop = as_operator(H), Pop = as_operator(Phi);
  c.perturbation_norm = operator_norm(Pop, 1e-8);
  std::vector<double> betas = cfg.beta_factors;
  std::sort(betas.begin(), betas.end());
  std::optional<Matrix> warm;
  for (double bf : betas) {
    SweepPoint p;
    p.N = N;
    p.seed = seed;
    p.beta_factor = bf;
    p.beta = bf * gamma;
    GapOptions o;
    o.mode = SpectrumMode::sparse;
    o.tol = cfg.tol;
    o.want_vectors = true;
    o.initial = warm;
    try {
      p.gap = spectral_gap(detail::sum_op({{Hop, 1.0}, {Pop, p.beta}}), o);
      p.gap.N = N;
      p.gap.L = cfg.P;
      warm = p.gap.ground_vectors;
      p.gap.ground_vectors.resize(0, 0);
    } catch (const std::exception& e) {
      p.error = e.what();
    }
    c.points.push_back(std::move(p));
  }
  // Weyl: each eigenvalue moves by at most dbeta ||Phi||, so the gap by twice that
  for (std::size_t i = 1; i < c.points.size(); ++i) {
    const auto &a = c.points[i - 1], &b = c.points[i];
    if (!a.error.empty() || !b.error.empty()) {
      c.continuous = false;
      continue;
    }
    double allowed = 5.0 * cfg.tol * std::max(1.0, std::abs(b.gap.ground_energy)) +
                     2.0 * (b.beta - a.beta) * c.perturbation_norm;
    double excess = std::abs(b.gap.gap - a.gap.gap) - allowed;
    c.max_jump_excess = std::max(c.max_jump_excess, excess);
    if (excess > 0) c.continuous = false;
  }
  return c;
}

inline StabilityReport perturb_sweep(const SweepConfig& cfg) {
  if (cfg.seeds.empty()) throw Error("perturb_sweep: seed list is empty");
  if (cfg.N_list.empty() || cfg.beta_factors.empty()) throw Error("perturb_sweep: empty grid");
  for (auto N : cfg.N_list) {
    checked_pow(cfg.tensors.d, N, kStateCap, "perturb_sweep d^N");
    if (N < cfg.P || N < cfg.range) throw Error("perturb_sweep: ring shorter than the interaction range");
  }
  StabilityReport rep;
  Matrix h = interaction_term(cfg.tensors, cfg.P);
  rep.gamma = std::numeric_limits<double>::infinity();
  for (auto N : cfg.N_list) {
    GapOptions o;
    o.mode = SpectrumMode::sparse;
    o.tol = cfg.tol;
    GapReport g = spectral_gap(as_operator(ring_hamiltonian_sites(h, cfg.tensors.d, cfg.P, N)), o);
    g.N = N;
    g.L = cfg.P;
    rep.unperturbed.push_back(g);
    rep.gamma = std::min(rep.gamma, g.gap);
  }
  std::vector<std::pair<std::size_t, std::uint64_t>> tasks;
  for (auto N : cfg.N_list)
    for (auto s : cfg.seeds) tasks.emplace_back(N, s);
  rep.curves.resize(tasks.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next++) < tasks.size();)
      rep.curves[i] = sweep_curve(cfg, h, tasks[i].first, tasks[i].second, rep.gamma);
  };
  std::size_t nw = std::max<std::size_t>(1, std::min(cfg.workers, tasks.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < nw; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  std::stable_sort(rep.curves.begin(), rep.curves.end(),
                   [](const SweepCurve& a, const SweepCurve& b) { return std::tie(a.N, a.seed) < std::tie(b.N, b.seed); });

  rep.stable = true;
  rep.continuous = true;
  for (const auto& c : rep.curves) {
    if (!c.continuous) {
      rep.continuous = false;
      rep.failures.push_back("gap jump above the Weyl allowance at N=" + std::to_string(c.N) +
                             " seed=" + std::to_string(c.seed));
    }
    for (const auto& p : c.points) {
      if (p.beta_factor > cfg.verdict_factor + 1e-12) continue;
      std::string where = " at N=" + std::to_string(p.N) + " seed=" + std::to_string(p.seed) +
                          " beta'/gamma=" + std::to_string(p.beta_factor);
      if (!p.error.empty()) {
        rep.stable = false;
        rep.failures.push_back("solver failure" + where + ": " + p.error);
      } else if (p.gap.degeneracy != 1) {
        rep.stable = false;
        rep.failures.push_back("ground degeneracy != 1" + where);
      } else if (!(p.gap.gap >= cfg.retained * rep.gamma)) {
        rep.stable = false;
        rep.failures.push_back("gap < " + std::to_string(cfg.retained) + " gamma" + where);
      }
    }
  }
  return rep;
}

inline void write_sweep_csv(std::ostream& os, const StabilityReport& r) {
  os << "N,seed,beta_factor,beta,ground_energy,degeneracy,gap,method,error\n";
  for (const auto& c : r.curves)
    for (const auto& p : c.points)
      os << p.N << ',' << p.seed << ',' << p.beta_factor << ',' << p.beta << ',' << p.gap.ground_energy << ','
         << p.gap.degeneracy << ',' << p.gap.gap << ',' << p.gap.method << ',' << (p.error.empty() ? "" : "solver") << '\n';
}

}  // namespace mpsstab
