#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mpsstab/channel.hpp"
#include "mpsstab/mps.hpp"

namespace mpsstab {

// Kraus operators of T^L obtained by unitary recombination of the length-L
// products (rows of U * Atilde).
struct BlockedChannel {
  std::size_t L = 0;
  Matrix mixing;                      // U, d^L x d^L
  std::vector<Matrix> blocked_kraus;  // nonzero blocked operators, descending singular value
  RealVector singular_values;
  std::size_t active = 0;             // min{D^2, d^L}
  double tail_norm = 0.0;             // largest entry of rows beyond `active`
  double choi_error = 0.0;            // ||Choi(T^(L)) - Choi(T^L)||_max

  // Channel on the first `count` rows (zero-padded), default D^2.
  QuantumChannel channel(std::size_t count = 0) const {
    const std::size_t D2 = static_cast<std::size_t>(blocked_kraus.at(0).rows() * blocked_kraus.at(0).rows());
    return QuantumChannel(pad_kraus(blocked_kraus, count ? count : D2));
  }
};

inline Matrix matrix_power(const Matrix& E, std::size_t n) {
  Matrix R = Matrix::Identity(E.rows(), E.cols());
  Matrix B = E;
  while (n) {
    if (n & 1) R = (R * B).eval();
    n >>= 1;
    if (n) B = (B * B).eval();
  }
  return R;
}

inline BlockedChannel block(const MpsTensors& t, std::size_t L) {
  Matrix At = product_matrix(t, L);  // enforces d^L <= cap
  const Eigen::Index n = At.rows();
  const auto D = static_cast<Eigen::Index>(t.D);
  BlockedChannel b;
  b.L = L;
  b.active = static_cast<std::size_t>(std::min<Eigen::Index>(n, D * D));

  Eigen::BDCSVD<Matrix> svd(At, Eigen::ComputeThinU);
  Matrix P = svd.matrixU();
  b.singular_values = svd.singularValues();
  Matrix full(n, n);
  full.leftCols(P.cols()) = P;
  if (P.cols() < n) {
    Eigen::HouseholderQR<Matrix> qr(P);
    Matrix Q = qr.householderQ();
    full.rightCols(n - P.cols()) = Q.rightCols(n - P.cols());
  }
  // leading entry (first entry above 1e-8 of the column maximum) real positive
  for (Eigen::Index j = 0; j < n; ++j) {
    double mx = full.col(j).cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < n; ++i)
      if (std::abs(full(i, j)) > 1e-8 * mx) {
        full.col(j) *= std::conj(full(i, j)) / std::abs(full(i, j));
        break;
      }
  }
  b.mixing = full.adjoint();
  Matrix B = b.mixing * At;
  const double smax = b.singular_values.size() ? b.singular_values(0) : 0.0;
  for (Eigen::Index m = 0; m < static_cast<Eigen::Index>(b.active); ++m)
    if (b.singular_values(m) > kRankTol * smax) b.blocked_kraus.push_back(unvec(B.row(m).transpose(), D, D));
  if (b.blocked_kraus.empty()) throw Error("block: all products vanish");
  b.tail_norm = 0.0;
  if (n > static_cast<Eigen::Index>(b.active))
    b.tail_norm = B.bottomRows(n - static_cast<Eigen::Index>(b.active)).cwiseAbs().maxCoeff();

  Matrix J = choi(QuantumChannel(b.blocked_kraus));
  Matrix JL = choi_from_transfer(matrix_power(transfer_matrix(t.A), L), D);
  double scale = std::max(1.0, JL.cwiseAbs().maxCoeff());
  b.choi_error = (J - JL).cwiseAbs().maxCoeff() / scale;
  if (b.choi_error > 1e-10) throw Error("block: Choi(T^(L)) differs from Choi(T^L)");
  if (b.tail_norm > 1e-10 * std::max(1.0, smax)) throw Error("block: rows beyond min{D^2, d^L} do not vanish");
  return b;
}

// Canonical Kraus set of the channel with transfer matrix E (Choi eigenvectors),
// padded with zeros to D^2 operators.
inline QuantumChannel channel_from_transfer(const Matrix& E, Eigen::Index D) {
  Matrix J = choi_from_transfer(E, D);
  HermitianEigen e = hermitian_eigen(J);
  double cut = kRankTol * e.values.cwiseAbs().maxCoeff();
  std::vector<Matrix> K;
  for (Eigen::Index c = e.values.size(); c-- > 0;)
    if (e.values(c) > cut) K.push_back(unvec(e.vectors.col(c) * std::sqrt(e.values(c)), D, D).transpose());
  if (K.empty()) throw Error("channel_from_transfer: zero channel");
  return QuantumChannel(pad_kraus(std::move(K), static_cast<std::size_t>(D * D)));
}

inline QuantumChannel channel_power(const QuantumChannel& T, std::size_t n) {
  return channel_from_transfer(matrix_power(T.transfer(), n), static_cast<Eigen::Index>(T.dim()));
}

inline void require_primitive(const CanonicalForm& cf, const char* who) {
  if (cf.spectrum.lambda2 >= 1.0 - 1e-10)
    throw NotGeneric(std::string(who) + ": subdominant transfer eigenvalue has magnitude 1");
}

// Kraus operators sqrt(xi_q)|p><q| of the limit of T^n, index p*D + q.
inline QuantumChannel limit_kraus(const CanonicalForm& cf) {
  require_primitive(cf, "limit_kraus");
  const auto D = static_cast<Eigen::Index>(cf.tensors.D);
  std::vector<Matrix> K;
  for (Eigen::Index p = 0; p < D; ++p)
    for (Eigen::Index q = 0; q < D; ++q) {
      Matrix k = Matrix::Zero(D, D);
      k(p, q) = std::sqrt(cf.xi(q));
      K.push_back(k);
    }
  QuantumChannel T(K);
  if (!T.unital()) throw Error("limit_kraus: limit channel is not unital");
  Matrix Xi = cf.xi.cast<cplx>().asDiagonal();
  for (Eigen::Index a = 0; a < D; ++a)
    for (Eigen::Index b = 0; b < D; ++b) {
      Matrix E = Matrix::Zero(D, D);
      E(a, b) = 1;
      if ((T.dual_apply(E) - E.trace() * Xi).cwiseAbs().maxCoeff() > 1e-10)
        throw Error("limit_kraus: dual does not send X to Tr[X] Xi");
    }
  return T;
}

// |phi> = sum_i sqrt(xi_i)|ii> on C^D (x) C^D.
inline Vector phi_vector(const RealVector& xi) {
  const Eigen::Index D = xi.size();
  Vector phi = Vector::Zero(D * D);
  for (Eigen::Index i = 0; i < D; ++i) phi(i * D + i) = std::sqrt(xi(i));
  return phi;
}

inline Matrix expected_asymptotic_projector(const RealVector& xi) {
  const Eigen::Index D = xi.size();
  Vector phi = phi_vector(xi);
  return kron(kron(Matrix::Identity(D, D), phi * phi.adjoint()), Matrix::Identity(D, D));
}

inline LocalProjectorPair asymptotic_projector(const CanonicalForm& cf) {
  LocalProjectorPair p = rho_ee(limit_kraus(cf));
  Matrix expect = expected_asymptotic_projector(cf.xi);
  if ((p.projector - expect).cwiseAbs().maxCoeff() > 1e-10)
    throw Error("asymptotic_projector: image projector differs from 1 (x) |phi><phi| (x) 1");
  if (p.rank != cf.tensors.D * cf.tensors.D) throw Error("asymptotic_projector: rank differs from D^2");
  return p;
}

struct ProjectorDistance {
  double measured = 0.0;      // ||P - P~||_p
  double rho_distance = 0.0;  // ||rho - rho~||_p
  double rho_distance_inf = 0.0;
  double general_rhs = 0.0;
  bool general_holds = false;
  bool equal_rank_applicable = false;
  std::optional<double> equal_rank_rhs;
  std::optional<double> measured_inf;
  bool equal_rank_holds = false;
  std::string equal_rank_note;
};

inline ProjectorDistance projector_distance_bound(const LocalProjectorPair& a, const LocalProjectorPair& b,
                                                  Schatten p) {
  if (a.rho.rows() != b.rho.rows()) throw Error("projector_distance_bound: dimension mismatch");
  ProjectorDistance r;
  Matrix dP = hermitize(a.projector - b.projector);
  Matrix dR = hermitize(a.rho - b.rho);
  r.measured = schatten_norm(dP, p);
  r.rho_distance = schatten_norm(dR, p);
  r.rho_distance_inf = hermitian_norm(dR);
  auto inv = [](const LocalProjectorPair& x) { return x.rank ? 1.0 / x.mu : 0.0; };
  const double ia = inv(a), ib = inv(b);
  // the proof bounds ||rho~||_inf by one; keep the factor for non-density input
  const double nb = std::max(1.0, hermitian_norm(b.rho));
  r.general_rhs = r.rho_distance * (ia + nb * (ia * ia + ib * ib + ia * ib));
  r.general_holds = r.measured <= r.general_rhs * (1 + 1e-10) + 1e-12;
  if (a.rank != b.rank) {
    r.equal_rank_note = "inapplicable: ranks differ";
  } else if (!(r.rho_distance_inf < b.mu)) {
    r.equal_rank_note = "inapplicable: ||rho - rho~||_inf >= mu~";
  } else {
    r.equal_rank_applicable = true;
    double gap = b.mu - r.rho_distance_inf;
    r.equal_rank_rhs = 4.0 * r.rho_distance_inf / (gap * gap);
    r.measured_inf = hermitian_norm(dP);
    r.equal_rank_holds = *r.measured_inf <= *r.equal_rank_rhs * (1 + 1e-10) + 1e-12;
  }
  return r;
}

struct LogFit {
  double slope = 0.0;
  double intercept = 0.0;
  std::size_t points = 0;
};

inline LogFit fit_log_linear(const std::vector<double>& x, const std::vector<double>& y, double floor = 1e-300) {
  std::vector<double> xs, ls;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (y[i] > floor) {
      xs.push_back(x[i]);
      ls.push_back(std::log(y[i]));
    }
  LogFit f;
  f.points = xs.size();
  if (xs.size() < 2) return f;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ls[i];
  }
  mx /= static_cast<double>(xs.size());
  my /= static_cast<double>(xs.size());
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ls[i] - my);
  }
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  return f;
}

inline constexpr double kRateTolerance = 0.2;

struct ConvergenceFit {
  std::vector<std::size_t> L;
  std::vector<double> distances;  // cb upper bounds ||T^L - T^inf||
  double lambda2 = 0.0;
  double rate = 0.0;              // fitted log-slope per unit L
  double expected_rate = 0.0;     // log|lambda2|
  double prefactor = 0.0;         // exp(intercept)
  double envelope = 0.0;          // max_L distance / |lambda2|^L
  bool exact = false;             // all distances vanish
  bool rate_ok = false;

  double bound(std::size_t l) const { return envelope * std::pow(lambda2, static_cast<double>(l)); }
};

inline ConvergenceFit convergence_fit(const CanonicalForm& cf, const std::vector<std::size_t>& L_range) {
  require_primitive(cf, "convergence_fit");
  if (L_range.size() < 3) throw Error("convergence_fit: at least 3 sample points are required");
  const auto D = static_cast<Eigen::Index>(cf.tensors.D);
  QuantumChannel T = cf.channel();
  Matrix Jinf = choi(limit_kraus(cf));
  ConvergenceFit f;
  f.L = L_range;
  f.lambda2 = cf.spectrum.lambda2;
  std::vector<double> xs;
  for (auto l : L_range) {
    Matrix J = choi_from_transfer(matrix_power(T.transfer(), l), D);
    f.distances.push_back(cb_bound_from_choi(J, Jinf, static_cast<std::size_t>(D)).upper);
    xs.push_back(static_cast<double>(l));
  }
  double mx = *std::max_element(f.distances.begin(), f.distances.end());
  f.exact = mx < 1e-13;
  if (f.exact) {
    f.rate = -std::numeric_limits<double>::infinity();
    f.rate_ok = f.lambda2 < 1e-12;
    return f;
  }
  LogFit lf = fit_log_linear(xs, f.distances, 1e-13);
  f.rate = lf.slope;
  f.prefactor = std::exp(lf.intercept);
  f.expected_rate = f.lambda2 > 0 ? std::log(f.lambda2) : -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < L_range.size(); ++i)
    f.envelope = std::max(f.envelope, f.distances[i] / std::pow(f.lambda2, xs[i]));
  f.rate_ok = lf.points >= 3 && std::abs(f.rate - f.expected_rate) <= kRateTolerance * std::abs(f.expected_rate);
  return f;
}

// C re-estimated on sliding windows of the fit with the rate pinned to log|lambda2|.
inline std::vector<double> windowed_constants(const ConvergenceFit& f, std::size_t window) {
  std::vector<double> out;
  if (f.exact || window == 0 || window > f.L.size()) return out;
  for (std::size_t s = 0; s + window <= f.L.size(); ++s) {
    double acc = 0;
    for (std::size_t i = s; i < s + window; ++i)
      acc += std::log(f.distances[i]) - static_cast<double>(f.L[i]) * std::log(f.lambda2);
    out.push_back(std::exp(acc / static_cast<double>(window)));
  }
  return out;
}

inline void write_convergence_csv(std::ostream& os, const ConvergenceFit& f) {
  os << "L,measured_distance,bound_rhs\n";
  for (std::size_t i = 0; i < f.L.size(); ++i) os << f.L[i] << ',' << f.distances[i] << ',' << f.bound(f.L[i]) << '\n';
}

// Explicit right-hand side 16 D^4 sqrt(C) |l2|^(L/2) / (mu - 4 D^4 sqrt(C) |l2|^(L/2))^2
// scaled by `prefactor` (16 for the projector distance, 32 L for phi_b).
// Returns +inf when the denominator base is not positive.
inline double projdistance_rhs(double prefactor, std::size_t D, double C, double lambda2, std::size_t L, double mu) {
  const double D4 = std::pow(static_cast<double>(D), 4);
  const double e = D4 * std::sqrt(C) * std::pow(lambda2, static_cast<double>(L) / 2.0);
  const double base = mu - 4.0 * e;
  if (!(base > 0)) return std::numeric_limits<double>::infinity();
  return prefactor * e / (base * base);
}

struct BlockUnitary {
  std::size_t L = 0;
  Matrix W;                         // (U_E (+) 1) * U, blocked coordinates
  Matrix W_frame;                   // permuted so blocked index p*D+q sits at slot pair (p, q)
  std::vector<std::size_t> frame_index;  // blocked index -> frame index
  Alignment alignment;
  BlockedChannel blocked;
};

// Frame permutation: blocked index m < D^2 -> (m / D) * s + (m % D) with
// s = d^(L/2); the remaining indices fill the free slots in order.
inline std::vector<std::size_t> frame_permutation(std::size_t d, std::size_t D, std::size_t L) {
  const std::size_t s = ipow(d, L / 2), n = s * s;
  std::vector<std::size_t> idx(n);
  std::vector<bool> used(n, false);
  for (std::size_t m = 0; m < D * D; ++m) {
    idx[m] = (m / D) * s + (m % D);
    used[idx[m]] = true;
  }
  std::size_t next = 0;
  for (std::size_t m = D * D; m < n; ++m) {
    while (used[next]) ++next;
    idx[m] = next;
    used[next] = true;
  }
  return idx;
}

inline BlockUnitary build_block_unitary(const CanonicalForm& cf, std::size_t L) {
  const std::size_t d = cf.tensors.d, D = cf.tensors.D;
  if (L == 0 || L % 2) throw Error("build_block_unitary: L must be a positive even integer");
  const std::size_t n = checked_pow(d, L, kEnumerationCap, "build_block_unitary d^L");
  if (n < D * D) throw Error("build_block_unitary: requires min{D^2, d^L} = D^2");
  if (ipow(d, L / 2) < D) throw Error("build_block_unitary: requires d^(L/2) >= D");
  BlockUnitary bu;
  bu.L = L;
  bu.blocked = block(cf.tensors, L);
  QuantumChannel TL = bu.blocked.channel(D * D);
  QuantumChannel Tinf = limit_kraus(cf);
  bu.alignment = align_unitary(TL, Tinf);
  const auto D2 = static_cast<Eigen::Index>(D * D);
  Matrix E = Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  E.topLeftCorner(D2, D2) = bu.alignment.unitary;
  bu.W = E * bu.blocked.mixing;
  bu.frame_index = frame_permutation(d, D, L);
  bu.W_frame.resize(bu.W.rows(), bu.W.cols());
  for (std::size_t m = 0; m < n; ++m) bu.W_frame.row(static_cast<Eigen::Index>(bu.frame_index[m])) = bu.W.row(static_cast<Eigen::Index>(m));
  return bu;
}

// Orthonormal basis of the asymptotic two-block kernel 1_A (x) |phi><phi|_BC (x) 1_D
// in blocked coordinates (index m1 * d^L + m2, m = p*D + q).
inline Matrix asymptotic_kernel_basis(const RealVector& xi, std::size_t n) {
  const auto D = xi.size();
  Matrix B = Matrix::Zero(static_cast<Eigen::Index>(n * n), D * D);
  for (Eigen::Index a = 0; a < D; ++a)
    for (Eigen::Index dd = 0; dd < D; ++dd)
      for (Eigen::Index i = 0; i < D; ++i) {
        auto m1 = static_cast<std::size_t>(a * D + i), m2 = static_cast<std::size_t>(i * D + dd);
        B(static_cast<Eigen::Index>(m1 * n + m2), a * D + dd) = std::sqrt(xi(i));
      }
  return B;
}

// (W (x) W) applied to the columns of a two-block basis.
inline Matrix apply_two_block(const Matrix& W, const Matrix& B) {
  const Eigen::Index n = W.rows();
  Matrix out(B.rows(), B.cols());
  for (Eigen::Index c = 0; c < B.cols(); ++c) {
    Matrix G = unvec(B.col(c), n, n);
    out.col(c) = vec(W * G * W.transpose());
  }
  return out;
}

struct ProjDistanceSample {
  std::size_t L = 0;
  double measured = 0.0;
  double compact = 0.0;  // same quantity evaluated on the D^4-dimensional active space
  double rhs = 0.0;      // explicit bound, +inf when vacuous
  std::string method;    // "full" or "compact"
};

// ||(U_E (x) U_E) P^(L) (U_E (x) U_E)^dag - P^inf||_inf from T^L alone.
inline double compact_projector_distance(const CanonicalForm& cf, std::size_t L) {
  QuantumChannel TL = channel_power(cf.channel(), L);
  QuantumChannel Tinf = limit_kraus(cf);
  Alignment al = align_unitary(TL, Tinf);
  Matrix UU = kron(al.unitary, al.unitary);
  Matrix P = UU * rho_ee(TL).projector * UU.adjoint();
  return hermitian_norm(P - expected_asymptotic_projector(cf.xi));
}

inline ProjDistanceSample projector_distance_at(const CanonicalForm& cf, std::size_t L, double C, double mu) {
  ProjDistanceSample s;
  s.L = L;
  s.compact = compact_projector_distance(cf, L);
  const std::size_t d = cf.tensors.d;
  bool full = L % 2 == 0 && ipow(d, L) <= kEnumerationCap && ipow(d, 2 * L) <= kEnumerationCap &&
              ipow(d, L) >= cf.tensors.D * cf.tensors.D;
  if (full) {
    BlockUnitary bu = build_block_unitary(cf, L);
    Matrix G = orthonormal_range(product_matrix(cf.tensors, 2 * L));
    Matrix WG = apply_two_block(bu.W, G);
    Matrix Ginf = asymptotic_kernel_basis(cf.xi, ipow(d, L));
    s.measured = projector_distance(WG, Ginf);
    s.method = "full";
  } else {
    s.measured = s.compact;
    s.method = "compact";
  }
  s.rhs = projdistance_rhs(16.0, cf.tensors.D, C, cf.spectrum.lambda2, L, mu);
  return s;
}

}  // namespace mpsstab
