#include <gtest/gtest.h>

#include "mpsstab/mps.hpp"

using namespace mpsstab;

namespace {

Matrix pauli_x() {
  Matrix x = Matrix::Zero(2, 2);
  x(0, 1) = x(1, 0) = 1;
  return x;
}

QuantumChannel random_unital(std::size_t d, std::size_t D, std::uint64_t seed) {
  return MpsTensors::random(d, D, seed).channel();
}

// Kraus set mixed by a unitary: A~_j = sum_i u_ji A_i.
std::vector<Matrix> mix(const std::vector<Matrix>& K, const Matrix& u) {
  std::vector<Matrix> out;
  for (Eigen::Index j = 0; j < u.rows(); ++j) {
    Matrix s = Matrix::Zero(K[0].rows(), K[0].cols());
    for (Eigen::Index i = 0; i < u.cols(); ++i) s += u(j, i) * K[static_cast<std::size_t>(i)];
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST(Channel, ApplyAndDual) {
  QuantumChannel T = random_unital(2, 3, 1);
  EXPECT_TRUE(T.unital());
  EXPECT_LT((T.apply(Matrix::Identity(3, 3)) - Matrix::Identity(3, 3)).norm(), 1e-12);
  QuantumChannel tp(std::vector<Matrix>{T.kraus()[0].adjoint(), T.kraus()[1].adjoint()});
  EXPECT_TRUE(tp.trace_preserving());
  EXPECT_LT((tp.dual_apply(Matrix::Identity(3, 3)) - Matrix::Identity(3, 3)).norm(), 1e-12);
  Rng rng(2);
  for (int t = 0; t < 10; ++t) {
    Matrix X = gaussian_matrix(3, 3, rng), Y = gaussian_matrix(3, 3, rng);
    cplx lhs = (X.adjoint() * T.apply(Y)).trace();
    cplx rhs = (T.dual_apply(X).adjoint() * Y).trace();
    EXPECT_LT(std::abs(lhs - rhs), 1e-12);
  }
  EXPECT_THROW(T.apply(Matrix::Identity(2, 2)), Error);
}

TEST(Channel, ChoiExamples) {
  QuantumChannel id({Matrix::Identity(2, 2)});
  Vector w = Vector::Zero(4);
  w(0) = w(3) = 1;
  EXPECT_LT((choi(id) - w * w.adjoint()).norm(), 1e-14);
  RealVector xi(2);
  xi << 0.7, 0.3;
  std::vector<Matrix> K;
  for (int p = 0; p < 2; ++p)
    for (int q = 0; q < 2; ++q) {
      Matrix k = Matrix::Zero(2, 2);
      k(p, q) = std::sqrt(xi(p));
      K.push_back(k);
    }
  // X -> Tr(X) Xi
  QuantumChannel dep(K);
  EXPECT_LT((dep.apply(Matrix::Identity(2, 2)) - 2.0 * Matrix(xi.cast<cplx>().asDiagonal())).norm(), 1e-14);
  EXPECT_LT((choi(dep) - kron(Matrix::Identity(2, 2), xi.cast<cplx>().asDiagonal())).norm(), 1e-14);
}

TEST(Channel, ChoiInvariantUnderIsometricMixing) {
  Rng rng(4);
  QuantumChannel T = random_unital(3, 2, 5);
  Matrix u = haar_isometry(5, 3, rng);  // 5 x 3 isometry: more Kraus operators
  QuantumChannel Tm(mix(T.kraus(), u));
  EXPECT_LT((choi(T) - choi(Tm)).norm(), 1e-12);
  HermitianEigen e = hermitian_eigen(choi(T));
  EXPECT_GT(e.values.minCoeff(), -1e-10);
}

TEST(Channel, ChoiFromTransferAgrees) {
  QuantumChannel T = random_unital(2, 3, 8);
  EXPECT_LT((choi(T) - choi_from_transfer(T.transfer(), 3)).norm(), 1e-13);
}

TEST(Channel, SpectrumExamples) {
  Rng rng(6);
  Matrix U = haar_unitary(3, rng);
  QuantumChannel conj({U});
  for (auto z : conj.spectrum().eigenvalues) EXPECT_NEAR(std::abs(z), 1.0, 1e-12);
  EXPECT_FALSE(conj.spectrum().peripheral_trivial);

  CanonicalForm cf = canonical_form(MpsTensors::aklt());
  const auto& ev = cf.spectrum.eigenvalues;
  ASSERT_EQ(ev.size(), 4u);
  EXPECT_LT(std::abs(ev[0] - 1.0), 1e-10);
  for (int i = 1; i < 4; ++i) EXPECT_LT(std::abs(ev[static_cast<std::size_t>(i)] + 1.0 / 3.0), 1e-10);
  EXPECT_NEAR(cf.lambda2(), 1.0 / 3.0, 1e-10);
  // oracle: the 4 x 4 transfer matrix of the canonical AKLT tensors by hand
  Matrix E = Matrix::Zero(4, 4);
  E(0, 0) = E(3, 3) = 1.0 / 3.0;
  E(0, 3) = E(3, 0) = 2.0 / 3.0;
  E(1, 1) = E(2, 2) = -1.0 / 3.0;
  EXPECT_LT((cf.channel().transfer() - E).norm(), 1e-10);

  std::vector<Matrix> K;
  for (int p = 0; p < 2; ++p)
    for (int q = 0; q < 2; ++q) {
      Matrix k = Matrix::Zero(2, 2);
      k(p, q) = std::sqrt(0.5);
      K.push_back(k);
    }
  QuantumChannel dep(K);
  EXPECT_NEAR(dep.spectrum().lambda2, 0.0, 1e-12);
  EXPECT_TRUE(dep.spectrum().peripheral_trivial);
}

TEST(Channel, SpectrumInvariantUnderMixing) {
  Rng rng(9);
  QuantumChannel T = canonical_form(MpsTensors::random(2, 3, 12)).channel();
  QuantumChannel Tm(mix(T.kraus(), haar_unitary(2, rng)));
  EXPECT_NEAR(std::abs(T.spectrum().eigenvalues[0] - 1.0), 0.0, 1e-10);
  for (std::size_t i = 0; i < 9; ++i)
    EXPECT_LT(std::abs(T.spectrum().eigenvalues[i] - Tm.spectrum().eigenvalues[i]), 1e-9);
  for (auto z : T.spectrum().eigenvalues) EXPECT_LE(std::abs(z), 1.0 + 1e-10);
}

TEST(Channel, CbBoundSandwich) {
  QuantumChannel id({Matrix::Identity(2, 2)});
  CbDistanceBound z = cb_distance_bound(id, id);
  EXPECT_EQ(z.lower, 0.0);
  EXPECT_EQ(z.upper, 0.0);
  QuantumChannel sx({pauli_x()});
  CbDistanceBound b = cb_distance_bound(id, sx);
  // oracle: Choi difference |w><w| - |x><x| with orthogonal vectors of norm^2 2 has trace norm 4
  EXPECT_NEAR(b.upper, 4.0, 1e-12);
  EXPECT_NEAR(b.lower, b.upper / 2.0, 1e-14);
  for (std::uint64_t s = 0; s < 20; ++s) {
    CbDistanceBound r = cb_distance_bound(random_unital(2, 2, s), random_unital(2, 2, s + 100));
    EXPECT_LE(r.lower, r.upper);
    EXPECT_GE(r.lower, 0.0);
  }
}

TEST(Channel, AkltPowerConvergence) {
  CanonicalForm cf = canonical_form(MpsTensors::aklt());
  const QuantumChannel T = cf.channel();
  const Matrix& E = T.transfer();
  Matrix Jinf = kron(Matrix::Identity(2, 2), 0.5 * Matrix::Identity(2, 2));
  std::vector<double> logs;
  Matrix P = E;
  for (int L = 2; L <= 8; ++L) {
    P = (P * E).eval();
    Matrix J = choi_from_transfer(P, 2);
    logs.push_back(std::log(cb_bound_from_choi(J, Jinf, 2).upper));
  }
  for (std::size_t i = 1; i < logs.size(); ++i) EXPECT_NEAR(logs[i] - logs[i - 1], std::log(1.0 / 3.0), 1e-6);
}

TEST(Stinespring, IsometryAndDilation) {
  QuantumChannel id({Matrix::Identity(3, 3)});
  EXPECT_LT((stinespring(id) - Matrix::Identity(3, 3)).norm(), 1e-14);
  QuantumChannel T = random_unital(3, 2, 21);
  Matrix V = stinespring(T);
  EXPECT_LT((V.adjoint() * V - Matrix::Identity(2, 2)).norm(), 1e-10);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      Matrix E = Matrix::Zero(2, 2);
      E(a, b) = 1;
      Matrix lhs = V.adjoint() * kron(E, Matrix::Identity(3, 3)) * V;
      EXPECT_LT((lhs - T.apply(E)).norm(), 1e-12);
    }
  QuantumChannel nonunital({Matrix::Identity(2, 2), Matrix::Identity(2, 2)});
  EXPECT_THROW(stinespring(nonunital), Error);
}

TEST(Align, IdenticalAndMixedKraus) {
  QuantumChannel T = random_unital(3, 2, 31);
  Alignment a = align_unitary(T, T);
  EXPECT_LT(a.achieved_distance, 1e-10);
  Rng rng(32);
  Matrix u = haar_unitary(3, rng);
  QuantumChannel Tm(mix(T.kraus(), u));
  Alignment b = align_unitary(T, Tm);
  EXPECT_LT(b.achieved_distance, 1e-10);
  // recovered up to a global phase
  cplx ph = (b.unitary.adjoint() * u).trace() / 3.0;
  EXPECT_NEAR(std::abs(ph), 1.0, 1e-10);
  EXPECT_LT((b.unitary * ph - u).norm(), 1e-9);
  EXPECT_TRUE(b.within_bound);
}

TEST(Align, OptimalityAgainstRandomUnitaries) {
  QuantumChannel T = random_unital(2, 2, 41), Tt = random_unital(2, 2, 42);
  Alignment a = align_unitary(T, Tt);
  Matrix V = stinespring(T), Vt = stinespring(Tt);
  auto overlap = [&](const Matrix& UE) {
    Matrix U = UE.adjoint();
    return (kron(Matrix::Identity(2, 2), Matrix(U.transpose())) * V * Vt.adjoint()).trace().real();
  };
  double best = overlap(a.unitary);
  Rng rng(43);
  for (int t = 0; t < 200; ++t) EXPECT_LE(overlap(haar_unitary(2, rng)), best + 1e-12);
}

TEST(RhoEE, TraceOneAndPsd) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    QuantumChannel T = canonical_form(MpsTensors::random(2, 2, s)).channel();
    LocalProjectorPair p = rho_ee(T);
    // direct summation of the trace formula
    double tr = 0;
    for (const auto& a : T.kraus())
      for (const auto& b : T.kraus()) tr += (a * b * b.adjoint() * a.adjoint()).trace().real();
    EXPECT_NEAR(tr / 2.0, 1.0, 1e-10);
    EXPECT_NEAR(p.rho.trace().real(), 1.0, 1e-10);
    EXPECT_GT(hermitian_eigen(p.rho).values.minCoeff(), -1e-12);
    EXPECT_LT((p.projector - p.rho * pseudo_inverse(p.rho)).norm(), 1e-10);
    EXPECT_EQ(p.rank, static_cast<std::size_t>(std::lround(p.projector.trace().real())));
  }
}

TEST(RhoEE, ClassicalChannelStructure) {
  RealVector xi(2);
  xi << 0.8, 0.2;
  std::vector<Matrix> K;
  for (int p = 0; p < 2; ++p)
    for (int q = 0; q < 2; ++q) {
      Matrix k = Matrix::Zero(2, 2);
      k(p, q) = std::sqrt(xi(q));
      K.push_back(k);
    }
  LocalProjectorPair p = rho_ee(QuantumChannel(K));
  // symbolic value: (1/D) 1_A (x) |phi><phi|_BC (x) Xi_D on the index layout (a, b, c, d)
  Vector phi = Vector::Zero(4);
  phi(0) = std::sqrt(xi(0));
  phi(3) = std::sqrt(xi(1));
  Matrix expect = kron(kron(Matrix::Identity(2, 2), phi * phi.adjoint()), xi.cast<cplx>().asDiagonal()) / 2.0;
  EXPECT_LT((p.rho - expect).norm(), 1e-12);
  EXPECT_EQ(p.rank, 4u);
  EXPECT_NEAR(p.mu, 0.2 / 2.0, 1e-12);
}

TEST(RhoAlign, IdenticalChannels) {
  QuantumChannel T = random_unital(2, 2, 3);
  RhoAlignment r = align_rho_distance(T, T);
  EXPECT_LT(r.distance, 1e-10);
  EXPECT_TRUE(r.holds);
}

TEST(RhoAlign, InequalityOnRandomPairs) {
  Rng rng(55);
  std::uniform_real_distribution<double> logeps(-6, 0);
  for (int t = 0; t < 100; ++t) {
    QuantumChannel T = random_unital(2, 2, 1000 + static_cast<std::uint64_t>(t));
    Matrix V = stinespring(T);
    Matrix Vp = V + std::pow(10.0, logeps(rng)) * gaussian_matrix(4, 2, rng);
    Eigen::HouseholderQR<Matrix> qr(Vp);
    Matrix Q = qr.householderQ() * Matrix::Identity(4, 2);
    std::vector<Matrix> K(2, Matrix(2, 2));
    for (int i = 0; i < 2; ++i)
      for (int a = 0; a < 2; ++a) K[static_cast<std::size_t>(i)].row(a) = Q.row(a * 2 + i);
    for (auto& k : K) k = k.adjoint().eval();
    RhoAlignment r = align_rho_distance(T, QuantumChannel(K));
    EXPECT_TRUE(r.holds) << r.distance << " > " << r.bound;
    EXPECT_TRUE(r.alignment.within_bound);
  }
}
