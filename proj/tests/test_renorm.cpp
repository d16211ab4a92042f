#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "mpsstab/renorm.hpp"

using namespace mpsstab;

TEST(Block, AkltTwoSites) {
  MpsTensors t = canonical_form(MpsTensors::aklt()).tensors;
  BlockedChannel b = block(t, 2);
  EXPECT_EQ(b.active, 4u);
  EXPECT_EQ(b.blocked_kraus.size(), 4u);
  EXPECT_LT(b.choi_error, 1e-10);
  EXPECT_LT(b.tail_norm, 1e-12);
  EXPECT_LT((b.mixing * b.mixing.adjoint() - Matrix::Identity(9, 9)).norm(), 1e-12);
  EXPECT_TRUE(b.channel().unital());
}

TEST(Block, TransferOfBlockedChannelIsPower) {
  for (std::uint64_t s = 0; s < 4; ++s) {
    CanonicalForm cf = canonical_form(MpsTensors::random(2, 2, s));
    for (std::size_t L : {1u, 2u, 3u, 5u}) {
      BlockedChannel b = block(cf.tensors, L);
      QuantumChannel T = cf.channel();
      Matrix EL = matrix_power(T.transfer(), L);
      EXPECT_LT((transfer_matrix(b.blocked_kraus) - EL).cwiseAbs().maxCoeff(), 1e-10);
      EXPECT_EQ(b.active, std::min<std::size_t>(4, ipow(2, L)));
    }
  }
}

TEST(Block, RowsAreMixedProducts) {
  MpsTensors t = canonical_form(MpsTensors::random(3, 2, 8)).tensors;
  BlockedChannel b = block(t, 2);
  Matrix At = product_matrix(t, 2);
  for (std::size_t m = 0; m < b.blocked_kraus.size(); ++m) {
    Matrix expect = Matrix::Zero(2, 2);
    for (Eigen::Index I = 0; I < At.rows(); ++I)
      expect += b.mixing(static_cast<Eigen::Index>(m), I) * unvec(At.row(I).transpose(), 2, 2);
    EXPECT_LT((expect - b.blocked_kraus[m]).norm(), 1e-12);
  }
}

TEST(Block, EnumerationCap) {
  EXPECT_THROW(block(MpsTensors::aklt(), 8), CapExceeded);
}

TEST(ChannelPower, MatchesTransferPower) {
  CanonicalForm cf = canonical_form(MpsTensors::random(2, 3, 3));
  const QuantumChannel T = cf.channel();
  QuantumChannel T5 = channel_power(T, 5);
  EXPECT_EQ(T5.kraus_count(), 9u);
  EXPECT_LT((T5.transfer() - matrix_power(T.transfer(), 5)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_TRUE(T5.unital());
}

TEST(LimitChannel, TraceAgainstXi) {
  CanonicalForm cf = canonical_form(MpsTensors::random(2, 3, 21, RandomEnsemble::gaussian));
  QuantumChannel Tinf = limit_kraus(cf);
  Rng rng(4);
  Matrix X = gaussian_matrix(3, 3, rng);
  Matrix Xi = cf.xi.cast<cplx>().asDiagonal();
  EXPECT_LT((Tinf.apply(X) - (Xi * X).trace() * Matrix::Identity(3, 3)).norm(), 1e-12);
  // T^n approaches the limit
  const QuantumChannel T = cf.channel();
  EXPECT_LT((matrix_power(T.transfer(), 200) - Tinf.transfer()).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(LimitChannel, AsymptoticProjector) {
  CanonicalForm cf = canonical_form(MpsTensors::random(3, 2, 6));
  LocalProjectorPair p = asymptotic_projector(cf);
  EXPECT_EQ(p.rank, 4u);
  EXPECT_NEAR(p.mu, cf.xi.minCoeff() / 2.0, 1e-12);
  EXPECT_NEAR(p.rho.trace().real(), 1.0, 1e-12);
}

TEST(ProjectorBound, RandomDensityPairs) {
  Rng rng(123);
  int applicable = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t n = 4 + trial % 5, r = 1 + trial % n;
    Matrix rho = random_density(n, r, rng);
    // nearby state of the same rank: perturb inside the image
    Matrix B = image_basis(rho);
    Matrix H = gue_matrix(r, rng);
    double eps = std::pow(10.0, -1.0 - trial % 5);
    Matrix rt = rho + eps * B * H * B.adjoint();
    HermitianEigen e = hermitian_eigen(rt);
    if (e.values.minCoeff() < -1e-12 || numerical_rank(rt) != r) continue;
    rt /= rt.trace().real();
    auto a = LocalProjectorPair::from_rho(rho), b = LocalProjectorPair::from_rho(rt);
    for (Schatten p : {Schatten::one, Schatten::two, Schatten::inf}) {
      ProjectorDistance d = projector_distance_bound(a, b, p);
      EXPECT_TRUE(d.general_holds) << trial;
      if (d.equal_rank_applicable) {
        ++applicable;
        EXPECT_TRUE(d.equal_rank_holds) << trial;
      }
    }
  }
  EXPECT_GT(applicable, 50);
}

TEST(ProjectorBound, DifferentRanksAreInapplicable) {
  Rng rng(9);
  auto a = LocalProjectorPair::from_rho(random_density(5, 2, rng));
  auto b = LocalProjectorPair::from_rho(random_density(5, 3, rng));
  ProjectorDistance d = projector_distance_bound(a, b, Schatten::inf);
  EXPECT_FALSE(d.equal_rank_applicable);
  EXPECT_FALSE(d.equal_rank_rhs.has_value());
  EXPECT_TRUE(d.general_holds);
}

TEST(Fit, LogLinearOracle) {
  std::vector<double> x{1, 2, 3, 4}, y;
  for (double v : x) y.push_back(2.5 * std::exp(-0.7 * v));
  LogFit f = fit_log_linear(x, y);
  EXPECT_NEAR(f.slope, -0.7, 1e-12);
  EXPECT_NEAR(std::exp(f.intercept), 2.5, 1e-12);
}

TEST(Convergence, AkltRate) {
  CanonicalForm cf = canonical_form(MpsTensors::aklt());
  ConvergenceFit f = convergence_fit(cf, {2, 4, 6, 8, 10});
  EXPECT_NEAR(f.lambda2, 1.0 / 3.0, 1e-10);
  EXPECT_NEAR(f.rate, std::log(1.0 / 3.0), 1e-6);
  EXPECT_TRUE(f.rate_ok);
  for (std::size_t i = 0; i < f.L.size(); ++i) EXPECT_LE(f.distances[i], f.bound(f.L[i]) * (1 + 1e-12));
  auto w = windowed_constants(f, 3);
  ASSERT_EQ(w.size(), 3u);
  for (double c : w) EXPECT_NEAR(c / w[0], 1.0, 1e-6);
  std::ostringstream os;
  write_convergence_csv(os, f);
  EXPECT_EQ(os.str().rfind("L,measured_distance,bound_rhs\n", 0), 0u);
}

TEST(Convergence, ProductStateIsExact) {
  CanonicalForm cf = canonical_form(MpsTensors({Matrix::Constant(1, 1, 0.6), Matrix::Constant(1, 1, 0.8)}));
  ConvergenceFit f = convergence_fit(cf, {1, 2, 3});
  EXPECT_TRUE(f.exact);
  EXPECT_TRUE(f.rate_ok);
  EXPECT_THROW(convergence_fit(cf, {1, 2}), Error);
}

TEST(Frame, PermutationIsBijective) {
  auto idx = frame_permutation(3, 2, 4);
  ASSERT_EQ(idx.size(), 81u);
  std::vector<std::size_t> s = idx;
  std::sort(s.begin(), s.end());
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(s[i], i);
  EXPECT_EQ(idx[3], 1u * 9 + 1);
}

TEST(BlockUnitary, FullAndCompactRoutesAgree) {
  for (std::uint64_t s = 0; s < 3; ++s) {
    CanonicalForm cf = canonical_form(MpsTensors::random(2, 2, 40 + s));
    LocalProjectorPair pinf = asymptotic_projector(cf);
    for (std::size_t L : {2u, 4u}) {
      ProjDistanceSample p = projector_distance_at(cf, L, 1.0, pinf.mu);
      EXPECT_EQ(p.method, "full");
      EXPECT_NEAR(p.measured, p.compact, 1e-8);
      BlockUnitary bu = build_block_unitary(cf, L);
      auto n = bu.W.rows();
      EXPECT_LT((bu.W * bu.W.adjoint() - Matrix::Identity(n, n)).norm(), 1e-10);
      EXPECT_LT((bu.W_frame * bu.W_frame.adjoint() - Matrix::Identity(n, n)).norm(), 1e-10);
    }
  }
}

TEST(BlockUnitary, AkltDistanceDecays) {
  CanonicalForm cf = canonical_form(MpsTensors::aklt());
  LocalProjectorPair pinf = asymptotic_projector(cf);
  double prev = 1e9;
  for (std::size_t L : {2u, 4u, 6u, 8u}) {
    ProjDistanceSample p = projector_distance_at(cf, L, 1.0, pinf.mu);
    EXPECT_LT(p.measured, prev);
    prev = p.measured;
    EXPECT_EQ(p.method, L <= 2 ? "full" : "compact");
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(BlockUnitary, RejectsOddOrShortBlocks) {
  CanonicalForm cf = canonical_form(MpsTensors::random(2, 3, 1));
  EXPECT_THROW(build_block_unitary(cf, 3), Error);
  EXPECT_THROW(build_block_unitary(cf, 2), Error);
}

TEST(Bound, VacuousIsInfinite) {
  EXPECT_TRUE(std::isinf(projdistance_rhs(16, 2, 1.0, 0.9, 2, 0.1)));
  double v = projdistance_rhs(16, 2, 1.0, 0.1, 40, 0.25);
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_GT(v, 0);
}
