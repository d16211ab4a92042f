// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <cstdio>
#include <iostream>
#include <sstream>

#include "mpsstab/stability.hpp"

using namespace mpsstab;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s %d %s: %s\n", ok ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

template <class F>
void criterion(int id, const std::string& name, F&& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(id, name, false, std::string("exception: ") + e.what());
  }
}

std::string fmt(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

// Kraus operators of the Stinespring isometry V + eps G, re-orthonormalized.
QuantumChannel nearby_channel(const QuantumChannel& T, double eps, Rng& rng) {
  Matrix V = stinespring(T);
  Matrix Vp = V + eps * gaussian_matrix(static_cast<std::size_t>(V.rows()), static_cast<std::size_t>(V.cols()), rng);
  Eigen::HouseholderQR<Matrix> qr(Vp);
  Matrix Q = qr.householderQ() * Matrix::Identity(V.rows(), V.cols());
  const Eigen::Index D = V.cols(), d = V.rows() / D;
  std::vector<Matrix> K(static_cast<std::size_t>(d), Matrix(D, D));
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index a = 0; a < D; ++a) K[static_cast<std::size_t>(i)].row(a) = Q.row(a * d + i);
  for (auto& k : K) k = k.adjoint().eval();
  return QuantumChannel(K);
}

void blocking() {
  int bad_choi = 0, bad_count = 0;
  double worst = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    MpsTensors t = MpsTensors::random(2, 2, 500 + s);
    for (std::size_t L : {2, 3, 4}) {
      BlockedChannel b = block(t, L);
      worst = std::max(worst, b.choi_error);
      if (!(b.choi_error <= 1e-10)) ++bad_choi;
      if (b.blocked_kraus.size() != std::min<std::size_t>(4, ipow(2, L))) ++bad_count;
    }
  }
  report(1, "blocking", bad_choi == 0 && bad_count == 0,
         "150 blocks, max Choi error " + fmt(worst) + ", wrong operator counts " + std::to_string(bad_count));
}

void rho_alignment() {
  Rng rng(2024);
  std::uniform_real_distribution<double> logeps(-6, 0);
  int bad = 0;
  double worst = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    QuantumChannel T = MpsTensors::random(2, 2, 700 + s).channel();
    // half close pairs, half independent draws
    QuantumChannel Tt = s % 2 ? nearby_channel(T, std::pow(10.0, logeps(rng)), rng)
                              : MpsTensors::random(2, 2, 900 + s).channel();
    RhoAlignment r = align_rho_distance(T, Tt);
    worst = std::max(worst, r.distance / r.bound);
    if (!r.holds) ++bad;
  }
  report(2, "aligned rho distance", bad == 0,
         "100 pairs, violations " + std::to_string(bad) + ", max distance/bound " + fmt(worst));
}

void projector_bounds() {
  Rng rng(77);
  int bad3 = 0, bad3b = 0, applicable = 0, inapplicable = 0, misrouted = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 4 + trial % 5, r = 1 + trial % (n - 1);
    Matrix G = gaussian_matrix(n, r, rng);
    const double eps = std::pow(10.0, -3.0 + 3.0 * (trial % 7) / 6.0);
    Matrix Gt = G + eps * gaussian_matrix(n, r, rng);
    Matrix rho = G * G.adjoint(), rt = Gt * Gt.adjoint();
    rho /= rho.trace().real();
    rt /= rt.trace().real();
    auto a = LocalProjectorPair::from_rho(rho), b = LocalProjectorPair::from_rho(rt);
    if (a.rank != b.rank) continue;
    for (Schatten p : {Schatten::one, Schatten::two, Schatten::inf}) {
      ProjectorDistance d = projector_distance_bound(a, b, p);
      if (!d.general_holds) ++bad3;
      if (d.equal_rank_applicable) {
        ++applicable;
        if (!d.equal_rank_holds) ++bad3b;
      } else {
        ++inapplicable;
        const bool violated = d.rho_distance_inf >= b.mu;
        if (!violated || d.equal_rank_holds || d.equal_rank_rhs || d.equal_rank_note.empty()) ++misrouted;
      }
    }
  }
  report(3, "projector distance bounds", bad3 == 0 && bad3b == 0 && misrouted == 0 && applicable > 0,
         "general violations " + std::to_string(bad3) + ", equal-rank violations " + std::to_string(bad3b) + " of " +
             std::to_string(applicable) + " applicable, " + std::to_string(inapplicable) +
             " routed inapplicable, misrouted " + std::to_string(misrouted));
}

void aklt_convergence() {
  CanonicalForm cf = canonical_form(MpsTensors::aklt());
  const auto& ev = cf.spectrum.eigenvalues;
  double spec_err = std::abs(ev.at(0) - 1.0);
  for (int i = 1; i < 4; ++i) spec_err = std::max(spec_err, std::abs(ev.at(i) + 1.0 / 3.0));
  ConvergenceFit f = convergence_fit(cf, {2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  const double target = std::log(1.0 / 3.0);
  const bool rate_ok = std::abs(f.rate - target) <= 0.2 * std::abs(target);
  // 1 (x) |phi><phi| (x) 1 with phi = (|11> + |22>)/sqrt2, built independently
  Vector phi = Vector::Zero(4);
  phi(0) = phi(3) = 1.0 / std::sqrt(2.0);
  Matrix I2 = Matrix::Identity(2, 2);
  Matrix expect = kron(kron(I2, phi * phi.adjoint()), I2);
  LocalProjectorPair pinf = rho_ee(limit_kraus(cf));
  const double p_err = (pinf.projector - expect).cwiseAbs().maxCoeff();
  const bool mu_ok = std::abs(pinf.mu - 0.5) <= 1e-10;
  report(4, "AKLT convergence", spec_err <= 1e-10 && rate_ok && p_err <= 1e-10 && mu_ok,
         "spectrum error " + fmt(spec_err) + ", rate " + fmt(f.rate) + " vs log(1/3) " + fmt(target) +
             (rate_ok ? " ok" : " off") + ", P_inf error " + fmt(p_err) + ", mu " + fmt(pinf.mu) +
             (mu_ok ? " = 1/2" : " != 1/2"));
}

void projector_distance_decay() {
  std::string detail;
  bool ok = true;
  for (std::uint64_t seed : {11, 12, 13, 14, 15}) {
    CanonicalForm cf = canonical_form(MpsTensors::random(2, 2, seed));
    ConvergenceFit f = convergence_fit(cf, {2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
    const double mu = asymptotic_projector(cf).mu;
    std::vector<double> xs, ys;
    bool rhs_ok = true;
    for (std::size_t L : {2, 4, 6}) {
      ProjDistanceSample s = projector_distance_at(cf, L, f.envelope, mu);
      xs.push_back(static_cast<double>(L));
      ys.push_back(s.measured);
      rhs_ok = rhs_ok && s.measured <= s.rhs;
    }
    LogFit lf = fit_log_linear(xs, ys, 1e-14);
    const double target = 0.5 * std::log(cf.spectrum.lambda2);
    const bool rate_ok = std::abs(lf.slope - target) <= 0.2 * std::abs(target);
    ok = ok && rate_ok && rhs_ok;
    detail += "seed " + std::to_string(seed) + " rate " + fmt(lf.slope) + " vs " + fmt(target) +
              (rhs_ok ? " rhs ok" : " rhs violated") + "; ";
  }
  report(5, "projector distance decay", ok, detail);
}

Decomposition random_decomposition() {
  CanonicalForm cf = canonical_form(MpsTensors::random(2, 2, 11));
  return decompose(cf, 4, 3);
}

void decomposition(const Decomposition& dec) {
  std::string detail;
  for (auto* c : dec.checks()) detail += c->name + " [" + fmt(c->value) + " vs " + fmt(c->bound) + "]; ";
  report(6, "decomposition", dec.all_ok(), detail);
}

void parent_facts() {
  CanonicalForm cf = canonical_form(MpsTensors::aklt());
  Matrix h2 = interaction_term(cf.tensors, 2);
  const std::size_t rank = numerical_rank(h2);
  RingHamiltonian ring = assemble_ring(h2, 3, 6);
  Vector psi = expand_state(cf.tensors, 6);
  const double annihilation = ring.H.apply(psi).norm() / psi.norm();
  GapOptions dense;
  dense.mode = SpectrumMode::dense;
  GapReport g6 = global_gap(ring, dense);
  bool ok = rank == 5 && annihilation <= 1e-9 && g6.degeneracy == 1 && g6.gap > 0 && std::abs(g6.ground_energy) <= 1e-9;
  std::string detail = "AKLT rank " + std::to_string(rank) + ", |H psi| " + fmt(annihilation) + ", N=6 gap " +
                       fmt(g6.gap) + " degeneracy " + std::to_string(g6.degeneracy) + "; random P=3:";
  CanonicalForm rc = canonical_form(MpsTensors::random(2, 2, 11));
  GapOptions sparse;
  sparse.mode = SpectrumMode::sparse;
  for (std::size_t N : {8, 10, 12}) {
    GapReport g = global_gap(parent_hamiltonian(rc.tensors, 3, N), sparse);
    ok = ok && g.degeneracy == 1 && g.gap > 0 && std::abs(g.ground_energy) <= 1e-8;
    detail += " N=" + std::to_string(N) + " gap " + fmt(g.gap) + " deg " + std::to_string(g.degeneracy);
  }
  report(7, "parent Hamiltonian facts", ok, detail);
}

void sandwich() {
  CanonicalForm cf = canonical_form(MpsTensors::aklt());
  SandwichResult s = two_site_sandwich(interaction_term(cf.tensors, 2), cf.tensors, 3);
  report(8, "two-site sandwich", s.kernel_distance <= 1e-8 && s.c1 > 0 && s.c1 <= s.c2,
         "kernel distance " + fmt(s.kernel_distance) + ", c1 " + fmt(s.c1) + ", c2 " + fmt(s.c2));
}

void sweep() {
  SweepConfig c;
  c.tensors = canonical_form(MpsTensors::random(2, 2, 11)).tensors;
  c.P = 3;
  c.N_list = {6, 8, 10, 12};
  c.beta_factors = {0.0, 0.01, 0.02, 0.03, 0.04, 0.05};
  c.seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  StabilityReport r = perturb_sweep(c);
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& cv : r.curves)
    for (const auto& p : cv.points)
      if (p.error.empty()) worst = std::min(worst, p.gap.gap / r.gamma);
  std::string detail = "gamma " + fmt(r.gamma) + ", min gap/gamma " + fmt(worst) + ", " +
                       std::to_string(r.curves.size()) + " curves";
  for (const auto& f : r.failures) detail += "; " + f;
  report(9, "perturbation sweep", r.stable && r.continuous, detail);
}

void path(const Decomposition& dec) {
  PhasePath p = phase_path(dec, 20);
  report(10, "interpolation path", p.verdict && !p.withheld,
         "min gap " + fmt(p.min_gap) + (p.withheld ? " (withheld)" : "") + ", endpoint difference " +
             fmt(p.endpoint_difference));
}

}  // namespace

int main() {
  criterion(1, "blocking", blocking);
  criterion(2, "aligned rho distance", rho_alignment);
  criterion(3, "projector distance bounds", projector_bounds);
  criterion(4, "AKLT convergence", aklt_convergence);
  criterion(5, "projector distance decay", projector_distance_decay);
  std::optional<Decomposition> dec;
  criterion(6, "decomposition", [&] {
    dec = random_decomposition();
    decomposition(*dec);
  });
  criterion(7, "parent Hamiltonian facts", parent_facts);
  criterion(8, "two-site sandwich", sandwich);
  criterion(9, "perturbation sweep", sweep);
  criterion(10, "interpolation path", [&] {
    if (!dec) throw Error("no decomposition available");
    path(*dec);
  });
  std::printf("%d of 10 criteria failed\n", failures);
  return failures ? 1 : 0;
}
