#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <locale>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "mpsstab/stability.hpp"

namespace mpsstab::cli {

using json = nlohmann::ordered_json;

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct ExperimentConfig {
  std::string model = "random";  // aklt | random | random-gaussian | matrix-units | path to a tensor file
  std::size_t d = 2;
  std::size_t D = 2;
  std::uint64_t seed = 11;
  std::size_t L = 4;              // block length for decompose / phase-path
  std::size_t m = 3;              // blocks on the ring
  std::size_t P = 0;              // interaction range, 0 = automatic
  std::vector<std::size_t> L_list{2, 3, 4};
  std::vector<std::size_t> L_range{2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
  std::vector<std::size_t> N_list{6, 8, 10, 12};
  std::vector<double> beta_factors{0.0, 0.01, 0.02, 0.03, 0.04, 0.05};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::size_t steps = 20;
  std::string out_dir = "results";
  std::size_t workers = 1;
};

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> s{"g1",        "canon",     "block", "spectrum", "converge",
                                          "parent-gap", "decompose", "sweep", "aklt",     "phase-path"};
  return s;
}

namespace detail {

template <class T>
void read_key(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

inline json num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

inline json cnum(cplx z) { return json::array({num(z.real()), num(z.imag())}); }

inline json matrix_json(const Matrix& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) r.push_back(cnum(M(i, j)));
    rows.push_back(r);
  }
  return rows;
}

inline json real_vector_json(const RealVector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v(i)));
  return a;
}

inline json check_json(const BoundCheck& c) {
  return {{"name", c.name}, {"value", num(c.value)}, {"bound", num(c.bound)}, {"holds", c.holds}};
}

}  // namespace detail

inline ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::vector<std::string> known{"model", "d",       "D",     "seed",    "L",       "m",
                                              "P",     "L_list",  "L_range", "N_list", "beta_factors",
                                              "seeds", "steps",   "out_dir", "workers"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw ConfigError("unknown config key '" + it.key() + "'");
  ExperimentConfig c;
  detail::read_key(j, "model", c.model);
  detail::read_key(j, "d", c.d);
  detail::read_key(j, "D", c.D);
  detail::read_key(j, "seed", c.seed);
  detail::read_key(j, "L", c.L);
  detail::read_key(j, "m", c.m);
  detail::read_key(j, "P", c.P);
  detail::read_key(j, "L_list", c.L_list);
  detail::read_key(j, "L_range", c.L_range);
  detail::read_key(j, "N_list", c.N_list);
  detail::read_key(j, "beta_factors", c.beta_factors);
  detail::read_key(j, "seeds", c.seeds);
  detail::read_key(j, "steps", c.steps);
  detail::read_key(j, "out_dir", c.out_dir);
  detail::read_key(j, "workers", c.workers);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const std::exception& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
  return config_from_json(j);
}

// MPSSTAB_OUTPUT_DIR and MPSSTAB_WORKERS override the config file.
inline void apply_environment(ExperimentConfig& c) {
  if (const char* o = std::getenv("MPSSTAB_OUTPUT_DIR"); o && *o) c.out_dir = o;
  if (const char* w = std::getenv("MPSSTAB_WORKERS"); w && *w) {
    char* end = nullptr;
    long v = std::strtol(w, &end, 10);
    if (*end || v < 1) throw ConfigError("MPSSTAB_WORKERS must be a positive integer");
    c.workers = static_cast<std::size_t>(v);
  }
}

inline json config_json(const ExperimentConfig& c) {
  return {{"model", c.model},     {"d", c.d},           {"D", c.D},
          {"seed", c.seed},       {"L", c.L},           {"m", c.m},
          {"P", c.P},             {"L_list", c.L_list}, {"L_range", c.L_range},
          {"N_list", c.N_list},   {"beta_factors", c.beta_factors},
          {"seeds", c.seeds},     {"steps", c.steps}};
}

// Tensor file: {"A": [[[ [re, im], ... ], ...], ...]}, one D x D matrix per physical index.
inline MpsTensors load_tensors(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open tensor file " + path);
  json j;
  try {
    j = json::parse(in);
    std::vector<Matrix> A;
    for (const auto& mat : j.at("A")) {
      const auto rows = static_cast<Eigen::Index>(mat.size());
      Matrix M(rows, rows);
      for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = mat.at(static_cast<std::size_t>(r));
        if (static_cast<Eigen::Index>(row.size()) != rows) throw ConfigError("tensor file: matrices must be square");
        for (Eigen::Index c = 0; c < rows; ++c) {
          const auto& z = row.at(static_cast<std::size_t>(c));
          M(r, c) = z.is_array() ? cplx(z.at(0).get<double>(), z.at(1).get<double>()) : cplx(z.get<double>(), 0.0);
        }
      }
      A.push_back(M);
    }
    return MpsTensors(A);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("tensor file " + path + ": " + e.what());
  }
}

inline MpsTensors matrix_unit_tensors(std::size_t D) {
  std::vector<Matrix> A;
  for (std::size_t p = 0; p < D; ++p)
    for (std::size_t q = 0; q < D; ++q) {
      Matrix a = Matrix::Zero(static_cast<Eigen::Index>(D), static_cast<Eigen::Index>(D));
      a(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q)) = 1.0 / std::sqrt(static_cast<double>(D));
      A.push_back(a);
    }
  return MpsTensors(A);
}

inline MpsTensors model_tensors(const ExperimentConfig& c) {
  if (c.model == "aklt") return MpsTensors::aklt();
  if (c.model == "random") return MpsTensors::random(c.d, c.D, c.seed, RandomEnsemble::isometry);
  if (c.model == "random-gaussian") return MpsTensors::random(c.d, c.D, c.seed, RandomEnsemble::gaussian);
  if (c.model == "matrix-units") return matrix_unit_tensors(c.D);
  return load_tensors(c.model);
}

// Caps and list sanity, checked before anything is computed.
inline void validate(const std::string& sub, const ExperimentConfig& c) {
  if (std::find(subcommands().begin(), subcommands().end(), sub) == subcommands().end())
    throw ConfigError("unknown subcommand '" + sub + "'");
  static const std::vector<std::string> presets{"aklt", "random", "random-gaussian", "matrix-units"};
  const bool preset = std::find(presets.begin(), presets.end(), c.model) != presets.end();
  if (!preset && !std::filesystem::exists(c.model)) throw ConfigError("model '" + c.model + "' is neither a preset nor a file");
  if (c.d == 0 || c.D == 0) throw ConfigError("d and D must be positive");
  if (c.workers == 0) throw ConfigError("workers must be positive");
  const std::size_t d = c.model == "aklt" ? 3 : c.model == "matrix-units" ? c.D * c.D : c.d;
  auto fits = [](std::size_t base, std::size_t e, std::size_t cap) {
    std::size_t v = 1;
    for (std::size_t i = 0; i < e; ++i)
      if ((v *= base) > cap) return false;
    return true;
  };
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  if (sub == "block") {
    need(!c.L_list.empty(), "L_list must not be empty");
    for (auto L : c.L_list) {
      need(L >= 1, "L_list entries must be positive");
      need(fits(d, L, kEnumerationCap), "d^L exceeds the enumeration cap 4096");
    }
  }
  if (sub == "converge") {
    need(c.L_range.size() >= 3, "L_range needs at least 3 points");
    for (auto L : c.L_range) need(L >= 1, "L_range entries must be positive");
  }
  if (sub == "parent-gap" || sub == "sweep") {
    need(!c.N_list.empty(), "N_list must not be empty");
    for (auto N : c.N_list) need(fits(d, N, kStateCap), "d^N exceeds the state cap 2^20");
  }
  if (sub == "sweep") {
    need(!c.seeds.empty(), "seed list must not be empty");
    need(!c.beta_factors.empty(), "beta_factors must not be empty");
    for (double b : c.beta_factors) need(b >= 0, "beta_factors must be non-negative");
  }
  if (sub == "decompose" || sub == "phase-path") {
    need(c.L >= 2 && c.L % 2 == 0, "L must be even and at least 2");
    need(c.m >= 3, "m must be at least 3");
    need(fits(d, c.m * c.L, kStateCap), "d^(mL) exceeds the state cap 2^20");
    need(fits(d, 2 * c.L, kDenseLimit), "d^(2L) exceeds the dense cap 4096");
  }
  if (sub == "phase-path") need(c.steps >= 1, "steps must be at least 1");
}

struct RunResult {
  json summary;
  std::map<std::string, std::string> tables;  // file name -> CSV text
  std::vector<std::string> failures;          // failing inequalities, empty on success
  bool pass() const { return failures.empty(); }
};

namespace detail {

inline std::ostringstream csv_stream() {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(12);
  return os;
}

inline void verdict(RunResult& r, bool ok, const std::string& what) {
  if (!ok) r.failures.push_back(what);
}

inline std::size_t interaction_range(const ExperimentConfig& c, const CanonicalForm& cf) {
  return c.P ? c.P : cf.L0 + 1;
}

template <class F>
void parallel_for(std::size_t n, std::size_t workers, F&& f) {
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next++) < n;) f(i);
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < std::min(workers, n); ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
}

inline json decomposition_json(const Decomposition& dec) {
  json checks = json::array();
  for (auto* c : dec.checks()) checks.push_back(check_json(*c));
  return {{"L", dec.L},
          {"m", dec.m},
          {"P", dec.P},
          {"slot_dim", dec.frame.s},
          {"extra_dim", dec.frame.extra_dim()},
          {"lambda2", num(dec.lambda2)},
          {"C", num(dec.C)},
          {"mu", num(dec.mu)},
          {"gamma_region", num(dec.gamma)},
          {"gamma_kk", num(dec.gamma_kk)},
          {"projector_distance", num(dec.projector_distance)},
          {"phi_b_norm", num(dec.phi_b_bound.value)},
          {"beta_bound", num(dec.phi_b_bound.bound)},
          {"beta_bound_vacuous", std::isinf(dec.phi_b_bound.bound)},
          {"alpha", num(dec.alpha)},
          {"alpha_reference", num(dec.alpha_reference)},
          {"checks", checks}};
}

inline void add_decomposition_failures(RunResult& r, const Decomposition& dec) {
  for (auto* c : dec.checks())
    verdict(r, c->holds, c->name + " (value " + std::to_string(c->value) + ", bound " + std::to_string(c->bound) + ")");
}

}  // namespace detail

inline RunResult run_g1(const ExperimentConfig& c) {
  RunResult r;
  MpsTensors t = model_tensors(c);
  json dims = json::array();
  std::optional<std::size_t> L0;
  for (std::size_t L = 1; L <= 8; ++L) {
    if (ipow(t.d, L) > kEnumerationCap) break;
    std::size_t s = g1_span_dim(t, L);
    dims.push_back(s);
    if (s == t.D * t.D) {
      L0 = L;
      break;
    }
  }
  r.summary = {{"d", t.d}, {"D", t.D}, {"L0", L0 ? json(*L0) : json(nullptr)}, {"span_dims", dims}};
  detail::verdict(r, L0.has_value(), "G1 not established up to the enumeration cap");
  return r;
}

inline RunResult run_canon(const ExperimentConfig& c) {
  RunResult r;
  CanonicalForm cf = canonical_form(model_tensors(c));
  json A = json::array();
  for (const auto& a : cf.tensors.A) A.push_back(detail::matrix_json(a));
  r.summary = {{"d", cf.tensors.d},
               {"D", cf.tensors.D},
               {"L0", cf.L0},
               {"normalization", detail::num(cf.normalization)},
               {"xi", detail::real_vector_json(cf.xi)},
               {"lambda2", detail::num(cf.lambda2())},
               {"A", A}};
  return r;
}

inline RunResult run_block(const ExperimentConfig& c) {
  RunResult r;
  CanonicalForm cf = canonical_form(model_tensors(c));
  auto os = detail::csv_stream();
  os << "L,blocked_operators,expected,choi_error,tail_norm\n";
  json rows = json::array();
  for (auto L : c.L_list) {
    BlockedChannel b = block(cf.tensors, L);
    const std::size_t expect = std::min(cf.tensors.D * cf.tensors.D, ipow(cf.tensors.d, L));
    os << L << ',' << b.blocked_kraus.size() << ',' << expect << ',' << b.choi_error << ',' << b.tail_norm << '\n';
    rows.push_back({{"L", L},
                    {"blocked_operators", b.blocked_kraus.size()},
                    {"expected", expect},
                    {"choi_error", detail::num(b.choi_error)},
                    {"tail_norm", detail::num(b.tail_norm)}});
    detail::verdict(r, b.choi_error <= 1e-10, "Choi(T^(L)) = Choi(T^L) within 1e-10 at L=" + std::to_string(L));
    detail::verdict(r, b.blocked_kraus.size() == expect,
                    "number of blocked operators = min{D^2, d^L} at L=" + std::to_string(L));
  }
  r.summary = {{"blocks", rows}};
  r.tables["block.csv"] = os.str();
  return r;
}

inline RunResult run_spectrum(const ExperimentConfig& c) {
  RunResult r;
  CanonicalForm cf = canonical_form(model_tensors(c));
  json ev = json::array();
  for (auto z : cf.spectrum.eigenvalues) ev.push_back(detail::cnum(z));
  r.summary = {{"eigenvalues", ev},
               {"lambda2", detail::num(cf.spectrum.lambda2)},
               {"peripheral_trivial", cf.spectrum.peripheral_trivial}};
  detail::verdict(r, cf.spectrum.peripheral_trivial, "peripheral spectrum is {1}");
  return r;
}

inline RunResult run_converge(const ExperimentConfig& c) {
  RunResult r;
  CanonicalForm cf = canonical_form(model_tensors(c));
  ConvergenceFit f = convergence_fit(cf, c.L_range);
  auto os = detail::csv_stream();
  write_convergence_csv(os, f);
  r.tables["converge.csv"] = os.str();
  json window = json::array();
  for (double w : windowed_constants(f, 3)) window.push_back(detail::num(w));
  r.summary["channel"] = {{"lambda2", detail::num(f.lambda2)},
                          {"rate", detail::num(f.rate)},
                          {"expected_rate", detail::num(f.expected_rate)},
                          {"prefactor", detail::num(f.prefactor)},
                          {"C", detail::num(f.envelope)},
                          {"windowed_C", window},
                          {"exact", f.exact},
                          {"rate_within_20_percent", f.rate_ok}};
  detail::verdict(r, f.rate_ok, "fitted rate of ||T^L - T^inf|| within 20% of log|lambda2|");

  // aligned projector distance over even L
  std::vector<std::size_t> evenL;
  for (auto L : c.L_list)
    if (L % 2 == 0 && ipow(cf.tensors.d, L) >= cf.tensors.D * cf.tensors.D) evenL.push_back(L);
  if (!evenL.empty() && !f.exact) {
    const double mu = asymptotic_projector(cf).mu;
    auto ps = detail::csv_stream();
    ps << "L,measured_distance,bound_rhs,method\n";
    std::vector<double> xs, ys;
    json rows = json::array();
    for (auto L : evenL) {
      ProjDistanceSample s = projector_distance_at(cf, L, f.envelope, mu);
      ps << L << ',' << s.measured << ',' << s.rhs << ',' << s.method << '\n';
      rows.push_back({{"L", L}, {"measured", detail::num(s.measured)}, {"rhs", detail::num(s.rhs)}, {"method", s.method}});
      xs.push_back(static_cast<double>(L));
      ys.push_back(s.measured);
      detail::verdict(r, s.measured <= s.rhs, "projector distance <= explicit bound at L=" + std::to_string(L));
    }
    r.tables["projdistance.csv"] = ps.str();
    LogFit lf = fit_log_linear(xs, ys, 1e-14);
    r.summary["projector_distance"] = {{"samples", rows},
                                       {"mu", detail::num(mu)},
                                       {"rate", lf.points >= 2 ? detail::num(lf.slope) : json(nullptr)},
                                       {"half_log_lambda2", detail::num(0.5 * std::log(f.lambda2))}};
  }
  return r;
}

inline RunResult run_parent_gap(const ExperimentConfig& c) {
  RunResult r;
  CanonicalForm cf = canonical_form(model_tensors(c));
  const std::size_t P = detail::interaction_range(c, cf);
  Matrix h = interaction_term(cf.tensors, P);
  LocalGap lg = local_gap(cf.tensors, std::min<std::size_t>(2 * P, [&] {
                            std::size_t m = P;
                            while (ipow(cf.tensors.d, m + 1) <= kDenseLimit && m < 2 * P) ++m;
                            return m;
                          }()), P);
  std::vector<GapReport> reps(c.N_list.size());
  detail::parallel_for(c.N_list.size(), c.workers, [&](std::size_t i) {
    RingHamiltonian H = assemble_ring(h, cf.tensors.d, c.N_list[i]);
    reps[i] = global_gap(H);
  });
  auto os = detail::csv_stream();
  write_gap_csv_header(os);
  json rows = json::array();
  for (const auto& g : reps) {
    write_gap_csv_row(os, g);
    rows.push_back({{"N", g.N},
                    {"L", g.L},
                    {"ground_energy", detail::num(g.ground_energy)},
                    {"degeneracy", g.degeneracy},
                    {"gap", detail::num(g.gap)},
                    {"method", g.method}});
    if (g.N >= 2 * cf.L0)
      detail::verdict(r, g.degeneracy == 1 && g.gap > 0 && std::abs(g.ground_energy) < 1e-8,
                      "unique zero-energy ground state with positive gap at N=" + std::to_string(g.N));
  }
  r.tables["gaps.csv"] = os.str();
  r.summary = {{"P", P},
               {"term_rank", numerical_rank(h)},
               {"local_gap", {{"m", lg.m}, {"gap", detail::num(lg.gap)}, {"kernel_dim", lg.kernel_dim}}},
               {"rings", rows}};
  return r;
}

inline RunResult run_decompose(const ExperimentConfig& c) {
  RunResult r;
  CanonicalForm cf = canonical_form(model_tensors(c));
  DecomposeOptions o;
  o.P = detail::interaction_range(c, cf);
  o.fit_L = c.L_range;
  Decomposition dec = decompose(cf, c.L, c.m, o);
  r.summary["decomposition"] = detail::decomposition_json(dec);
  detail::add_decomposition_failures(r, dec);
  // decay of ||phi_b|| over the feasible even block lengths
  if (cf.spectrum.lambda2 > 1e-12) {
    auto os = detail::csv_stream();
    os << "L,phi_b_norm,bound_rhs\n";
    std::vector<double> xs, ys;
    for (std::size_t L = c.L; L <= c.L + 4; L += 2) {
      if (ipow(cf.tensors.d, L) > kEnumerationCap || ipow(cf.tensors.d, 2 * L) > kStateCap) break;
      PhiBSample s = phi_b_norm_at(cf, L, o.P, dec.C, dec.mu);
      os << L << ',' << s.norm << ',' << s.bound << '\n';
      xs.push_back(static_cast<double>(L));
      ys.push_back(s.norm);
    }
    r.tables["phi_b.csv"] = os.str();
    if (xs.size() >= 2) {
      LogFit lf = fit_log_linear(xs, ys, 1e-14);
      r.summary["phi_b_decay"] = {{"L", xs}, {"norms", ys}, {"rate", detail::num(lf.slope)},
                                  {"half_log_lambda2", detail::num(0.5 * std::log(cf.spectrum.lambda2))}};
    }
  }
  return r;
}

inline RunResult run_phase_path(const ExperimentConfig& c) {
  RunResult r;
  CanonicalForm cf = canonical_form(model_tensors(c));
  DecomposeOptions o;
  o.P = detail::interaction_range(c, cf);
  o.fit_L = c.L_range;
  o.compute_alpha = false;
  Decomposition dec = decompose(cf, c.L, c.m, o);
  PhasePath p = phase_path(dec, c.steps);
  auto os = detail::csv_stream();
  os << "t,ground_energy,degeneracy,gap,status\n";
  json steps = json::array();
  for (const auto& s : p.steps) {
    os << s.t << ',' << s.gap.ground_energy << ',' << s.gap.degeneracy << ',' << s.gap.gap << ','
       << (s.error.empty() ? "ok" : "solver-failure") << '\n';
    steps.push_back({{"t", detail::num(s.t)},
                     {"ground_energy", detail::num(s.gap.ground_energy)},
                     {"degeneracy", s.gap.degeneracy},
                     {"gap", detail::num(s.gap.gap)},
                     {"flagged", !s.error.empty()}});
  }
  r.tables["phase_path.csv"] = os.str();
  r.summary = {{"L", c.L},
               {"m", c.m},
               {"P", o.P},
               {"min_gap", detail::num(p.min_gap)},
               {"verdict_withheld", p.withheld},
               {"parent_gap", detail::num(p.endpoint_gap)},
               {"endpoint_difference", detail::num(p.endpoint_difference)},
               {"steps", steps}};
  detail::verdict(r, !p.withheld, "solver failure along the path (verdict withheld)");
  detail::verdict(r, p.verdict, "min gap along H(t) > 0 with unit degeneracy");
  return r;
}

inline RunResult run_sweep(const ExperimentConfig& c) {
  RunResult r;
  CanonicalForm cf = canonical_form(model_tensors(c));
  SweepConfig s;
  s.tensors = cf.tensors;
  s.P = detail::interaction_range(c, cf);
  s.N_list = c.N_list;
  s.beta_factors = c.beta_factors;
  s.seeds = c.seeds;
  s.workers = c.workers;
  StabilityReport rep = perturb_sweep(s);
  auto os = detail::csv_stream();
  write_sweep_csv(os, rep);
  r.tables["sweep.csv"] = os.str();
  json unp = json::array();
  for (const auto& g : rep.unperturbed)
    unp.push_back({{"N", g.N}, {"gap", detail::num(g.gap)}, {"degeneracy", g.degeneracy}});
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& cv : rep.curves)
    for (const auto& p : cv.points)
      if (p.error.empty() && p.beta_factor <= s.verdict_factor + 1e-12) worst = std::min(worst, p.gap.gap / rep.gamma);
  r.summary = {{"P", s.P},
               {"gamma", detail::num(rep.gamma)},
               {"unperturbed", unp},
               {"verdict_beta_factor", s.verdict_factor},
               {"retained_fraction", s.retained},
               {"min_gap_over_gamma", detail::num(worst)},
               {"stable", rep.stable},
               {"continuous", rep.continuous},
               {"failures", rep.failures}};
  for (const auto& f : rep.failures) r.failures.push_back(f);
  return r;
}

// AKLT end to end: canonical form, spectrum, h_{G_2}, N=6 ring, sandwich with
// L=3, and the decomposition at L=2 on m blocks.
inline RunResult run_aklt(const ExperimentConfig& c) {
  RunResult r;
  MpsTensors raw = MpsTensors::aklt();
  CanonicalForm cf = canonical_form(raw);
  Matrix h2 = interaction_term(cf.tensors, 2);
  GapReport g6 = global_gap(parent_hamiltonian(cf.tensors, 2, 6));
  SandwichResult sw = two_site_sandwich(h2, cf.tensors, 3);
  DecomposeOptions o;
  o.P = 2;
  o.fit_L = c.L_range;
  Decomposition dec = decompose(cf, 2, std::max<std::size_t>(3, c.m), o);
  PhasePath p = phase_path(dec, c.steps);
  json ev = json::array();
  for (auto z : cf.spectrum.eigenvalues) ev.push_back(detail::cnum(z));
  r.summary = {{"L0", cf.L0},
               {"xi", detail::real_vector_json(cf.xi)},
               {"transfer_eigenvalues", ev},
               {"h_G2_rank", numerical_rank(h2)},
               {"ring6", {{"ground_energy", detail::num(g6.ground_energy)}, {"degeneracy", g6.degeneracy}, {"gap", detail::num(g6.gap)}}},
               {"sandwich", {{"kernels_equal", sw.kernels_equal}, {"kernel_distance", detail::num(sw.kernel_distance)},
                             {"c1", detail::num(sw.c1)}, {"c2", detail::num(sw.c2)}}},
               {"decomposition", detail::decomposition_json(dec)},
               {"phase_path_min_gap", detail::num(p.min_gap)}};
  detail::verdict(r, numerical_rank(h2) == 5, "rank h_G2 = 5");
  detail::verdict(r, g6.degeneracy == 1 && g6.gap > 0, "unique ground state with positive gap at N=6");
  detail::verdict(r, sw.kernels_equal && sw.c1 > 0 && sw.c1 <= sw.c2, "0 < c1 <= c2 with equal kernels at L=3");
  detail::add_decomposition_failures(r, dec);
  detail::verdict(r, p.verdict, "min gap along H(t) > 0 with unit degeneracy");
  return r;
}

inline RunResult run(const std::string& sub, const ExperimentConfig& c) {
  validate(sub, c);
  if (sub == "g1") return run_g1(c);
  if (sub == "canon") return run_canon(c);
  if (sub == "block") return run_block(c);
  if (sub == "spectrum") return run_spectrum(c);
  if (sub == "converge") return run_converge(c);
  if (sub == "parent-gap") return run_parent_gap(c);
  if (sub == "decompose") return run_decompose(c);
  if (sub == "sweep") return run_sweep(c);
  if (sub == "aklt") return run_aklt(c);
  return run_phase_path(c);
}

// summary.json (deterministic), metadata.json (timestamps) and the CSV tables
// under <out_dir>/<subcommand>/.
inline std::filesystem::path write_outputs(const std::string& sub, const ExperimentConfig& c, const RunResult& r,
                                           double seconds) {
  namespace fs = std::filesystem;
  fs::path dir = fs::path(c.out_dir) / sub;
  fs::create_directories(dir);
  json summary = {{"subcommand", sub}, {"config", config_json(c)}, {"pass", r.pass()},
                  {"failures", r.failures}, {"result", r.summary}};
  std::ofstream(dir / "summary.json") << summary.dump(2) << '\n';
  std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  json meta = {{"finished_utc", buf}, {"wall_seconds", seconds}, {"workers", c.workers}};
  std::ofstream(dir / "metadata.json") << meta.dump(2) << '\n';
  for (const auto& [name, text] : r.tables) std::ofstream(dir / name) << text;
  return dir;
}

}  // namespace mpsstab::cli
