#include <iostream>

#include "CLI11.hpp"
#include "experiment.hpp"

using namespace mpsstab;

namespace {

struct Flags {
  std::string config;
  cli::ExperimentConfig c;
};

void add_options(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "JSON config file");
  sub->add_option("--model", f.c.model, "aklt, random, random-gaussian, matrix-units or a tensor file");
  sub->add_option("--d", f.c.d, "physical dimension of a random model");
  sub->add_option("--D", f.c.D, "bond dimension of a random model");
  sub->add_option("--seed", f.c.seed, "seed of a random model");
  sub->add_option("--L", f.c.L, "block length");
  sub->add_option("--m", f.c.m, "blocks on the ring");
  sub->add_option("--P", f.c.P, "interaction range (0 = L0 + 1)");
  sub->add_option("--L-list", f.c.L_list, "block lengths")->delimiter(',');
  sub->add_option("--L-range", f.c.L_range, "fit range for channel convergence")->delimiter(',');
  sub->add_option("--N-list", f.c.N_list, "ring sizes")->delimiter(',');
  sub->add_option("--beta", f.c.beta_factors, "perturbation strengths in units of the gap")->delimiter(',');
  sub->add_option("--seeds", f.c.seeds, "perturbation seeds")->delimiter(',');
  sub->add_option("--steps", f.c.steps, "steps along the interpolation");
  sub->add_option("--out", f.c.out_dir, "output directory");
  sub->add_option("--workers", f.c.workers, "worker threads");
}

// Config file first, then environment, then explicit flags.
cli::ExperimentConfig resolve(CLI::App* sub, const Flags& f) {
  cli::ExperimentConfig c = f.config.empty() ? cli::ExperimentConfig{} : cli::load_config(f.config);
  cli::apply_environment(c);
  auto given = [&](const char* name) { return sub->get_option(name)->count() > 0; };
  if (given("--model")) c.model = f.c.model;
  if (given("--d")) c.d = f.c.d;
  if (given("--D")) c.D = f.c.D;
  if (given("--seed")) c.seed = f.c.seed;
  if (given("--L")) c.L = f.c.L;
  if (given("--m")) c.m = f.c.m;
  if (given("--P")) c.P = f.c.P;
  if (given("--L-list")) c.L_list = f.c.L_list;
  if (given("--L-range")) c.L_range = f.c.L_range;
  if (given("--N-list")) c.N_list = f.c.N_list;
  if (given("--beta")) c.beta_factors = f.c.beta_factors;
  if (given("--seeds")) c.seeds = f.c.seeds;
  if (given("--steps")) c.steps = f.c.steps;
  if (given("--out")) c.out_dir = f.c.out_dir;
  if (given("--workers")) c.workers = f.c.workers;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mpsstab: MPS parent Hamiltonian stability experiments"};
  app.require_subcommand(1);
  Flags flags;
  std::vector<CLI::App*> subs;
  for (const auto& name : cli::subcommands()) {
    auto* s = app.add_subcommand(name);
    add_options(s, flags);
    subs.push_back(s);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  CLI::App* sub = nullptr;
  for (auto* s : subs)
    if (s->parsed()) sub = s;
  const std::string name = sub->get_name();

  cli::ExperimentConfig cfg;
  cli::RunResult res;
  auto t0 = std::chrono::steady_clock::now();
  try {
    cfg = resolve(sub, flags);
    res = cli::run(name, cfg);
  } catch (const cli::ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return 2;
  } catch (const CapExceeded& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return 2;
  } catch (const NotGeneric& e) {
    res.failures.push_back(e.what());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    res.failures.push_back(std::string("aborted: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  auto dir = cli::write_outputs(name, cfg, res, secs);
  if (res.pass()) {
    std::cout << name << ": PASS (" << dir.string() << ")\n";
    return 0;
  }
  for (const auto& f : res.failures) std::cout << name << ": FAIL " << f << '\n';
  return 1;
}
