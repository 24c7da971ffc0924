#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mvl/errors.hpp"
#include "mvl/harness.hpp"

namespace {

struct VerbArgs {
  std::string config;
  mvl::Overrides overrides;
};

CLI::App* add_verb(CLI::App& app, const std::string& name, const std::string& help, VerbArgs& args) {
  CLI::App* sub = app.add_subcommand(name, help);
  sub->add_option("--config", args.config, "JSON experiment config")->check(CLI::ExistingFile);
  sub->add_option("--seed", args.overrides.seed, "Override integrator.rng_seed");
  sub->add_option("--steps", args.overrides.steps, "Override the step count");
  sub->add_option("--paths", args.overrides.paths, "Override the path or pair count");
  sub->add_option("--out", args.overrides.out, "Override the output directory");
  return sub;
}

mvl::ExperimentConfig load(const std::string& verb, const VerbArgs& args) {
  mvl::ExperimentConfig cfg = args.config.empty() ? mvl::ExperimentConfig{} : mvl::load_config(args.config);
  mvl::apply_overrides(cfg, verb, args.overrides);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"McKean-Vlasov kinetic Langevin experiments"};
  app.require_subcommand(1);
  VerbArgs constants, figure, converge, contract, moments;
  bool dump = false;
  CLI::App* c_constants = add_verb(app, "constants", "Print constants and the admissibility verdict", constants);
  c_constants->add_flag("--dump-config", dump, "Print the effective config and exit");
  CLI::App* c_figure = add_verb(app, "sec5-figure", "Running-mean curves for the linear example", figure);
  CLI::App* c_converge = add_verb(app, "converge", "W1 of trajectory empirical measures against a reference", converge);
  CLI::App* c_contract = add_verb(app, "contract", "Coupled-pair contraction experiment", contract);
  CLI::App* c_moments = add_verb(app, "moments", "Second moments of the frozen dynamics", moments);
  CLI11_PARSE(app, argc, argv);

  try {
    if (c_constants->parsed()) {
      const auto cfg = load("constants", constants);
      if (dump) {
        std::cout << mvl::serialize_config(cfg) << '\n';
        return 0;
      }
      return mvl::run_admissibility_report(cfg, std::cout);
    }
    std::cout << std::setprecision(6);
    if (c_figure->parsed()) {
      const auto cfg = load("sec5-figure", figure);
      for (const auto& c : mvl::run_sec5_figure(cfg))
        std::cout << "k = " << c.k << "  |m| at j = " << c.steps.back() << ": " << c.mean_abs_m.back() << " +- "
                  << c.stderr_abs_m.back() << '\n';
      std::cout << "wrote " << cfg.output << '\n';
    } else if (c_converge->parsed()) {
      const auto cfg = load("converge", converge);
      const auto r = mvl::run_empirical_convergence(cfg);
      std::cout << "final W1 = " << r.mean_w1.back() << " +- " << r.stderr_w1.back() << "  slope = " << r.slope
                << "  var_x = " << r.var_x << "  var_v = " << r.var_v << "\nwrote " << cfg.output << '\n';
    } else if (c_contract->parsed()) {
      const auto cfg = load("contract", contract);
      const auto r = mvl::run_contraction(cfg);
      std::cout << "rate = " << r.fit.rate << " +- " << r.fit.stderr_bootstrap << "  R2 = " << r.fit.r_squared
                << "  E[rho] " << r.mean_rho.front() << " -> " << r.mean_rho.back() << "\nwrote " << cfg.output
                << '\n';
    } else if (c_moments->parsed()) {
      const auto cfg = load("moments", moments);
      const auto r = mvl::run_moments(cfg);
      std::cout << "sup first quarter = " << r.sup_first_quarter << "  sup final quarter = " << r.sup_final_quarter
                << "  growth_flag = " << (r.growth_flag ? "true" : "false") << "\nwrote " << cfg.output << '\n';
      return r.growth_flag ? 1 : 0;
    }
  } catch (const mvl::config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
