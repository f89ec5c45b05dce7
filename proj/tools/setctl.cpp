// setctl: run scenario configs, the acceptance suites and the built-in demos.
//   setctl run <config.json> [--out DIR]
//   setctl verify {unit|containment|oracle|all} [--seed N]
//   setctl demo <name> [--out DIR] [--print]
// SETCTL_OUTPUT_DIR overrides the output directory unless --out is given.
// Exit codes: 0 success, 2 guaranteed infeasibility, 1 error.

#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "setctl/scenario.hpp"
#include "setctl/verify/acceptance.hpp"

namespace {

std::string output_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  const char* env = std::getenv("SETCTL_OUTPUT_DIR");
  return env ? env : "";
}

int report(const setctl::scenario::Outcome& o) {
  std::cout << o.summary.dump(2) << '\n';
  std::cerr << "wrote " << o.output_dir.string() << '\n';
  return o.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"set-based control and estimation toolkit"};
  app.require_subcommand(1);

  std::string config, out, suite = "all", demo;
  unsigned long long seed = 1;
  bool print_only = false;

  auto* run = app.add_subcommand("run", "run a scenario config");
  run->add_option("config", config, "scenario JSON")->required();
  run->add_option("--out", out, "output directory");

  auto* verify = app.add_subcommand("verify", "run acceptance criteria");
  verify->add_option("suite", suite, "unit, containment, oracle or all")
      ->check(CLI::IsMember({"unit", "containment", "oracle", "all"}));
  verify->add_option("--seed", seed, "seed of the stochastic oracles");

  auto* dem = app.add_subcommand("demo", "run a built-in scenario");
  dem->add_option("name", demo, "wrapping-demo, bracketing, identify, smc, mpc, battery or ilo")->required();
  dem->add_option("--out", out, "output directory");
  dem->add_flag("--print", print_only, "print the config instead of running it");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) return report(setctl::scenario::run_file(config, output_dir(out)));
    if (*dem) {
      const auto cfg = setctl::scenario::demo_config(demo);
      if (print_only) {
        std::cout << cfg.dump(2) << '\n';
        return 0;
      }
      return report(setctl::scenario::run(cfg, ".", output_dir(out)));
    }
    int failed = 0;
    for (int id : setctl::acceptance::suite(suite)) {
      const auto r = setctl::acceptance::run(id, seed);
      setctl::acceptance::print(std::cout, r);
      std::cout.flush();
      failed += !r.pass;
    }
    std::cout << (failed ? std::to_string(failed) + " criterion(s) failed" : std::string("all criteria passed")) << '\n';
    return failed ? 1 : 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
