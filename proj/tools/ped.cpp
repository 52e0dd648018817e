// ped: design and analysis driver for pediatric extrapolation studies.
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ped/commands.hpp"
#include "ped/errors.hpp"

namespace {

void add_common(CLI::App* sub, ped::CommandOptions& opts) {
  sub->add_option("--config", opts.config_path, "Run configuration (JSON)")->required();
  sub->add_option("--out", opts.out_dir, "Output and cache directory");
  sub->add_option("--seed", opts.seed, "Base random seed");
  sub->add_option("--threads", opts.threads, "Worker threads")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian pediatric extrapolation design engine"};
  app.require_subcommand(1);

  ped::CommandOptions opts;
  auto* elicit = app.add_subcommand("elicit", "Fit the elicited-points prior and cache it per w");
  auto* family = app.add_subcommand("family", "Build the worst-case coefficient tables");
  auto* search = app.add_subcommand("search", "Estimate operating characteristics over the grid");
  auto* analyze = app.add_subcommand("analyze", "Analyze an observed pediatric dataset");
  for (auto* sub : {elicit, family, search, analyze}) add_common(sub, opts);
  analyze->add_option("--data", opts.data_path, "CSV with header exposure,response")->required();
  analyze->add_option("--w", opts.w, "Borrowing weight")->required();
  analyze->add_option("--eps-bayes", opts.epsilon_bayes, "Posterior threshold")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const ped::RunConfig config = ped::resolve_config(opts);
    if (elicit->parsed()) ped::cmd_elicit(config, std::cout);
    if (family->parsed()) ped::cmd_family(config, std::cout);
    if (search->parsed()) ped::cmd_search(config, std::cout);
    if (analyze->parsed())
      ped::cmd_analyze(config, *opts.data_path, *opts.w, *opts.epsilon_bayes, std::cout);
  } catch (const ped::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ped::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
