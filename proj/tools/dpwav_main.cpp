#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dpwav/accountant.hpp"
#include "dpwav/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Differentially private federated learning with wavelet noise injection"};
  app.require_subcommand(1);

  std::string spec_path, out_dir;
  bool parallel = false;
  auto* run_cmd = app.add_subcommand("run", "Run every arm of an experiment spec");
  run_cmd->add_option("spec", spec_path, "Experiment spec file")->required();
  run_cmd->add_option("--out", out_dir, "Override the spec's output directory");
  run_cmd->add_flag("--parallel", parallel, "Run arms in parallel");

  std::vector<std::string> metrics_dirs;
  auto* compare_cmd = app.add_subcommand("compare", "Compare final accuracies of metric dirs");
  compare_cmd->add_option("dirs", metrics_dirs, "Metrics directories (or metrics.csv paths)")
      ->required()
      ->expected(-2);

  double q = 1.0, sigma = 1.0, delta = 1e-5;
  int steps = 1;
  std::size_t wavelet_m = 0;
  auto* acct_cmd = app.add_subcommand("accountant", "Print (epsilon, delta) for composed steps");
  acct_cmd->add_option("--q", q, "Poisson sampling probability")->required();
  acct_cmd->add_option("--sigma", sigma, "Noise multiplier (sigma_haar with --wavelet-m)")
      ->required();
  acct_cmd->add_option("--steps", steps, "Number of composed steps")->required();
  acct_cmd->add_option("--delta", delta, "Target delta")->required();
  acct_cmd->add_option("--wavelet-m", wavelet_m,
                       "Padded coefficient count; maps sigma through the wavelet saving factor");

  CLI11_PARSE(app, argc, argv);

  if (run_cmd->parsed())
    return dpwav::cli::run_experiment(spec_path, out_dir, parallel, std::cerr);

  if (compare_cmd->parsed())
    return dpwav::cli::report_compare(metrics_dirs, std::cout, std::cerr);

  try {
    double multiplier =
        wavelet_m > 0 ? dpwav::rdp::effective_noise_multiplier(sigma, wavelet_m) : sigma;
    dpwav::rdp::RdpLedger ledger(dpwav::rdp::default_orders());
    ledger = dpwav::rdp::compose(ledger, {q, multiplier}, steps);
    auto [eps, order] = dpwav::rdp::to_epsilon(ledger, delta);
    std::printf("epsilon = %.6f at alpha = %g (delta = %g, multiplier = %g)\n", eps, order,
                delta, multiplier);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
