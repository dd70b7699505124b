#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "lsbo/checkpoint.hpp"
#include "lsbo/common.hpp"
#include "lsbo/harness.hpp"

namespace {

// Window on one latent axis: the encoded data range inflated about its
// center, with a floor so degenerate axes still get a visible span.
std::pair<double, double> axis_window(const lsbo::Mat& enc, int axis,
                                      double span) {
  const double lo = enc.col(axis).minCoeff();
  const double hi = enc.col(axis).maxCoeff();
  const double center = 0.5 * (lo + hi);
  double half = 0.5 * (hi - lo) * span;
  if (half < 1e-3) half = 1e-3;
  return {center - half, center + half};
}

int run_sweep_cmd(const std::string& config_path, const std::string& out_dir,
                  int workers, long long seed) {
  lsbo::ExperimentConfig cfg = lsbo::load_config(config_path);
  if (seed >= 0) cfg.seeds = {static_cast<int>(seed)};
  const lsbo::SweepResult result = lsbo::run_sweep(cfg, out_dir, workers);
  for (const lsbo::SweepCell& cell : result.cells) {
    std::string status = "complete";
    if (cell.seeds_ok.empty())
      status = "failed";
    else if (!cell.seeds_failed.empty())
      status = "incomplete";
    std::cout << "d=" << cell.latent_dim << ' ' << lsbo::to_string(cell.bounds)
              << ' ' << lsbo::to_string(cell.acquisition) << ": " << status
              << " (" << cell.seeds_ok.size() << '/'
              << cell.seeds_ok.size() + cell.seeds_failed.size()
              << " seeds)\n";
  }
  std::cout << "config hash " << result.hash << ", outputs in " << out_dir
            << '\n';
  return 0;
}

int run_diagnose_cmd(const std::string& config_path, const std::string& out_dir,
                     long long seed) {
  const lsbo::ExperimentConfig cfg = lsbo::load_config(config_path);
  const int use_seed = seed >= 0 ? static_cast<int>(seed) : cfg.seeds.front();
  const int d = cfg.latent_dims.front();
  const std::string hash = lsbo::config_hash(cfg);

  const lsbo::ProblemSetup problem = lsbo::make_problem(cfg);
  const lsbo::VaeModel vae = lsbo::pretrain_vae(cfg, problem, d, use_seed);
  const lsbo::Mat enc = lsbo::encode_mean_raw(vae, problem.pool);

  const auto [lo_a, hi_a] = axis_window(enc, cfg.grid_axis_a, cfg.grid_span);
  const auto [lo_b, hi_b] = axis_window(enc, cfg.grid_axis_b, cfg.grid_span);
  const lsbo::DiagnosticsMap map =
      lsbo::diagnostics_map(vae, problem.pool, cfg.grid_axis_a,
                            cfg.grid_axis_b, cfg.grid_n, lo_a, hi_a, lo_b,
                            hi_b);

  std::filesystem::create_directories(out_dir);
  const std::string stem = cfg.dataset + "_d" + std::to_string(d) + "_seed" +
                           std::to_string(use_seed);
  const std::string csv =
      (std::filesystem::path(out_dir) / ("diagnostics_" + stem + ".csv"))
          .string();
  lsbo::write_diagnostics_csv(csv, map, hash);
  const std::string ckpt =
      (std::filesystem::path(out_dir) / ("vae_" + stem + ".ckpt")).string();
  lsbo::save_vae(ckpt, vae);

  std::cout << "diagnostics map " << csv << " (99% radius "
            << lsbo::g17(map.radius99) << ")\nencoder checkpoint " << ckpt
            << '\n';
  return 0;
}

int run_gen_data_cmd(const std::string& config_path, const std::string& out_dir,
                     long long seed) {
  lsbo::ExperimentConfig cfg = lsbo::load_config(config_path);
  if (seed >= 0) cfg.data_seed = static_cast<std::uint64_t>(seed);
  const std::string hash = lsbo::config_hash(cfg);
  const lsbo::ProblemSetup problem = lsbo::make_problem(cfg);

  std::filesystem::create_directories(out_dir);
  const std::string stem =
      cfg.dataset + "_" + std::to_string(cfg.pool_size) + "_seed" +
      std::to_string(cfg.data_seed);
  const std::string inputs =
      (std::filesystem::path(out_dir) / (stem + "_inputs.txt")).string();
  const std::string values =
      (std::filesystem::path(out_dir) / (stem + "_values.txt")).string();
  lsbo::save_dataset(inputs, problem.pool, "config_hash=" + hash);
  lsbo::save_dataset(values, problem.train_values, "config_hash=" + hash);
  std::cout << "wrote " << inputs << " and " << values << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent-space Bayesian optimization experiment runner"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  int workers = 1;
  long long seed = -1;

  CLI::App* sweep = app.add_subcommand(
      "sweep", "run the configured sweep and write regret curve CSVs");
  sweep->add_option("--config", config_path, "experiment config file")
      ->required()
      ->check(CLI::ExistingFile);
  sweep->add_option("--out", out_dir, "output directory");
  sweep->add_option("--workers", workers, "parallel sweep cells")
      ->check(CLI::PositiveNumber);
  sweep->add_option("--seed", seed, "restrict the sweep to one seed");

  CLI::App* diagnose = app.add_subcommand(
      "diagnose", "train an encoder and write its round-trip distance map");
  diagnose->add_option("--config", config_path, "experiment config file")
      ->required()
      ->check(CLI::ExistingFile);
  diagnose->add_option("--out", out_dir, "output directory");
  diagnose->add_option("--seed", seed, "encoder training seed");

  CLI::App* gen = app.add_subcommand(
      "gen-data", "materialize the configured dataset as text files");
  gen->add_option("--config", config_path, "experiment config file")
      ->required()
      ->check(CLI::ExistingFile);
  gen->add_option("--out", out_dir, "output directory");
  gen->add_option("--seed", seed, "override the data seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sweep->parsed()) return run_sweep_cmd(config_path, out_dir, workers, seed);
    if (diagnose->parsed()) return run_diagnose_cmd(config_path, out_dir, seed);
    if (gen->parsed()) return run_gen_data_cmd(config_path, out_dir, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
