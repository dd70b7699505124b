#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "lsbo/boloop.hpp"
#include "lsbo/datasets.hpp"

namespace lsbo {

// Sweep description. Parsed from flat "key = value" text (lists comma
// separated, '#' starts a comment line, unknown or repeated keys are
// errors); a config fully determines a sweep's outputs byte for byte.
struct ExperimentConfig {
  std::string dataset = "synthetic";  // "synthetic" or "shape"
  TrainRegime regime = TrainRegime::kDisjoint;
  std::vector<int> latent_dims = {3, 4, 5, 6};
  std::vector<BoundsKind> bounds = {BoundsKind::kHypercube};
  std::vector<AcquisitionKind> acquisitions = {AcquisitionKind::kEi};
  std::vector<int> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  long budget = 100;

  int n_init = 10;
  int num_inducing = 64;
  double gp_noise_init = 0.1;
  double noise_sigma = 0.0;
  double stop_threshold = -std::numeric_limits<double>::infinity();

  int pool_size = 1000;
  std::uint64_t data_seed = 0;
  bool shape_threshold = false;  // binarize decoded images before scoring
  int ambient_dim = 20;          // synthetic only
  int intrinsic_dim = 2;

  double vae_lr = 1e-3;
  double gp_lr = 1e-1;
  int vae_epochs = 30;
  int gp_steps = 100;
  int joint_steps = 30;
  int batch_size = 128;
  int retrain_period = 10;

  double lcb_beta = 2.0;
  int ts_candidates = 2048;
  double xi = 0.0;

  int grid_n = 40;       // diagnostics grid resolution
  int grid_axis_a = 0;   // latent axes the diagnostics plane spans
  int grid_axis_b = 1;
  double grid_span = 2.0;  // window inflation around the encoded data
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Fixed-order "key = value" rendering of every field; parse_config maps it
// back to an equal config.
std::string canonical_config(const ExperimentConfig& cfg);

// 16 hex digits over the canonical rendering; embedded in every output.
std::string config_hash(const ExperimentConfig& cfg);

// Objective values rescaled so the best training value sits at 0 and the
// training values have unit standard deviation; beating the training
// optimum turns negative. Throws when the training values are degenerate.
Vec normalize(const Vec& y_raw, const Vec& train_values);

// Dataset, objective, and training labels assembled from a config.
struct ProblemSetup {
  Mat pool;          // unlabelled inputs, one per row
  BlackBox black_box;
  Vec train_values;  // objective over the pool rows
  Likelihood likelihood = Likelihood::kBernoulli;
};
ProblemSetup make_problem(const ExperimentConfig& cfg);

// Encoder pre-trained exactly as a cold run with this latent dim and seed
// would train it, so warm-started runs replay cold runs byte for byte.
VaeModel pretrain_vae(const ExperimentConfig& cfg, const ProblemSetup& problem,
                      int latent_dim, int seed);

// The per-run knobs a sweep cell passes to run_bo.
BoRunConfig cell_run_config(const ExperimentConfig& cfg, int latent_dim,
                            BoundsKind bounds, AcquisitionKind acquisition,
                            int seed, Likelihood likelihood);

struct SweepCell {
  int latent_dim = 0;
  BoundsKind bounds = BoundsKind::kHypercube;
  AcquisitionKind acquisition = AcquisitionKind::kEi;
  Vec mean;  // per-iteration mean of the normalized best traces
  Vec sem;   // sample standard deviation over seeds / sqrt(#seeds)
  Mat raw;   // budget x succeeded seeds, normalized best traces
  std::vector<int> seeds_ok;
  std::vector<std::pair<int, std::string>> seeds_failed;
  std::string file;  // curve CSV written for this cell, "" if none
};

struct SweepResult {
  std::string hash;
  std::vector<SweepCell> cells;
};

// Runs the full cartesian product of latent_dims x bounds x acquisitions,
// each cell over every seed. Encoders are pre-trained once per (latent
// dim, seed) and shared; cells run on up to `workers` threads; all files
// are written by the calling thread afterwards, so outputs do not depend
// on scheduling. A failed run marks its cell incomplete and the sweep
// carries on. Writes one curve CSV per cell plus summary.csv.
SweepResult run_sweep(const ExperimentConfig& cfg, const std::string& out_dir,
                      int workers = 1);

// Round-trip displacement field over a latent plane: grid points z' (other
// coordinates 0) against |z' - mu_phi(decode_mean(z'))|, plus the
// Mahalanobis radius that encloses 99% of the encoded training data under
// a fitted Gaussian.
struct DiagnosticsMap {
  int axis_a = 0;
  int axis_b = 1;
  Vec grid_a;       // axis tick values, size n
  Vec grid_b;
  Mat distance;     // n x n, row = b tick, col = a tick
  Mat mahalanobis;  // radius of each grid point under the data Gaussian
  double radius99 = 0.0;
};

DiagnosticsMap diagnostics_map(const VaeModel& vae, const Mat& train_inputs,
                               int axis_a, int axis_b, int grid_n, double lo_a,
                               double hi_a, double lo_b, double hi_b);

// Long-format CSV: one row per grid point with the round-trip distance,
// the Mahalanobis radius, and whether the point falls inside the contour.
void write_diagnostics_csv(const std::string& path, const DiagnosticsMap& map,
                           const std::string& hash);

}  // namespace lsbo
