#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "lsbo/acquisition.hpp"
#include "lsbo/bounds.hpp"
#include "lsbo/gp.hpp"
#include "lsbo/rng.hpp"
#include "lsbo/training.hpp"
#include "lsbo/vae.hpp"

namespace lsbo {

// Objective wrapper. eval is the noiseless function; observations add
// N(0, noise_sigma^2) when noise_sigma > 0.
struct BlackBox {
  std::function<double(const Vec&)> eval;
  double noise_sigma = 0.0;
};

struct BoState {
  Mat x_observed;                  // one evaluated input per row
  Vec y_observed;                  // matching noisy observations
  long iteration = 0;              // completed optimization steps
  std::vector<double> best_trace;  // best observation after each step
  std::uint64_t rng_seed = 0;      // root of the per-step noise forks
};

// Draws n_init distinct rows of x_unlabelled without replacement (throws if
// n_init exceeds the pool), evaluates them, and returns the starting state
// with an empty trace.
BoState initialize(const Mat& x_unlabelled, const BlackBox& f, int n_init,
                   Rng& rng);

struct BoLogRow {
  long iteration = 0;
  Vec z;                     // latent point the step proposed
  double y = 0.0;            // observation at the decoded input
  double best = 0.0;         // best observation so far
  double acquisition = 0.0;  // score at z; NaN for the scoreless kinds
  std::string region;        // bounds description for this step
  double drift = 0.0;        // |z - encoder_mean(decoded z)|
};

// CSV with one row per step. Non-finite acquisition scores (thompson and
// random proposals have none) are written as an empty field so every value
// that does appear is finite.
void write_run_log(const std::string& path, const std::vector<BoLogRow>& rows);

// Everything a step needs besides the evolving state: the models, the
// trainer that updates them, the unlabelled pool, the objective, and the
// search settings. Steps stage their work on copies and commit only on
// success, so a throw leaves both the pipeline and the state untouched.
struct BoPipeline {
  VaeModel vae;
  GplvmModel gp;
  Trainer trainer;
  Mat x_unlabelled;
  BlackBox black_box;
  BoundsConfig bounds;
  AcquisitionSpec acquisition;

  // Encoder means over x_unlabelled, keyed by vae.version so they are only
  // recomputed after the encoder actually changed.
  Mat encodings;
  std::uint64_t encodings_version = ~std::uint64_t{0};
};

// One optimization step: retrain per the regime, refit the bounds from the
// pool encodings, maximize the acquisition inside them, decode the chosen
// latent point to an input, evaluate it, append the observation. The
// surrogate is fit to observations standardized over the labelled set, so
// logged acquisition scores and stop_threshold live on that scale; stored
// observations stay raw.
BoLogRow bo_step(BoState& state, BoPipeline& pipe);

struct BoRunConfig {
  int latent_dim = 4;
  Likelihood likelihood = Likelihood::kBernoulli;
  int n_init = 10;
  long budget = 100;
  int num_inducing = 64;
  double gp_noise_init = 0.1;
  // A finished step whose acquisition score falls below this ends the run
  // early. The default never triggers; scoreless kinds never stop.
  double stop_threshold = -std::numeric_limits<double>::infinity();
  BoundsConfig bounds;
  AcquisitionSpec acquisition;
  TrainConfig train;
  std::uint64_t seed = 0;
};

struct BoRunResult {
  BoState state;
  std::vector<BoLogRow> log;
  VaeModel vae;
  GplvmModel gp;
};

// Full pipeline: fit the encoder on the pool (or adopt *warm_vae as already
// fitted), seed the surrogate's inducing points from the pool encodings,
// then step until the budget or the stop threshold is hit. Identical
// configs and seeds produce identical results byte for byte; step failures
// are rethrown with the iteration index attached.
BoRunResult run_bo(const Mat& x_unlabelled, const BlackBox& f,
                   const BoRunConfig& cfg, const VaeModel* warm_vae = nullptr);

}  // namespace lsbo
