#include "lsbo/boloop.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>

#include "lsbo/common.hpp"

namespace lsbo {
namespace {

void check_black_box(const BlackBox& f) {
  if (!f.eval) throw std::invalid_argument("black box has no eval function");
  if (!(f.noise_sigma >= 0.0))
    throw std::invalid_argument("noise_sigma must be >= 0");
}

double observe(const BlackBox& f, const Vec& x, Rng& rng) {
  double y = f.eval(x);
  if (f.noise_sigma > 0.0) y += f.noise_sigma * rng.normal();
  if (!std::isfinite(y))
    throw NumericalError("black box returned a non-finite value");
  return y;
}

bool has_pointwise_score(AcquisitionKind k) {
  return k != AcquisitionKind::kTs && k != AcquisitionKind::kRandom;
}

}  // namespace

BoState initialize(const Mat& x_unlabelled, const BlackBox& f, int n_init,
                   Rng& rng) {
  check_black_box(f);
  if (n_init < 1) throw std::invalid_argument("n_init must be positive");
  if (n_init > x_unlabelled.rows())
    throw std::invalid_argument("n_init exceeds the unlabelled pool");
  const auto idx = sample_without_replacement(
      static_cast<std::size_t>(x_unlabelled.rows()),
      static_cast<std::size_t>(n_init), rng);
  BoState s;
  s.x_observed.resize(n_init, x_unlabelled.cols());
  s.y_observed.resize(n_init);
  for (int i = 0; i < n_init; ++i) {
    s.x_observed.row(i) = x_unlabelled.row(static_cast<Eigen::Index>(idx[i]));
    s.y_observed(i) = observe(f, s.x_observed.row(i).transpose(), rng);
  }
  s.rng_seed = rng.seed();
  return s;
}

void write_run_log(const std::string& path, const std::vector<BoLogRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  const Eigen::Index d = rows.empty() ? 0 : rows.front().z.size();
  out << "iteration";
  for (Eigen::Index j = 0; j < d; ++j) out << ",z" << j;
  out << ",y,best,acquisition,region,drift\n";
  for (const auto& r : rows) {
    out << r.iteration;
    for (Eigen::Index j = 0; j < r.z.size(); ++j) out << ',' << g17(r.z(j));
    out << ',' << g17(r.y) << ',' << g17(r.best) << ',';
    if (std::isfinite(r.acquisition)) out << g17(r.acquisition);
    out << ',' << r.region << ',' << g17(r.drift) << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

BoLogRow bo_step(BoState& state, BoPipeline& pipe) {
  check_black_box(pipe.black_box);
  if (state.x_observed.rows() == 0)
    throw std::invalid_argument("bo_step needs an initialized state");
  if (pipe.x_unlabelled.rows() == 0)
    throw std::invalid_argument("bo_step needs an unlabelled pool");

  // Stage on copies so a failure cannot leave a half-updated run behind.
  VaeModel vae = pipe.vae.clone();
  GplvmModel gp = pipe.gp.clone();
  Trainer trainer = pipe.trainer;

  // The surrogate has a zero-mean prior, so it sees observations
  // standardized over the labelled set; raw values are what gets stored.
  const double y_mean = state.y_observed.mean();
  double y_sd =
      std::sqrt((state.y_observed.array() - y_mean).square().mean());
  if (!(y_sd > 1e-12)) y_sd = 1.0;
  const Vec y_std = (state.y_observed.array() - y_mean) / y_sd;

  trainer.fit(vae, gp, pipe.x_unlabelled, state.x_observed, y_std,
              state.iteration);

  Mat encodings = pipe.encodings_version == vae.version
                      ? pipe.encodings
                      : encode_mean_raw(vae, pipe.x_unlabelled);
  const BoundsRegion region = fit_region(pipe.bounds, vae, encodings);

  Rng step_rng =
      Rng(state.rng_seed).fork("iter:" + std::to_string(state.iteration));
  const double y_best_std = y_std.minCoeff();
  const Vec z =
      maximize_acquisition(pipe.acquisition, gp, region, y_best_std, step_rng);

  double score = std::numeric_limits<double>::quiet_NaN();
  if (has_pointwise_score(pipe.acquisition.kind))
    score = acquisition_score(pipe.acquisition, svgp_predict(gp, z), y_best_std);

  const Vec x_new = decode_mean(vae, z);
  const double y_new = observe(pipe.black_box, x_new, step_rng);
  const double drift = (z - encode(vae, x_new).mean).norm();

  // Commit.
  const Eigen::Index n = state.x_observed.rows();
  state.x_observed.conservativeResize(n + 1, Eigen::NoChange);
  state.x_observed.row(n) = x_new.transpose();
  state.y_observed.conservativeResize(n + 1);
  state.y_observed(n) = y_new;
  const double best = std::min(state.y_observed.head(n).minCoeff(), y_new);
  state.best_trace.push_back(best);
  const long iteration = state.iteration++;

  pipe.vae = std::move(vae);
  pipe.gp = std::move(gp);
  pipe.trainer = std::move(trainer);
  pipe.encodings = std::move(encodings);
  pipe.encodings_version = pipe.vae.version;

  BoLogRow row;
  row.iteration = iteration;
  row.z = z;
  row.y = y_new;
  row.best = best;
  row.acquisition = score;
  row.region = region.describe();
  row.drift = drift;
  return row;
}

BoRunResult run_bo(const Mat& x_unlabelled, const BlackBox& f,
                   const BoRunConfig& cfg, const VaeModel* warm_vae) {
  check_black_box(f);
  validate(cfg.train);
  if (cfg.latent_dim < 1)
    throw std::invalid_argument("latent_dim must be positive");
  if (cfg.budget < 0) throw std::invalid_argument("budget must be >= 0");
  if (cfg.num_inducing < 1)
    throw std::invalid_argument("num_inducing must be positive");
  if (x_unlabelled.rows() < 1)
    throw std::invalid_argument("unlabelled pool is empty");

  const Rng root(cfg.seed);

  BoPipeline pipe;
  pipe.x_unlabelled = x_unlabelled;
  pipe.black_box = f;
  pipe.bounds = cfg.bounds;
  pipe.acquisition = cfg.acquisition;
  pipe.trainer = Trainer(cfg.train);

  if (warm_vae != nullptr) {
    if (warm_vae->input_dim != x_unlabelled.cols() ||
        warm_vae->latent_dim != cfg.latent_dim)
      throw std::invalid_argument("warm encoder does not match the run dims");
    pipe.vae = warm_vae->clone();
    pipe.trainer.assume_vae_fitted();
  } else {
    Rng vae_rng = root.fork("vae-init");
    pipe.vae = make_vae(static_cast<int>(x_unlabelled.cols()), cfg.latent_dim,
                        cfg.likelihood, vae_rng);
    pipe.trainer.fit_vae(pipe.vae, x_unlabelled);
  }

  pipe.encodings = encode_mean_raw(pipe.vae, x_unlabelled);
  pipe.encodings_version = pipe.vae.version;
  Rng inducing_rng = root.fork("inducing");
  pipe.gp = make_gplvm(
      cfg.latent_dim,
      choose_inducing(pipe.encodings, cfg.num_inducing, inducing_rng),
      cfg.gp_noise_init);

  BoRunResult out;
  Rng init_rng = root.fork("init");
  out.state = initialize(x_unlabelled, f, cfg.n_init, init_rng);
  out.state.rng_seed = root.fork("steps").seed();

  for (long k = 0; k < cfg.budget; ++k) {
    BoLogRow row;
    try {
      row = bo_step(out.state, pipe);
    } catch (const std::exception& e) {
      throw std::runtime_error("bo iteration " + std::to_string(k) + ": " +
                               e.what());
    }
    out.log.push_back(std::move(row));
    if (out.log.back().acquisition < cfg.stop_threshold) break;
  }

  out.vae = std::move(pipe.vae);
  out.gp = std::move(pipe.gp);
  return out;
}

}  // namespace lsbo
