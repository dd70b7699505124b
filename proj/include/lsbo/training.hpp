#pragma once

#include <string>
#include <vector>

#include "lsbo/gp.hpp"
#include "lsbo/rng.hpp"
#include "lsbo/vae.hpp"

namespace lsbo {

enum class TrainRegime { kDisjoint, kJoint };

TrainRegime train_regime_from_string(const std::string& s);
std::string to_string(TrainRegime regime);

struct TrainConfig {
  TrainRegime regime = TrainRegime::kDisjoint;
  double vae_lr = 1e-3;
  double gp_lr = 1e-1;
  int vae_epochs = 30;    // unlabelled fit / pretraining budget
  int gp_steps = 100;     // surrogate refit budget per call
  int joint_steps = 30;   // alternation rounds per retrain event
  int batch_size = 128;
  int retrain_period = 10;  // iterations between encoder/decoder updates
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& cfg);

struct TrainLogRow {
  long step = 0;
  std::string phase;  // "vae", "gp", "joint-u", "joint-l"
  double objective = 0.0;
  double vae_term = 0.0;
  double gp_term = 0.0;
};

void write_training_log(const std::string& path,
                        const std::vector<TrainLogRow>& rows);

// Labelled-data objective: VAE evidence bound of the observed inputs plus
// the surrogate bound evaluated through the live encoder, so its gradient
// reaches the encoder, the decoder, and all surrogate parameters. Summed
// over the batch; rng drives both reparameterizations in order. The out
// parameters, when given, receive the two addends for logging.
Tensor joint_labelled_objective(const VaeModel& vae, const GplvmModel& gp,
                                const Mat& x_observed, const Vec& y_observed,
                                Rng& rng, Tensor* vae_part = nullptr,
                                Tensor* gp_part = nullptr);

// Training driver for one optimization run. Holds the cadence state: the
// unlabelled fit happens once, surrogate refits happen warm on every call,
// and under the joint regime the encoder/decoder are revisited only when
// iteration is a multiple of retrain_period.
//
// Noise streams are forked from Rng(cfg.seed) by purpose so call order
// elsewhere cannot perturb them: "vae" for the unlabelled fit,
// "gp:<iteration>" for surrogate refits, "joint-u:<iteration>" and
// "joint-l:<iteration>" for the alternation phases. The unlabelled
// alternation stream never depends on the labelled set.
class Trainer {
 public:
  Trainer() : Trainer(TrainConfig{}) {}
  explicit Trainer(const TrainConfig& cfg);

  // One training event for BO iteration `iteration`. Optimizer moments are
  // rebuilt per call; parameters carry over (warm restarts).
  void fit(VaeModel& vae, GplvmModel& gp, const Mat& x_unlabelled,
           const Mat& x_observed, const Vec& y_observed, long iteration);

  bool vae_fitted() const { return vae_fitted_; }
  // Marks the encoder as already trained, for callers that supply one.
  void assume_vae_fitted() { vae_fitted_ = true; }
  const std::vector<TrainLogRow>& log() const { return log_; }
  void clear_log() { log_.clear(); }

  // The phases fit() is built from, usable on their own.
  void fit_vae(VaeModel& vae, const Mat& x_unlabelled);
  void fit_gp(GplvmModel& gp, const VaeModel& vae, const Mat& x_observed,
              const Vec& y_observed, long iteration);
  void fit_joint(VaeModel& vae, GplvmModel& gp, const Mat& x_unlabelled,
                 const Mat& x_observed, const Vec& y_observed, long iteration);

 private:
  TrainConfig cfg_;
  bool vae_fitted_ = false;
  long next_log_step_ = 0;
  std::vector<TrainLogRow> log_;
};

// Single-shot regime primitives. Both mutate the models in place and are
// deterministic in (cfg.seed, data); repeated calls from the same starting
// parameters produce bit-identical results.
//
// Disjoint: unlabelled VAE fit, then the surrogate bound with the encoder
// frozen. Joint: joint_steps alternating rounds of one unlabelled minibatch
// step and one full-batch labelled step (no pretraining inside).
void train_disjoint(VaeModel& vae, GplvmModel& gp, const Mat& x_unlabelled,
                    const Mat& x_observed, const Vec& y_observed,
                    const TrainConfig& cfg);
void train_joint(VaeModel& vae, GplvmModel& gp, const Mat& x_unlabelled,
                 const Mat& x_observed, const Vec& y_observed,
                 const TrainConfig& cfg);

}  // namespace lsbo
