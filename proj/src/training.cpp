#include "lsbo/training.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace lsbo {

TrainRegime train_regime_from_string(const std::string& s) {
  if (s == "disjoint") return TrainRegime::kDisjoint;
  if (s == "joint") return TrainRegime::kJoint;
  throw std::invalid_argument("unknown training regime: " + s);
}

std::string to_string(TrainRegime regime) {
  return regime == TrainRegime::kDisjoint ? "disjoint" : "joint";
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.vae_lr > 0.0) || !(cfg.gp_lr > 0.0))
    throw std::invalid_argument("TrainConfig: learning rates must be positive");
  if (cfg.vae_epochs < 1 || cfg.gp_steps < 1 || cfg.joint_steps < 1)
    throw std::invalid_argument("TrainConfig: step budgets must be positive");
  if (cfg.batch_size < 1)
    throw std::invalid_argument("TrainConfig: batch_size must be positive");
  if (cfg.retrain_period < 1)
    throw std::invalid_argument("TrainConfig: retrain_period must be >= 1");
}

void write_training_log(const std::string& path,
                        const std::vector<TrainLogRow>& rows) {
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("write_training_log: cannot open " + path);
  out << "step,phase,objective,vae_term,gp_term\n";
  for (const TrainLogRow& r : rows)
    out << r.step << ',' << r.phase << ',' << g17(r.objective) << ','
        << g17(r.vae_term) << ',' << g17(r.gp_term) << '\n';
  if (!out)
    throw std::runtime_error("write_training_log: write failed for " + path);
}

namespace {

void check_labelled(const Mat& x_observed, const Vec& y_observed,
                    const VaeModel& vae) {
  if (x_observed.rows() != y_observed.size())
    throw std::invalid_argument("training: labelled x/y size mismatch");
  if (x_observed.rows() > 0 && x_observed.cols() != vae.input_dim)
    throw std::invalid_argument("training: labelled input width mismatch");
}

}  // namespace

Tensor joint_labelled_objective(const VaeModel& vae, const GplvmModel& gp,
                                const Mat& x_observed, const Vec& y_observed,
                                Rng& rng, Tensor* vae_part, Tensor* gp_part) {
  check_labelled(x_observed, y_observed, vae);
  if (x_observed.rows() < 1)
    throw std::invalid_argument(
        "joint_labelled_objective: need labelled points");
  Tensor x = Tensor::constant(x_observed);
  ElboParts parts = elbo_parts_batch(vae, x, rng);
  EncodedBatch enc = encode_batch(vae, x);
  Tensor bound = gplvm_elbo(gp, enc.mean, enc.log_variance, y_observed, rng);
  if (vae_part) *vae_part = parts.elbo;
  if (gp_part) *gp_part = bound;
  return parts.elbo + bound;
}

Trainer::Trainer(const TrainConfig& cfg) : cfg_(cfg) { validate(cfg_); }

void Trainer::fit_vae(VaeModel& vae, const Mat& x_unlabelled) {
  AdamState opt(vae.parameters(), cfg_.vae_lr);
  Rng noise = Rng(cfg_.seed).fork("vae");
  const Eigen::Index n = x_unlabelled.rows();
  const Eigen::Index bs = std::min<Eigen::Index>(cfg_.batch_size, n);
  const Eigen::Index batches = (n + bs - 1) / bs;
  for (int epoch = 0; epoch < cfg_.vae_epochs; ++epoch) {
    for (Eigen::Index b = 0; b < batches; ++b) {
      const Eigen::Index lo = b * bs;
      const Eigen::Index len = std::min<Eigen::Index>(bs, n - lo);
      ElboParts parts = elbo_parts_batch(
          vae, Tensor::constant(x_unlabelled.middleRows(lo, len)), noise);
      Tensor loss = parts.elbo * (-1.0 / static_cast<double>(len));
      loss.backward();
      adam_step(opt);
      const double per_point = parts.elbo.scalar() / static_cast<double>(len);
      log_.push_back({next_log_step_++, "vae", per_point, per_point, 0.0});
    }
  }
  ++vae.version;
  vae_fitted_ = true;
}

void Trainer::fit_gp(GplvmModel& gp, const VaeModel& vae,
                     const Mat& x_observed, const Vec& y_observed,
                     long iteration) {
  if (x_observed.rows() < 1) return;  // surrogate stays at its prior
  const Mat enc_mean = encode_mean_raw(vae, x_observed);
  const Mat enc_lv = encode_log_variance_raw(vae, x_observed);
  AdamState opt(gp.parameters(), cfg_.gp_lr);
  Rng noise = Rng(cfg_.seed).fork("gp:" + std::to_string(iteration));
  for (int s = 0; s < cfg_.gp_steps; ++s) {
    Tensor bound = gplvm_elbo(gp, Tensor::constant(enc_mean),
                              Tensor::constant(enc_lv), y_observed, noise);
    Tensor loss = bound * -1.0;
    loss.backward();
    adam_step(opt);
    log_.push_back(
        {next_log_step_++, "gp", bound.scalar(), 0.0, bound.scalar()});
  }
}

void Trainer::fit_joint(VaeModel& vae, GplvmModel& gp, const Mat& x_unlabelled,
                        const Mat& x_observed, const Vec& y_observed,
                        long iteration) {
  AdamState vae_opt(vae.parameters(), cfg_.vae_lr);
  AdamState gp_opt(gp.parameters(), cfg_.gp_lr);
  Rng unlabelled_noise =
      Rng(cfg_.seed).fork("joint-u:" + std::to_string(iteration));
  Rng labelled_noise =
      Rng(cfg_.seed).fork("joint-l:" + std::to_string(iteration));
  const Eigen::Index n = x_unlabelled.rows();
  const Eigen::Index bs = std::min<Eigen::Index>(cfg_.batch_size, n);
  for (int round = 0; round < cfg_.joint_steps; ++round) {
    const Eigen::Index lo = (static_cast<Eigen::Index>(round) * bs) % n;
    const Eigen::Index len = std::min<Eigen::Index>(bs, n - lo);
    {
      ElboParts parts = elbo_parts_batch(
          vae, Tensor::constant(x_unlabelled.middleRows(lo, len)),
          unlabelled_noise);
      Tensor loss = parts.elbo * (-1.0 / static_cast<double>(len));
      loss.backward();
      adam_step(vae_opt);
      const double per_point = parts.elbo.scalar() / static_cast<double>(len);
      log_.push_back({next_log_step_++, "joint-u", per_point, per_point, 0.0});
    }
    if (x_observed.rows() > 0) {
      Tensor vae_term, gp_term;
      Tensor objective =
          joint_labelled_objective(vae, gp, x_observed, y_observed,
                                   labelled_noise, &vae_term, &gp_term);
      Tensor loss =
          objective * (-1.0 / static_cast<double>(x_observed.rows()));
      loss.backward();
      adam_step(vae_opt);
      adam_step(gp_opt);
      log_.push_back({next_log_step_++, "joint-l",
                      objective.scalar() / x_observed.rows(),
                      vae_term.scalar(), gp_term.scalar()});
    }
  }
  ++vae.version;
}

void Trainer::fit(VaeModel& vae, GplvmModel& gp, const Mat& x_unlabelled,
                  const Mat& x_observed, const Vec& y_observed,
                  long iteration) {
  if (x_unlabelled.rows() < 1)
    throw std::invalid_argument("Trainer::fit: unlabelled pool is empty");
  if (x_unlabelled.cols() != vae.input_dim)
    throw std::invalid_argument("Trainer::fit: unlabelled width mismatch");
  check_labelled(x_observed, y_observed, vae);

  if (!vae_fitted_) {
    fit_vae(vae, x_unlabelled);
  } else if (cfg_.regime == TrainRegime::kJoint &&
             iteration % cfg_.retrain_period == 0) {
    fit_joint(vae, gp, x_unlabelled, x_observed, y_observed, iteration);
  }
  fit_gp(gp, vae, x_observed, y_observed, iteration);
}

void train_disjoint(VaeModel& vae, GplvmModel& gp, const Mat& x_unlabelled,
                    const Mat& x_observed, const Vec& y_observed,
                    const TrainConfig& cfg) {
  TrainConfig local = cfg;
  local.regime = TrainRegime::kDisjoint;
  Trainer trainer(local);
  trainer.fit(vae, gp, x_unlabelled, x_observed, y_observed, 0);
}

void train_joint(VaeModel& vae, GplvmModel& gp, const Mat& x_unlabelled,
                 const Mat& x_observed, const Vec& y_observed,
                 const TrainConfig& cfg) {
  TrainConfig local = cfg;
  local.regime = TrainRegime::kJoint;
  validate(local);
  if (x_unlabelled.rows() < 1)
    throw std::invalid_argument("train_joint: unlabelled pool is empty");
  Trainer trainer(local);
  // the one-shot op is the alternation itself, no pretraining pass
  trainer.fit_joint(vae, gp, x_unlabelled, x_observed, y_observed, 0);
  trainer.fit_gp(gp, vae, x_observed, y_observed, 0);
}

}  // namespace lsbo
