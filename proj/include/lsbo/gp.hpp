#pragma once

#include <vector>

#include "lsbo/rng.hpp"
#include "lsbo/tensor.hpp"

namespace lsbo {

struct PredictiveGaussian {
  double mean = 0.0;
  double variance = 0.0;  // latent f variance, floored at 1e-12
};

// Sparse variational GP over the latent space with a squared-exponential
// kernel carrying one length scale per latent dimension. The variational
// distribution over the inducing outputs is N(m, LtL) with L lower
// triangular; L is stored as free strict-lower entries plus a log-diagonal
// so its diagonal stays positive. All kernel hyperparameters live in log
// space for the same reason.
struct GplvmModel {
  int latent_dim = 0;
  Tensor log_signal_variance;  // 1x1
  Tensor log_lengthscales;     // d x 1
  Tensor log_noise_variance;   // 1x1
  Tensor inducing_inputs;      // M x d
  Tensor q_mean;               // M x 1
  Tensor q_strict_lower;       // M x M, only the strict lower part is read
  Tensor q_log_diag;           // M x 1
  int num_mc_samples = 1;      // draws for the encoder-uncertainty bound

  Eigen::Index num_inducing() const { return inducing_inputs.rows(); }
  std::vector<Tensor> parameters() const;
  GplvmModel clone() const;

  double signal_variance() const;
  Vec lengthscales() const;
  double noise_variance() const;
  Mat cov_factor() const;  // dense lower L with LtL = q covariance
};

// Unit signal variance and length scales, m = 0 and LtL = K_uu, so the
// variational distribution starts at the prior.
GplvmModel make_gplvm(int latent_dim, const Mat& inducing_inputs,
                      double noise_variance = 0.1);

// Lower-triangular L with LtL = s, via Cholesky in reversed index order.
// The usual factor solves LLt = s instead, which is the wrong side here.
Mat lower_factor_ltl(const Mat& s);

// Gram matrix at fixed hyperparameters, no graph involvement.
Mat kernel_eval(double signal_variance, const Vec& lengthscales, const Mat& z1,
                const Mat& z2);

// k-means++ style spread-out subset used to seed inducing inputs. Returns
// min(m, points.rows()) rows of points.
Mat choose_inducing(const Mat& points, int m, Rng& rng);

// KL(q(u) || p(u)) with p(u) = N(0, K_uu); differentiable.
Tensor svgp_kl(const GplvmModel& m);

// Evidence lower bound for observations y at latent inputs z (n x d). The
// Gaussian-likelihood expectation is closed form; z may be a graph node, so
// gradients reach encoder parameters when z is reparameterized.
Tensor svgp_elbo(const GplvmModel& m, const Tensor& z, const Vec& y);

// Bound with uncertain inputs: averages svgp_elbo over num_samples
// reparameterized draws z = mean + exp(log_variance / 2) * eps. A
// num_samples of 0 means use m.num_mc_samples.
Tensor gplvm_elbo(const GplvmModel& m, const Tensor& enc_mean,
                  const Tensor& enc_log_variance, const Vec& y, Rng& rng,
                  int num_samples = 0);

// One-off latent prediction; use GpPosterior for repeated queries.
PredictiveGaussian svgp_predict(const GplvmModel& m, const Vec& z);

// Snapshot of everything prediction needs, so per-query cost is two
// triangular solves.
struct GpPosterior {
  Mat inducing;  // M x d
  Vec lengthscales;
  double signal_variance = 1.0;
  double noise_variance = 1.0;
  Mat chol_kuu;    // lower Cholesky factor of K_uu
  Mat cov_factor;  // lower L with LtL = q covariance
  Vec alpha;       // K_uu^{-1} m

  PredictiveGaussian predict(const Vec& z) const;
};

GpPosterior make_posterior(const GplvmModel& m);

// One joint draw of latent f over the candidate rows of zs.
Vec posterior_sample_on_set(const GplvmModel& m, const Mat& zs, Rng& rng);

}  // namespace lsbo
