#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lsbo/rng.hpp"
#include "lsbo/tensor.hpp"

namespace lsbo {

enum class Likelihood { kBernoulli, kContinuousBernoulli, kGaussian };

Likelihood likelihood_from_string(const std::string& s);
std::string to_string(Likelihood lik);

struct EncodedDistribution {
  Vec mean;
  Vec variance;  // diagonal, strictly positive
};

// Encoder input -> input -> 2d and decoder d -> input -> input affine
// stacks with one tanh hidden layer each. Tensors are shared handles;
// use clone() for an independent parameter snapshot.
struct VaeModel {
  int input_dim = 0;
  int latent_dim = 0;
  Likelihood likelihood = Likelihood::kBernoulli;

  Tensor enc_w1, enc_b1, enc_w2, enc_b2;
  Tensor dec_w1, dec_b1, dec_w2, dec_b2;
  Tensor dec_log_noise;  // gaussian output noise, log sigma^2 (1x1)

  // Bumped by trainers after every parameter mutation so that consumers
  // can cache derived quantities (encodings, bounds) per version.
  std::uint64_t version = 0;

  std::vector<Tensor> parameters() const;
  VaeModel clone() const;
};

// Xavier-uniform weights, zero biases. Requires 0 < latent_dim < input_dim.
VaeModel make_vae(int input_dim, int latent_dim, Likelihood lik, Rng& rng);

// ---------------------------------------------------------------------------
// tape paths (rows are samples)

struct EncodedBatch {
  Tensor mean;          // n x d
  Tensor log_variance;  // n x d, clamped to [-10, 10]
};

EncodedBatch encode_batch(const VaeModel& m, const Tensor& x);

// Pre-likelihood decoder output: logits for the Bernoulli family, means for
// the Gaussian one.
Tensor decode_raw_batch(const VaeModel& m, const Tensor& z);

// Expected value of the decoded distribution (probabilities for the
// Bernoulli family, means for Gaussian).
Tensor decode_mean_batch(const VaeModel& m, const Tensor& z);

struct ElboParts {
  Tensor loglik;  // summed over batch rows and dimensions
  Tensor kl;      // KL(q(z|x) || N(0, I)), summed over batch rows
  Tensor elbo;    // loglik - kl
};

// Single-sample reparameterized objective; one normal draw per latent
// coordinate is taken from rng, so a fixed seed fixes the estimate.
ElboParts elbo_parts_batch(const VaeModel& m, const Tensor& x, Rng& rng);

// ---------------------------------------------------------------------------
// single-input conveniences

EncodedDistribution encode(const VaeModel& m, const Vec& x);
Vec decode_mean(const VaeModel& m, const Vec& z);
Tensor elbo(const VaeModel& m, const Vec& x, Rng& rng);

// mu_phi(decode_mean(z)): encoder mean of the decoded expectation.
Vec roundtrip_mean(const VaeModel& m, const Vec& z);
double roundtrip_distance(const VaeModel& m, const Vec& z);

// ---------------------------------------------------------------------------
// tape-free forward paths (same arithmetic as the tape ops; used by hot
// loops that never differentiate)

Mat encode_mean_raw(const VaeModel& m, const Mat& x);
Mat encode_log_variance_raw(const VaeModel& m, const Mat& x);
Mat decode_mean_raw(const VaeModel& m, const Mat& z);

}  // namespace lsbo
