#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lsbo/vae.hpp"
#include "testutil.hpp"

using lsbo::EncodedDistribution;
using lsbo::Likelihood;
using lsbo::Mat;
using lsbo::Tensor;
using lsbo::VaeModel;
using lsbo::Vec;
using testutil::random_matrix;

namespace {

VaeModel small_vae(Likelihood lik, int input_dim = 5, int latent_dim = 2,
                   std::uint64_t seed = 7) {
  lsbo::Rng rng(seed);
  return lsbo::make_vae(input_dim, latent_dim, lik, rng);
}

Mat random_unit_batch(Eigen::Index n, Eigen::Index d, lsbo::Rng& rng) {
  Mat x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = rng.uniform();
  return x;
}

void zero_all_params(VaeModel& m) {
  for (Tensor p : m.parameters()) p.raw_value().setZero();
}

// Composite Simpson on [a, b]; n must be even.
double integrate(const std::function<double(double)>& f, double a, double b,
                 int n = 4000) {
  const double h = (b - a) / n;
  double acc = f(a) + f(b);
  for (int i = 1; i < n; ++i) acc += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

// Near-identity map through the tanh hidden layers: x -> z keeps the first
// two coordinates, decode pads the third with zero. Exact only at z = 0.
VaeModel near_identity_vae(double delta = 1e-4) {
  lsbo::Rng rng(3);
  VaeModel m = lsbo::make_vae(3, 2, Likelihood::kGaussian, rng);
  zero_all_params(m);
  m.enc_w1.raw_value() = delta * Mat::Identity(3, 3);
  Mat ew2 = Mat::Zero(3, 4);
  ew2(0, 0) = 1.0 / delta;
  ew2(1, 1) = 1.0 / delta;
  m.enc_w2.raw_value() = ew2;
  Mat dw1 = Mat::Zero(2, 3);
  dw1(0, 0) = delta;
  dw1(1, 1) = delta;
  m.dec_w1.raw_value() = dw1;
  m.dec_w2.raw_value() = (1.0 / delta) * Mat::Identity(3, 3);
  return m;
}

}  // namespace

TEST_CASE("make_vae validates the latent dimension") {
  lsbo::Rng rng(1);
  CHECK_THROWS_AS(lsbo::make_vae(5, 5, Likelihood::kBernoulli, rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(lsbo::make_vae(5, 0, Likelihood::kBernoulli, rng),
                  std::invalid_argument);
}

TEST_CASE("zero-weight encoder reports the prior") {
  VaeModel m = small_vae(Likelihood::kBernoulli);
  zero_all_params(m);
  Vec x = Vec::Constant(5, 0.3);
  EncodedDistribution d = lsbo::encode(m, x);
  CHECK(d.mean.size() == 2);
  CHECK(d.variance.size() == 2);
  CHECK(d.mean.cwiseAbs().maxCoeff() == 0.0);
  CHECK((d.variance - Vec::Ones(2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("encoder mean is locally Lipschitz in the input") {
  VaeModel m = small_vae(Likelihood::kGaussian);
  lsbo::Rng rng(21);
  Vec x = random_matrix(5, 1, rng, 0.5);
  // empirical local slope at a coarse scale bounds the fine-scale response
  double coarse = 0.0;
  for (int t = 0; t < 32; ++t) {
    Vec delta = random_matrix(5, 1, rng, 1.0);
    delta *= 1e-2 / delta.norm();
    Vec dm = lsbo::encode(m, Vec(x + delta)).mean - lsbo::encode(m, x).mean;
    coarse = std::max(coarse, dm.norm() / delta.norm());
  }
  for (int t = 0; t < 32; ++t) {
    Vec delta = random_matrix(5, 1, rng, 1.0);
    delta *= 1e-5 / delta.norm();
    Vec dm = lsbo::encode(m, Vec(x + delta)).mean - lsbo::encode(m, x).mean;
    CHECK(dm.norm() <= 2.0 * coarse * delta.norm() + 1e-12);
  }
}

TEST_CASE("zero-weight Bernoulli decoder emits one half everywhere") {
  VaeModel m = small_vae(Likelihood::kBernoulli);
  zero_all_params(m);
  Vec z = Vec::Constant(2, 0.7);
  Vec p = lsbo::decode_mean(m, z);
  CHECK(p.size() == 5);
  CHECK((p - Vec::Constant(5, 0.5)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("prior encoder and constant decoder make the elbo exact") {
  // mean 0 / variance 1 encoder means KL = 0, and a z-independent decoder
  // makes the log-likelihood deterministic, so the single-sample estimator
  // equals sum_x log p(x) for any draw.
  lsbo::Rng data_rng(5);
  Mat x(3, 5);
  for (Eigen::Index i = 0; i < 3; ++i)
    for (Eigen::Index j = 0; j < 5; ++j)
      x(i, j) = data_rng.uniform() < 0.5 ? 0.0 : 1.0;

  for (auto lik : {Likelihood::kBernoulli, Likelihood::kContinuousBernoulli}) {
    VaeModel m = small_vae(lik);
    zero_all_params(m);
    lsbo::Rng rng(17);
    auto parts = lsbo::elbo_parts_batch(m, Tensor::constant(x), rng);
    CHECK(parts.kl.scalar() == 0.0);
    const double expected =
        lik == Likelihood::kBernoulli ? -15.0 * std::log(2.0) : 0.0;
    CHECK(parts.elbo.scalar() == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("KL term matches the hand-worked diagonal Gaussian value") {
  // encoder forced to mean (1, 0), variance (1, 1): KL = 1/2
  VaeModel m = small_vae(Likelihood::kBernoulli, 5, 2);
  zero_all_params(m);
  Mat b2 = Mat::Zero(1, 4);
  b2(0, 0) = 1.0;
  m.enc_b2.raw_value() = b2;
  lsbo::Rng rng(9);
  Mat x = Mat::Zero(1, 5);
  auto parts = lsbo::elbo_parts_batch(m, Tensor::constant(x), rng);
  CHECK(parts.kl.scalar() == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("KL is nonnegative and vanishes only at the prior") {
  lsbo::Rng rng(31);
  for (int t = 0; t < 50; ++t) {
    VaeModel m = small_vae(Likelihood::kBernoulli, 5, 2, 100 + t);
    Mat x = random_unit_batch(2, 5, rng);
    lsbo::Rng erng(42);
    auto parts = lsbo::elbo_parts_batch(m, Tensor::constant(x), erng);
    CHECK(parts.kl.scalar() >= -1e-12);
  }
}

TEST_CASE("single-sample elbo is bounded by the quadrature log marginal") {
  // 1-d latent, Gaussian decoder: both the exact per-sample objective and
  // log p(x) are one-dimensional integrals a Simpson rule nails.
  lsbo::Rng rng(51);
  VaeModel m = lsbo::make_vae(2, 1, Likelihood::kGaussian, rng);
  Vec x(2);
  x << 0.4, -0.3;

  auto decoder_loglik = [&](double z) {
    Vec zv(1);
    zv << z;
    Vec mu = lsbo::decode_mean(m, zv);
    const double s2 = std::exp(m.dec_log_noise.scalar());
    double quad = (x - mu).squaredNorm() / s2;
    return -0.5 * (2.0 * std::log(2.0 * M_PI) + 2.0 * std::log(s2) + quad);
  };

  EncodedDistribution enc = lsbo::encode(m, x);
  const double mu_q = enc.mean(0);
  const double s_q = std::sqrt(enc.variance(0));

  const double log_marginal = std::log(integrate(
      [&](double z) {
        return std::exp(decoder_loglik(z)) *
               std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
      },
      -12.0, 12.0, 20000));

  const double expected_loglik = integrate(
      [&](double z) {
        const double u = (z - mu_q) / s_q;
        return decoder_loglik(z) * std::exp(-0.5 * u * u) /
               (s_q * std::sqrt(2.0 * M_PI));
      },
      mu_q - 10.0 * s_q, mu_q + 10.0 * s_q, 20000);
  const double kl = std::log(1.0 / s_q) + 0.5 * (s_q * s_q + mu_q * mu_q) - 0.5;
  const double exact_elbo = expected_loglik - kl;

  CHECK(exact_elbo <= log_marginal + 1e-6);

  // MC average of the single-sample estimator agrees with the exact value
  lsbo::Rng erng(77);
  double acc = 0.0;
  const int kDraws = 20000;
  for (int i = 0; i < kDraws; ++i) acc += lsbo::elbo(m, x, erng).scalar();
  acc /= kDraws;
  CHECK(std::abs(acc - exact_elbo) < 0.05);
  CHECK(acc <= log_marginal + 0.05);
}

TEST_CASE("elbo gradients match finite differences under a fixed draw") {
  lsbo::Rng data_rng(61);
  Mat xb = random_unit_batch(3, 5, data_rng);
  Mat xg = random_matrix(3, 5, data_rng);
  for (auto lik : {Likelihood::kBernoulli, Likelihood::kContinuousBernoulli,
                   Likelihood::kGaussian}) {
    VaeModel m = small_vae(lik, 5, 2, 200 + static_cast<int>(lik));
    const Mat& x = lik == Likelihood::kGaussian ? xg : xb;
    auto build = [&] {
      lsbo::Rng erng(5150);  // same draw on every rebuild
      return lsbo::elbo_parts_batch(m, Tensor::constant(x), erng).elbo;
    };
    for (Tensor p : m.parameters()) {
      CHECK(testutil::grad_check(build, p) < 1e-3);
    }
  }
}

TEST_CASE("near-identity model round-trips latent points") {
  VaeModel m = near_identity_vae();
  Vec z0 = Vec::Zero(2);
  CHECK(lsbo::roundtrip_mean(m, z0).cwiseAbs().maxCoeff() == 0.0);
  lsbo::Rng rng(71);
  for (int t = 0; t < 20; ++t) {
    Vec z = random_matrix(2, 1, rng, 0.5);
    Vec rt = lsbo::roundtrip_mean(m, z);
    CHECK(rt.size() == 2);
    CHECK((rt - z).norm() < 1e-7);
  }
}

TEST_CASE("tape and raw forward paths agree bitwise") {
  lsbo::Rng rng(81);
  for (auto lik : {Likelihood::kBernoulli, Likelihood::kGaussian}) {
    VaeModel m = small_vae(lik, 6, 3, 300 + static_cast<int>(lik));
    Mat x = random_unit_batch(4, 6, rng);
    auto enc = lsbo::encode_batch(m, Tensor::constant(x));
    CHECK((enc.mean.value() - lsbo::encode_mean_raw(m, x))
              .cwiseAbs()
              .maxCoeff() == 0.0);
    CHECK((enc.log_variance.value() - lsbo::encode_log_variance_raw(m, x))
              .cwiseAbs()
              .maxCoeff() == 0.0);
    Mat z = random_matrix(4, 3, rng, 0.8);
    Tensor dec = lsbo::decode_mean_batch(m, Tensor::constant(z));
    CHECK((dec.value() - lsbo::decode_mean_raw(m, z)).cwiseAbs().maxCoeff() ==
          0.0);
  }
}

TEST_CASE("input validation rejects out-of-support and misshaped data") {
  VaeModel m = small_vae(Likelihood::kBernoulli);
  CHECK_THROWS_AS(lsbo::encode(m, Vec::Constant(4, 0.5)),
                  std::invalid_argument);
  CHECK_THROWS_AS(lsbo::encode(m, Vec::Constant(5, 1.5)),
                  std::invalid_argument);
  VaeModel g = small_vae(Likelihood::kGaussian);
  CHECK_NOTHROW(lsbo::encode(g, Vec::Constant(5, 1.5)));
  CHECK_THROWS_AS(lsbo::decode_mean(m, Vec::Zero(3)), std::invalid_argument);
}

TEST_CASE("training raises a Monte Carlo elbo estimate") {
  // structured 12-dim binary data: each column has its own firing rate
  auto make_data = [](lsbo::Rng& rng) {
    Mat x(160, 12);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        x(i, j) = rng.uniform() < (j + 1.0) / 13.0 ? 1.0 : 0.0;
    return x;
  };
  auto mc_elbo = [](const VaeModel& m, const Mat& x, int draws) {
    lsbo::Rng erng(999);
    double acc = 0.0;
    for (int s = 0; s < draws; ++s)
      acc += lsbo::elbo_parts_batch(m, Tensor::constant(x), erng)
                 .elbo.scalar();
    return acc / (draws * static_cast<double>(x.rows()));
  };

  double gain = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    lsbo::Rng rng(1000 + seed);
    Mat x = make_data(rng);
    VaeModel m = lsbo::make_vae(12, 3, Likelihood::kBernoulli, rng);
    const double before = mc_elbo(m, x, 200);
    lsbo::AdamState opt(m.parameters(), 1e-3);
    lsbo::Rng erng(2000 + seed);
    for (int step = 0; step < 500; ++step) {
      const Eigen::Index lo = (step * 32) % x.rows();
      const Eigen::Index n = std::min<Eigen::Index>(32, x.rows() - lo);
      Mat batch = x.middleRows(lo, n);
      Tensor loss =
          lsbo::elbo_parts_batch(m, Tensor::constant(batch), erng).elbo *
          (-1.0 / static_cast<double>(n));
      loss.backward();
      lsbo::adam_step(opt);
    }
    const double after = mc_elbo(m, x, 200);
    gain += after - before;
  }
  CHECK(gain / 3.0 >= 0.0);
}

TEST_CASE("a trained model reconstructs better than an untrained one") {
  lsbo::Rng rng(91);
  Mat x(120, 12);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int start = static_cast<int>(rng.integer(9));
    for (Eigen::Index j = 0; j < 12; ++j)
      x(i, j) = (j >= start && j < start + 4) ? 1.0 : 0.0;
  }
  auto recon_err = [&](const VaeModel& m) {
    Mat z = lsbo::encode_mean_raw(m, x);
    Mat rec = lsbo::decode_mean_raw(m, z);
    return (rec - x).norm();
  };
  VaeModel m = lsbo::make_vae(12, 2, Likelihood::kBernoulli, rng);
  const double before = recon_err(m);
  lsbo::AdamState opt(m.parameters(), 1e-3);
  lsbo::Rng erng(92);
  for (int step = 0; step < 600; ++step) {
    Tensor loss = lsbo::elbo_parts_batch(m, Tensor::constant(x), erng).elbo *
                  (-1.0 / 120.0);
    loss.backward();
    lsbo::adam_step(opt);
  }
  CHECK(recon_err(m) < before);
}
