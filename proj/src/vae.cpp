#include "lsbo/vae.hpp"

#include <cmath>
#include <sstream>

namespace lsbo {

namespace {

constexpr double kLogVarLo = -10.0;
constexpr double kLogVarHi = 10.0;
constexpr double kLog2Pi = 1.8378770664093453;

Mat xavier_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Mat w(fan_in, fan_out);
  for (Eigen::Index i = 0; i < fan_in; ++i)
    for (Eigen::Index j = 0; j < fan_out; ++j)
      w(i, j) = rng.uniform(-bound, bound);
  return w;
}

void check_input_batch(const VaeModel& m, const Mat& x) {
  if (x.cols() != m.input_dim) {
    std::ostringstream os;
    os << "vae: input has " << x.cols() << " columns, model expects "
       << m.input_dim;
    throw std::invalid_argument(os.str());
  }
  if (!x.allFinite()) throw NumericalError("vae: non-finite input");
  if (m.likelihood != Likelihood::kGaussian) {
    if (x.minCoeff() < 0.0 || x.maxCoeff() > 1.0)
      throw std::invalid_argument(
          "vae: Bernoulli-family inputs must lie in [0, 1]");
  }
}

void check_latent_batch(const VaeModel& m, const Mat& z) {
  if (z.cols() != m.latent_dim) {
    std::ostringstream os;
    os << "vae: latent input has " << z.cols() << " columns, model expects "
       << m.latent_dim;
    throw std::invalid_argument(os.str());
  }
  if (!z.allFinite()) throw NumericalError("vae: non-finite latent input");
}

}  // namespace

Likelihood likelihood_from_string(const std::string& s) {
  if (s == "bernoulli") return Likelihood::kBernoulli;
  if (s == "continuous_bernoulli") return Likelihood::kContinuousBernoulli;
  if (s == "gaussian") return Likelihood::kGaussian;
  throw std::invalid_argument("unknown likelihood: " + s);
}

std::string to_string(Likelihood lik) {
  switch (lik) {
    case Likelihood::kBernoulli:
      return "bernoulli";
    case Likelihood::kContinuousBernoulli:
      return "continuous_bernoulli";
    case Likelihood::kGaussian:
      return "gaussian";
  }
  throw std::logic_error("to_string: bad likelihood");
}

std::vector<Tensor> VaeModel::parameters() const {
  std::vector<Tensor> ps = {enc_w1, enc_b1, enc_w2, enc_b2,
                            dec_w1, dec_b1, dec_w2, dec_b2};
  if (likelihood == Likelihood::kGaussian) ps.push_back(dec_log_noise);
  return ps;
}

VaeModel VaeModel::clone() const {
  VaeModel c = *this;
  c.enc_w1 = Tensor::parameter(enc_w1.value());
  c.enc_b1 = Tensor::parameter(enc_b1.value());
  c.enc_w2 = Tensor::parameter(enc_w2.value());
  c.enc_b2 = Tensor::parameter(enc_b2.value());
  c.dec_w1 = Tensor::parameter(dec_w1.value());
  c.dec_b1 = Tensor::parameter(dec_b1.value());
  c.dec_w2 = Tensor::parameter(dec_w2.value());
  c.dec_b2 = Tensor::parameter(dec_b2.value());
  c.dec_log_noise = Tensor::parameter(dec_log_noise.value());
  return c;
}

VaeModel make_vae(int input_dim, int latent_dim, Likelihood lik, Rng& rng) {
  if (latent_dim < 1 || latent_dim >= input_dim)
    throw std::invalid_argument(
        "make_vae: need 0 < latent_dim < input_dim");
  VaeModel m;
  m.input_dim = input_dim;
  m.latent_dim = latent_dim;
  m.likelihood = lik;
  m.enc_w1 = Tensor::parameter(xavier_uniform(input_dim, input_dim, rng));
  m.enc_b1 = Tensor::parameter(Mat::Zero(1, input_dim));
  m.enc_w2 = Tensor::parameter(xavier_uniform(input_dim, 2 * latent_dim, rng));
  m.enc_b2 = Tensor::parameter(Mat::Zero(1, 2 * latent_dim));
  m.dec_w1 = Tensor::parameter(xavier_uniform(latent_dim, input_dim, rng));
  m.dec_b1 = Tensor::parameter(Mat::Zero(1, input_dim));
  m.dec_w2 = Tensor::parameter(xavier_uniform(input_dim, input_dim, rng));
  m.dec_b2 = Tensor::parameter(Mat::Zero(1, input_dim));
  m.dec_log_noise = Tensor::parameter(Mat::Zero(1, 1));
  return m;
}

// ---------------------------------------------------------------------------
// tape paths

EncodedBatch encode_batch(const VaeModel& m, const Tensor& x) {
  check_input_batch(m, x.value());
  const Eigen::Index n = x.rows();
  Tensor h = tanh(matmul(x, m.enc_w1) + broadcast_rows(m.enc_b1, n));
  Tensor out = matmul(h, m.enc_w2) + broadcast_rows(m.enc_b2, n);
  EncodedBatch e;
  e.mean = slice_cols(out, 0, m.latent_dim);
  e.log_variance =
      clamp(slice_cols(out, m.latent_dim, m.latent_dim), kLogVarLo, kLogVarHi);
  return e;
}

Tensor decode_raw_batch(const VaeModel& m, const Tensor& z) {
  check_latent_batch(m, z.value());
  const Eigen::Index n = z.rows();
  Tensor h = tanh(matmul(z, m.dec_w1) + broadcast_rows(m.dec_b1, n));
  return matmul(h, m.dec_w2) + broadcast_rows(m.dec_b2, n);
}

Tensor decode_mean_batch(const VaeModel& m, const Tensor& z) {
  Tensor raw = decode_raw_batch(m, z);
  if (m.likelihood == Likelihood::kGaussian) return raw;
  return sigmoid(raw);
}

ElboParts elbo_parts_batch(const VaeModel& m, const Tensor& x, Rng& rng) {
  EncodedBatch enc = encode_batch(m, x);
  const Eigen::Index n = x.rows();
  const Eigen::Index d = m.latent_dim;

  Mat eps(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) eps(i, j) = rng.normal();

  Tensor sigma = exp(enc.log_variance * 0.5);
  Tensor z = enc.mean + sigma * Tensor::constant(eps);
  Tensor raw = decode_raw_batch(m, z);

  ElboParts parts;
  switch (m.likelihood) {
    case Likelihood::kBernoulli:
      parts.loglik = sum(x * raw - softplus(raw));
      break;
    case Likelihood::kContinuousBernoulli:
      parts.loglik = sum(x * raw - softplus(raw)) + sum(cb_log_norm(raw));
      break;
    case Likelihood::kGaussian: {
      const double total = static_cast<double>(x.size());
      Tensor resid = x - raw;
      parts.loglik = (sum(resid * resid) * exp(-m.dec_log_noise) +
                      total * m.dec_log_noise + total * kLog2Pi) *
                     -0.5;
      break;
    }
  }
  parts.kl = sum(exp(enc.log_variance) + enc.mean * enc.mean -
                 enc.log_variance - 1.0) *
             0.5;
  parts.elbo = parts.loglik - parts.kl;
  return parts;
}

// ---------------------------------------------------------------------------
// single-input conveniences

EncodedDistribution encode(const VaeModel& m, const Vec& x) {
  Mat xb = x.transpose();
  EncodedDistribution d;
  d.mean = encode_mean_raw(m, xb).row(0).transpose();
  d.variance = encode_log_variance_raw(m, xb)
                   .row(0)
                   .transpose()
                   .array()
                   .exp()
                   .matrix();
  return d;
}

Vec decode_mean(const VaeModel& m, const Vec& z) {
  return decode_mean_raw(m, Mat(z.transpose())).row(0).transpose();
}

Tensor elbo(const VaeModel& m, const Vec& x, Rng& rng) {
  return elbo_parts_batch(m, Tensor::constant(Mat(x.transpose())), rng).elbo;
}

Vec roundtrip_mean(const VaeModel& m, const Vec& z) {
  Mat x = decode_mean_raw(m, Mat(z.transpose()));
  return encode_mean_raw(m, x).row(0).transpose();
}

double roundtrip_distance(const VaeModel& m, const Vec& z) {
  return (roundtrip_mean(m, z) - z).norm();
}

// ---------------------------------------------------------------------------
// tape-free forward paths

namespace {

Mat encoder_out_raw(const VaeModel& m, const Mat& x) {
  check_input_batch(m, x);
  Mat h = (x * m.enc_w1.value()).rowwise() + m.enc_b1.value().row(0);
  h = h.array().tanh().matrix();
  Mat out = (h * m.enc_w2.value()).rowwise() + m.enc_b2.value().row(0);
  return out;
}

}  // namespace

Mat encode_mean_raw(const VaeModel& m, const Mat& x) {
  return encoder_out_raw(m, x).leftCols(m.latent_dim);
}

Mat encode_log_variance_raw(const VaeModel& m, const Mat& x) {
  Mat lv = encoder_out_raw(m, x).rightCols(m.latent_dim);
  return lv.array().max(kLogVarLo).min(kLogVarHi).matrix();
}

Mat decode_mean_raw(const VaeModel& m, const Mat& z) {
  check_latent_batch(m, z);
  Mat h = (z * m.dec_w1.value()).rowwise() + m.dec_b1.value().row(0);
  h = h.array().tanh().matrix();
  Mat raw = (h * m.dec_w2.value()).rowwise() + m.dec_b2.value().row(0);
  if (m.likelihood == Likelihood::kGaussian) return raw;
  return (0.5 * (1.0 + (0.5 * raw.array()).tanh())).matrix();
}

}  // namespace lsbo
