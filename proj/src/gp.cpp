#include "lsbo/gp.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

namespace lsbo {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kVarianceFloor = 1e-12;

void check_latent(const GplvmModel& m, Eigen::Index cols, const char* what) {
  if (cols != m.latent_dim)
    throw std::invalid_argument(std::string(what) +
                                ": latent dimension mismatch");
}

// Differentiable Gram matrix between row sets, built from audited
// primitives so its gradient needs no dedicated rule.
Tensor gram(const Tensor& log_sf2, const Tensor& log_ls, const Tensor& z1,
            const Tensor& z2) {
  Tensor inv_ls = exp(-log_ls);
  Tensor s1 = scale_columns(z1, inv_ls);
  Tensor s2 = scale_columns(z2, inv_ls);
  Tensor d2 = outer_sum(rowwise_sqnorm(s1), rowwise_sqnorm(s2)) -
              2.0 * matmul(s1, transpose(s2));
  return exp(log_sf2) * exp(-0.5 * d2);
}

Tensor strict_lower_mask(Eigen::Index m) {
  Mat mask = Mat::Zero(m, m);
  for (Eigen::Index i = 1; i < m; ++i)
    for (Eigen::Index j = 0; j < i; ++j) mask(i, j) = 1.0;
  return Tensor::constant(std::move(mask));
}

// L = strict lower entries + exp(log diagonal), as a graph node.
Tensor cov_factor_node(const GplvmModel& m) {
  return m.q_strict_lower * strict_lower_mask(m.num_inducing()) +
         make_diag(exp(m.q_log_diag));
}

struct ElboContext {
  Tensor kuu;
  Tensor chol_kuu;
  Tensor lfac;
};

ElboContext make_context(const GplvmModel& m) {
  ElboContext ctx;
  ctx.kuu = gram(m.log_signal_variance, m.log_lengthscales, m.inducing_inputs,
                 m.inducing_inputs);
  ctx.chol_kuu = cholesky(ctx.kuu);
  ctx.lfac = cov_factor_node(m);
  return ctx;
}

Tensor kl_from_context(const GplvmModel& m, const ElboContext& ctx) {
  const double num_inducing = static_cast<double>(m.num_inducing());
  Tensor w = tri_solve_lower(ctx.chol_kuu, transpose(ctx.lfac));
  Tensor trace_term = sum(w * w);
  Tensor mw = tri_solve_lower(ctx.chol_kuu, m.q_mean);
  Tensor quad_term = sum(mw * mw);
  Tensor logdet_kuu = 2.0 * sum(log(diag_part(ctx.chol_kuu)));
  Tensor logdet_s = 2.0 * sum(m.q_log_diag);
  return 0.5 * (trace_term + quad_term - num_inducing - logdet_s +
                logdet_kuu);
}

Tensor elbo_from_context(const GplvmModel& m, const ElboContext& ctx,
                         const Tensor& z, const Vec& y) {
  const Eigen::Index n = z.rows();
  if (n < 1) throw std::invalid_argument("svgp_elbo: need at least one row");
  check_latent(m, z.cols(), "svgp_elbo");
  if (y.size() != n)
    throw std::invalid_argument("svgp_elbo: target length mismatch");

  Tensor kfu =
      gram(m.log_signal_variance, m.log_lengthscales, z, m.inducing_inputs);
  Tensor v = tri_solve_lower(ctx.chol_kuu, transpose(kfu));
  Tensor b = tri_solve_lower_t(ctx.chol_kuu, v);
  Tensor mu = matmul(transpose(b), m.q_mean);
  Tensor lb = matmul(ctx.lfac, b);
  Tensor fvar = broadcast_rows(exp(m.log_signal_variance),
                               n) +
                rowwise_sqnorm(transpose(lb)) - rowwise_sqnorm(transpose(v));
  Tensor resid = Tensor::constant(Mat(y)) - mu;
  const double dn = static_cast<double>(n);
  Tensor data_term =
      -0.5 * ((sum(resid * resid) + sum(fvar)) / exp(m.log_noise_variance)) -
      (0.5 * dn) * m.log_noise_variance - 0.5 * dn * kLog2Pi;
  return data_term - kl_from_context(m, ctx);
}

}  // namespace

std::vector<Tensor> GplvmModel::parameters() const {
  return {log_signal_variance, log_lengthscales, log_noise_variance,
          inducing_inputs,     q_mean,           q_strict_lower,
          q_log_diag};
}

GplvmModel GplvmModel::clone() const {
  GplvmModel c;
  c.latent_dim = latent_dim;
  c.log_signal_variance = Tensor::parameter(log_signal_variance.value());
  c.log_lengthscales = Tensor::parameter(log_lengthscales.value());
  c.log_noise_variance = Tensor::parameter(log_noise_variance.value());
  c.inducing_inputs = Tensor::parameter(inducing_inputs.value());
  c.q_mean = Tensor::parameter(q_mean.value());
  c.q_strict_lower = Tensor::parameter(q_strict_lower.value());
  c.q_log_diag = Tensor::parameter(q_log_diag.value());
  c.num_mc_samples = num_mc_samples;
  return c;
}

double GplvmModel::signal_variance() const {
  return std::exp(log_signal_variance.scalar());
}

Vec GplvmModel::lengthscales() const {
  return log_lengthscales.value().col(0).array().exp().matrix();
}

double GplvmModel::noise_variance() const {
  return std::exp(log_noise_variance.scalar());
}

Mat GplvmModel::cov_factor() const {
  const Eigen::Index m = num_inducing();
  Mat l = Mat::Zero(m, m);
  l.triangularView<Eigen::StrictlyLower>() = q_strict_lower.value();
  l.diagonal() = q_log_diag.value().col(0).array().exp().matrix();
  return l;
}

Mat lower_factor_ltl(const Mat& s) {
  Mat reversed = s.reverse();
  Mat c = cholesky_raw(reversed);
  Mat upper = c.reverse();
  return upper.transpose();
}

Mat kernel_eval(double signal_variance, const Vec& lengthscales, const Mat& z1,
                const Mat& z2) {
  if (z1.cols() != z2.cols() || z1.cols() != lengthscales.size())
    throw std::invalid_argument("kernel_eval: dimension mismatch");
  if (signal_variance <= 0.0 || lengthscales.minCoeff() <= 0.0)
    throw std::invalid_argument("kernel_eval: hyperparameters must be positive");
  Vec inv = lengthscales.cwiseInverse();
  Mat s1 = z1 * inv.asDiagonal();
  Mat s2 = z2 * inv.asDiagonal();
  Vec n1 = s1.rowwise().squaredNorm();
  Vec n2 = s2.rowwise().squaredNorm();
  Mat d2 = n1.replicate(1, s2.rows()) +
           n2.transpose().replicate(s1.rows(), 1) - 2.0 * (s1 * s2.transpose());
  return signal_variance * (-0.5 * d2.array()).exp().matrix();
}

GplvmModel make_gplvm(int latent_dim, const Mat& inducing_inputs,
                      double noise_variance) {
  if (latent_dim < 1)
    throw std::invalid_argument("make_gplvm: latent_dim must be positive");
  if (inducing_inputs.rows() < 1 || inducing_inputs.cols() != latent_dim)
    throw std::invalid_argument("make_gplvm: bad inducing input shape");
  if (noise_variance <= 0.0)
    throw std::invalid_argument("make_gplvm: noise variance must be positive");
  const Eigen::Index m = inducing_inputs.rows();

  GplvmModel model;
  model.latent_dim = latent_dim;
  model.log_signal_variance = Tensor::parameter(0.0);
  model.log_lengthscales = Tensor::parameter(Mat::Zero(latent_dim, 1));
  model.log_noise_variance = Tensor::parameter(std::log(noise_variance));
  model.inducing_inputs = Tensor::parameter(inducing_inputs);
  model.q_mean = Tensor::parameter(Mat::Zero(m, 1));

  Mat kuu = kernel_eval(1.0, Vec::Ones(latent_dim), inducing_inputs,
                        inducing_inputs);
  Mat l = lower_factor_ltl(kuu);
  Mat strict = Mat::Zero(m, m);
  strict.triangularView<Eigen::StrictlyLower>() = l;
  model.q_strict_lower = Tensor::parameter(std::move(strict));
  model.q_log_diag =
      Tensor::parameter(Mat(l.diagonal().array().log().matrix()));
  return model;
}

Mat choose_inducing(const Mat& points, int m, Rng& rng) {
  const Eigen::Index n = points.rows();
  if (n < 1 || m < 1)
    throw std::invalid_argument("choose_inducing: need points and m >= 1");
  if (m >= n) return points;

  std::vector<Eigen::Index> chosen;
  chosen.reserve(m);
  chosen.push_back(static_cast<Eigen::Index>(rng.integer(n)));
  Vec d2 =
      (points.rowwise() - points.row(chosen[0])).rowwise().squaredNorm();
  while (static_cast<int>(chosen.size()) < m) {
    const double total = d2.sum();
    Eigen::Index pick = -1;
    if (total > 0.0) {
      double r = rng.uniform() * total;
      for (Eigen::Index i = 0; i < n; ++i) {
        r -= d2(i);
        if (r <= 0.0) {
          pick = i;
          break;
        }
      }
      if (pick < 0) pick = n - 1;
    } else {
      // all remaining candidates coincide with chosen ones
      pick = static_cast<Eigen::Index>(rng.integer(n));
    }
    chosen.push_back(pick);
    d2 = d2.cwiseMin(
        Vec((points.rowwise() - points.row(pick)).rowwise().squaredNorm()));
  }

  Mat out(m, points.cols());
  for (int i = 0; i < m; ++i) out.row(i) = points.row(chosen[i]);
  return out;
}

Tensor svgp_kl(const GplvmModel& m) {
  return kl_from_context(m, make_context(m));
}

Tensor svgp_elbo(const GplvmModel& m, const Tensor& z, const Vec& y) {
  return elbo_from_context(m, make_context(m), z, y);
}

Tensor gplvm_elbo(const GplvmModel& m, const Tensor& enc_mean,
                  const Tensor& enc_log_variance, const Vec& y, Rng& rng,
                  int num_samples) {
  if (enc_mean.rows() != enc_log_variance.rows() ||
      enc_mean.cols() != enc_log_variance.cols())
    throw std::invalid_argument("gplvm_elbo: encoding shape mismatch");
  check_latent(m, enc_mean.cols(), "gplvm_elbo");
  const int draws = num_samples > 0 ? num_samples : m.num_mc_samples;
  if (draws < 1)
    throw std::invalid_argument("gplvm_elbo: need at least one sample");

  ElboContext ctx = make_context(m);
  Tensor sigma = exp(0.5 * enc_log_variance);
  Tensor acc;
  for (int s = 0; s < draws; ++s) {
    Mat eps(enc_mean.rows(), enc_mean.cols());
    for (Eigen::Index i = 0; i < eps.rows(); ++i)
      for (Eigen::Index j = 0; j < eps.cols(); ++j) eps(i, j) = rng.normal();
    Tensor z = enc_mean + sigma * Tensor::constant(std::move(eps));
    Tensor term = elbo_from_context(m, ctx, z, y);
    acc = acc.defined() ? acc + term : term;
  }
  return acc * (1.0 / static_cast<double>(draws));
}

PredictiveGaussian svgp_predict(const GplvmModel& m, const Vec& z) {
  return make_posterior(m).predict(z);
}

PredictiveGaussian GpPosterior::predict(const Vec& z) const {
  if (z.size() != inducing.cols())
    throw std::invalid_argument("predict: latent dimension mismatch");
  Mat krow = kernel_eval(signal_variance, lengthscales, Mat(z.transpose()),
                         inducing);
  Vec ku = krow.row(0);
  Vec t = chol_kuu.triangularView<Eigen::Lower>().solve(ku);
  Vec a = chol_kuu.transpose().triangularView<Eigen::Upper>().solve(t);
  PredictiveGaussian out;
  out.mean = ku.dot(alpha);
  const double var = signal_variance - t.squaredNorm() +
                     (cov_factor.triangularView<Eigen::Lower>() * a)
                         .squaredNorm();
  out.variance = std::max(var, kVarianceFloor);
  return out;
}

GpPosterior make_posterior(const GplvmModel& m) {
  GpPosterior p;
  p.inducing = m.inducing_inputs.value();
  p.lengthscales = m.lengthscales();
  p.signal_variance = m.signal_variance();
  p.noise_variance = m.noise_variance();
  Mat kuu = kernel_eval(p.signal_variance, p.lengthscales, p.inducing,
                        p.inducing);
  p.chol_kuu = cholesky_raw(kuu);
  p.cov_factor = m.cov_factor();
  Vec mvec = m.q_mean.value().col(0);
  Vec t = p.chol_kuu.triangularView<Eigen::Lower>().solve(mvec);
  p.alpha = p.chol_kuu.transpose().triangularView<Eigen::Upper>().solve(t);
  return p;
}

Vec posterior_sample_on_set(const GplvmModel& m, const Mat& zs, Rng& rng) {
  if (zs.rows() < 1)
    throw std::invalid_argument("posterior_sample_on_set: empty set");
  check_latent(m, zs.cols(), "posterior_sample_on_set");

  const double sf2 = m.signal_variance();
  const Vec ls = m.lengthscales();
  const Mat& zu = m.inducing_inputs.value();
  Mat kuu = kernel_eval(sf2, ls, zu, zu);
  Mat lk = cholesky_raw(kuu);
  Mat kus = kernel_eval(sf2, ls, zu, zs);
  Mat v = lk.triangularView<Eigen::Lower>().solve(kus);
  Mat b = lk.transpose().triangularView<Eigen::Upper>().solve(v);
  Vec mean = b.transpose() * m.q_mean.value().col(0);
  Mat lb = m.cov_factor().triangularView<Eigen::Lower>() * b;
  Mat cov = kernel_eval(sf2, ls, zs, zs) - v.transpose() * v +
            lb.transpose() * lb;
  cov = 0.5 * (cov + cov.transpose());
  Mat lc = cholesky_raw(cov);
  Vec eps(zs.rows());
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps(i) = rng.normal();
  return mean + lc * eps;
}

}  // namespace lsbo
