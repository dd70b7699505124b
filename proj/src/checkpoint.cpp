#include "lsbo/checkpoint.hpp"

#include <fstream>
#include <stdexcept>
#include <utility>

#include "lsbo/common.hpp"
#include "lsbo/rng.hpp"

namespace lsbo {
namespace {

constexpr int kFormatVersion = 1;

void write_tensor(std::ostream& out, const char* name, const Mat& v) {
  out << name << ' ' << v.rows() << ' ' << v.cols() << '\n';
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      if (j) out << ' ';
      out << g17(v(i, j));
    }
    out << '\n';
  }
}

Mat read_tensor(std::istream& in, const std::string& name) {
  std::string got;
  Eigen::Index rows = 0, cols = 0;
  if (!(in >> got >> rows >> cols) || got != name || rows < 0 || cols < 0)
    throw std::runtime_error("checkpoint: expected tensor " + name);
  Mat v(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      if (!(in >> v(i, j)))
        throw std::runtime_error("checkpoint: truncated tensor " + name);
  if (!v.allFinite())
    throw std::runtime_error("checkpoint: non-finite entries in " + name);
  return v;
}

std::ifstream open_checkpoint(const std::string& path, const std::string& kind) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string magic, got_kind;
  int version = 0;
  if (!(in >> magic >> version >> got_kind) || magic != "lsbo-model")
    throw std::runtime_error("checkpoint: bad header in " + path);
  if (version != kFormatVersion)
    throw std::runtime_error("checkpoint: unsupported format version in " + path);
  if (got_kind != kind)
    throw std::runtime_error("checkpoint: expected a " + kind +
                             " checkpoint, found " + got_kind);
  return in;
}

void assign(Tensor& t, Mat v, const char* name) {
  if (t.value().rows() != v.rows() || t.value().cols() != v.cols())
    throw std::runtime_error(std::string("checkpoint: shape mismatch for ") +
                             name);
  t.raw_value() = std::move(v);
}

}  // namespace

void save_vae(const std::string& path, const VaeModel& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out << "lsbo-model " << kFormatVersion << " vae\n";
  out << "dims " << m.input_dim << ' ' << m.latent_dim << ' '
      << to_string(m.likelihood) << '\n';
  write_tensor(out, "enc_w1", m.enc_w1.value());
  write_tensor(out, "enc_b1", m.enc_b1.value());
  write_tensor(out, "enc_w2", m.enc_w2.value());
  write_tensor(out, "enc_b2", m.enc_b2.value());
  write_tensor(out, "dec_w1", m.dec_w1.value());
  write_tensor(out, "dec_b1", m.dec_b1.value());
  write_tensor(out, "dec_w2", m.dec_w2.value());
  write_tensor(out, "dec_b2", m.dec_b2.value());
  write_tensor(out, "dec_log_noise", m.dec_log_noise.value());
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

VaeModel load_vae(const std::string& path) {
  std::ifstream in = open_checkpoint(path, "vae");
  std::string tag, lik;
  int input = 0, latent = 0;
  if (!(in >> tag >> input >> latent >> lik) || tag != "dims")
    throw std::runtime_error("checkpoint: bad vae dims in " + path);
  Rng rng(0);
  VaeModel m = make_vae(input, latent, likelihood_from_string(lik), rng);
  assign(m.enc_w1, read_tensor(in, "enc_w1"), "enc_w1");
  assign(m.enc_b1, read_tensor(in, "enc_b1"), "enc_b1");
  assign(m.enc_w2, read_tensor(in, "enc_w2"), "enc_w2");
  assign(m.enc_b2, read_tensor(in, "enc_b2"), "enc_b2");
  assign(m.dec_w1, read_tensor(in, "dec_w1"), "dec_w1");
  assign(m.dec_b1, read_tensor(in, "dec_b1"), "dec_b1");
  assign(m.dec_w2, read_tensor(in, "dec_w2"), "dec_w2");
  assign(m.dec_b2, read_tensor(in, "dec_b2"), "dec_b2");
  assign(m.dec_log_noise, read_tensor(in, "dec_log_noise"), "dec_log_noise");
  return m;
}

void save_gplvm(const std::string& path, const GplvmModel& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out << "lsbo-model " << kFormatVersion << " gplvm\n";
  out << "dims " << m.latent_dim << ' ' << m.num_inducing() << ' '
      << m.num_mc_samples << '\n';
  write_tensor(out, "log_signal_variance", m.log_signal_variance.value());
  write_tensor(out, "log_lengthscales", m.log_lengthscales.value());
  write_tensor(out, "log_noise_variance", m.log_noise_variance.value());
  write_tensor(out, "inducing_inputs", m.inducing_inputs.value());
  write_tensor(out, "q_mean", m.q_mean.value());
  write_tensor(out, "q_strict_lower", m.q_strict_lower.value());
  write_tensor(out, "q_log_diag", m.q_log_diag.value());
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

GplvmModel load_gplvm(const std::string& path) {
  std::ifstream in = open_checkpoint(path, "gplvm");
  std::string tag;
  int latent = 0, inducing = 0, mc = 1;
  if (!(in >> tag >> latent >> inducing >> mc) || tag != "dims")
    throw std::runtime_error("checkpoint: bad gplvm dims in " + path);
  const Mat sf2 = read_tensor(in, "log_signal_variance");
  const Mat ls = read_tensor(in, "log_lengthscales");
  const Mat noise = read_tensor(in, "log_noise_variance");
  const Mat zu = read_tensor(in, "inducing_inputs");
  const Mat qm = read_tensor(in, "q_mean");
  const Mat ql = read_tensor(in, "q_strict_lower");
  const Mat qd = read_tensor(in, "q_log_diag");
  if (zu.rows() != inducing || zu.cols() != latent)
    throw std::runtime_error("checkpoint: gplvm dims disagree with tensors in " +
                             path);
  GplvmModel m = make_gplvm(latent, zu);
  m.num_mc_samples = mc;
  assign(m.log_signal_variance, sf2, "log_signal_variance");
  assign(m.log_lengthscales, ls, "log_lengthscales");
  assign(m.log_noise_variance, noise, "log_noise_variance");
  assign(m.inducing_inputs, zu, "inducing_inputs");
  assign(m.q_mean, qm, "q_mean");
  assign(m.q_strict_lower, ql, "q_strict_lower");
  assign(m.q_log_diag, qd, "q_log_diag");
  return m;
}

}  // namespace lsbo
