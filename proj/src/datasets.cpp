#include "lsbo/datasets.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace lsbo {

namespace {

constexpr int kCanvas = 10;
constexpr double kAreaCap = 60.0;

void check_pixels(const Vec& pixels, const char* what) {
  if (pixels.size() != kCanvas * kCanvas)
    throw std::invalid_argument(std::string(what) + ": expected 100 pixels");
}

}  // namespace

Vec shape_rasterize(const ShapeParams& p) {
  if (!(p.half_width > 0.0) || !(p.half_height > 0.0))
    throw std::invalid_argument("shape_rasterize: extents must be positive");
  const double c = std::cos(p.angle);
  const double s = std::sin(p.angle);
  Vec out(kCanvas * kCanvas);
  for (int r = 0; r < kCanvas; ++r) {
    for (int col = 0; col < kCanvas; ++col) {
      const double dx = col + 0.5 - p.cx;
      const double dy = r + 0.5 - p.cy;
      // rotate the center offset back into the rectangle frame
      const double u = c * dx + s * dy;
      const double v = -s * dx + c * dy;
      const bool inside =
          std::abs(u) <= p.half_width && std::abs(v) <= p.half_height;
      out(r * kCanvas + col) = inside ? 1.0 : 0.0;
    }
  }
  return out;
}

std::vector<ShapeImage> shape_generate(int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("shape_generate: n must be positive");
  std::vector<ShapeImage> imgs;
  imgs.reserve(n);
  while (static_cast<int>(imgs.size()) < n) {
    ShapeParams p;
    p.cx = rng.uniform(0.0, 10.0);
    p.cy = rng.uniform(0.0, 10.0);
    p.half_width = rng.uniform(0.5, 4.0);
    p.half_height = rng.uniform(0.5, 4.0);
    p.angle = rng.uniform(0.0, 3.14159265358979323846);
    Vec pixels = shape_rasterize(p);
    if (pixels.sum() > kAreaCap) continue;  // keep big shapes out of training
    imgs.push_back(ShapeImage{p, std::move(pixels)});
  }
  return imgs;
}

double shape_area(const Vec& pixels) {
  check_pixels(pixels, "shape_area");
  return pixels.sum();
}

Mat shape_pixel_matrix(const std::vector<ShapeImage>& imgs) {
  Mat out(static_cast<Eigen::Index>(imgs.size()), kCanvas * kCanvas);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    check_pixels(imgs[i].pixels, "shape_pixel_matrix");
    out.row(i) = imgs[i].pixels.transpose();
  }
  return out;
}

SyntheticBenchmark make_synthetic(int ambient_dim, int intrinsic_dim,
                                  std::uint64_t seed) {
  if (intrinsic_dim < 1 || ambient_dim < intrinsic_dim)
    throw std::invalid_argument(
        "make_synthetic: need ambient_dim >= intrinsic_dim >= 1");
  SyntheticBenchmark bench;
  bench.ambient_dim = ambient_dim;
  bench.intrinsic_dim = intrinsic_dim;
  Rng rng(seed);
  bench.weights = Mat(ambient_dim, intrinsic_dim);
  for (int i = 0; i < ambient_dim; ++i)
    for (int j = 0; j < intrinsic_dim; ++j)
      bench.weights(i, j) = 0.4 * rng.normal();
  // least-squares inverse of the linear part
  Mat gram = bench.weights.transpose() * bench.weights;
  bench.pseudo_inverse = gram.ldlt().solve(bench.weights.transpose());
  bench.optimum = Vec(intrinsic_dim);
  for (int j = 0; j < intrinsic_dim; ++j)
    bench.optimum(j) =
        rng.uniform(-0.75 * bench.box_half_width, 0.75 * bench.box_half_width);
  return bench;
}

Vec synthetic_embed(const SyntheticBenchmark& bench, const Vec& t) {
  if (t.size() != bench.intrinsic_dim)
    throw std::invalid_argument("synthetic_embed: dimension mismatch");
  return (bench.weights * t).array().tanh().matrix();
}

double synthetic_eval(const SyntheticBenchmark& bench, const Vec& x) {
  if (x.size() != bench.ambient_dim)
    throw std::invalid_argument("synthetic_eval: dimension mismatch");
  const double clip = 1.0 - 1e-12;
  Vec u = x.cwiseMin(clip).cwiseMax(-clip);
  for (int i = 0; i < u.size(); ++i) u(i) = std::atanh(u(i));
  Vec t = bench.pseudo_inverse * u;
  return (t - bench.optimum).squaredNorm();
}

Mat synthetic_sample_inputs(const SyntheticBenchmark& bench, int n, Rng& rng) {
  if (n < 1)
    throw std::invalid_argument("synthetic_sample_inputs: n must be positive");
  Mat out(n, bench.ambient_dim);
  Vec t(bench.intrinsic_dim);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < bench.intrinsic_dim; ++j)
      t(j) = rng.uniform(-bench.box_half_width, bench.box_half_width);
    out.row(i) = synthetic_embed(bench, t).transpose();
  }
  return out;
}

void save_dataset(const std::string& path, const Mat& rows,
                  const std::string& comment) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
  if (!comment.empty()) out << "# " << comment << '\n';
  out << rows.rows() << ' ' << rows.cols() << '\n';
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      if (j) out << ' ';
      out << g17(rows(i, j));
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("save_dataset: write failed for " + path);
}

Mat load_dataset(const std::string& path, double lo, double hi) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
  while (in.peek() == '#') in.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
  long long n = -1, d = -1;
  if (!(in >> n >> d) || n < 1 || d < 1)
    throw std::runtime_error("load_dataset: bad header in " + path);
  Mat out(n, d);
  for (long long i = 0; i < n; ++i) {
    for (long long j = 0; j < d; ++j) {
      double v;
      if (!(in >> v))
        throw std::runtime_error("load_dataset: truncated data in " + path);
      if (!std::isfinite(v) || v < lo || v > hi)
        throw std::runtime_error("load_dataset: value out of range in " +
                                 path);
      out(i, j) = v;
    }
  }
  return out;
}

}  // namespace lsbo
