#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "lsbo/bounds.hpp"
#include "testutil.hpp"

using lsbo::BoundsKind;
using lsbo::BoundsRegion;
using lsbo::Mat;
using lsbo::VaeModel;
using lsbo::Vec;
using testutil::random_matrix;

namespace {

// x -> z keeps two coordinates through near-linear tanh layers; roundtrip
// error is ~1e-8 away from zero and exactly zero at the origin.
VaeModel near_identity_vae(double delta = 1e-4) {
  lsbo::Rng rng(3);
  VaeModel m = lsbo::make_vae(3, 2, lsbo::Likelihood::kGaussian, rng);
  for (lsbo::Tensor p : m.parameters()) p.raw_value().setZero();
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

double cross2(const Vec& o, const Vec& a, const Vec& b) {
  return (a(0) - o(0)) * (b(1) - o(1)) - (a(1) - o(1)) * (b(0) - o(0));
}

// Andrew's monotone chain; returns hull vertices in counter-clockwise order.
Mat planar_hull(const Mat& pts) {
  std::vector<Vec> p;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) p.push_back(pts.row(i));
  std::sort(p.begin(), p.end(), [](const Vec& a, const Vec& b) {
    return a(0) < b(0) || (a(0) == b(0) && a(1) < b(1));
  });
  std::vector<Vec> h(2 * p.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    while (k >= 2 && cross2(h[k - 2], h[k - 1], p[i]) <= 0.0) --k;
    h[k++] = p[i];
  }
  const std::size_t lower = k + 1;
  for (std::size_t i = p.size() - 1; i-- > 0;) {
    while (k >= lower && cross2(h[k - 2], h[k - 1], p[i]) <= 0.0) --k;
    h[k++] = p[i];
  }
  Mat out(k - 1, 2);
  for (std::size_t i = 0; i + 1 < k; ++i) out.row(i) = h[i];
  return out;
}

// Signed distance of p to the hull boundary: positive inside (CCW polygon).
double hull_margin(const Mat& poly, const Vec& p) {
  double margin = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < poly.rows(); ++i) {
    Vec a = poly.row(i);
    Vec b = poly.row((i + 1) % poly.rows());
    const double c = cross2(a, b, p) / (b - a).norm();
    margin = std::min(margin, c);
  }
  return margin;
}

}  // namespace

TEST_CASE("hypercube fit is the componentwise extent") {
  Mat z(2, 2);
  z << 0.0, 0.0, 1.0, 2.0;
  BoundsRegion r = lsbo::fit_hypercube(z);
  CHECK(r.box_lo(0) == 0.0);
  CHECK(r.box_lo(1) == 0.0);
  CHECK(r.box_hi(0) == 1.0);
  CHECK(r.box_hi(1) == 2.0);
  CHECK(r.contains(Vec(z.row(0))));
  CHECK(r.contains(Vec(z.row(1))));
  Vec corner(2);
  corner << 1.0, 0.0;
  CHECK(r.contains(corner));
  Vec out(2);
  out << 1.0, 2.5;
  CHECK_FALSE(r.contains(out));

  Mat single(1, 3);
  single << 0.3, -0.7, 2.0;
  BoundsRegion deg = lsbo::fit_hypercube(single);
  CHECK((deg.box_lo - deg.box_hi).cwiseAbs().maxCoeff() == 0.0);
  CHECK(deg.contains(Vec(single.row(0))));
}

TEST_CASE("ellipsoid of the unit square corners is the circumscribed disk") {
  Mat z(4, 2);
  z << -1.0, -1.0, -1.0, 1.0, 1.0, -1.0, 1.0, 1.0;
  BoundsRegion r = lsbo::fit_ellipsoid(z);
  CHECK(r.center.cwiseAbs().maxCoeff() < 1e-3);
  CHECK(std::abs(r.shape(0, 0) - 0.5) < 1e-3);
  CHECK(std::abs(r.shape(1, 1) - 0.5) < 1e-3);
  CHECK(std::abs(r.shape(0, 1)) < 1e-3);
  for (int i = 0; i < 4; ++i) CHECK(r.contains(Vec(z.row(i))));
  Vec far(2);
  far << 2.0, 0.0;
  Vec d = far - r.center;
  CHECK(d.dot(r.shape * d) > 1.9);
  CHECK_FALSE(r.contains(far));
  CHECK(r.contains(r.center));
}

TEST_CASE("ellipsoid contains its input points and has near-minimal volume") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    lsbo::Rng rng(700 + seed);
    Mat z = random_matrix(10, 2, rng, 1.0);
    z.col(1) *= 0.5;
    BoundsRegion r = lsbo::fit_ellipsoid(z);
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      Vec d = z.row(i).transpose() - r.center;
      CHECK(d.dot(r.shape * d) <= 1.0 + 1e-6);
    }

    // exhaustive grid of candidate enclosing ellipses
    Vec mean = z.colwise().mean();
    double rmax = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i)
      rmax = std::max(rmax, (z.row(i).transpose() - mean).norm());
    double best = std::numeric_limits<double>::infinity();
    for (int cx = 0; cx < 5; ++cx) {
      for (int cy = 0; cy < 5; ++cy) {
        Vec c(2);
        c << mean(0) + 0.25 * rmax * (cx - 2), mean(1) + 0.25 * rmax * (cy - 2);
        for (int it = 0; it < 8; ++it) {
          const double theta = M_PI * it / 8.0;
          Mat rot(2, 2);
          rot << std::cos(theta), -std::sin(theta), std::sin(theta),
              std::cos(theta);
          for (int i1 = 0; i1 < 8; ++i1) {
            for (int i2 = 0; i2 < 8; ++i2) {
              const double r1 = rmax * (0.3 + 1.3 * i1 / 7.0);
              const double r2 = rmax * (0.3 + 1.3 * i2 / 7.0);
              Vec axes(2);
              axes << 1.0 / (r1 * r1), 1.0 / (r2 * r2);
              Mat a = rot * axes.asDiagonal() * rot.transpose();
              bool ok = true;
              for (Eigen::Index i = 0; i < z.rows() && ok; ++i) {
                Vec d = z.row(i).transpose() - c;
                ok = d.dot(a * d) <= 1.0 + 1e-12;
              }
              if (ok) best = std::min(best, r1 * r2);
            }
          }
        }
      }
    }
    REQUIRE(best < std::numeric_limits<double>::infinity());
    const double fitted_volume = 1.0 / std::sqrt(r.shape.determinant());
    CHECK(fitted_volume <= 1.05 * best);
  }
}

TEST_CASE("degenerate point sets are rejected with a fallback hint") {
  Mat line(4, 2);
  line << 0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0;
  CHECK_THROWS_WITH_AS(lsbo::fit_ellipsoid(line),
                       doctest::Contains("hypercube"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(lsbo::fit_hull(line), doctest::Contains("hypercube"),
                       std::invalid_argument);
  Mat few(2, 2);
  few << 0.0, 0.0, 1.0, 0.5;
  CHECK_THROWS_AS(lsbo::fit_ellipsoid(few), std::invalid_argument);
}

TEST_CASE("hull membership handles centroid, vertices, and far points") {
  Mat z(4, 3);
  z << 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0;
  BoundsRegion r = lsbo::fit_hull(z);
  Vec centroid = z.colwise().mean();
  CHECK(r.contains(centroid));
  for (int i = 0; i < 4; ++i) CHECK(r.contains(Vec(z.row(i))));
  Vec outside(3);
  outside << 0.5, 0.5, 0.5;  // beyond the x+y+z=1 facet
  CHECK_FALSE(r.contains(outside));
  Vec beyond_box(3);
  beyond_box << 1.5, 0.0, 0.0;
  CHECK_FALSE(r.contains(beyond_box));
  Vec mix(3);
  mix << 0.25, 0.25, 0.25;
  CHECK(r.contains(mix));
}

TEST_CASE("hull membership agrees with the planar orientation test") {
  lsbo::Rng rng(901);
  Mat pts = random_matrix(25, 2, rng, 1.0);
  BoundsRegion r = lsbo::fit_hull(pts);
  Mat poly = planar_hull(pts);
  REQUIRE(poly.rows() >= 3);

  int checked = 0;
  for (int t = 0; t < 1000; ++t) {
    Vec q(2);
    q << rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0);
    const double margin = hull_margin(poly, q);
    if (std::abs(margin) < 1e-7) continue;  // too close for either oracle
    CHECK(r.contains(q) == (margin > 0.0));
    ++checked;
  }
  CHECK(checked > 900);
}

TEST_CASE("round-trip region with a faithful auto-encoder pins fixed points") {
  VaeModel vae = near_identity_vae();
  Mat z0 = Mat::Zero(1, 2);
  BoundsRegion r = lsbo::fit_roundtrip(vae, z0);
  CHECK(r.threshold == 0.0);
  CHECK(r.contains(Vec(Vec::Zero(2))));
  Vec off(2);
  off << 0.5, -0.4;
  CHECK_FALSE(r.contains(off));
}

TEST_CASE("round-trip threshold keeps the promised share of the fit set") {
  lsbo::Rng rng(907);
  VaeModel vae = lsbo::make_vae(8, 2, lsbo::Likelihood::kBernoulli, rng);
  Mat z = random_matrix(40, 2, rng, 1.0);
  BoundsRegion r = lsbo::fit_roundtrip(vae, z, 90.0);
  int members = 0;
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    members += r.contains(Vec(z.row(i))) ? 1 : 0;
  CHECK(members >= 36);

  BoundsRegion all = lsbo::fit_roundtrip(vae, z, 100.0);
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    CHECK(all.contains(Vec(z.row(i))));
}

TEST_CASE("round-trip bounding box inflates the training extent") {
  VaeModel vae = near_identity_vae();
  Mat z(2, 2);
  z << -1.0, 0.0, 3.0, 1.0;
  BoundsRegion r = lsbo::fit_roundtrip(vae, z, 90.0, 0.2);
  CHECK(r.box_lo(0) == doctest::Approx(-1.4));
  CHECK(r.box_hi(0) == doctest::Approx(3.4));
  CHECK(r.box_lo(1) == doctest::Approx(-0.1));
  CHECK(r.box_hi(1) == doctest::Approx(1.1));
}

TEST_CASE("round-trip region is frozen against later model edits") {
  VaeModel vae = near_identity_vae();
  Mat z = Mat::Zero(1, 2);
  BoundsRegion r = lsbo::fit_roundtrip(vae, z);
  vae.dec_w2.raw_value().setConstant(50.0);  // wreck the live model
  CHECK(r.contains(Vec(Vec::Zero(2))));
  CHECK(r.threshold == 0.0);
}

TEST_CASE("nearest-rank percentile follows the textbook definition") {
  std::vector<double> v;
  for (int i = 10; i >= 1; --i) v.push_back(i);
  CHECK(lsbo::nearest_rank_percentile(v, 90.0) == 9.0);
  CHECK(lsbo::nearest_rank_percentile(v, 100.0) == 10.0);
  CHECK(lsbo::nearest_rank_percentile(v, 0.5) == 1.0);
  CHECK(lsbo::nearest_rank_percentile({3.5}, 50.0) == 3.5);
  CHECK_THROWS_AS(lsbo::nearest_rank_percentile({}, 90.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(lsbo::nearest_rank_percentile({1.0}, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(lsbo::nearest_rank_percentile({1.0}, 101.0),
                  std::invalid_argument);
}

TEST_CASE("sampling only ever returns members, deterministically") {
  lsbo::Rng rng(911);
  Mat z = random_matrix(12, 2, rng, 1.0);
  for (BoundsKind kind : {BoundsKind::kHypercube, BoundsKind::kEllipsoid,
                          BoundsKind::kHull}) {
    lsbo::BoundsConfig cfg;
    cfg.kind = kind;
    VaeModel dummy = near_identity_vae();
    BoundsRegion r = lsbo::fit_region(cfg, dummy, z);
    lsbo::Rng s1(1000), s2(1000);
    for (int t = 0; t < 1000; ++t) {
      Vec a = r.sample_member(s1);
      CHECK(r.contains(a));
      Vec b = r.sample_member(s2);
      CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("sampling an empty region reports the acceptance failure") {
  lsbo::Rng rng(919);
  VaeModel vae = lsbo::make_vae(8, 2, lsbo::Likelihood::kBernoulli, rng);
  Mat z = random_matrix(20, 2, rng, 1.0);
  BoundsRegion r = lsbo::fit_roundtrip(vae, z, 90.0);
  r.threshold = 0.0;  // no exact fixed points exist for this model
  lsbo::Rng srng(929);
  CHECK_THROWS_AS(r.sample_member(srng, 500), lsbo::NumericalError);
}

TEST_CASE("fitted points land inside every region variant") {
  lsbo::Rng rng(937);
  Mat z = random_matrix(15, 3, rng, 1.0);
  VaeModel vae = near_identity_vae();  // unused for the first three kinds
  BoundsRegion box = lsbo::fit_hypercube(z);
  BoundsRegion ell = lsbo::fit_ellipsoid(z);
  BoundsRegion hull = lsbo::fit_hull(z);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    CHECK(box.contains(Vec(z.row(i))));
    CHECK(ell.contains(Vec(z.row(i))));
    CHECK(hull.contains(Vec(z.row(i))));
  }
  // hull members never escape the fitted box
  lsbo::Rng srng(941);
  for (int t = 0; t < 300; ++t)
    CHECK(box.contains(hull.sample_member(srng)));
}

TEST_CASE("regions describe themselves for the experiment log") {
  lsbo::Rng rng(947);
  Mat z = random_matrix(8, 2, rng, 1.0);
  CHECK(lsbo::fit_hypercube(z).describe().find("hypercube") !=
        std::string::npos);
  CHECK(lsbo::fit_ellipsoid(z).describe().find("center") !=
        std::string::npos);
  CHECK(lsbo::fit_hull(z).describe().find("vertex_count=8") !=
        std::string::npos);
  VaeModel vae = near_identity_vae();
  CHECK(lsbo::fit_roundtrip(vae, Mat(z.leftCols(2)))
            .describe()
            .find("threshold") != std::string::npos);
  CHECK(lsbo::to_string(lsbo::bounds_kind_from_string("ellipsoid")) ==
        "ellipsoid");
  CHECK_THROWS_AS(lsbo::bounds_kind_from_string("sphere"),
                  std::invalid_argument);
}
