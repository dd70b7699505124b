#include "lsbo/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace lsbo {

namespace {

void check_rows(const Mat& z, const char* what) {
  if (z.rows() < 1)
    throw std::invalid_argument(std::string(what) + ": need at least one row");
  if (!z.allFinite())
    throw std::invalid_argument(std::string(what) + ": non-finite input");
}

// Rank of the affine span of the rows.
Eigen::Index affine_rank(const Mat& z) {
  Mat centered = z.rowwise() - z.colwise().mean();
  Eigen::JacobiSVD<Mat> svd(centered);
  const Vec sv = svd.singularValues();
  if (sv.size() == 0) return 0;
  const double cut = 1e-10 * std::max(1.0, sv(0));
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cut) ++rank;
  return rank;
}

void set_box(BoundsRegion& r, const Mat& z) {
  r.box_lo = z.colwise().minCoeff();
  r.box_hi = z.colwise().maxCoeff();
}

// Feasibility of eq * lambda = rhs with lambda >= 0, by a phase-one simplex
// over the tableau [eq | I | rhs] minimizing the artificial sum. Bland's
// pivoting rule keeps it finite.
bool convex_combination_exists(const Mat& eq, const Vec& rhs, double tol) {
  const Eigen::Index m = eq.rows();
  const Eigen::Index k = eq.cols();
  // orient rows so the right-hand side is non-negative BEFORE the identity
  // columns go in, otherwise the artificial basis is not a basis
  Mat a = eq;
  Vec b = rhs;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (b(i) < 0.0) {
      a.row(i) = -a.row(i);
      b(i) = -b(i);
    }
  }
  Mat t(m, k + m + 1);
  t.leftCols(k) = a;
  t.middleCols(k, m) = Mat::Identity(m, m);
  t.col(k + m) = b;

  std::vector<Eigen::Index> basis(m);
  for (Eigen::Index i = 0; i < m; ++i) basis[i] = k + i;

  // reduced costs for minimizing the artificial sum
  Eigen::RowVectorXd red = Eigen::RowVectorXd::Zero(k + m);
  red.head(k) = -a.colwise().sum();

  const int kMaxPivots = 10000;
  for (int pivot = 0; pivot < kMaxPivots; ++pivot) {
    Eigen::Index enter = -1;
    for (Eigen::Index j = 0; j < k + m; ++j) {
      if (red(j) < -1e-12) {
        enter = j;
        break;
      }
    }
    if (enter < 0) break;

    Eigen::Index leave = -1;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < m; ++i) {
      if (t(i, enter) > 1e-12) {
        const double ratio = t(i, k + m) / t(i, enter);
        if (ratio < best - 1e-15 ||
            (ratio < best + 1e-15 &&
             (leave < 0 || basis[i] < basis[leave]))) {
          best = ratio;
          leave = i;
        }
      }
    }
    if (leave < 0) return false;  // cannot happen for a bounded phase one

    t.row(leave) /= t(leave, enter);
    for (Eigen::Index i = 0; i < m; ++i)
      if (i != leave && t(i, enter) != 0.0)
        t.row(i) -= t(i, enter) * t.row(leave);
    red -= red(enter) * t.row(leave).head(k + m);
    basis[leave] = enter;
  }

  double artificial_mass = 0.0;
  for (Eigen::Index i = 0; i < m; ++i)
    if (basis[i] >= k) artificial_mass += t(i, k + m);
  return artificial_mass <= tol;
}

}  // namespace

BoundsKind bounds_kind_from_string(const std::string& s) {
  if (s == "hypercube") return BoundsKind::kHypercube;
  if (s == "ellipsoid") return BoundsKind::kEllipsoid;
  if (s == "hull") return BoundsKind::kHull;
  if (s == "roundtrip") return BoundsKind::kRoundTrip;
  throw std::invalid_argument("unknown bounds kind: " + s);
}

std::string to_string(BoundsKind k) {
  switch (k) {
    case BoundsKind::kHypercube:
      return "hypercube";
    case BoundsKind::kEllipsoid:
      return "ellipsoid";
    case BoundsKind::kHull:
      return "hull";
    case BoundsKind::kRoundTrip:
      return "roundtrip";
  }
  throw std::logic_error("bad bounds kind");
}

bool BoundsRegion::contains(const Vec& z) const {
  if (z.size() != box_lo.size())
    throw std::invalid_argument("contains: dimension mismatch");
  switch (kind) {
    case BoundsKind::kHypercube:
      return (z.array() >= box_lo.array()).all() &&
             (z.array() <= box_hi.array()).all();
    case BoundsKind::kEllipsoid: {
      Vec r = z - center;
      return r.dot(shape * r) <= 1.0;
    }
    case BoundsKind::kHull: {
      if ((z.array() < box_lo.array()).any() ||
          (z.array() > box_hi.array()).any())
        return false;
      const Eigen::Index d = z.size();
      Mat eq(d + 1, vertices.rows());
      eq.topRows(d) = vertices.transpose();
      eq.row(d).setOnes();
      Vec rhs(d + 1);
      rhs.head(d) = z;
      rhs(d) = 1.0;
      return convex_combination_exists(eq, rhs, 1e-8);
    }
    case BoundsKind::kRoundTrip:
      return roundtrip_distance(*frozen_vae, z) <= threshold;
  }
  throw std::logic_error("bad bounds kind");
}

Vec BoundsRegion::sample_member(Rng& rng, long max_attempts) const {
  Vec z(box_lo.size());
  for (long attempt = 0; attempt < max_attempts; ++attempt) {
    for (Eigen::Index i = 0; i < z.size(); ++i)
      z(i) = rng.uniform(box_lo(i), box_hi(i));
    if (contains(z)) return z;
  }
  std::ostringstream os;
  os << "sample_member: no member of the " << to_string(kind)
     << " region found in " << max_attempts
     << " bounding-box draws (acceptance rate < " << 1.0 / max_attempts
     << ")";
  throw NumericalError(os.str());
}

std::string BoundsRegion::describe() const {
  std::ostringstream os;
  os << to_string(kind) << " box_lo=[" << box_lo.transpose() << "] box_hi=["
     << box_hi.transpose() << "]";
  switch (kind) {
    case BoundsKind::kHypercube:
      break;
    case BoundsKind::kEllipsoid:
      os << " center=[" << center.transpose() << "] shape_rows=[";
      for (Eigen::Index i = 0; i < shape.rows(); ++i)
        os << (i ? "; " : "") << shape.row(i);
      os << "]";
      break;
    case BoundsKind::kHull:
      os << " vertex_count=" << vertices.rows();
      break;
    case BoundsKind::kRoundTrip:
      os << " threshold=" << threshold;
      break;
  }
  return os.str();
}

BoundsRegion fit_hypercube(const Mat& z) {
  check_rows(z, "fit_hypercube");
  BoundsRegion r;
  r.kind = BoundsKind::kHypercube;
  set_box(r, z);
  return r;
}

BoundsRegion fit_ellipsoid(const Mat& z, double tol) {
  check_rows(z, "fit_ellipsoid");
  if (tol <= 0.0)
    throw std::invalid_argument("fit_ellipsoid: tol must be positive");
  const Eigen::Index n = z.rows();
  const Eigen::Index d = z.cols();
  if (n < d + 1 || affine_rank(z) < d)
    throw std::invalid_argument(
        "fit_ellipsoid: points do not span the space; use the hypercube "
        "strategy for degenerate data");

  // Khachiyan's barycentric weight iteration on the lifted points, with
  // Wolfe-Atwood away steps; the plain update needs millions of rounds to
  // push the relative weight change below tol, the away-step variant
  // converges linearly. Drop steps zero a weight exactly and skip the
  // convergence check, since their tiny weight change is not stagnation.
  Mat q(d + 1, n);
  q.topRows(d) = z.transpose();
  q.row(d).setOnes();
  Vec u = Vec::Constant(n, 1.0 / static_cast<double>(n));

  const int kMaxIter = 100000;
  bool converged = false;
  for (int iter = 0; iter < kMaxIter && !converged; ++iter) {
    Mat x = q * u.asDiagonal() * q.transpose();
    Eigen::LLT<Mat> llt(x);
    if (llt.info() != Eigen::Success)
      throw NumericalError("fit_ellipsoid: singular moment matrix");
    Vec m(n);
    Mat solved = llt.solve(q);
    for (Eigen::Index j = 0; j < n; ++j) m(j) = q.col(j).dot(solved.col(j));

    Eigen::Index jplus;
    const double kplus = m.maxCoeff(&jplus);
    Eigen::Index jminus = -1;
    double kminus = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (u(j) > 0.0 && m(j) < kminus) {
        kminus = m(j);
        jminus = j;
      }
    }

    Eigen::Index j;
    double lambda;
    bool drop = false;
    if (kplus - (d + 1.0) >= (d + 1.0) - kminus) {
      if (kplus - (d + 1.0) <= 0.0) {
        converged = true;  // KKT point, both directional gaps closed
        break;
      }
      j = jplus;
      lambda = (kplus - d - 1.0) / ((d + 1.0) * (kplus - 1.0));
    } else {
      j = jminus;
      lambda = (kminus - d - 1.0) / ((d + 1.0) * (kminus - 1.0));
      const double clamp = -u(j) / (1.0 - u(j));
      if (lambda <= clamp) {
        lambda = clamp;
        drop = true;
      }
    }

    Vec u_next = (1.0 - lambda) * u;
    u_next(j) += lambda;
    if (drop) u_next(j) = 0.0;
    u_next = u_next.cwiseMax(0.0);
    u_next /= u_next.sum();
    const double rel = (u_next - u).norm() / u.norm();
    u = u_next;
    if (!drop && rel < tol) converged = true;
  }
  if (!converged)
    throw NumericalError("fit_ellipsoid: weight iteration did not converge");

  BoundsRegion r;
  r.kind = BoundsKind::kEllipsoid;
  r.center = z.transpose() * u;
  Mat sigma = z.transpose() * u.asDiagonal() * z -
              r.center * r.center.transpose();
  Eigen::LLT<Mat> sig(sigma);
  if (sig.info() != Eigen::Success)
    throw NumericalError("fit_ellipsoid: degenerate scatter matrix");
  r.shape = sig.solve(Mat::Identity(d, d)) / static_cast<double>(d);
  r.shape = 0.5 * (r.shape + r.shape.transpose());

  // rescale so the farthest fitted point sits strictly inside
  double fmax = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Vec v = z.row(i).transpose() - r.center;
    fmax = std::max(fmax, v.dot(r.shape * v));
  }
  if (fmax > 0.0) r.shape /= fmax * (1.0 + 1e-9);

  // tight bounding box of the ellipsoid: half widths sqrt(diag(A^{-1}))
  Eigen::LLT<Mat> ainv(r.shape);
  Vec half = ainv.solve(Mat::Identity(d, d)).diagonal().cwiseSqrt();
  r.box_lo = r.center - half;
  r.box_hi = r.center + half;
  return r;
}

BoundsRegion fit_hull(const Mat& z) {
  check_rows(z, "fit_hull");
  const Eigen::Index d = z.cols();
  if (z.rows() < d + 1 || affine_rank(z) < d)
    throw std::invalid_argument(
        "fit_hull: points do not span the space; use the hypercube strategy "
        "for degenerate data");
  BoundsRegion r;
  r.kind = BoundsKind::kHull;
  r.vertices = z;
  set_box(r, z);
  return r;
}

BoundsRegion fit_roundtrip(const VaeModel& vae, const Mat& z_train,
                           double percentile, double box_inflation) {
  check_rows(z_train, "fit_roundtrip");
  if (z_train.cols() != vae.latent_dim)
    throw std::invalid_argument("fit_roundtrip: latent dimension mismatch");
  if (box_inflation < 0.0)
    throw std::invalid_argument("fit_roundtrip: negative box inflation");

  std::vector<double> dist(z_train.rows());
  for (Eigen::Index i = 0; i < z_train.rows(); ++i)
    dist[i] = roundtrip_distance(vae, z_train.row(i));

  BoundsRegion r;
  r.kind = BoundsKind::kRoundTrip;
  r.frozen_vae = std::make_shared<const VaeModel>(vae.clone());
  r.threshold = nearest_rank_percentile(std::move(dist), percentile);

  Vec lo = z_train.colwise().minCoeff();
  Vec hi = z_train.colwise().maxCoeff();
  Vec mid = 0.5 * (lo + hi);
  Vec half = (1.0 + box_inflation) * 0.5 * (hi - lo);
  r.box_lo = mid - half;
  r.box_hi = mid + half;
  return r;
}

BoundsRegion fit_region(const BoundsConfig& cfg, const VaeModel& vae,
                        const Mat& encodings) {
  switch (cfg.kind) {
    case BoundsKind::kHypercube:
      return fit_hypercube(encodings);
    case BoundsKind::kEllipsoid:
      return fit_ellipsoid(encodings, cfg.ellipsoid_tol);
    case BoundsKind::kHull:
      return fit_hull(encodings);
    case BoundsKind::kRoundTrip:
      return fit_roundtrip(vae, encodings, cfg.roundtrip_percentile,
                           cfg.roundtrip_box_inflation);
  }
  throw std::logic_error("bad bounds kind");
}

double nearest_rank_percentile(std::vector<double> values, double percentile) {
  if (values.empty())
    throw std::invalid_argument("nearest_rank_percentile: empty input");
  if (percentile <= 0.0 || percentile > 100.0)
    throw std::invalid_argument(
        "nearest_rank_percentile: percentile must be in (0, 100]");
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  auto rank = static_cast<std::size_t>(
      std::ceil(percentile / 100.0 * static_cast<double>(n)));
  rank = std::max<std::size_t>(1, std::min(rank, n));
  return values[rank - 1];
}

}  // namespace lsbo
