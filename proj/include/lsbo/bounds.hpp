#pragma once

#include <memory>
#include <string>
#include <vector>

#include "lsbo/rng.hpp"
#include "lsbo/vae.hpp"

namespace lsbo {

enum class BoundsKind { kHypercube, kEllipsoid, kHull, kRoundTrip };

BoundsKind bounds_kind_from_string(const std::string& s);
std::string to_string(BoundsKind k);

// A fitted latent-space search region: a membership oracle plus a bounding
// box to draw proposals from. Immutable once fitted; the round-trip variant
// keeps its own frozen copy of the auto-encoder.
struct BoundsRegion {
  BoundsKind kind = BoundsKind::kHypercube;
  Vec box_lo, box_hi;  // bounding box, always set

  // ellipsoid: membership is (z - center)^T shape (z - center) <= 1
  Vec center;
  Mat shape;

  // hull: membership is "z is a convex combination of these rows"
  Mat vertices;

  // round-trip: membership is |z - roundtrip(z)| <= threshold
  std::shared_ptr<const VaeModel> frozen_vae;
  double threshold = 0.0;

  bool contains(const Vec& z) const;

  // Rejection sampling from the bounding box; throws NumericalError with the
  // observed acceptance count after max_attempts misses.
  Vec sample_member(Rng& rng, long max_attempts = 1000000) const;

  // One-line summary (variant tag + parameters) for experiment logs.
  std::string describe() const;
};

// Componentwise min/max box of the rows of z.
BoundsRegion fit_hypercube(const Mat& z);

// Minimum-volume enclosing ellipsoid via the Khachiyan weight iteration,
// run until the relative weight change drops below tol, then rescaled so
// every input point lands strictly inside.
BoundsRegion fit_ellipsoid(const Mat& z, double tol = 1e-6);

// Stores the points; membership is decided by a small phase-one simplex
// feasibility solve (tolerance 1e-8) with a bounding-box pre-check.
BoundsRegion fit_hull(const Mat& z);

// Threshold = nearest-rank percentile of the training round-trip distances
// |z_i - roundtrip(z_i)|; the box is the training box inflated about its
// center by box_inflation.
BoundsRegion fit_roundtrip(const VaeModel& vae, const Mat& z_train,
                           double percentile = 90.0,
                           double box_inflation = 0.2);

struct BoundsConfig {
  BoundsKind kind = BoundsKind::kHypercube;
  double ellipsoid_tol = 1e-6;
  double roundtrip_percentile = 90.0;
  double roundtrip_box_inflation = 0.2;
};

BoundsRegion fit_region(const BoundsConfig& cfg, const VaeModel& vae,
                        const Mat& encodings);

// Nearest-rank percentile: the ceil(p/100 * n)-th smallest value.
double nearest_rank_percentile(std::vector<double> values, double percentile);

}  // namespace lsbo
