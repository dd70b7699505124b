#include "lsbo/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace lsbo {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;
constexpr double kInvSqrt2 = 0.70710678118654752;

double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

void check_spec(const AcquisitionSpec& spec) {
  if (!(spec.lcb_beta > 0.0))
    throw std::invalid_argument("acquisition: lcb_beta must be positive");
  if (spec.ts_candidates < 1)
    throw std::invalid_argument("acquisition: ts_candidates must be positive");
  if (!(spec.xi >= 0.0))
    throw std::invalid_argument("acquisition: xi must be non-negative");
}

// Greedy pattern search along coordinate axes from a member start. Moves are
// taken only when they stay in the region and strictly improve, so the
// iterate is a member at all times. Steps halve after a sweep without
// progress.
template <typename Score>
void coordinate_refine(const BoundsRegion& region, const Score& value, Vec& z,
                       double& best) {
  const Eigen::Index d = z.size();
  Vec step = 0.25 * (region.box_hi - region.box_lo);
  for (Eigen::Index j = 0; j < d; ++j) step(j) = std::max(step(j), 1e-12);
  const double floor = 1e-6 * step.maxCoeff();
  for (int round = 0; round < 64; ++round) {
    bool improved = false;
    for (Eigen::Index j = 0; j < d; ++j) {
      for (double sign : {1.0, -1.0}) {
        Vec trial = z;
        trial(j) += sign * step(j);
        if (!region.contains(trial)) continue;
        const double s = value(trial);
        if (s > best) {
          z = trial;
          best = s;
          improved = true;
        }
      }
    }
    if (!improved) {
      step *= 0.5;
      if (step.maxCoeff() < floor) break;
    }
  }
}

}  // namespace

AcquisitionKind acquisition_kind_from_string(const std::string& s) {
  if (s == "ei") return AcquisitionKind::kEi;
  if (s == "pi") return AcquisitionKind::kPi;
  if (s == "lcb") return AcquisitionKind::kLcb;
  if (s == "ts") return AcquisitionKind::kTs;
  if (s == "random") return AcquisitionKind::kRandom;
  throw std::invalid_argument("unknown acquisition kind: " + s);
}

std::string to_string(AcquisitionKind kind) {
  switch (kind) {
    case AcquisitionKind::kEi:
      return "ei";
    case AcquisitionKind::kPi:
      return "pi";
    case AcquisitionKind::kLcb:
      return "lcb";
    case AcquisitionKind::kTs:
      return "ts";
    case AcquisitionKind::kRandom:
      return "random";
  }
  throw std::invalid_argument("unknown acquisition kind value");
}

double acquisition_score(const AcquisitionSpec& spec,
                         const PredictiveGaussian& pred, double y_best) {
  check_spec(spec);
  if (!(pred.variance >= 0.0))
    throw std::invalid_argument("acquisition_score: negative variance");
  const double sigma = std::sqrt(pred.variance);
  switch (spec.kind) {
    case AcquisitionKind::kLcb:
      return spec.lcb_beta * sigma - pred.mean;
    case AcquisitionKind::kEi: {
      const double gap = y_best - pred.mean - spec.xi;
      if (sigma == 0.0) return std::max(gap, 0.0);
      const double u = gap / sigma;
      return sigma * normal_pdf(u) + gap * normal_cdf(u);
    }
    case AcquisitionKind::kPi: {
      const double gap = y_best - pred.mean - spec.xi;
      if (sigma == 0.0) return gap > 0.0 ? 1.0 : (gap < 0.0 ? 0.0 : 0.5);
      return normal_cdf(gap / sigma);
    }
    default:
      throw std::invalid_argument("acquisition_score: " +
                                  to_string(spec.kind) +
                                  " has no pointwise score");
  }
}

Vec maximize_acquisition(const AcquisitionSpec& spec, const GplvmModel& gp,
                         const BoundsRegion& region, double y_best, Rng& rng) {
  check_spec(spec);
  if (region.box_lo.size() != gp.latent_dim)
    throw std::invalid_argument(
        "maximize_acquisition: region dimension mismatch");
  if (spec.kind == AcquisitionKind::kTs)
    return ts_select(spec, gp, region, rng);
  if (spec.kind == AcquisitionKind::kRandom) return region.sample_member(rng);

  const GpPosterior post = make_posterior(gp);
  auto value = [&](const Vec& z) {
    return acquisition_score(spec, post.predict(z), y_best);
  };

  const int num_candidates = 4096;
  const int num_starts = 8;
  Mat zs(num_candidates, gp.latent_dim);
  Vec scores(num_candidates);
  for (int i = 0; i < num_candidates; ++i) {
    const Vec z = region.sample_member(rng);
    zs.row(i) = z.transpose();
    scores(i) = value(z);
  }

  std::vector<int> order(num_candidates);
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + num_starts, order.end(),
                    [&](int a, int b) { return scores(a) > scores(b); });

  Vec best = zs.row(order[0]).transpose();
  double best_score = scores(order[0]);
  for (int r = 0; r < num_starts; ++r) {
    Vec z = zs.row(order[r]).transpose();
    double s = scores(order[r]);
    coordinate_refine(region, value, z, s);
    if (s > best_score) {
      best_score = s;
      best = z;
    }
  }
  return best;
}

Vec ts_select(const AcquisitionSpec& spec, const GplvmModel& gp,
              const BoundsRegion& region, Rng& rng) {
  check_spec(spec);
  if (region.box_lo.size() != gp.latent_dim)
    throw std::invalid_argument("ts_select: region dimension mismatch");
  Mat zs(spec.ts_candidates, gp.latent_dim);
  for (int i = 0; i < spec.ts_candidates; ++i)
    zs.row(i) = region.sample_member(rng).transpose();
  const Vec draw = posterior_sample_on_set(gp, zs, rng);
  Eigen::Index best = 0;
  draw.minCoeff(&best);
  return zs.row(best).transpose();
}

}  // namespace lsbo
