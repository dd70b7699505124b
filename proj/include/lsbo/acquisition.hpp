#pragma once

#include <string>

#include "lsbo/bounds.hpp"
#include "lsbo/common.hpp"
#include "lsbo/gp.hpp"
#include "lsbo/rng.hpp"

namespace lsbo {

// kRandom is the pure region-sampling baseline; it ignores the surrogate.
enum class AcquisitionKind { kEi, kPi, kLcb, kTs, kRandom };

AcquisitionKind acquisition_kind_from_string(const std::string& s);
std::string to_string(AcquisitionKind kind);

struct AcquisitionSpec {
  AcquisitionKind kind = AcquisitionKind::kEi;
  double lcb_beta = 2.0;     // confidence width multiplier
  int ts_candidates = 2048;  // finite candidate set for Thompson draws
  double xi = 0.0;           // improvement jitter for EI/PI
};

// Pointwise utility of a predictive Gaussian under the minimization
// convention: larger score = more promising query. Total in sigma (the
// sigma -> 0 limits are used). Thompson sampling and the random baseline
// have no pointwise score and throw.
double acquisition_score(const AcquisitionSpec& spec,
                         const PredictiveGaussian& pred, double y_best);

// argmax of the score over the region: rejection-sampled candidate sweep,
// then coordinate-wise refinement of the best few starts. Every point ever
// accepted is a region member, so the result is guaranteed to be one.
// Thompson dispatches to ts_select, the random baseline to sample_member.
Vec maximize_acquisition(const AcquisitionSpec& spec, const GplvmModel& gp,
                         const BoundsRegion& region, double y_best, Rng& rng);

// Draws ts_candidates region members, takes one joint posterior sample over
// them and returns the member where the sample is lowest.
Vec ts_select(const AcquisitionSpec& spec, const GplvmModel& gp,
              const BoundsRegion& region, Rng& rng);

}  // namespace lsbo
