#pragma once

#include <limits>
#include <string>
#include <vector>

#include "lsbo/common.hpp"
#include "lsbo/rng.hpp"

namespace lsbo {

// Rotated rectangle on the 10x10 canvas. Coordinates live in pixel units,
// x to the right (columns), y downward (rows).
struct ShapeParams {
  double cx = 5.0;
  double cy = 5.0;
  double half_width = 1.0;
  double half_height = 1.0;
  double angle = 0.0;  // radians
};

struct ShapeImage {
  ShapeParams params;
  Vec pixels;  // 100 row-major intensities in [0, 1]
};

// Pixel (row r, col c) has center (c + 0.5, r + 0.5); it is set when the
// center lies inside the rectangle, boundary included.
Vec shape_rasterize(const ShapeParams& p);

// Uniform parameter draws with the pixel area capped at 60 of 100 by
// rejection, so the full-canvas optimum stays outside the training data.
std::vector<ShapeImage> shape_generate(int n, Rng& rng);

// Intensity sum; the optimized black box is its negation.
double shape_area(const Vec& pixels);

Mat shape_pixel_matrix(const std::vector<ShapeImage>& imgs);

// Smooth test problem with a known optimum: inputs are tanh(W t) for t in a
// box around the origin, the objective is squared distance to t_opt in the
// intrinsic space after pseudo-inverting the embedding.
struct SyntheticBenchmark {
  int ambient_dim = 0;
  int intrinsic_dim = 0;
  Mat weights;        // ambient x intrinsic
  Mat pseudo_inverse; // intrinsic x ambient, least-squares inverse of weights
  Vec optimum;        // t_opt, drawn inside the sampling box
  double box_half_width = 2.0;
};

SyntheticBenchmark make_synthetic(int ambient_dim, int intrinsic_dim,
                                  std::uint64_t seed);

Vec synthetic_embed(const SyntheticBenchmark& bench, const Vec& t);

// Black box on the ambient space; minimum 0 at synthetic_embed(optimum).
double synthetic_eval(const SyntheticBenchmark& bench, const Vec& x);

// n embedded uniform draws from the intrinsic box, one row per input.
Mat synthetic_sample_inputs(const SyntheticBenchmark& bench, int n, Rng& rng);

// Flat text table: "n d" header then n rows of d space-separated values.
void save_dataset(const std::string& path, const Mat& rows,
                  const std::string& comment = "");
Mat load_dataset(const std::string& path,
                 double lo = -std::numeric_limits<double>::infinity(),
                 double hi = std::numeric_limits<double>::infinity());

}  // namespace lsbo
