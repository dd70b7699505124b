#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "lsbo/rng.hpp"
#include "lsbo/tensor.hpp"
#include "testutil.hpp"

using lsbo::Mat;
using lsbo::Tensor;
using lsbo::Vec;
using testutil::grad_check;
using testutil::random_matrix;
using testutil::random_spd;

TEST_CASE("backward on sum of squares gives exact gradient") {
  Mat w(3, 1);
  w << 1.0, 2.0, 3.0;
  Tensor p = Tensor::parameter(w);
  Tensor loss = lsbo::sum(p * p);
  loss.backward();
  CHECK(loss.scalar() == doctest::Approx(14.0).epsilon(1e-12));
  Mat expected(3, 1);
  expected << 2.0, 4.0, 6.0;
  CHECK((p.grad() - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("backward from a constant root is a no-op") {
  Tensor c = Tensor::constant(Mat::Ones(2, 2));
  Tensor root = lsbo::sum(c * c);
  CHECK_FALSE(root.requires_grad());
  root.backward();  // must not throw or allocate gradients
  CHECK_FALSE(root.has_grad());
}

TEST_CASE("backward rejects non-scalar roots") {
  Tensor p = Tensor::parameter(Mat::Ones(2, 2));
  Tensor y = p * 2.0;
  CHECK_THROWS_AS(y.backward(), std::invalid_argument);
}

TEST_CASE("leaf gradients accumulate until cleared") {
  Tensor p = Tensor::parameter(Mat::Ones(2, 1));
  lsbo::sum(p * p).backward();
  Mat once = p.grad();
  lsbo::sum(p * p).backward();
  CHECK((p.grad() - 2.0 * once).cwiseAbs().maxCoeff() < 1e-12);
  p.clear_grad();
  CHECK_FALSE(p.has_grad());
}

TEST_CASE("stop_gradient detaches its input from the tape") {
  Tensor p = Tensor::parameter(Mat::Ones(2, 1));
  Tensor root = lsbo::sum(lsbo::stop_gradient(p * 3.0) * p);
  root.backward();
  Mat expected = Mat::Constant(2, 1, 3.0);
  CHECK((p.grad() - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("non-finite op results raise NumericalError") {
  Tensor z = Tensor::parameter(Mat::Zero(2, 2));
  CHECK_THROWS_AS(lsbo::log(z), lsbo::NumericalError);
  Tensor big = Tensor::parameter(Mat::Constant(1, 1, 1e6));
  CHECK_THROWS_AS(lsbo::exp(big * big), lsbo::NumericalError);
}

// ---------------------------------------------------------------------------
// finite-difference sweep over the primitive ops

namespace {

// Weighted sum makes the root sensitive to every output entry.
Tensor weighted(const Tensor& t, const Mat& w) {
  return lsbo::sum(t * Tensor::constant(w));
}

}  // namespace

TEST_CASE("gradients of arithmetic ops match finite differences") {
  lsbo::Rng rng(11);
  Mat a0 = random_matrix(3, 4, rng);
  Mat b0 = random_matrix(3, 4, rng);
  b0.array() += 3.0;  // keep divisions well away from zero
  Mat w = random_matrix(3, 4, rng);
  Tensor a = Tensor::parameter(a0);
  Tensor b = Tensor::parameter(b0);
  Tensor s = Tensor::parameter(0.7);

  CHECK(grad_check([&] { return weighted(a + b, w); }, a) < 1e-4);
  CHECK(grad_check([&] { return weighted(a - b, w); }, b) < 1e-4);
  CHECK(grad_check([&] { return weighted(a * b, w); }, a) < 1e-4);
  CHECK(grad_check([&] { return weighted(a / b, w); }, b) < 1e-4);
  CHECK(grad_check([&] { return weighted(-a, w); }, a) < 1e-4);
  // scalar broadcast, both roles
  CHECK(grad_check([&] { return weighted(a * s, w); }, s) < 1e-4);
  CHECK(grad_check([&] { return weighted(s + a, w); }, s) < 1e-4);
  CHECK(grad_check([&] { return weighted(a / s, w); }, s) < 1e-4);
  CHECK(grad_check([&] { return weighted(s / b, w); }, b) < 1e-4);
}

TEST_CASE("gradients of structural ops match finite differences") {
  lsbo::Rng rng(12);
  Tensor a = Tensor::parameter(random_matrix(3, 4, rng));
  Tensor b = Tensor::parameter(random_matrix(4, 2, rng));
  Tensor sq = Tensor::parameter(random_matrix(4, 4, rng));
  Tensor v = Tensor::parameter(random_matrix(4, 1, rng));
  Tensor u = Tensor::parameter(random_matrix(3, 1, rng));
  Tensor row = Tensor::parameter(random_matrix(1, 4, rng));
  Mat w32 = random_matrix(3, 2, rng);
  Mat w34 = random_matrix(3, 4, rng);
  Mat w43 = random_matrix(4, 3, rng);
  Mat w44 = random_matrix(4, 4, rng);
  Mat w41 = random_matrix(4, 1, rng);
  Mat w31 = random_matrix(3, 1, rng);

  CHECK(grad_check([&] { return weighted(lsbo::matmul(a, b), w32); }, a) < 1e-4);
  CHECK(grad_check([&] { return weighted(lsbo::matmul(a, b), w32); }, b) < 1e-4);
  CHECK(grad_check([&] { return weighted(lsbo::transpose(a), w43); }, a) < 1e-4);
  CHECK(grad_check([&] { return weighted(lsbo::slice_cols(a, 1, 2), w32); }, a) <
        1e-4);
  CHECK(grad_check([&] { return weighted(lsbo::broadcast_rows(row, 3), w34); },
                   row) < 1e-4);
  CHECK(grad_check([&] { return weighted(lsbo::diag_part(sq), w41); }, sq) <
        1e-4);
  CHECK(grad_check([&] { return weighted(lsbo::make_diag(v), w44); }, v) < 1e-4);
  CHECK(grad_check([&] { return weighted(lsbo::scale_columns(a, v), w34); }, a) <
        1e-4);
  CHECK(grad_check([&] { return weighted(lsbo::scale_columns(a, v), w34); }, v) <
        1e-4);
  CHECK(grad_check([&] { return weighted(lsbo::rowwise_sqnorm(a), w31); }, a) <
        1e-4);
  CHECK(grad_check([&] { return weighted(lsbo::outer_sum(u, v), w34); }, u) <
        1e-4);
  CHECK(grad_check([&] { return weighted(lsbo::outer_sum(u, v), w34); }, v) <
        1e-4);
}

TEST_CASE("gradients of nonlinearities match finite differences") {
  lsbo::Rng rng(13);
  Mat x0 = random_matrix(3, 3, rng, 0.8);
  Tensor x = Tensor::parameter(x0);
  Tensor pos = Tensor::parameter(Mat(x0.array().abs().matrix() +
                                     Mat::Constant(3, 3, 0.5)));
  Mat w = random_matrix(3, 3, rng);

  CHECK(grad_check([&] { return weighted(lsbo::exp(x), w); }, x) < 1e-4);
  CHECK(grad_check([&] { return weighted(lsbo::log(pos), w); }, pos) < 1e-4);
  CHECK(grad_check([&] { return weighted(lsbo::tanh(x), w); }, x) < 1e-4);
  CHECK(grad_check([&] { return weighted(lsbo::sigmoid(x), w); }, x) < 1e-4);
  CHECK(grad_check([&] { return weighted(lsbo::softplus(x), w); }, x) < 1e-4);
  CHECK(grad_check([&] { return lsbo::mean(x * x); }, x) < 1e-4);
  // clamp: interior entries only, since the subgradient at the cut is zero
  CHECK(grad_check([&] { return weighted(lsbo::clamp(x, -5.0, 5.0), w); }, x) <
        1e-4);
  // saturated clamp passes no gradient
  Tensor far = Tensor::parameter(Mat::Constant(2, 2, 9.0));
  Tensor root = lsbo::sum(lsbo::clamp(far, -1.0, 1.0));
  root.backward();
  CHECK(far.grad().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("continuous Bernoulli normalizer: values and gradient") {
  // closed form equals log 2 exactly at logit zero
  Tensor zero = Tensor::parameter(Mat::Zero(1, 1));
  CHECK(lsbo::cb_log_norm(zero).scalar() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-14));

  // series and direct branches agree around the switch point
  for (double eta : {1e-3, 5e-3, 9.9e-3, 1.01e-2, 2e-2, 0.5, -0.37, 4.0}) {
    const double direct = std::log(eta / std::tanh(eta / 2.0));
    Tensor t = Tensor::parameter(Mat::Constant(1, 1, eta));
    CHECK(lsbo::cb_log_norm(t).scalar() ==
          doctest::Approx(direct).epsilon(1e-10));
  }

  // derivative branches agree where they hand over
  for (double eta : {9e-3, 1.1e-2}) {
    const double t = std::tanh(eta / 2.0);
    const double direct = 1.0 / eta - 0.5 * (1.0 - t * t) / t;
    const double series = eta / 6.0 - 7.0 * eta * eta * eta / 360.0;
    CHECK(std::abs(direct - series) < 1e-10);
  }

  lsbo::Rng rng(14);
  Mat etas(2, 3);
  etas << -3.0, -0.02, -0.005, 0.008, 0.7, 2.5;
  Tensor p = Tensor::parameter(etas);
  Mat w = random_matrix(2, 3, rng);
  CHECK(grad_check([&] { return weighted(lsbo::cb_log_norm(p), w); }, p) <
        1e-4);
}

// ---------------------------------------------------------------------------
// factorizations

TEST_CASE("cholesky of identity and a hand-worked 2x2") {
  Tensor eye = Tensor::constant(Mat::Identity(3, 3));
  CHECK((lsbo::cholesky(eye).value() - Mat::Identity(3, 3))
            .cwiseAbs()
            .maxCoeff() < 1e-14);

  Mat a(2, 2);
  a << 4.0, 2.0, 2.0, 3.0;
  Mat expected(2, 2);
  expected << 2.0, 0.0, 1.0, std::sqrt(2.0);
  double jitter = -1.0;
  Tensor l = lsbo::cholesky(Tensor::constant(a), &jitter);
  CHECK(jitter == 0.0);
  CHECK((l.value() - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cholesky jitter ladder handles rank deficiency") {
  Mat a(2, 2);
  a << 1.0, 1.0, 1.0, 1.0;
  double jitter = -1.0;
  Tensor l = lsbo::cholesky(Tensor::constant(a), &jitter);
  CHECK(jitter > 0.0);
  CHECK(jitter <= 1e-4);
  Mat rec = l.value() * l.value().transpose();
  CHECK((rec - a).cwiseAbs().maxCoeff() <= 1e-4 + 1e-12);
}

TEST_CASE("cholesky rejects what the ladder cannot fix") {
  Mat indefinite(2, 2);
  indefinite << 1.0, 0.0, 0.0, -1.0;
  CHECK_THROWS_AS(lsbo::cholesky(Tensor::constant(indefinite)),
                  lsbo::CholeskyError);
  Mat asym(2, 2);
  asym << 1.0, 0.5, -0.5, 1.0;
  CHECK_THROWS_AS(lsbo::cholesky(Tensor::constant(asym)),
                  std::invalid_argument);
}

TEST_CASE("cholesky and triangular solves differentiate correctly") {
  lsbo::Rng rng(15);
  Tensor m = Tensor::parameter(random_matrix(4, 4, rng));
  Tensor rhs = Tensor::parameter(random_matrix(4, 2, rng));
  Mat w42 = random_matrix(4, 2, rng);

  // log-determinant through the factor diagonal
  auto logdet = [&] {
    Tensor spd = lsbo::matmul(lsbo::transpose(m), m) +
                 Tensor::constant(Mat(2.0 * Mat::Identity(4, 4)));
    Tensor l = lsbo::cholesky(spd);
    return lsbo::sum(lsbo::log(lsbo::diag_part(l))) * 2.0;
  };
  CHECK(grad_check(logdet, m) < 1e-4);

  auto solve_quad = [&] {
    Tensor spd = lsbo::matmul(lsbo::transpose(m), m) +
                 Tensor::constant(Mat(2.0 * Mat::Identity(4, 4)));
    Tensor l = lsbo::cholesky(spd);
    Tensor x = lsbo::tri_solve_lower(l, rhs);
    Tensor y = lsbo::tri_solve_lower_t(l, x);
    return weighted(y, w42);
  };
  CHECK(grad_check(solve_quad, m) < 1e-4);
  CHECK(grad_check(solve_quad, rhs) < 1e-4);
}

TEST_CASE("cholesky reconstruction on random SPD inputs") {
  lsbo::Rng rng(16);
  for (int trial = 0; trial < 20; ++trial) {
    Mat a = random_spd(5, rng);
    Tensor l = lsbo::cholesky(Tensor::constant(a));
    Mat rec = l.value() * l.value().transpose();
    CHECK((rec - a).cwiseAbs().maxCoeff() < 1e-4 + 1e-9);
  }
}

// ---------------------------------------------------------------------------
// optimizer

TEST_CASE("adam first step moves a unit-gradient scalar by about lr") {
  Tensor p = Tensor::parameter(1.0);
  lsbo::AdamState opt({p}, 0.1);
  lsbo::sum(p).backward();
  lsbo::adam_step(opt);
  CHECK(std::abs(p.scalar() - 0.9) < 1e-6);
  CHECK_FALSE(p.has_grad());  // cleared after stepping
}

TEST_CASE("adam leaves parameters unchanged under zero gradients") {
  Tensor p = Tensor::parameter(Mat::Constant(2, 2, 1.5));
  lsbo::AdamState opt({p}, 0.1);
  p.zero_grad();
  lsbo::adam_step(opt);
  CHECK((p.value() - Mat::Constant(2, 2, 1.5)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adam requires a gradient on every parameter") {
  Tensor p = Tensor::parameter(1.0);
  Tensor q = Tensor::parameter(2.0);
  lsbo::AdamState opt({p, q}, 0.1);
  lsbo::sum(p * p).backward();
  CHECK_THROWS_AS(lsbo::adam_step(opt), std::invalid_argument);
}

TEST_CASE("adam minimizes a quadratic") {
  Tensor p = Tensor::parameter(-4.0);
  lsbo::AdamState opt({p}, 0.05);
  for (int i = 0; i < 1000; ++i) {
    Tensor loss = (p - 3.0) * (p - 3.0);
    loss.backward();
    lsbo::adam_step(opt);
  }
  CHECK(std::abs(p.scalar() - 3.0) < 1e-2);
}

TEST_CASE("identical seeds give bit-identical gradients") {
  auto run = [] {
    lsbo::Rng rng(99);
    Tensor a = Tensor::parameter(random_matrix(4, 4, rng));
    Tensor b = Tensor::parameter(random_matrix(4, 4, rng));
    Tensor spd = lsbo::matmul(lsbo::transpose(a), a) +
                 Tensor::constant(Mat(Mat::Identity(4, 4)));
    Tensor root =
        lsbo::sum(lsbo::tanh(lsbo::matmul(spd, b))) +
        lsbo::sum(lsbo::log(lsbo::diag_part(lsbo::cholesky(spd))));
    root.backward();
    return std::pair<Mat, Mat>(a.grad(), b.grad());
  };
  auto [ga1, gb1] = run();
  auto [ga2, gb2] = run();
  CHECK(std::memcmp(ga1.data(), ga2.data(), sizeof(double) * ga1.size()) == 0);
  CHECK(std::memcmp(gb1.data(), gb2.data(), sizeof(double) * gb1.size()) == 0);
}
