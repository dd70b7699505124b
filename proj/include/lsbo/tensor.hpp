#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "lsbo/common.hpp"

namespace lsbo {

namespace detail {

struct Node {
  Mat value;
  Mat grad;             // allocated lazily; meaningful only when grad_set
  bool grad_set = false;
  bool requires_grad = false;
  bool is_leaf = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad, accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;
  const char* op_name = "leaf";
};

void accumulate_grad(Node& target, const Mat& g);

}  // namespace detail

// Handle to a node in a dynamically built computation DAG. Copies share the
// node. Children hold owning references to parents, so dropping the root of
// an expression frees everything except the leaves still held by models.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Mat v);
  static Tensor constant(double v);
  static Tensor parameter(Mat v);
  static Tensor parameter(double v);

  bool defined() const { return node_ != nullptr; }
  Eigen::Index rows() const { return node().value.rows(); }
  Eigen::Index cols() const { return node().value.cols(); }
  Eigen::Index size() const { return node().value.size(); }

  const Mat& value() const { return node().value; }
  double scalar() const;

  bool requires_grad() const { return node().requires_grad; }
  bool is_leaf() const { return node().is_leaf; }
  bool has_grad() const { return node().grad_set; }
  const Mat& grad() const;

  // Zero, present gradient (distinct from the cleared "no grad" state).
  void zero_grad();
  void clear_grad();

  // In-place value mutation; valid on leaves between graph constructions.
  Mat& raw_value() { return node().value; }

  // Reverse pass from a scalar root. Gradients of reachable non-leaf nodes
  // are reset first; leaf gradients accumulate until cleared.
  void backward() const;

  detail::Node& node() const;
  std::shared_ptr<detail::Node> node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_op(Mat value, std::vector<Tensor> parents,
                        std::function<void(detail::Node&)> backward_fn,
                        const char* op_name);
};

// Builds an op node; drops parents and the backward closure when no parent
// participates in a gradient, so constant subgraphs are not retained.
Tensor make_op(Mat value, std::vector<Tensor> parents,
               std::function<void(detail::Node&)> backward_fn,
               const char* op_name);

// ---------------------------------------------------------------------------
// elementwise and scalar-broadcast arithmetic (1x1 operands broadcast)

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a);

Tensor operator+(const Tensor& a, double b);
Tensor operator+(double a, const Tensor& b);
Tensor operator-(const Tensor& a, double b);
Tensor operator-(double a, const Tensor& b);
Tensor operator*(const Tensor& a, double b);
Tensor operator*(double a, const Tensor& b);
Tensor operator/(const Tensor& a, double b);

// ---------------------------------------------------------------------------
// structural ops

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index len);
Tensor broadcast_rows(const Tensor& row, Eigen::Index n);
Tensor diag_part(const Tensor& a);
Tensor make_diag(const Tensor& v);
Tensor scale_columns(const Tensor& a, const Tensor& s);
Tensor rowwise_sqnorm(const Tensor& a);
Tensor outer_sum(const Tensor& a, const Tensor& b);

// ---------------------------------------------------------------------------
// nonlinearities

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// log normalizing constant of the continuous Bernoulli density, elementwise
// in the logit; series branch below |logit| = 1e-2 keeps 0/0 out.
Tensor cb_log_norm(const Tensor& logits);

Tensor stop_gradient(const Tensor& a);

// ---------------------------------------------------------------------------
// factorizations

// Lower Cholesky factor of a symmetric positive (semi)definite matrix.
// Escalates diagonal jitter through {0, 1e-10, ..., 1e-4} until the
// factorization succeeds; throws CholeskyError with the attempted ladder
// otherwise. jitter_used (optional) reports the accepted rung.
Tensor cholesky(const Tensor& a, double* jitter_used = nullptr);

// Same factorization without building a graph node.
Mat cholesky_raw(const Mat& a, double* jitter_used = nullptr);

// X with L X = B (lower triangular L).
Tensor tri_solve_lower(const Tensor& l, const Tensor& b);
// X with L^T X = B.
Tensor tri_solve_lower_t(const Tensor& l, const Tensor& b);

// ---------------------------------------------------------------------------
// optimizer

struct AdamState {
  std::vector<Tensor> params;
  double lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step_count = 0;
  std::vector<Mat> m;
  std::vector<Mat> v;

  AdamState(std::vector<Tensor> params_, double lr_);
};

// One bias-corrected Adam update over state.params. Every parameter must
// carry a gradient; gradients are cleared after the step.
void adam_step(AdamState& state);

}  // namespace lsbo
