#include "lsbo/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_map>

namespace lsbo {

namespace {

void check_finite(const Mat& v, const char* op_name) {
  if (!v.allFinite()) {
    std::ostringstream os;
    os << op_name << ": non-finite result (" << v.rows() << "x" << v.cols()
       << ")";
    throw NumericalError(os.str());
  }
}

[[noreturn]] void shape_error(const char* op_name, const Mat& a, const Mat& b) {
  std::ostringstream os;
  os << op_name << ": incompatible shapes " << a.rows() << "x" << a.cols()
     << " and " << b.rows() << "x" << b.cols();
  throw std::invalid_argument(os.str());
}

bool is_scalar(const Mat& m) { return m.size() == 1; }

// Broadcast-aware gradient deposit for elementwise binaries: a 1x1 operand
// receives the sum of the incoming gradient.
void accum_broadcast(detail::Node& parent, const Mat& g) {
  if (parent.value.size() == 1 && g.size() != 1) {
    detail::accumulate_grad(parent, Mat::Constant(1, 1, g.sum()));
  } else {
    detail::accumulate_grad(parent, g);
  }
}

Mat broadcast_to(const Mat& m, Eigen::Index r, Eigen::Index c) {
  if (m.rows() == r && m.cols() == c) return m;
  return Mat::Constant(r, c, m(0, 0));
}

}  // namespace

namespace detail {

void accumulate_grad(Node& target, const Mat& g) {
  if (!target.grad_set) {
    target.grad = g;
    target.grad_set = true;
  } else {
    target.grad += g;
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Tensor basics

detail::Node& Tensor::node() const {
  if (!node_) throw std::logic_error("Tensor: empty handle");
  return *node_;
}

Tensor Tensor::constant(Mat v) {
  check_finite(v, "constant");
  auto n = std::make_shared<detail::Node>();
  n->value = std::move(v);
  n->is_leaf = true;
  return Tensor(std::move(n));
}

Tensor Tensor::constant(double v) { return constant(Mat::Constant(1, 1, v)); }

Tensor Tensor::parameter(Mat v) {
  check_finite(v, "parameter");
  auto n = std::make_shared<detail::Node>();
  n->value = std::move(v);
  n->is_leaf = true;
  n->requires_grad = true;
  return Tensor(std::move(n));
}

Tensor Tensor::parameter(double v) { return parameter(Mat::Constant(1, 1, v)); }

double Tensor::scalar() const {
  if (node().value.size() != 1)
    throw std::invalid_argument("Tensor::scalar: tensor is not 1x1");
  return node().value(0, 0);
}

const Mat& Tensor::grad() const {
  if (!node().grad_set)
    throw std::logic_error("Tensor::grad: no gradient present");
  return node().grad;
}

void Tensor::zero_grad() {
  detail::Node& n = node();
  n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  n.grad_set = true;
}

void Tensor::clear_grad() {
  detail::Node& n = node();
  n.grad.resize(0, 0);
  n.grad_set = false;
}

Tensor make_op(Mat value, std::vector<Tensor> parents,
               std::function<void(detail::Node&)> backward_fn,
               const char* op_name) {
  check_finite(value, op_name);
  auto n = std::make_shared<detail::Node>();
  n->value = std::move(value);
  n->op_name = op_name;
  bool any_grad = false;
  for (const Tensor& p : parents) any_grad = any_grad || p.requires_grad();
  if (any_grad) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (const Tensor& p : parents) n->parents.push_back(p.node_ptr());
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(n));
}

void Tensor::backward() const {
  detail::Node& root = node();
  if (root.value.size() != 1)
    throw std::invalid_argument("backward: root must be a 1x1 scalar");
  if (!root.requires_grad) return;  // nothing upstream participates

  // Post-order over grad-participating ancestors; gray/black states catch
  // cycles, which the construction API should make impossible.
  enum : int { kOpen = 1, kDone = 2 };
  std::unordered_map<detail::Node*, int> state;
  std::vector<detail::Node*> order;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(&root, 0);
  state[&root] = kOpen;
  while (!stack.empty()) {
    detail::Node* n = stack.back().first;
    std::size_t& next = stack.back().second;
    bool descended = false;
    while (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (!p->requires_grad) continue;
      auto it = state.find(p);
      if (it == state.end()) {
        state[p] = kOpen;
        stack.emplace_back(p, 0);
        descended = true;
        break;
      }
      if (it->second == kOpen)
        throw std::logic_error("backward: graph contains a cycle");
    }
    if (descended) continue;
    state[n] = kDone;
    order.push_back(n);
    stack.pop_back();
  }

  for (detail::Node* n : order)
    if (!n->is_leaf) {
      n->grad.resize(0, 0);
      n->grad_set = false;
    }
  detail::accumulate_grad(root, Mat::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward_fn && n->grad_set) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------
// elementwise binaries

namespace {

template <typename FwdFn, typename BwdFn>
Tensor elementwise_binary(const Tensor& a, const Tensor& b, FwdFn fwd,
                          BwdFn bwd, const char* name) {
  const Mat& av = a.value();
  const Mat& bv = b.value();
  Eigen::Index r, c;
  if (av.rows() == bv.rows() && av.cols() == bv.cols()) {
    r = av.rows();
    c = av.cols();
  } else if (is_scalar(av)) {
    r = bv.rows();
    c = bv.cols();
  } else if (is_scalar(bv)) {
    r = av.rows();
    c = av.cols();
  } else {
    shape_error(name, av, bv);
  }
  Mat ae = broadcast_to(av, r, c);
  Mat be = broadcast_to(bv, r, c);
  return make_op(fwd(ae, be), {a, b},
                 [bwd](detail::Node& n) {
                   detail::Node& pa = *n.parents[0];
                   detail::Node& pb = *n.parents[1];
                   const Eigen::Index r = n.value.rows(), c = n.value.cols();
                   Mat ae = broadcast_to(pa.value, r, c);
                   Mat be = broadcast_to(pb.value, r, c);
                   Mat ga, gb;
                   bwd(n.grad, ae, be, n.value, ga, gb);
                   if (pa.requires_grad) accum_broadcast(pa, ga);
                   if (pb.requires_grad) accum_broadcast(pb, gb);
                 },
                 name);
}

}  // namespace

Tensor operator+(const Tensor& a, const Tensor& b) {
  return elementwise_binary(
      a, b, [](const Mat& x, const Mat& y) { return Mat(x + y); },
      [](const Mat& g, const Mat&, const Mat&, const Mat&, Mat& ga, Mat& gb) {
        ga = g;
        gb = g;
      },
      "add");
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  return elementwise_binary(
      a, b, [](const Mat& x, const Mat& y) { return Mat(x - y); },
      [](const Mat& g, const Mat&, const Mat&, const Mat&, Mat& ga, Mat& gb) {
        ga = g;
        gb = -g;
      },
      "sub");
}

Tensor operator*(const Tensor& a, const Tensor& b) {
  return elementwise_binary(
      a, b,
      [](const Mat& x, const Mat& y) { return Mat(x.cwiseProduct(y)); },
      [](const Mat& g, const Mat& x, const Mat& y, const Mat&, Mat& ga,
         Mat& gb) {
        ga = g.cwiseProduct(y);
        gb = g.cwiseProduct(x);
      },
      "mul");
}

Tensor operator/(const Tensor& a, const Tensor& b) {
  return elementwise_binary(
      a, b,
      [](const Mat& x, const Mat& y) { return Mat(x.cwiseQuotient(y)); },
      [](const Mat& g, const Mat&, const Mat& y, const Mat& v, Mat& ga,
         Mat& gb) {
        ga = g.cwiseQuotient(y);
        gb = -g.cwiseProduct(v).cwiseQuotient(y);
      },
      "div");
}

Tensor operator-(const Tensor& a) {
  return make_op(-a.value(), {a},
                 [](detail::Node& n) {
                   detail::accumulate_grad(*n.parents[0], Mat(-n.grad));
                 },
                 "neg");
}

Tensor operator+(const Tensor& a, double b) { return a + Tensor::constant(b); }
Tensor operator+(double a, const Tensor& b) { return Tensor::constant(a) + b; }
Tensor operator-(const Tensor& a, double b) { return a - Tensor::constant(b); }
Tensor operator-(double a, const Tensor& b) { return Tensor::constant(a) - b; }
Tensor operator*(const Tensor& a, double b) { return a * Tensor::constant(b); }
Tensor operator*(double a, const Tensor& b) { return Tensor::constant(a) * b; }
Tensor operator/(const Tensor& a, double b) { return a / Tensor::constant(b); }

// ---------------------------------------------------------------------------
// structural ops

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a.value(), b.value());
  return make_op(a.value() * b.value(), {a, b},
                 [](detail::Node& n) {
                   detail::Node& pa = *n.parents[0];
                   detail::Node& pb = *n.parents[1];
                   if (pa.requires_grad)
                     detail::accumulate_grad(pa,
                                             Mat(n.grad * pb.value.transpose()));
                   if (pb.requires_grad)
                     detail::accumulate_grad(pb,
                                             Mat(pa.value.transpose() * n.grad));
                 },
                 "matmul");
}

Tensor transpose(const Tensor& a) {
  return make_op(a.value().transpose(), {a},
                 [](detail::Node& n) {
                   detail::accumulate_grad(*n.parents[0],
                                           Mat(n.grad.transpose()));
                 },
                 "transpose");
}

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index len) {
  if (start < 0 || len < 0 || start + len > a.cols())
    throw std::invalid_argument("slice_cols: range out of bounds");
  return make_op(a.value().middleCols(start, len), {a},
                 [start, len](detail::Node& n) {
                   detail::Node& pa = *n.parents[0];
                   Mat g = Mat::Zero(pa.value.rows(), pa.value.cols());
                   g.middleCols(start, len) = n.grad;
                   detail::accumulate_grad(pa, g);
                 },
                 "slice_cols");
}

Tensor broadcast_rows(const Tensor& row, Eigen::Index n) {
  if (row.rows() != 1)
    throw std::invalid_argument("broadcast_rows: input must be 1xC");
  if (n < 1) throw std::invalid_argument("broadcast_rows: n must be positive");
  return make_op(row.value().replicate(n, 1), {row},
                 [](detail::Node& nd) {
                   detail::accumulate_grad(*nd.parents[0],
                                           Mat(nd.grad.colwise().sum()));
                 },
                 "broadcast_rows");
}

Tensor diag_part(const Tensor& a) {
  if (a.rows() != a.cols())
    throw std::invalid_argument("diag_part: matrix must be square");
  return make_op(a.value().diagonal(), {a},
                 [](detail::Node& n) {
                   detail::Node& pa = *n.parents[0];
                   Mat g = Mat::Zero(pa.value.rows(), pa.value.cols());
                   g.diagonal() = n.grad.col(0);
                   detail::accumulate_grad(pa, g);
                 },
                 "diag_part");
}

Tensor make_diag(const Tensor& v) {
  if (v.cols() != 1)
    throw std::invalid_argument("make_diag: input must be Nx1");
  Mat d = Mat::Zero(v.rows(), v.rows());
  d.diagonal() = v.value().col(0);
  return make_op(std::move(d), {v},
                 [](detail::Node& n) {
                   detail::accumulate_grad(*n.parents[0],
                                           Mat(n.grad.diagonal()));
                 },
                 "make_diag");
}

Tensor scale_columns(const Tensor& a, const Tensor& s) {
  if (s.cols() != 1 || s.rows() != a.cols())
    shape_error("scale_columns", a.value(), s.value());
  Mat v = (a.value().array().rowwise() *
           s.value().col(0).transpose().array())
              .matrix();
  return make_op(std::move(v), {a, s},
                 [](detail::Node& n) {
                   detail::Node& pa = *n.parents[0];
                   detail::Node& ps = *n.parents[1];
                   if (pa.requires_grad) {
                     Mat ga = (n.grad.array().rowwise() *
                               ps.value.col(0).transpose().array())
                                  .matrix();
                     detail::accumulate_grad(pa, ga);
                   }
                   if (ps.requires_grad) {
                     Mat gs = n.grad.cwiseProduct(pa.value)
                                  .colwise()
                                  .sum()
                                  .transpose();
                     detail::accumulate_grad(ps, gs);
                   }
                 },
                 "scale_columns");
}

Tensor rowwise_sqnorm(const Tensor& a) {
  return make_op(a.value().rowwise().squaredNorm(), {a},
                 [](detail::Node& n) {
                   detail::Node& pa = *n.parents[0];
                   Mat g = (2.0 * (pa.value.array().colwise() *
                                   n.grad.col(0).array()))
                               .matrix();
                   detail::accumulate_grad(pa, g);
                 },
                 "rowwise_sqnorm");
}

Tensor outer_sum(const Tensor& a, const Tensor& b) {
  if (a.cols() != 1 || b.cols() != 1)
    shape_error("outer_sum", a.value(), b.value());
  Mat v = a.value().col(0).replicate(1, b.rows()) +
          b.value().col(0).transpose().replicate(a.rows(), 1);
  return make_op(std::move(v), {a, b},
                 [](detail::Node& n) {
                   detail::Node& pa = *n.parents[0];
                   detail::Node& pb = *n.parents[1];
                   if (pa.requires_grad)
                     detail::accumulate_grad(pa, Mat(n.grad.rowwise().sum()));
                   if (pb.requires_grad)
                     detail::accumulate_grad(
                         pb, Mat(n.grad.colwise().sum().transpose()));
                 },
                 "outer_sum");
}

// ---------------------------------------------------------------------------
// nonlinearities

namespace {

template <typename FwdFn, typename DerivFn>
Tensor elementwise_unary(const Tensor& a, FwdFn fwd, DerivFn deriv,
                         const char* name) {
  return make_op(fwd(a.value()), {a},
                 [deriv](detail::Node& n) {
                   detail::Node& pa = *n.parents[0];
                   Mat g = n.grad.cwiseProduct(deriv(pa.value, n.value));
                   detail::accumulate_grad(pa, g);
                 },
                 name);
}

}  // namespace

Tensor exp(const Tensor& a) {
  return elementwise_unary(
      a, [](const Mat& x) { return Mat(x.array().exp().matrix()); },
      [](const Mat&, const Mat& v) { return v; }, "exp");
}

Tensor log(const Tensor& a) {
  return elementwise_unary(
      a, [](const Mat& x) { return Mat(x.array().log().matrix()); },
      [](const Mat& x, const Mat&) { return Mat(x.cwiseInverse()); }, "log");
}

Tensor tanh(const Tensor& a) {
  return elementwise_unary(
      a, [](const Mat& x) { return Mat(x.array().tanh().matrix()); },
      [](const Mat&, const Mat& v) {
        return Mat(1.0 - v.array().square());
      },
      "tanh");
}

Tensor sigmoid(const Tensor& a) {
  return elementwise_unary(
      a,
      [](const Mat& x) {
        return Mat(0.5 * (1.0 + (0.5 * x.array()).tanh()));
      },
      [](const Mat&, const Mat& v) {
        return Mat(v.array() * (1.0 - v.array()));
      },
      "sigmoid");
}

Tensor softplus(const Tensor& a) {
  return elementwise_unary(
      a,
      [](const Mat& x) {
        return Mat(x.array().max(0.0) + (-x.array().abs()).exp().log1p());
      },
      [](const Mat& x, const Mat&) {
        return Mat(0.5 * (1.0 + (0.5 * x.array()).tanh()));
      },
      "softplus");
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo must not exceed hi");
  return make_op(Mat(a.value().array().max(lo).min(hi).matrix()), {a},
                 [lo, hi](detail::Node& n) {
                   detail::Node& pa = *n.parents[0];
                   Mat mask = ((pa.value.array() > lo) &&
                               (pa.value.array() < hi))
                                  .cast<double>()
                                  .matrix();
                   detail::accumulate_grad(pa, Mat(n.grad.cwiseProduct(mask)));
                 },
                 "clamp");
}

Tensor sum(const Tensor& a) {
  return make_op(Mat::Constant(1, 1, a.value().sum()), {a},
                 [](detail::Node& n) {
                   detail::Node& pa = *n.parents[0];
                   detail::accumulate_grad(
                       pa, Mat(Mat::Constant(pa.value.rows(), pa.value.cols(),
                                             n.grad(0, 0))));
                 },
                 "sum");
}

Tensor mean(const Tensor& a) {
  return sum(a) * (1.0 / static_cast<double>(a.size()));
}

namespace {

// log C(eta) with C the continuous Bernoulli normalizer in logit form,
// C(eta) = eta / tanh(eta / 2). Series below |eta| = 1e-2; next omitted
// term is O(eta^6), far below double precision there.
double cb_log_norm_value(double eta) {
  if (std::abs(eta) < 1e-2) {
    const double e2 = eta * eta;
    return std::log(2.0) + e2 / 12.0 - 7.0 * e2 * e2 / 1440.0;
  }
  return std::log(eta / (2.0 * std::tanh(eta / 2.0))) + std::log(2.0);
}

double cb_log_norm_deriv(double eta) {
  if (std::abs(eta) < 1e-2) {
    return eta / 6.0 - 7.0 * eta * eta * eta / 360.0;
  }
  const double t = std::tanh(eta / 2.0);
  return 1.0 / eta - 0.5 * (1.0 - t * t) / t;
}

}  // namespace

Tensor cb_log_norm(const Tensor& logits) {
  return elementwise_unary(
      logits,
      [](const Mat& x) {
        return Mat(x.unaryExpr([](double e) { return cb_log_norm_value(e); }));
      },
      [](const Mat& x, const Mat&) {
        return Mat(x.unaryExpr([](double e) { return cb_log_norm_deriv(e); }));
      },
      "cb_log_norm");
}

Tensor stop_gradient(const Tensor& a) { return Tensor::constant(a.value()); }

// ---------------------------------------------------------------------------
// factorizations

namespace {

constexpr double kJitterLadder[] = {0.0,  1e-10, 1e-9, 1e-8,
                                    1e-7, 1e-6,  1e-5, 1e-4};

}  // namespace

Mat cholesky_raw(const Mat& av, double* jitter_used) {
  if (av.rows() != av.cols())
    throw std::invalid_argument("cholesky: matrix must be square");
  const double scale = av.cwiseAbs().maxCoeff();
  if ((av - av.transpose()).cwiseAbs().maxCoeff() > 1e-8 * (1.0 + scale))
    throw std::invalid_argument("cholesky: matrix is not symmetric");

  for (double jitter : kJitterLadder) {
    Mat shifted = av;
    shifted.diagonal().array() += jitter;
    Eigen::LLT<Mat> llt(shifted);
    if (llt.info() == Eigen::Success) {
      Mat l = llt.matrixL();
      if (l.allFinite() && l.diagonal().minCoeff() > 0.0) {
        if (jitter_used) *jitter_used = jitter;
        return l;
      }
    }
  }
  std::ostringstream os;
  os << "cholesky: factorization failed after jitter ladder {";
  for (std::size_t i = 0; i < std::size(kJitterLadder); ++i)
    os << (i ? ", " : "") << kJitterLadder[i];
  os << "}";
  throw CholeskyError(os.str());
}

Tensor cholesky(const Tensor& a, double* jitter_used) {
  Mat l = cholesky_raw(a.value(), jitter_used);
  return make_op(std::move(l), {a},
                 [](detail::Node& n) {
                   // Murray's reverse-mode rule; upper-triangle gradient
                   // entries are discarded since the output there is
                   // structurally zero.
                   const Mat& l = n.value;
                   Mat gl = n.grad.triangularView<Eigen::Lower>();
                   Mat p = l.transpose() * gl;
                   Mat phi = p.triangularView<Eigen::Lower>();
                   phi.diagonal() *= 0.5;
                   Mat s1 = l.transpose()
                                .triangularView<Eigen::Upper>()
                                .solve(phi);
                   Mat s = l.transpose()
                               .triangularView<Eigen::Upper>()
                               .solve(Mat(s1.transpose()))
                               .transpose();
                   Mat sym = 0.5 * (s + s.transpose());
                   detail::accumulate_grad(*n.parents[0], sym);
                 },
                 "cholesky");
}

namespace {

void check_tri_solve_shapes(const Tensor& l, const Tensor& b,
                            const char* name) {
  if (l.rows() != l.cols()) {
    std::ostringstream os;
    os << name << ": factor must be square";
    throw std::invalid_argument(os.str());
  }
  if (l.rows() != b.rows()) shape_error(name, l.value(), b.value());
}

}  // namespace

Tensor tri_solve_lower(const Tensor& l, const Tensor& b) {
  check_tri_solve_shapes(l, b, "tri_solve_lower");
  Mat x = l.value().triangularView<Eigen::Lower>().solve(b.value());
  return make_op(std::move(x), {l, b},
                 [](detail::Node& n) {
                   detail::Node& pl = *n.parents[0];
                   detail::Node& pb = *n.parents[1];
                   Mat y = pl.value.transpose()
                               .triangularView<Eigen::Upper>()
                               .solve(n.grad);
                   if (pb.requires_grad) detail::accumulate_grad(pb, y);
                   if (pl.requires_grad) {
                     Mat gl = -(y * n.value.transpose());
                     Mat tril = gl.triangularView<Eigen::Lower>();
                     detail::accumulate_grad(pl, tril);
                   }
                 },
                 "tri_solve_lower");
}

Tensor tri_solve_lower_t(const Tensor& l, const Tensor& b) {
  check_tri_solve_shapes(l, b, "tri_solve_lower_t");
  Mat x = l.value().transpose().triangularView<Eigen::Upper>().solve(b.value());
  return make_op(std::move(x), {l, b},
                 [](detail::Node& n) {
                   detail::Node& pl = *n.parents[0];
                   detail::Node& pb = *n.parents[1];
                   Mat y = pl.value.triangularView<Eigen::Lower>().solve(n.grad);
                   if (pb.requires_grad) detail::accumulate_grad(pb, y);
                   if (pl.requires_grad) {
                     Mat gl = -(n.value * y.transpose());
                     Mat tril = gl.triangularView<Eigen::Lower>();
                     detail::accumulate_grad(pl, tril);
                   }
                 },
                 "tri_solve_lower_t");
}

// ---------------------------------------------------------------------------
// optimizer

AdamState::AdamState(std::vector<Tensor> params_, double lr_)
    : params(std::move(params_)), lr(lr_) {
  m.reserve(params.size());
  v.reserve(params.size());
  for (const Tensor& p : params) {
    if (!p.is_leaf() || !p.requires_grad())
      throw std::invalid_argument(
          "AdamState: parameters must be grad-enabled leaves");
    m.push_back(Mat::Zero(p.rows(), p.cols()));
    v.push_back(Mat::Zero(p.rows(), p.cols()));
  }
}

void adam_step(AdamState& state) {
  for (std::size_t i = 0; i < state.params.size(); ++i) {
    if (!state.params[i].has_grad()) {
      std::ostringstream os;
      os << "adam_step: parameter " << i << " has no gradient";
      throw std::invalid_argument(os.str());
    }
  }
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, state.step_count);
  const double bc2 = 1.0 - std::pow(state.beta2, state.step_count);
  for (std::size_t i = 0; i < state.params.size(); ++i) {
    Tensor& p = state.params[i];
    const Mat& g = p.grad();
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] =
        state.beta2 * state.v[i] + (1.0 - state.beta2) * g.cwiseProduct(g);
    Mat mhat = state.m[i] / bc1;
    Mat vhat = state.v[i] / bc2;
    p.raw_value().array() -=
        state.lr * mhat.array() / (vhat.array().sqrt() + state.eps);
    check_finite(p.raw_value(), "adam_step");
    p.clear_grad();
  }
}

}  // namespace lsbo
