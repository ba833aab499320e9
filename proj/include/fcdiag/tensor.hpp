#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <vector>

#include "fcdiag/common.hpp"

namespace fcdiag {

// One node of the computation graph: value, optional gradient, and the
// requires_grad flag that marks participation in the active tape.
struct TensorNode {
  Shape shape;
  Eigen::ArrayXd value;
  Eigen::ArrayXd grad;  // empty until first accumulation
  bool requires_grad = false;

  bool has_grad() const { return grad.size() > 0; }
  void accumulate(const Eigen::ArrayXd& g);
  void ensure_grad();
};

// Dense n-dimensional array of doubles, row-major. Tensors are immutable
// values after construction; copies share the underlying node.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, Eigen::ArrayXd data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from(std::initializer_list<double> data);
  static Tensor from(Shape shape, std::initializer_list<double> data);
  static Tensor from_vector(Shape shape, const std::vector<double>& data);
  // Uniform in [lo, hi); the usual way to initialize parameters.
  static Tensor uniform(Shape shape, Rng& rng, double lo, double hi,
                        bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  Index dim(int axis) const;
  Index size() const { return node_->value.size(); }

  const Eigen::ArrayXd& value() const { return node_->value; }
  double operator[](Index i) const { return node_->value[i]; }
  double scalar() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  const Eigen::ArrayXd& grad() const;
  bool has_grad() const { return node_->has_grad(); }
  void zero_grad();

  // Direct access for initialization and optimizer updates. Mutating a
  // tensor that is already part of a recorded graph is undefined.
  Eigen::ArrayXd& raw_value() { return node_->value; }
  Eigen::ArrayXd& raw_grad() { return node_->grad; }

  std::shared_ptr<TensorNode> node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

// Reverse-mode tape. Forward ops append entries in execution order; backward
// replays them once, in reverse. Rebuilt per forward pass (define-by-run).
// Single-writer: one tape is owned by one thread via TapeScope.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(std::function<void()> backward_fn);
  std::size_t size() const { return entries_.size(); }

  // Seeds d(loss)/d(loss) = 1 and sweeps entries in reverse order.
  // A tape can only be consumed once.
  void backward(const Tensor& loss);

 private:
  friend struct TapeScope;
  std::vector<std::function<void()>> entries_;
  bool consumed_ = false;
};

// RAII activation of a tape on the current thread.
struct TapeScope {
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor sigmoid(const Tensor& x);
Tensor swish(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);
// Numerically stable log(1 + e^x).
Tensor softplus(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return mul_scalar(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return mul_scalar(a, s); }

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);  // [M,K]x[K,N] -> [M,N]
Tensor transpose(const Tensor& a);                // [R,C] -> [C,R]
Tensor add_row_bias(const Tensor& x, const Tensor& b);      // [N,C] + [C]
Tensor add_channel_bias(const Tensor& x, const Tensor& b);  // [N,C,L] + [C]

// ---- shape ----
Tensor reshape(const Tensor& x, Shape shape);
Tensor slice(const Tensor& x, int axis, Index start, Index len);
Tensor concat(int axis, std::span<const Tensor> parts);
Tensor concat(int axis, std::initializer_list<Tensor> parts);
// [N,C,L] -> [N,C,ceil(L/stride)], keeping positions 0, stride, 2*stride, ...
Tensor subsample_length(const Tensor& x, Index stride);
// [N,C,L] -> [N*L,C] (position-major) and back; used around per-position
// projections such as attention.
Tensor flatten_positions(const Tensor& x);
Tensor unflatten_positions(const Tensor& x, Index n, Index len);
Tensor upsample_nearest(const Tensor& x, Index factor);  // [N,C,L] -> [N,C,f*L]
Tensor gather_rows(const Tensor& table, const std::vector<int>& rows);

// ---- convolution ----
// x [N,C_in,L], kernel [C_out,C_in,K]; standard cross-correlation.
Tensor conv1d(const Tensor& x, const Tensor& kernel, Index stride,
              Index padding);

// ---- reductions & heads ----
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor global_avg_pool(const Tensor& x);  // [N,C,L] -> [N,C]
Tensor softmax_rows(const Tensor& x);     // [R,C] row-wise
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

}  // namespace fcdiag
