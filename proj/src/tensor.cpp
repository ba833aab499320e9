#include "fcdiag/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace fcdiag {

namespace {

thread_local Tape* g_active_tape = nullptr;

using RowMajorMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMajorMap = Eigen::Map<RowMajorMatrix>;
using ConstRowMajorMap = Eigen::Map<const RowMajorMatrix>;

void check_finite(const char* op, const Eigen::ArrayXd& v) {
  if (!debug_checks_enabled()) return;
  if (!v.isFinite().all())
    throw std::runtime_error(std::string(op) + ": non-finite value produced");
}

bool recording(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::active()) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

Tensor make_result(const char* op, Shape shape, Eigen::ArrayXd value,
                   bool on_tape) {
  check_finite(op, value);
  return Tensor(std::move(shape), std::move(value), on_tape);
}

}  // namespace

void TensorNode::accumulate(const Eigen::ArrayXd& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

void TensorNode::ensure_grad() {
  if (grad.size() == 0) grad = Eigen::ArrayXd::Zero(value.size());
}

Tensor::Tensor(Shape shape, Eigen::ArrayXd data, bool requires_grad)
    : node_(std::make_shared<TensorNode>()) {
  require(shape_size(shape) == data.size(),
          "tensor: shape " + shape_str(shape) + " does not match data length " +
              std::to_string(data.size()));
  node_->shape = std::move(shape);
  node_->value = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  Index n = shape_size(shape);
  return Tensor(std::move(shape), Eigen::ArrayXd::Zero(n), requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  Index n = shape_size(shape);
  return Tensor(std::move(shape), Eigen::ArrayXd::Constant(n, v),
                requires_grad);
}

Tensor Tensor::from(std::initializer_list<double> data) {
  Eigen::ArrayXd a(static_cast<Index>(data.size()));
  Index i = 0;
  for (double v : data) a[i++] = v;
  return Tensor({static_cast<Index>(data.size())}, std::move(a));
}

Tensor Tensor::from(Shape shape, std::initializer_list<double> data) {
  Eigen::ArrayXd a(static_cast<Index>(data.size()));
  Index i = 0;
  for (double v : data) a[i++] = v;
  return Tensor(std::move(shape), std::move(a));
}

Tensor Tensor::from_vector(Shape shape, const std::vector<double>& data) {
  Eigen::ArrayXd a = Eigen::Map<const Eigen::ArrayXd>(
      data.data(), static_cast<Index>(data.size()));
  return Tensor(std::move(shape), std::move(a));
}

Tensor Tensor::uniform(Shape shape, Rng& rng, double lo, double hi,
                       bool requires_grad) {
  Index n = shape_size(shape);
  Eigen::ArrayXd a(n);
  for (Index i = 0; i < n; ++i) a[i] = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(a), requires_grad);
}

Index Tensor::dim(int axis) const {
  require(axis >= 0 && axis < rank(), "dim: axis out of range");
  return node_->shape[static_cast<std::size_t>(axis)];
}

double Tensor::scalar() const {
  require(size() == 1, "scalar: tensor has " + std::to_string(size()) +
                           " elements, expected 1");
  return node_->value[0];
}

const Eigen::ArrayXd& Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_->grad.size() > 0) node_->grad.setZero();
}

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::function<void()> backward_fn) {
  entries_.push_back(std::move(backward_fn));
}

void Tape::backward(const Tensor& loss) {
  require(loss.size() == 1, "backward: loss must be scalar");
  if (consumed_) throw std::logic_error("backward: tape already consumed");
  consumed_ = true;
  loss.node()->accumulate(Eigen::ArrayXd::Ones(1));
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
}

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) {
  g_active_tape = &tape;
}

TapeScope::~TapeScope() { g_active_tape = prev_; }

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

namespace {

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(),
          std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
              " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  bool rec = recording({&a, &b});
  Tensor y = make_result("add", a.shape(), a.value() + b.value(), rec);
  if (rec) {
    auto an = a.node(), bn = b.node(), yn = y.node();
    Tape::active()->record([an, bn, yn] {
      if (!yn->has_grad()) return;
      if (an->requires_grad) an->accumulate(yn->grad);
      if (bn->requires_grad) bn->accumulate(yn->grad);
    });
  }
  return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  bool rec = recording({&a, &b});
  Tensor y = make_result("sub", a.shape(), a.value() - b.value(), rec);
  if (rec) {
    auto an = a.node(), bn = b.node(), yn = y.node();
    Tape::active()->record([an, bn, yn] {
      if (!yn->has_grad()) return;
      if (an->requires_grad) an->accumulate(yn->grad);
      if (bn->requires_grad) bn->accumulate(-yn->grad);
    });
  }
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  bool rec = recording({&a, &b});
  Tensor y = make_result("mul", a.shape(), a.value() * b.value(), rec);
  if (rec) {
    auto an = a.node(), bn = b.node(), yn = y.node();
    Tape::active()->record([an, bn, yn] {
      if (!yn->has_grad()) return;
      if (an->requires_grad) an->accumulate(yn->grad * bn->value);
      if (bn->requires_grad) bn->accumulate(yn->grad * an->value);
    });
  }
  return y;
}

Tensor div(const Tensor& a, const Tensor& b) {
  check_same_shape("div", a, b);
  bool rec = recording({&a, &b});
  Tensor y = make_result("div", a.shape(), a.value() / b.value(), rec);
  if (rec) {
    auto an = a.node(), bn = b.node(), yn = y.node();
    Tape::active()->record([an, bn, yn] {
      if (!yn->has_grad()) return;
      if (an->requires_grad) an->accumulate(yn->grad / bn->value);
      if (bn->requires_grad)
        bn->accumulate(-yn->grad * an->value / (bn->value * bn->value));
    });
  }
  return y;
}

Tensor add_scalar(const Tensor& a, double s) {
  bool rec = recording({&a});
  Tensor y = make_result("add_scalar", a.shape(), a.value() + s, rec);
  if (rec) {
    auto an = a.node(), yn = y.node();
    Tape::active()->record([an, yn] {
      if (yn->has_grad()) an->accumulate(yn->grad);
    });
  }
  return y;
}

Tensor mul_scalar(const Tensor& a, double s) {
  bool rec = recording({&a});
  Tensor y = make_result("mul_scalar", a.shape(), a.value() * s, rec);
  if (rec) {
    auto an = a.node(), yn = y.node();
    Tape::active()->record([an, yn, s] {
      if (yn->has_grad()) an->accumulate(yn->grad * s);
    });
  }
  return y;
}

namespace {

// Stable logistic via exp(-|x|), which stays in (0,1]. Written with exp
// rather than tanh: Eigen vectorizes exp for doubles but not tanh.
Eigen::ArrayXd sigmoid_value(const Eigen::ArrayXd& x) {
  Eigen::ArrayXd e = (-x.abs()).exp();
  return (x >= 0.0).select(1.0 / (1.0 + e), e / (1.0 + e));
}

}  // namespace

Tensor sigmoid(const Tensor& x) {
  bool rec = recording({&x});
  Eigen::ArrayXd s = sigmoid_value(x.value());
  Tensor y = make_result("sigmoid", x.shape(), s, rec);
  if (rec) {
    auto xn = x.node(), yn = y.node();
    Tape::active()->record([xn, yn] {
      if (!yn->has_grad()) return;
      xn->accumulate(yn->grad * yn->value * (1.0 - yn->value));
    });
  }
  return y;
}

Tensor swish(const Tensor& x) {
  bool rec = recording({&x});
  Eigen::ArrayXd s = sigmoid_value(x.value());
  Tensor y = make_result("swish", x.shape(), x.value() * s, rec);
  if (rec) {
    auto xn = x.node(), yn = y.node();
    auto sig = std::make_shared<Eigen::ArrayXd>(std::move(s));
    Tape::active()->record([xn, yn, sig] {
      if (!yn->has_grad()) return;
      // d/dx x*s(x) = s + x*s*(1-s)
      xn->accumulate(yn->grad *
                     (*sig + xn->value * *sig * (1.0 - *sig)));
    });
  }
  return y;
}

Tensor tanh(const Tensor& x) {
  bool rec = recording({&x});
  // sign(x) * (1 - e) / (1 + e) with e = exp(-2|x|); vectorizable and stable
  Eigen::ArrayXd e = (-2.0 * x.value().abs()).exp();
  Eigen::ArrayXd mag = (1.0 - e) / (1.0 + e);
  Tensor y = make_result("tanh", x.shape(),
                         (x.value() >= 0.0).select(mag, -mag), rec);
  if (rec) {
    auto xn = x.node(), yn = y.node();
    Tape::active()->record([xn, yn] {
      if (!yn->has_grad()) return;
      xn->accumulate(yn->grad * (1.0 - yn->value * yn->value));
    });
  }
  return y;
}

Tensor log(const Tensor& x) {
  require((x.value() > 0.0).all(), "log: requires strictly positive input");
  bool rec = recording({&x});
  Tensor y = make_result("log", x.shape(), x.value().log(), rec);
  if (rec) {
    auto xn = x.node(), yn = y.node();
    Tape::active()->record([xn, yn] {
      if (yn->has_grad()) xn->accumulate(yn->grad / xn->value);
    });
  }
  return y;
}

Tensor sqrt(const Tensor& x) {
  require((x.value() >= 0.0).all(), "sqrt: requires nonnegative input");
  bool rec = recording({&x});
  Tensor y = make_result("sqrt", x.shape(), x.value().sqrt(), rec);
  if (rec) {
    auto xn = x.node(), yn = y.node();
    Tape::active()->record([xn, yn] {
      if (yn->has_grad()) xn->accumulate(yn->grad * 0.5 / yn->value);
    });
  }
  return y;
}

Tensor square(const Tensor& x) {
  bool rec = recording({&x});
  Tensor y = make_result("square", x.shape(), x.value().square(), rec);
  if (rec) {
    auto xn = x.node(), yn = y.node();
    Tape::active()->record([xn, yn] {
      if (yn->has_grad()) xn->accumulate(yn->grad * 2.0 * xn->value);
    });
  }
  return y;
}

Tensor softplus(const Tensor& x) {
  bool rec = recording({&x});
  Eigen::ArrayXd v =
      x.value().max(0.0) + (-x.value().abs()).exp().log1p();
  Tensor y = make_result("softplus", x.shape(), std::move(v), rec);
  if (rec) {
    auto xn = x.node(), yn = y.node();
    Tape::active()->record([xn, yn] {
      if (!yn->has_grad()) return;
      xn->accumulate(yn->grad * sigmoid_value(xn->value));
    });
  }
  return y;
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  require(lo < hi, "clamp: lo must be < hi");
  bool rec = recording({&x});
  Tensor y =
      make_result("clamp", x.shape(), x.value().max(lo).min(hi), rec);
  if (rec) {
    auto xn = x.node(), yn = y.node();
    Tape::active()->record([xn, yn, lo, hi] {
      if (!yn->has_grad()) return;
      Eigen::ArrayXd mask =
          ((xn->value >= lo) && (xn->value <= hi)).cast<double>();
      xn->accumulate(yn->grad * mask);
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2, "matmul: expects rank-2 tensors");
  Index m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  require(k == k2, "matmul: inner dimensions differ (" + std::to_string(k) +
                       " vs " + std::to_string(k2) + ")");
  ConstRowMajorMap am(a.value().data(), m, k);
  ConstRowMajorMap bm(b.value().data(), k, n);
  Eigen::ArrayXd out(m * n);
  RowMajorMap(out.data(), m, n).noalias() = am * bm;
  bool rec = recording({&a, &b});
  Tensor y = make_result("matmul", {m, n}, std::move(out), rec);
  if (rec) {
    auto an = a.node(), bn = b.node(), yn = y.node();
    Tape::active()->record([an, bn, yn, m, k, n] {
      if (!yn->has_grad()) return;
      ConstRowMajorMap g(yn->grad.data(), m, n);
      ConstRowMajorMap av(an->value.data(), m, k);
      ConstRowMajorMap bv(bn->value.data(), k, n);
      if (an->requires_grad) {
        an->ensure_grad();
        RowMajorMap(an->grad.data(), m, k).noalias() += g * bv.transpose();
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        RowMajorMap(bn->grad.data(), k, n).noalias() += av.transpose() * g;
      }
    });
  }
  return y;
}

Tensor transpose(const Tensor& a) {
  require(a.rank() == 2, "transpose: expects rank-2 tensor");
  Index r = a.dim(0), c = a.dim(1);
  Eigen::ArrayXd out(r * c);
  ConstRowMajorMap am(a.value().data(), r, c);
  RowMajorMap(out.data(), c, r) = am.transpose();
  bool rec = recording({&a});
  Tensor y = make_result("transpose", {c, r}, std::move(out), rec);
  if (rec) {
    auto an = a.node(), yn = y.node();
    Tape::active()->record([an, yn, r, c] {
      if (!yn->has_grad()) return;
      an->ensure_grad();
      ConstRowMajorMap g(yn->grad.data(), c, r);
      RowMajorMap(an->grad.data(), r, c) += g.transpose();
    });
  }
  return y;
}

Tensor add_row_bias(const Tensor& x, const Tensor& b) {
  require(x.rank() == 2 && b.rank() == 1 && x.dim(1) == b.dim(0),
          "add_row_bias: expects [N,C] plus [C]");
  Index n = x.dim(0), c = x.dim(1);
  Eigen::ArrayXd out = x.value();
  RowMajorMap om(out.data(), n, c);
  om.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.value().data(), c);
  bool rec = recording({&x, &b});
  Tensor y = make_result("add_row_bias", x.shape(), std::move(out), rec);
  if (rec) {
    auto xn = x.node(), bn = b.node(), yn = y.node();
    Tape::active()->record([xn, bn, yn, n, c] {
      if (!yn->has_grad()) return;
      if (xn->requires_grad) xn->accumulate(yn->grad);
      if (bn->requires_grad) {
        bn->ensure_grad();
        ConstRowMajorMap g(yn->grad.data(), n, c);
        Eigen::Map<Eigen::RowVectorXd>(bn->grad.data(), c) +=
            g.colwise().sum();
      }
    });
  }
  return y;
}

Tensor add_channel_bias(const Tensor& x, const Tensor& b) {
  require(x.rank() == 3 && b.rank() == 1 && x.dim(1) == b.dim(0),
          "add_channel_bias: expects [N,C,L] plus [C]");
  Index n = x.dim(0), c = x.dim(1), l = x.dim(2);
  Eigen::ArrayXd out = x.value();
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < c; ++j)
      out.segment((i * c + j) * l, l) += b.value()[j];
  bool rec = recording({&x, &b});
  Tensor y = make_result("add_channel_bias", x.shape(), std::move(out), rec);
  if (rec) {
    auto xn = x.node(), bn = b.node(), yn = y.node();
    Tape::active()->record([xn, bn, yn, n, c, l] {
      if (!yn->has_grad()) return;
      if (xn->requires_grad) xn->accumulate(yn->grad);
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (Index i = 0; i < n; ++i)
          for (Index j = 0; j < c; ++j)
            bn->grad[j] += yn->grad.segment((i * c + j) * l, l).sum();
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  require(shape_size(shape) == x.size(),
          "reshape: element count mismatch " + shape_str(x.shape()) + " -> " +
              shape_str(shape));
  bool rec = recording({&x});
  Tensor y = make_result("reshape", std::move(shape), x.value(), rec);
  if (rec) {
    auto xn = x.node(), yn = y.node();
    Tape::active()->record([xn, yn] {
      if (yn->has_grad()) xn->accumulate(yn->grad);
    });
  }
  return y;
}

namespace {

// Row-major strides.
std::vector<Index> strides_of(const Shape& s) {
  std::vector<Index> st(s.size());
  Index acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[static_cast<std::size_t>(i)] = acc;
    acc *= s[static_cast<std::size_t>(i)];
  }
  return st;
}

}  // namespace

Tensor slice(const Tensor& x, int axis, Index start, Index len) {
  require(axis >= 0 && axis < x.rank(), "slice: axis out of range");
  Index ax = x.dim(axis);
  require(start >= 0 && len > 0 && start + len <= ax,
          "slice: window [" + std::to_string(start) + "," +
              std::to_string(start + len) + ") exceeds axis of size " +
              std::to_string(ax));
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = len;
  auto st = strides_of(x.shape());
  Index outer = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  Index inner = st[static_cast<std::size_t>(axis)];
  Eigen::ArrayXd out(shape_size(out_shape));
  Index block = len * inner;
  for (Index o = 0; o < outer; ++o)
    out.segment(o * block, block) =
        x.value().segment(o * ax * inner + start * inner, block);
  bool rec = recording({&x});
  Tensor y = make_result("slice", std::move(out_shape), std::move(out), rec);
  if (rec) {
    auto xn = x.node(), yn = y.node();
    Tape::active()->record([xn, yn, outer, inner, ax, start, len] {
      if (!yn->has_grad()) return;
      xn->ensure_grad();
      Index block = len * inner;
      for (Index o = 0; o < outer; ++o)
        xn->grad.segment(o * ax * inner + start * inner, block) +=
            yn->grad.segment(o * block, block);
    });
  }
  return y;
}

Tensor concat(int axis, std::span<const Tensor> parts) {
  require(!parts.empty(), "concat: no parts");
  const Tensor& first = parts[0];
  require(axis >= 0 && axis < first.rank(), "concat: axis out of range");
  Index total = 0;
  for (const Tensor& p : parts) {
    require(p.rank() == first.rank(), "concat: rank mismatch");
    for (int i = 0; i < first.rank(); ++i)
      if (i != axis)
        require(p.dim(i) == first.dim(i), "concat: shape mismatch off-axis");
    total += p.dim(axis);
  }
  Shape out_shape = first.shape();
  out_shape[static_cast<std::size_t>(axis)] = total;
  auto st_out = strides_of(out_shape);
  Index outer = 1;
  for (int i = 0; i < axis; ++i) outer *= first.dim(i);
  Index inner = st_out[static_cast<std::size_t>(axis)];
  Eigen::ArrayXd out(shape_size(out_shape));
  Index offset = 0;
  bool rec = false;
  for (const Tensor& p : parts) rec = rec || recording({&p});
  for (const Tensor& p : parts) {
    Index plen = p.dim(axis);
    Index block = plen * inner;
    for (Index o = 0; o < outer; ++o)
      out.segment(o * total * inner + offset * inner, block) =
          p.value().segment(o * block, block);
    offset += plen;
  }
  Tensor y = make_result("concat", std::move(out_shape), std::move(out), rec);
  if (rec) {
    std::vector<std::shared_ptr<TensorNode>> ins;
    std::vector<Index> lens;
    for (const Tensor& p : parts) {
      ins.push_back(p.node());
      lens.push_back(p.dim(axis));
    }
    auto yn = y.node();
    Tape::active()->record([ins, lens, yn, outer, inner, total] {
      if (!yn->has_grad()) return;
      Index offset = 0;
      for (std::size_t pi = 0; pi < ins.size(); ++pi) {
        Index block = lens[pi] * inner;
        if (ins[pi]->requires_grad) {
          ins[pi]->ensure_grad();
          for (Index o = 0; o < outer; ++o)
            ins[pi]->grad.segment(o * block, block) +=
                yn->grad.segment(o * total * inner + offset * inner, block);
        }
        offset += lens[pi];
      }
    });
  }
  return y;
}

Tensor concat(int axis, std::initializer_list<Tensor> parts) {
  std::vector<Tensor> v(parts);
  return concat(axis, std::span<const Tensor>(v));
}

Tensor subsample_length(const Tensor& x, Index stride) {
  require(x.rank() == 3, "subsample_length: expects [N,C,L]");
  require(stride >= 1, "subsample_length: stride must be >= 1");
  Index n = x.dim(0), c = x.dim(1), l = x.dim(2);
  Index lo = (l - 1) / stride + 1;
  Eigen::ArrayXd out(n * c * lo);
  for (Index r = 0; r < n * c; ++r)
    for (Index t = 0; t < lo; ++t) out[r * lo + t] = x.value()[r * l + t * stride];
  bool rec = recording({&x});
  Tensor y = make_result("subsample_length", {n, c, lo}, std::move(out), rec);
  if (rec) {
    auto xn = x.node(), yn = y.node();
    Tape::active()->record([xn, yn, n, c, l, lo, stride] {
      if (!yn->has_grad()) return;
      xn->ensure_grad();
      for (Index r = 0; r < n * c; ++r)
        for (Index t = 0; t < lo; ++t)
          xn->grad[r * l + t * stride] += yn->grad[r * lo + t];
    });
  }
  return y;
}

Tensor flatten_positions(const Tensor& x) {
  require(x.rank() == 3, "flatten_positions: expects [N,C,L]");
  Index n = x.dim(0), c = x.dim(1), l = x.dim(2);
  Eigen::ArrayXd out(n * l * c);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < c; ++j)
      for (Index t = 0; t < l; ++t)
        out[(i * l + t) * c + j] = x.value()[(i * c + j) * l + t];
  bool rec = recording({&x});
  Tensor y = make_result("flatten_positions", {n * l, c}, std::move(out), rec);
  if (rec) {
    auto xn = x.node(), yn = y.node();
    Tape::active()->record([xn, yn, n, c, l] {
      if (!yn->has_grad()) return;
      xn->ensure_grad();
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < c; ++j)
          for (Index t = 0; t < l; ++t)
            xn->grad[(i * c + j) * l + t] += yn->grad[(i * l + t) * c + j];
    });
  }
  return y;
}

Tensor unflatten_positions(const Tensor& x, Index n, Index len) {
  require(x.rank() == 2, "unflatten_positions: expects [N*L,C]");
  require(x.dim(0) == n * len, "unflatten_positions: row count mismatch");
  Index c = x.dim(1);
  Eigen::ArrayXd out(n * c * len);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < c; ++j)
      for (Index t = 0; t < len; ++t)
        out[(i * c + j) * len + t] = x.value()[(i * len + t) * c + j];
  bool rec = recording({&x});
  Tensor y =
      make_result("unflatten_positions", {n, c, len}, std::move(out), rec);
  if (rec) {
    auto xn = x.node(), yn = y.node();
    Tape::active()->record([xn, yn, n, c, len] {
      if (!yn->has_grad()) return;
      xn->ensure_grad();
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < c; ++j)
          for (Index t = 0; t < len; ++t)
            xn->grad[(i * len + t) * c + j] += yn->grad[(i * c + j) * len + t];
    });
  }
  return y;
}

Tensor upsample_nearest(const Tensor& x, Index factor) {
  require(x.rank() == 3, "upsample_nearest: expects [N,C,L]");
  require(factor >= 1, "upsample_nearest: factor must be >= 1");
  Index n = x.dim(0), c = x.dim(1), l = x.dim(2);
  Index lo = l * factor;
  Eigen::ArrayXd out(n * c * lo);
  for (Index r = 0; r < n * c; ++r)
    for (Index t = 0; t < l; ++t)
      out.segment(r * lo + t * factor, factor) = x.value()[r * l + t];
  bool rec = recording({&x});
  Tensor y = make_result("upsample_nearest", {n, c, lo}, std::move(out), rec);
  if (rec) {
    auto xn = x.node(), yn = y.node();
    Tape::active()->record([xn, yn, n, c, l, factor] {
      if (!yn->has_grad()) return;
      xn->ensure_grad();
      Index lo = l * factor;
      for (Index r = 0; r < n * c; ++r)
        for (Index t = 0; t < l; ++t)
          xn->grad[r * l + t] +=
              yn->grad.segment(r * lo + t * factor, factor).sum();
    });
  }
  return y;
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& rows) {
  require(table.rank() == 2, "gather_rows: expects [R,D] table");
  Index r = table.dim(0), d = table.dim(1);
  for (int idx : rows)
    require(idx >= 0 && idx < r,
            "gather_rows: index " + std::to_string(idx) +
                " out of range [0," + std::to_string(r) + ")");
  Index n = static_cast<Index>(rows.size());
  Eigen::ArrayXd out(n * d);
  for (Index i = 0; i < n; ++i)
    out.segment(i * d, d) = table.value().segment(rows[static_cast<std::size_t>(i)] * d, d);
  bool rec = recording({&table});
  Tensor y = make_result("gather_rows", {n, d}, std::move(out), rec);
  if (rec) {
    auto tn = table.node(), yn = y.node();
    Tape::active()->record([tn, yn, rows, d] {
      if (!yn->has_grad()) return;
      tn->ensure_grad();
      for (std::size_t i = 0; i < rows.size(); ++i)
        tn->grad.segment(rows[i] * d, d) +=
            yn->grad.segment(static_cast<Index>(i) * d, d);
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// convolution
// ---------------------------------------------------------------------------

namespace {

// Receptive fields as rows: row (n*L_out + t) holds the field of output
// position t of sample n, laid out [c*K + k]. Row-major keeps the fill and
// the per-sample GEMM operands contiguous.
void fill_rows(const Eigen::ArrayXd& x, Index n, Index cin, Index l, Index k,
               Index stride, Index padding, Index lout, RowMajorMatrix& cols) {
  cols.resize(n * lout, cin * k);
  for (Index i = 0; i < n; ++i) {
    for (Index t = 0; t < lout; ++t) {
      double* row = cols.data() + (i * lout + t) * cin * k;
      Index base = t * stride - padding;
      for (Index c = 0; c < cin; ++c) {
        const double* src = x.data() + (i * cin + c) * l + base;
        double* dst = row + c * k;
        for (Index kk = 0; kk < k; ++kk) {
          Index p = base + kk;
          dst[kk] = (p >= 0 && p < l) ? src[kk] : 0.0;
        }
      }
    }
  }
}

// K=1, stride 1, no padding: a per-sample channel mix, no gather needed.
Tensor conv1d_pointwise(const Tensor& x, const Tensor& kernel) {
  Index n = x.dim(0), cin = x.dim(1), l = x.dim(2);
  Index cout = kernel.dim(0);
  ConstRowMajorMap w(kernel.value().data(), cout, cin);
  Eigen::ArrayXd out(n * cout * l);
  for (Index i = 0; i < n; ++i) {
    ConstRowMajorMap xi(x.value().data() + i * cin * l, cin, l);
    RowMajorMap(out.data() + i * cout * l, cout, l).noalias() = w * xi;
  }
  bool rec = recording({&x, &kernel});
  Tensor y = make_result("conv1d", {n, cout, l}, std::move(out), rec);
  if (rec) {
    auto xn = x.node(), kn = kernel.node(), yn = y.node();
    Tape::active()->record([xn, kn, yn, n, cin, l, cout] {
      if (!yn->has_grad()) return;
      if (kn->requires_grad) kn->ensure_grad();
      if (xn->requires_grad) xn->ensure_grad();
      ConstRowMajorMap w(kn->value.data(), cout, cin);
      for (Index i = 0; i < n; ++i) {
        ConstRowMajorMap gi(yn->grad.data() + i * cout * l, cout, l);
        if (kn->requires_grad) {
          ConstRowMajorMap xi(xn->value.data() + i * cin * l, cin, l);
          RowMajorMap(kn->grad.data(), cout, cin).noalias() +=
              gi * xi.transpose();
        }
        if (xn->requires_grad)
          RowMajorMap(xn->grad.data() + i * cin * l, cin, l).noalias() +=
              w.transpose() * gi;
      }
    });
  }
  return y;
}

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& kernel, Index stride,
              Index padding) {
  require(x.rank() == 3, "conv1d: input must be [N,C_in,L]");
  require(kernel.rank() == 3, "conv1d: kernel must be [C_out,C_in,K]");
  require(stride >= 1 && padding >= 0, "conv1d: bad stride/padding");
  Index n = x.dim(0), cin = x.dim(1), l = x.dim(2);
  Index cout = kernel.dim(0), k = kernel.dim(2);
  require(kernel.dim(1) == cin, "conv1d: channel mismatch (input " +
                                    std::to_string(cin) + ", kernel " +
                                    std::to_string(kernel.dim(1)) + ")");
  require(k <= l + 2 * padding, "conv1d: kernel longer than padded input");
  Index lout = (l + 2 * padding - k) / stride + 1;
  require(lout >= 1, "conv1d: empty output");
  if (k == 1 && stride == 1 && padding == 0)
    return conv1d_pointwise(x, kernel);

  auto cols = std::make_shared<RowMajorMatrix>();
  fill_rows(x.value(), n, cin, l, k, stride, padding, lout, *cols);
  ConstRowMajorMap w(kernel.value().data(), cout, cin * k);
  Eigen::ArrayXd out(n * cout * lout);
  for (Index i = 0; i < n; ++i)
    RowMajorMap(out.data() + i * cout * lout, cout, lout).noalias() =
        w * cols->middleRows(i * lout, lout).transpose();

  bool rec = recording({&x, &kernel});
  Tensor y = make_result("conv1d", {n, cout, lout}, std::move(out), rec);
  if (rec) {
    auto xn = x.node(), kn = kernel.node(), yn = y.node();
    Tape::active()->record(
        [xn, kn, yn, cols, n, cin, l, cout, k, stride, padding, lout] {
          if (!yn->has_grad()) return;
          if (kn->requires_grad) kn->ensure_grad();
          if (xn->requires_grad) xn->ensure_grad();
          ConstRowMajorMap w(kn->value.data(), cout, cin * k);
          RowMajorMatrix dcols;
          if (xn->requires_grad) dcols.resize(lout, cin * k);
          for (Index i = 0; i < n; ++i) {
            ConstRowMajorMap gi(yn->grad.data() + i * cout * lout, cout, lout);
            if (kn->requires_grad)
              RowMajorMap(kn->grad.data(), cout, cin * k).noalias() +=
                  gi * cols->middleRows(i * lout, lout);
            if (xn->requires_grad) {
              dcols.noalias() = gi.transpose() * w;  // [L_out, C_in*K]
              for (Index t = 0; t < lout; ++t) {
                const double* row = dcols.data() + t * cin * k;
                Index base = t * stride - padding;
                for (Index c = 0; c < cin; ++c) {
                  double* dst = xn->grad.data() + (i * cin + c) * l + base;
                  const double* src = row + c * k;
                  for (Index kk = 0; kk < k; ++kk) {
                    Index p = base + kk;
                    if (p >= 0 && p < l) dst[kk] += src[kk];
                  }
                }
              }
            }
          }
        });
  }
  return y;
}

// ---------------------------------------------------------------------------
// reductions & heads
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& x) {
  bool rec = recording({&x});
  Eigen::ArrayXd out(1);
  out[0] = x.value().sum();
  Tensor y = make_result("sum", {1}, std::move(out), rec);
  if (rec) {
    auto xn = x.node(), yn = y.node();
    Tape::active()->record([xn, yn] {
      if (!yn->has_grad()) return;
      xn->ensure_grad();
      xn->grad += yn->grad[0];
    });
  }
  return y;
}

Tensor mean(const Tensor& x) {
  require(x.size() > 0, "mean: empty tensor");
  bool rec = recording({&x});
  Eigen::ArrayXd out(1);
  out[0] = x.value().sum() / static_cast<double>(x.size());
  Tensor y = make_result("mean", {1}, std::move(out), rec);
  if (rec) {
    auto xn = x.node(), yn = y.node();
    double inv = 1.0 / static_cast<double>(x.size());
    Tape::active()->record([xn, yn, inv] {
      if (!yn->has_grad()) return;
      xn->ensure_grad();
      xn->grad += yn->grad[0] * inv;
    });
  }
  return y;
}

Tensor global_avg_pool(const Tensor& x) {
  require(x.rank() == 3, "global_avg_pool: expects [N,C,L]");
  Index n = x.dim(0), c = x.dim(1), l = x.dim(2);
  Eigen::ArrayXd out(n * c);
  for (Index r = 0; r < n * c; ++r) out[r] = x.value().segment(r * l, l).mean();
  bool rec = recording({&x});
  Tensor y = make_result("global_avg_pool", {n, c}, std::move(out), rec);
  if (rec) {
    auto xn = x.node(), yn = y.node();
    double inv = 1.0 / static_cast<double>(l);
    Tape::active()->record([xn, yn, l, inv] {
      if (!yn->has_grad()) return;
      xn->ensure_grad();
      for (Index r = 0; r < yn->grad.size(); ++r)
        xn->grad.segment(r * l, l) += yn->grad[r] * inv;
    });
  }
  return y;
}

Tensor softmax_rows(const Tensor& x) {
  require(x.rank() == 2, "softmax_rows: expects [R,C]");
  Index r = x.dim(0), c = x.dim(1);
  Eigen::ArrayXd out(r * c);
  // plain loops: rows are often narrow and expression setup would dominate
  for (Index i = 0; i < r; ++i) {
    const double* in = x.value().data() + i * c;
    double* o = out.data() + i * c;
    double m = in[0];
    for (Index j = 1; j < c; ++j) m = std::max(m, in[j]);
    double z = 0.0;
    for (Index j = 0; j < c; ++j) {
      o[j] = std::exp(in[j] - m);
      z += o[j];
    }
    double inv = 1.0 / z;
    for (Index j = 0; j < c; ++j) o[j] *= inv;
  }
  bool rec = recording({&x});
  Tensor y = make_result("softmax_rows", x.shape(), std::move(out), rec);
  if (rec) {
    auto xn = x.node(), yn = y.node();
    Tape::active()->record([xn, yn, r, c] {
      if (!yn->has_grad()) return;
      xn->ensure_grad();
      for (Index i = 0; i < r; ++i) {
        const double* g = yn->grad.data() + i * c;
        const double* v = yn->value.data() + i * c;
        double* dst = xn->grad.data() + i * c;
        double dot = 0.0;
        for (Index j = 0; j < c; ++j) dot += g[j] * v[j];
        for (Index j = 0; j < c; ++j) dst[j] += v[j] * (g[j] - dot);
      }
    });
  }
  return y;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  require(logits.rank() == 2, "cross_entropy: expects [N,R] logits");
  Index n = logits.dim(0), r = logits.dim(1);
  require(static_cast<Index>(labels.size()) == n,
          "cross_entropy: label count mismatch");
  for (int lab : labels)
    require(lab >= 0 && lab < r, "cross_entropy: label out of range");
  auto probs = std::make_shared<Eigen::ArrayXd>(n * r);
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    auto row = logits.value().segment(i * r, r);
    double m = row.maxCoeff();
    Eigen::ArrayXd e = (row - m).exp();
    double z = e.sum();
    probs->segment(i * r, r) = e / z;
    total += std::log(z) + m - row[labels[static_cast<std::size_t>(i)]];
  }
  Eigen::ArrayXd out(1);
  out[0] = total / static_cast<double>(n);
  bool rec = recording({&logits});
  Tensor y = make_result("cross_entropy", {1}, std::move(out), rec);
  if (rec) {
    auto xn = logits.node(), yn = y.node();
    Tape::active()->record([xn, yn, probs, labels, n, r] {
      if (!yn->has_grad()) return;
      xn->ensure_grad();
      double scale = yn->grad[0] / static_cast<double>(n);
      for (Index i = 0; i < n; ++i) {
        xn->grad.segment(i * r, r) += scale * probs->segment(i * r, r);
        xn->grad[i * r + labels[static_cast<std::size_t>(i)]] -= scale;
      }
    });
  }
  return y;
}

}  // namespace fcdiag
