#include "rha/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "rha/kernels.hpp"
#include "rha/rng.hpp"

namespace rha {

namespace {

constexpr double kLnEps = 1e-12;   // clamp inside cross_entropy
constexpr double kLayerNormEps = 1e-5;

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

void check_axis(const Tensor& t, int axis, const char* op) {
  if (axis < 0 || axis >= t.rank())
    fail(std::string(op) + ": axis " + std::to_string(axis) + " invalid for shape " +
         shape_str(t.shape));
}

// Decomposes a shape around `axis` into (outer, n, inner) so that the
// element (o, i, r) lives at ((o * n) + i) * inner + r.
struct AxisView {
  std::size_t outer, n, inner;
};

AxisView axis_view(const Shape& s, int axis) {
  AxisView v{1, static_cast<std::size_t>(s[static_cast<std::size_t>(axis)]), 1};
  for (int i = 0; i < axis; ++i) v.outer *= static_cast<std::size_t>(s[static_cast<std::size_t>(i)]);
  for (int i = axis + 1; i < static_cast<int>(s.size()); ++i)
    v.inner *= static_cast<std::size_t>(s[static_cast<std::size_t>(i)]);
  return v;
}

}  // namespace

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape s, bool req_grad) : shape(std::move(s)), requires_grad(req_grad) {
  for (int d : shape)
    if (d <= 0) fail("tensor extents must be positive, got " + shape_str(shape));
  data.assign(shape_numel(shape), 0.0);
}

void Tensor::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() {
  if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

TensorPtr make_tensor(Shape s, bool requires_grad) {
  return std::make_shared<Tensor>(std::move(s), requires_grad);
}

TensorPtr make_tensor(Shape s, std::vector<double> values, bool requires_grad) {
  auto t = std::make_shared<Tensor>(std::move(s), requires_grad);
  if (values.size() != t->data.size())
    fail("tensor data length " + std::to_string(values.size()) + " does not match shape " +
         shape_str(t->shape));
  t->data = std::move(values);
  return t;
}

TensorPtr make_scalar(double v, bool requires_grad) {
  return make_tensor({1}, {v}, requires_grad);
}

TensorPtr Graph::record(const char* kind, TensorPtr out, std::vector<TensorPtr> inputs,
                        std::function<void()> bw) {
  bool needs = false;
  if (grad_enabled_)
    for (const auto& in : inputs)
      if (in->requires_grad) needs = true;
  out->requires_grad = needs;
  if (needs) records_.push_back({kind, std::move(inputs), out, std::move(bw)});
  return out;
}

void Graph::backward(const TensorPtr& loss) {
  if (loss->numel() != 1) fail("backward: loss must be scalar, got " + shape_str(loss->shape));
  loss->ensure_grad();
  loss->grad[0] = 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    it->output->ensure_grad();
    for (auto& in : it->inputs)
      if (in->requires_grad) in->ensure_grad();
    it->backward();
  }
}

// ---------------------------------------------------------------- matmul

TensorPtr Graph::matmul(const TensorPtr& a, const TensorPtr& b) {
  if (a->rank() != 2 || b->rank() != 2 || a->dim(1) != b->dim(0))
    fail("matmul: incompatible shapes " + shape_str(a->shape) + " and " + shape_str(b->shape));
  const int m = a->dim(0), k = a->dim(1), n = b->dim(1);
  auto out = make_tensor({m, n});
  // C[i,:] = sum_k A[i,k] * B[k,:]
  for (int i = 0; i < m; ++i) {
    double* crow = out->data.data() + static_cast<std::size_t>(i) * n;
    const double* arow = a->data.data() + static_cast<std::size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk)
      kernels::axpy(arow[kk], b->data.data() + static_cast<std::size_t>(kk) * n, crow,
                    static_cast<std::size_t>(n));
  }
  return record("matmul", out, {a, b}, [a, b, out, m, k, n]() {
    const double* dC = out->grad.data();
    if (a->requires_grad) {
      // dA = dC * B^T: dA[i,k] = dot(dC[i,:], B[k,:])
      for (int i = 0; i < m; ++i) {
        const double* drow = dC + static_cast<std::size_t>(i) * n;
        double* darow = a->grad.data() + static_cast<std::size_t>(i) * k;
        for (int kk = 0; kk < k; ++kk)
          darow[kk] += kernels::dot(drow, b->data.data() + static_cast<std::size_t>(kk) * n,
                                    static_cast<std::size_t>(n));
      }
    }
    if (b->requires_grad) {
      // dB = A^T * dC: dB[k,:] += A[i,k] * dC[i,:]
      for (int i = 0; i < m; ++i) {
        const double* drow = dC + static_cast<std::size_t>(i) * n;
        const double* arow = a->data.data() + static_cast<std::size_t>(i) * k;
        for (int kk = 0; kk < k; ++kk)
          kernels::axpy(arow[kk], drow, b->grad.data() + static_cast<std::size_t>(kk) * n,
                        static_cast<std::size_t>(n));
      }
    }
  });
}

TensorPtr Graph::transpose(const TensorPtr& a) {
  if (a->rank() != 2) fail("transpose: expected 2-D, got " + shape_str(a->shape));
  const int m = a->dim(0), n = a->dim(1);
  auto out = make_tensor({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out->data[static_cast<std::size_t>(j) * m + i] = a->data[static_cast<std::size_t>(i) * n + j];
  return record("transpose", out, {a}, [a, out, m, n]() {
    if (!a->requires_grad) return;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        a->grad[static_cast<std::size_t>(i) * n + j] +=
            out->grad[static_cast<std::size_t>(j) * m + i];
  });
}

TensorPtr Graph::add_rowvec(const TensorPtr& x, const TensorPtr& v) {
  if (x->rank() != 2 || v->rank() != 1 || x->dim(1) != v->dim(0))
    fail("add_rowvec: incompatible shapes " + shape_str(x->shape) + " and " + shape_str(v->shape));
  const int n = x->dim(0), d = x->dim(1);
  auto out = make_tensor(x->shape);
  for (int i = 0; i < n; ++i)
    kernels::add(x->data.data() + static_cast<std::size_t>(i) * d, v->data.data(),
                 out->data.data() + static_cast<std::size_t>(i) * d, static_cast<std::size_t>(d));
  return record("add_rowvec", out, {x, v}, [x, v, out, n, d]() {
    for (int i = 0; i < n; ++i) {
      const double* drow = out->grad.data() + static_cast<std::size_t>(i) * d;
      if (x->requires_grad)
        kernels::axpy(1.0, drow, x->grad.data() + static_cast<std::size_t>(i) * d,
                      static_cast<std::size_t>(d));
      if (v->requires_grad) kernels::axpy(1.0, drow, v->grad.data(), static_cast<std::size_t>(d));
    }
  });
}

// ------------------------------------------------------------ elementwise

TensorPtr Graph::add(const TensorPtr& a, const TensorPtr& b) {
  if (a->shape != b->shape)
    fail("add: shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
  auto out = make_tensor(a->shape);
  kernels::add(a->data.data(), b->data.data(), out->data.data(), a->numel());
  return record("add", out, {a, b}, [a, b, out]() {
    if (a->requires_grad) kernels::axpy(1.0, out->grad.data(), a->grad.data(), a->numel());
    if (b->requires_grad) kernels::axpy(1.0, out->grad.data(), b->grad.data(), b->numel());
  });
}

TensorPtr Graph::sub(const TensorPtr& a, const TensorPtr& b) {
  if (a->shape != b->shape)
    fail("sub: shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
  auto out = make_tensor(a->shape);
  kernels::sub(a->data.data(), b->data.data(), out->data.data(), a->numel());
  return record("sub", out, {a, b}, [a, b, out]() {
    if (a->requires_grad) kernels::axpy(1.0, out->grad.data(), a->grad.data(), a->numel());
    if (b->requires_grad) kernels::axpy(-1.0, out->grad.data(), b->grad.data(), b->numel());
  });
}

TensorPtr Graph::mul(const TensorPtr& a, const TensorPtr& b) {
  if (a->shape != b->shape)
    fail("mul: shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
  auto out = make_tensor(a->shape);
  kernels::mul(a->data.data(), b->data.data(), out->data.data(), a->numel());
  return record("mul", out, {a, b}, [a, b, out]() {
    const std::size_t n = out->numel();
    if (a->requires_grad)
      for (std::size_t i = 0; i < n; ++i) a->grad[i] += out->grad[i] * b->data[i];
    if (b->requires_grad)
      for (std::size_t i = 0; i < n; ++i) b->grad[i] += out->grad[i] * a->data[i];
  });
}

TensorPtr Graph::scale(const TensorPtr& x, double c) {
  auto out = make_tensor(x->shape);
  kernels::scale(x->data.data(), c, out->data.data(), x->numel());
  return record("scale", out, {x}, [x, out, c]() {
    if (x->requires_grad) kernels::axpy(c, out->grad.data(), x->grad.data(), x->numel());
  });
}

TensorPtr Graph::mul_scalar(const TensorPtr& x, const TensorPtr& s) {
  if (s->numel() != 1) fail("mul_scalar: scalar operand has shape " + shape_str(s->shape));
  auto out = make_tensor(x->shape);
  kernels::scale(x->data.data(), s->data[0], out->data.data(), x->numel());
  return record("mul_scalar", out, {x, s}, [x, s, out]() {
    if (x->requires_grad) kernels::axpy(s->data[0], out->grad.data(), x->grad.data(), x->numel());
    if (s->requires_grad) s->grad[0] += kernels::dot(out->grad.data(), x->data.data(), x->numel());
  });
}

TensorPtr Graph::relu(const TensorPtr& x) {
  auto out = make_tensor(x->shape);
  kernels::relu(x->data.data(), out->data.data(), x->numel());
  return record("relu", out, {x}, [x, out]() {
    if (!x->requires_grad) return;
    for (std::size_t i = 0; i < x->numel(); ++i)
      if (x->data[i] > 0.0) x->grad[i] += out->grad[i];
  });
}

TensorPtr Graph::softplus(const TensorPtr& x) {
  auto out = make_tensor(x->shape);
  for (std::size_t i = 0; i < x->numel(); ++i) {
    double v = x->data[i];
    out->data[i] = v > 30.0 ? v : std::log1p(std::exp(v));
  }
  return record("softplus", out, {x}, [x, out]() {
    if (!x->requires_grad) return;
    for (std::size_t i = 0; i < x->numel(); ++i) {
      double v = x->data[i];
      double sig = v > 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      x->grad[i] += out->grad[i] * sig;
    }
  });
}

TensorPtr Graph::dropout(const TensorPtr& x, double rate, std::uint64_t seed, bool training) {
  if (rate < 0.0 || rate >= 1.0) fail("dropout: rate must be in [0,1)");
  if (!training || rate == 0.0) return x;
  auto keep = std::make_shared<std::vector<double>>(x->numel());
  Rng rng(seed);
  const double inv = 1.0 / (1.0 - rate);
  auto out = make_tensor(x->shape);
  for (std::size_t i = 0; i < x->numel(); ++i) {
    (*keep)[i] = rng.uniform() >= rate ? inv : 0.0;
    out->data[i] = x->data[i] * (*keep)[i];
  }
  return record("dropout", out, {x}, [x, out, keep]() {
    if (!x->requires_grad) return;
    for (std::size_t i = 0; i < x->numel(); ++i) x->grad[i] += out->grad[i] * (*keep)[i];
  });
}

// ------------------------------------------------------------------ shape

TensorPtr Graph::reshape(const TensorPtr& x, Shape s) {
  if (shape_numel(s) != x->numel())
    fail("reshape: cannot view " + shape_str(x->shape) + " as " + shape_str(s));
  auto out = make_tensor(std::move(s));
  out->data = x->data;
  return record("reshape", out, {x}, [x, out]() {
    if (x->requires_grad) kernels::axpy(1.0, out->grad.data(), x->grad.data(), x->numel());
  });
}

TensorPtr Graph::concat(const std::vector<TensorPtr>& xs, int axis) {
  if (xs.empty()) fail("concat: no inputs");
  check_axis(*xs[0], axis, "concat");
  Shape out_shape = xs[0]->shape;
  int total = 0;
  for (const auto& x : xs) {
    if (x->rank() != xs[0]->rank()) fail("concat: rank mismatch");
    for (int i = 0; i < x->rank(); ++i)
      if (i != axis && x->dim(i) != xs[0]->dim(i))
        fail("concat: non-concat axis mismatch, " + shape_str(x->shape) + " vs " +
             shape_str(xs[0]->shape));
    total += x->dim(axis);
  }
  out_shape[static_cast<std::size_t>(axis)] = total;
  auto out = make_tensor(out_shape);
  const AxisView ov = axis_view(out_shape, axis);
  std::size_t off = 0;
  for (const auto& x : xs) {
    const AxisView xv = axis_view(x->shape, axis);
    for (std::size_t o = 0; o < xv.outer; ++o)
      std::copy_n(x->data.data() + o * xv.n * xv.inner, xv.n * xv.inner,
                  out->data.data() + (o * ov.n + off) * ov.inner);
    off += xv.n;
  }
  auto inputs = xs;
  return record("concat", out, inputs, [inputs, out, axis, ov]() {
    std::size_t off = 0;
    for (const auto& x : inputs) {
      const AxisView xv = axis_view(x->shape, axis);
      if (x->requires_grad)
        for (std::size_t o = 0; o < xv.outer; ++o)
          kernels::axpy(1.0, out->grad.data() + (o * ov.n + off) * ov.inner,
                        x->grad.data() + o * xv.n * xv.inner, xv.n * xv.inner);
      off += xv.n;
    }
  });
}

TensorPtr Graph::slice(const TensorPtr& x, int axis, int start, int len) {
  check_axis(*x, axis, "slice");
  if (start < 0 || len <= 0 || start + len > x->dim(axis))
    fail("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
         ") invalid for axis " + std::to_string(axis) + " of " + shape_str(x->shape));
  Shape out_shape = x->shape;
  out_shape[static_cast<std::size_t>(axis)] = len;
  auto out = make_tensor(out_shape);
  const AxisView xv = axis_view(x->shape, axis);
  for (std::size_t o = 0; o < xv.outer; ++o)
    std::copy_n(x->data.data() + (o * xv.n + static_cast<std::size_t>(start)) * xv.inner,
                static_cast<std::size_t>(len) * xv.inner,
                out->data.data() + o * static_cast<std::size_t>(len) * xv.inner);
  return record("slice", out, {x}, [x, out, xv, start, len]() {
    if (!x->requires_grad) return;
    for (std::size_t o = 0; o < xv.outer; ++o)
      kernels::axpy(1.0, out->grad.data() + o * static_cast<std::size_t>(len) * xv.inner,
                    x->grad.data() + (o * xv.n + static_cast<std::size_t>(start)) * xv.inner,
                    static_cast<std::size_t>(len) * xv.inner);
  });
}

TensorPtr Graph::slice_rows(const TensorPtr& x, int start, int len) {
  return slice(x, 0, start, len);
}

TensorPtr Graph::gather_rows(const TensorPtr& x, const std::vector<int>& rows) {
  if (x->rank() != 2) fail("gather_rows: expected 2-D, got " + shape_str(x->shape));
  const int n = x->dim(0), d = x->dim(1);
  for (int r : rows)
    if (r < 0 || r >= n) fail("gather_rows: row " + std::to_string(r) + " out of range");
  auto out = make_tensor({static_cast<int>(rows.size()), d});
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(x->data.data() + static_cast<std::size_t>(rows[i]) * d, d,
                out->data.data() + i * static_cast<std::size_t>(d));
  auto rows_copy = std::make_shared<std::vector<int>>(rows);
  return record("gather_rows", out, {x}, [x, out, rows_copy, d]() {
    if (!x->requires_grad) return;
    for (std::size_t i = 0; i < rows_copy->size(); ++i)
      kernels::axpy(1.0, out->grad.data() + i * static_cast<std::size_t>(d),
                    x->grad.data() + static_cast<std::size_t>((*rows_copy)[i]) * d,
                    static_cast<std::size_t>(d));
  });
}

TensorPtr Graph::shift_rows(const TensorPtr& x, int offset) {
  if (x->rank() != 2) fail("shift_rows: expected 2-D, got " + shape_str(x->shape));
  const int n = x->dim(0), d = x->dim(1);
  auto out = make_tensor(x->shape);
  for (int i = 0; i < n; ++i) {
    const int src = i - offset;
    if (src >= 0 && src < n)
      std::copy_n(x->data.data() + static_cast<std::size_t>(src) * d, d,
                  out->data.data() + static_cast<std::size_t>(i) * d);
  }
  return record("shift_rows", out, {x}, [x, out, offset, n, d]() {
    if (!x->requires_grad) return;
    for (int i = 0; i < n; ++i) {
      const int src = i - offset;
      if (src >= 0 && src < n)
        kernels::axpy(1.0, out->grad.data() + static_cast<std::size_t>(i) * d,
                      x->grad.data() + static_cast<std::size_t>(src) * d,
                      static_cast<std::size_t>(d));
    }
  });
}

TensorPtr Graph::pick(const TensorPtr& x, std::size_t flat_index) {
  if (flat_index >= x->numel()) fail("pick: index out of range");
  auto out = make_tensor({1}, std::vector<double>{x->data[flat_index]});
  return record("pick", out, {x}, [x, out, flat_index]() {
    if (x->requires_grad) x->grad[flat_index] += out->grad[0];
  });
}

// ------------------------------------------------------------- reductions

TensorPtr Graph::reduce_max(const TensorPtr& x, int axis) {
  check_axis(*x, axis, "reduce_max");
  const AxisView v = axis_view(x->shape, axis);
  Shape out_shape = x->shape;
  out_shape.erase(out_shape.begin() + axis);
  if (out_shape.empty()) out_shape = {1};
  auto out = make_tensor(out_shape);
  auto argmax = std::make_shared<std::vector<std::size_t>>(v.outer * v.inner);
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t r = 0; r < v.inner; ++r) {
      std::size_t best = (o * v.n) * v.inner + r;
      for (std::size_t i = 1; i < v.n; ++i) {
        const std::size_t idx = (o * v.n + i) * v.inner + r;
        if (x->data[idx] > x->data[best]) best = idx;  // strict: first max wins
      }
      (*argmax)[o * v.inner + r] = best;
      out->data[o * v.inner + r] = x->data[best];
    }
  return record("reduce_max", out, {x}, [x, out, argmax]() {
    if (!x->requires_grad) return;
    for (std::size_t i = 0; i < argmax->size(); ++i) x->grad[(*argmax)[i]] += out->grad[i];
  });
}

TensorPtr Graph::reduce_sum(const TensorPtr& x, int axis) {
  check_axis(*x, axis, "reduce_sum");
  const AxisView v = axis_view(x->shape, axis);
  Shape out_shape = x->shape;
  out_shape.erase(out_shape.begin() + axis);
  if (out_shape.empty()) out_shape = {1};
  auto out = make_tensor(out_shape);
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t i = 0; i < v.n; ++i)
      kernels::axpy(1.0, x->data.data() + (o * v.n + i) * v.inner,
                    out->data.data() + o * v.inner, v.inner);
  return record("reduce_sum", out, {x}, [x, out, v]() {
    if (!x->requires_grad) return;
    for (std::size_t o = 0; o < v.outer; ++o)
      for (std::size_t i = 0; i < v.n; ++i)
        kernels::axpy(1.0, out->grad.data() + o * v.inner,
                      x->grad.data() + (o * v.n + i) * v.inner, v.inner);
  });
}

TensorPtr Graph::sum_all(const TensorPtr& x) {
  auto out = make_tensor({1}, std::vector<double>{kernels::sum(x->data.data(), x->numel())});
  return record("sum_all", out, {x}, [x, out]() {
    if (!x->requires_grad)
      return;
    for (std::size_t i = 0; i < x->numel(); ++i) x->grad[i] += out->grad[0];
  });
}

TensorPtr Graph::mean_all(const TensorPtr& x) {
  const double inv = 1.0 / static_cast<double>(x->numel());
  auto out = make_tensor({1}, std::vector<double>{kernels::sum(x->data.data(), x->numel()) * inv});
  return record("mean_all", out, {x}, [x, out, inv]() {
    if (!x->requires_grad) return;
    for (std::size_t i = 0; i < x->numel(); ++i) x->grad[i] += out->grad[0] * inv;
  });
}

namespace {

// shared softmax forward over one strided slice, with max subtraction
void softmax_slice(const double* x, double* y, std::size_t n, std::size_t stride) {
  double mx = x[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i * stride]);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    y[i * stride] = std::exp(x[i * stride] - mx);
    z += y[i * stride];
  }
  const double inv = 1.0 / z;
  for (std::size_t i = 0; i < n; ++i) y[i * stride] *= inv;
}

}  // namespace

TensorPtr Graph::softmax(const TensorPtr& x, int axis) {
  check_axis(*x, axis, "softmax");
  const AxisView v = axis_view(x->shape, axis);
  auto out = make_tensor(x->shape);
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t r = 0; r < v.inner; ++r)
      softmax_slice(x->data.data() + o * v.n * v.inner + r,
                    out->data.data() + o * v.n * v.inner + r, v.n, v.inner);
  return record("softmax", out, {x}, [x, out, v]() {
    if (!x->requires_grad) return;
    for (std::size_t o = 0; o < v.outer; ++o)
      for (std::size_t r = 0; r < v.inner; ++r) {
        const std::size_t base = o * v.n * v.inner + r;
        double dsum = 0.0;
        for (std::size_t i = 0; i < v.n; ++i)
          dsum += out->grad[base + i * v.inner] * out->data[base + i * v.inner];
        for (std::size_t i = 0; i < v.n; ++i)
          x->grad[base + i * v.inner] +=
              out->data[base + i * v.inner] * (out->grad[base + i * v.inner] - dsum);
      }
  });
}

TensorPtr Graph::softmax_masked(const TensorPtr& x, const TensorPtr& mask, int axis) {
  check_axis(*x, axis, "softmax_masked");
  if (x->shape != mask->shape)
    fail("softmax_masked: mask shape " + shape_str(mask->shape) + " does not match " +
         shape_str(x->shape));
  const AxisView v = axis_view(x->shape, axis);
  auto out = make_tensor(x->shape);
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t r = 0; r < v.inner; ++r) {
      const std::size_t base = o * v.n * v.inner + r;
      double mx = 0.0;
      bool any = false;
      for (std::size_t i = 0; i < v.n; ++i) {
        if (mask->data[base + i * v.inner] == 0.0) continue;
        const double val = x->data[base + i * v.inner];
        mx = any ? std::max(mx, val) : val;
        any = true;
      }
      if (!any) fail("softmax_masked: a slice has no unmasked entries");
      double z = 0.0;
      for (std::size_t i = 0; i < v.n; ++i) {
        const std::size_t idx = base + i * v.inner;
        if (mask->data[idx] == 0.0) {
          out->data[idx] = 0.0;
        } else {
          out->data[idx] = std::exp(x->data[idx] - mx);
          z += out->data[idx];
        }
      }
      const double inv = 1.0 / z;
      for (std::size_t i = 0; i < v.n; ++i)
        if (mask->data[base + i * v.inner] != 0.0) out->data[base + i * v.inner] *= inv;
    }
  return record("softmax_masked", out, {x, mask}, [x, mask, out, v]() {
    if (!x->requires_grad) return;
    for (std::size_t o = 0; o < v.outer; ++o)
      for (std::size_t r = 0; r < v.inner; ++r) {
        const std::size_t base = o * v.n * v.inner + r;
        double dsum = 0.0;
        for (std::size_t i = 0; i < v.n; ++i)
          dsum += out->grad[base + i * v.inner] * out->data[base + i * v.inner];
        for (std::size_t i = 0; i < v.n; ++i) {
          const std::size_t idx = base + i * v.inner;
          if (mask->data[idx] != 0.0)
            x->grad[idx] += out->data[idx] * (out->grad[idx] - dsum);
        }
      }
  });
}

TensorPtr Graph::layer_norm(const TensorPtr& x, const TensorPtr& gain, const TensorPtr& bias) {
  const int d = x->dim(x->rank() - 1);
  if (d < 2)
    fail("layer_norm: last axis extent " + std::to_string(d) +
         " is degenerate, need at least 2");
  if (gain->shape != Shape{d} || bias->shape != Shape{d})
    fail("layer_norm: gain/bias must have shape [" + std::to_string(d) + "]");
  const std::size_t rows = x->numel() / static_cast<std::size_t>(d);
  auto out = make_tensor(x->shape);
  auto xhat = std::make_shared<std::vector<double>>(x->numel());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xv = x->data.data() + r * static_cast<std::size_t>(d);
    double mean = kernels::sum(xv, static_cast<std::size_t>(d)) / d;
    double var = 0.0;
    for (int i = 0; i < d; ++i) var += (xv[i] - mean) * (xv[i] - mean);
    var /= d;
    const double rs = 1.0 / std::sqrt(var + kLayerNormEps);
    (*rstd)[r] = rs;
    double* h = xhat->data() + r * static_cast<std::size_t>(d);
    double* y = out->data.data() + r * static_cast<std::size_t>(d);
    for (int i = 0; i < d; ++i) {
      h[i] = (xv[i] - mean) * rs;
      y[i] = gain->data[static_cast<std::size_t>(i)] * h[i] +
             bias->data[static_cast<std::size_t>(i)];
    }
  }
  return record("layer_norm", out, {x, gain, bias}, [x, gain, bias, out, xhat, rstd, d, rows]() {
    for (std::size_t r = 0; r < rows; ++r) {
      const double* h = xhat->data() + r * static_cast<std::size_t>(d);
      const double* dy = out->grad.data() + r * static_cast<std::size_t>(d);
      if (gain->requires_grad)
        for (int i = 0; i < d; ++i) gain->grad[static_cast<std::size_t>(i)] += dy[i] * h[i];
      if (bias->requires_grad)
        for (int i = 0; i < d; ++i) bias->grad[static_cast<std::size_t>(i)] += dy[i];
      if (x->requires_grad) {
        double m1 = 0.0, m2 = 0.0;  // mean(g*dy), mean(g*dy*xhat)
        for (int i = 0; i < d; ++i) {
          const double gdy = gain->data[static_cast<std::size_t>(i)] * dy[i];
          m1 += gdy;
          m2 += gdy * h[i];
        }
        m1 /= d;
        m2 /= d;
        double* dx = x->grad.data() + r * static_cast<std::size_t>(d);
        for (int i = 0; i < d; ++i) {
          const double gdy = gain->data[static_cast<std::size_t>(i)] * dy[i];
          dx[i] += (gdy - m1 - h[i] * m2) * (*rstd)[r];
        }
      }
    }
  });
}

TensorPtr Graph::cross_entropy(const TensorPtr& probs, int target) {
  if (probs->rank() != 1)
    fail("cross_entropy: expected 1-D distribution, got " + shape_str(probs->shape));
  const int n = probs->dim(0);
  if (target < 0 || target >= n)
    throw std::out_of_range("cross_entropy: target " + std::to_string(target) +
                            " out of range [0," + std::to_string(n) + ")");
  double total = 0.0;
  for (double p : probs->data) {
    if (p < -1e-9) fail("cross_entropy: negative probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6)
    fail("cross_entropy: probabilities sum to " + std::to_string(total) + ", expected 1");
  const double p = std::max(probs->data[static_cast<std::size_t>(target)], kLnEps);
  auto out = make_tensor({1}, std::vector<double>{-std::log(p)});
  return record("cross_entropy", out, {probs}, [probs, out, target]() {
    if (!probs->requires_grad) return;
    const double pv = probs->data[static_cast<std::size_t>(target)];
    if (pv >= kLnEps) probs->grad[static_cast<std::size_t>(target)] += -out->grad[0] / pv;
  });
}

void xavier_init(Tensor& t, int fan_in, int fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& v : t.data) v = rng.uniform(-a, a);
}

}  // namespace rha
