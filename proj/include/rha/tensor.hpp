#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace rha {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense row-major double tensor. Gradient buffer is allocated lazily and,
// when present, always matches the data shape.
class Tensor {
 public:
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until ensure_grad()
  bool requires_grad = false;

  Tensor(Shape s, bool req_grad);

  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  std::size_t numel() const { return data.size(); }
  bool has_grad() const { return !grad.empty(); }
  void ensure_grad();
  void zero_grad();
  bool all_finite() const;
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr make_tensor(Shape s, bool requires_grad = false);
TensorPtr make_tensor(Shape s, std::vector<double> values, bool requires_grad = false);
TensorPtr make_scalar(double v, bool requires_grad = false);

// One executed operation: enough context to replay its vector-Jacobian
// product during the reverse sweep.
struct OpRecord {
  const char* kind;
  std::vector<TensorPtr> inputs;
  TensorPtr output;
  std::function<void()> backward;
};

// Reverse-mode tape. Ops append records in execution order, which is a
// topological order by construction; backward() replays them once, in
// reverse. One Graph services one forward/backward pass and is confined
// to a single thread.
class Graph {
 public:
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }
  const std::vector<OpRecord>& records() const { return records_; }

  // ---- linear algebra ----
  TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);  // [m,k]x[k,n]
  TensorPtr transpose(const TensorPtr& a);                   // 2-D
  TensorPtr add_rowvec(const TensorPtr& x, const TensorPtr& v);  // [n,d]+[d]

  // ---- elementwise ----
  TensorPtr add(const TensorPtr& a, const TensorPtr& b);
  TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
  TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
  TensorPtr scale(const TensorPtr& x, double c);
  TensorPtr mul_scalar(const TensorPtr& x, const TensorPtr& s);  // s has 1 element
  TensorPtr relu(const TensorPtr& x);
  TensorPtr softplus(const TensorPtr& x);  // log(1+exp(x)), overflow-safe
  TensorPtr dropout(const TensorPtr& x, double rate, std::uint64_t seed, bool training);

  // ---- shape ----
  TensorPtr reshape(const TensorPtr& x, Shape s);
  TensorPtr concat(const std::vector<TensorPtr>& xs, int axis);
  TensorPtr slice(const TensorPtr& x, int axis, int start, int len);
  TensorPtr slice_rows(const TensorPtr& x, int start, int len);
  TensorPtr gather_rows(const TensorPtr& x, const std::vector<int>& rows);  // 2-D
  TensorPtr shift_rows(const TensorPtr& x, int offset);  // 2-D, zero fill
  TensorPtr pick(const TensorPtr& x, std::size_t flat_index);  // -> [1]

  // ---- reductions / normalization ----
  TensorPtr reduce_max(const TensorPtr& x, int axis);  // tie -> lowest index
  TensorPtr reduce_sum(const TensorPtr& x, int axis);
  TensorPtr sum_all(const TensorPtr& x);   // -> [1]
  TensorPtr mean_all(const TensorPtr& x);  // -> [1]
  TensorPtr softmax(const TensorPtr& x, int axis);
  // softmax restricted to positions where mask != 0; masked positions get
  // probability 0. Every slice must contain at least one unmasked entry.
  TensorPtr softmax_masked(const TensorPtr& x, const TensorPtr& mask, int axis);
  TensorPtr layer_norm(const TensorPtr& x, const TensorPtr& gain, const TensorPtr& bias);

  // ---- losses ----
  // probs must be a distribution (nonnegative, sums to 1 within 1e-6);
  // the picked probability is clamped at 1e-12 before the log.
  TensorPtr cross_entropy(const TensorPtr& probs, int target);

  // Seeds d(loss)=1 and runs every recorded backward once, newest first.
  // Gradients accumulate into requires_grad leaves.
  void backward(const TensorPtr& loss);

 private:
  TensorPtr record(const char* kind, TensorPtr out, std::vector<TensorPtr> inputs,
                   std::function<void()> bw);
  std::vector<OpRecord> records_;
  bool grad_enabled_;
};

// Fills with uniform(-a, a), a = sqrt(6/(fan_in+fan_out)).
void xavier_init(Tensor& t, int fan_in, int fan_out, class Rng& rng);

}  // namespace rha
