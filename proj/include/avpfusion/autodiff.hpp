#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace avp::ad {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);

/// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({}, std::vector<double>{v}); }
  static Tensor vector(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor({n}, std::move(v));
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
    return Tensor({rows, cols}, std::move(data));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* ptr() { return data_.data(); }
  const double* ptr() const { return data_.data(); }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  double item() const;

  bool all_finite() const;
  void fill(double v);
  /// this += other (same element count).
  void accumulate(const Tensor& other);

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Trainable tensor plus its gradient accumulator. Gradients from every
/// backward pass are added into `grad` until zero_grad().
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v);
  void zero_grad();
};

/// Raised when a forward op produces NaN/Inf or an op precondition fails.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Tape;

/// Handle to a node on a Tape.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  double item() const { return value().item(); }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records forward ops in creation (= topological) order and replays them in
/// reverse for backward. Single-threaded; use one tape per worker.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Differentiable input; read its gradient with grad() after backward().
  Var leaf(Tensor value);
  /// Binds a parameter; backward() adds the node gradient into p.grad.
  Var param(Parameter& p);

  /// Reverse pass from a scalar. Node gradients are reset on every call;
  /// parameter gradients accumulate.
  void backward(const Var& loss);
  /// Gradient of `v` from the last backward(); zeros if v was not reached.
  Tensor grad(const Var& v) const;

  std::size_t size() const { return nodes_.size(); }

  // Interface for op implementations.
  Var record(const char* op, Tensor value, std::initializer_list<Var> parents, BackwardFn fn);
  Var record(const char* op, Tensor value, const std::vector<Var>& parents, BackwardFn fn);
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient accumulator of node `id`, allocated as zeros on first use.
  Tensor& grad_mut(std::size_t id);
  const Tensor& grad_of(std::size_t id) const { return nodes_[id].grad; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };
  Var push(Node node);

  std::vector<Node> nodes_;
};

// Elementwise (operands of identical shape).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
/// a * s where s holds a single element.
Var mul_scalar(const Var& a, const Var& s);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var relu(const Var& a);
Var exp(const Var& a);
/// Natural log; every element must be > 0.
Var log(const Var& a);
Var pow_scalar(const Var& a, double exponent);
/// Clamps into [lo, hi]; gradient passes only where the input is inside.
Var clamp(const Var& a, double lo, double hi);

// Linear algebra.
/// [m x k]·[k x n], [m x k]·[k], or [k]·[k x n].
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
/// m[r, c] + v[c] for every row r.
Var add_rowwise(const Var& m, const Var& v);
Var dot(const Var& a, const Var& b);
/// x·y / (|x| |y|); throws NumericError on a zero-norm operand.
Var cosine_similarity(const Var& a, const Var& b);

/// Valid, stride-1 convolution: x [L x Cin], w [K x H x Cin], b [K] ->
/// [(L-H+1) x K], out[j,k] = sum_i <w[k,i,:], x[j+i,:]> + b[k].
Var conv1d(const Var& x, const Var& w, const Var& b);
/// conv1d over the rows emb[t] ++ desc without materializing them: the
/// descriptor contribution is the same for every window.
Var fused_conv1d(const Var& emb, const Var& desc, const Var& w, const Var& b);

/// Row-wise affine map over emb[t] ++ desc using the columns of w starting
/// at col_offset: out[t] = w[:, off:off+de]·emb[t] + w[:, off+de:]·desc + b.
/// w must be [n x (col_offset + de + df)].
Var fused_affine(const Var& emb, const Var& desc, const Var& w, const Var& b, std::size_t col_offset);

// Reductions and normalizers (rank-1 unless noted).
Var sum(const Var& a);
Var mean(const Var& a);
Var softmax(const Var& a);
Var logsumexp(const Var& a);

// Shape manipulation.
/// Scalars and vectors, flattened into one vector.
Var concat(const std::vector<Var>& parts);
Var concat_cols(const Var& a, const Var& b);
Var broadcast_rows(const Var& v, std::size_t rows);
Var slice(const Var& a, std::size_t begin, std::size_t end);
Var slice_cols(const Var& m, std::size_t begin, std::size_t end);
Var row(const Var& m, std::size_t r);
Var stack_rows(const std::vector<Var>& rows);
Var reverse_rows(const Var& m);
Var element(const Var& a, std::size_t i);
Var reshape(const Var& a, Shape shape);

}  // namespace avp::ad
