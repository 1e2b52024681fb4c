#include "avpfusion/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace avp::ad {

namespace {

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

[[noreturn]] void fail(const std::string& op, const std::string& msg) {
  throw NumericError(op + ": " + msg);
}

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    fail(op, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_rank(const char* op, const Var& a, std::size_t rank) {
  if (a.value().rank() != rank) {
    fail(op, "expected rank " + std::to_string(rank) + ", got " + shape_str(a.shape()));
  }
}

void require_same_tape(const char* op, std::initializer_list<Var> vars) {
  Tape* tape = vars.begin()->tape();
  for (const Var& v : vars) {
    if (!v.valid() || v.tape() != tape) fail(op, "operands belong to different tapes");
  }
}

// Elementwise unary op; `deriv(x, y)` gives dy/dx from input and output.
template <typename F, typename D>
Var unary(const char* op, const Var& a, F f, D deriv) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const std::size_t ia = a.id();
  return a.tape()->record(op, std::move(y), {a}, [ia, deriv](Tape& t, std::size_t self) {
    if (!t.needs_grad(ia)) return;
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad_of(self);
    Tensor& ga = t.grad_mut(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(x[i], y[i]);
  });
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// ---------------------------------------------------------------------------
// Tensor / Parameter

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != product(shape_)) {
    throw NumericError("Tensor: data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
  }
}

double Tensor::item() const {
  if (data_.size() != 1) throw NumericError("item() on tensor of shape " + shape_str(shape_));
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::accumulate(const Tensor& other) {
  if (other.size() != size()) throw NumericError("accumulate: size mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

Parameter::Parameter(std::string n, Tensor v)
    : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

void Parameter::zero_grad() {
  if (grad.shape() != value.shape()) grad = Tensor(value.shape());
  grad.fill(0.0);
}

// ---------------------------------------------------------------------------
// Var / Tape

const Tensor& Var::value() const {
  if (!tape_) throw NumericError("use of an unbound Var");
  return tape_->value(id_);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("constant: non-finite input");
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::leaf(Tensor value) {
  if (!value.all_finite()) throw NumericError("leaf: non-finite input");
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::param(Parameter& p) {
  if (!p.value.all_finite()) throw NumericError("param '" + p.name + "': non-finite value");
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  return push(std::move(n));
}

Var Tape::record(const char* op, Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
  return record(op, std::move(value), std::vector<Var>(parents), std::move(fn));
}

Var Tape::record(const char* op, Tensor value, const std::vector<Var>& parents, BackwardFn fn) {
  if (!value.all_finite()) throw NumericError(std::string(op) + ": produced a non-finite value");
  Node n;
  n.value = std::move(value);
  n.requires_grad = std::any_of(parents.begin(), parents.end(),
                                [this](const Var& p) { return nodes_[p.id()].requires_grad; });
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

Tensor& Tape::grad_mut(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.shape() != n.value.shape() || n.grad.size() != n.value.size()) {
    n.grad = Tensor(n.value.shape());
  }
  return n.grad;
}

void Tape::backward(const Var& loss) {
  if (loss.tape() != this) throw NumericError("backward: loss belongs to another tape");
  if (loss.size() != 1) {
    throw NumericError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  if (!nodes_[loss.id()].requires_grad) return;
  grad_mut(loss.id())[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, id);
  }
  for (auto& n : nodes_) {
    if (n.param && !n.grad.empty()) {
      if (n.param->grad.shape() != n.param->value.shape()) n.param->zero_grad();
      n.param->grad.accumulate(n.grad);
    }
  }
}

Tensor Tape::grad(const Var& v) const {
  const Node& n = nodes_.at(v.id());
  if (n.grad.empty()) return Tensor(n.value.shape());
  return n.grad;
}

// ---------------------------------------------------------------------------
// Elementwise

Var add(const Var& a, const Var& b) {
  require_same_tape("add", {a, b});
  require_same_shape("add", a, b);
  Tensor y = a.value();
  y.accumulate(b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("add", std::move(y), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_of(self);
    if (t.needs_grad(ia)) t.grad_mut(ia).accumulate(g);
    if (t.needs_grad(ib)) t.grad_mut(ib).accumulate(g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_tape("sub", {a, b});
  require_same_shape("sub", a, b);
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("sub", std::move(y), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_of(self);
    if (t.needs_grad(ia)) t.grad_mut(ia).accumulate(g);
    if (t.needs_grad(ib)) {
      Tensor& gb = t.grad_mut(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_tape("mul", {a, b});
  require_same_shape("mul", a, b);
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("mul", std::move(y), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_of(self);
    if (t.needs_grad(ia)) {
      Tensor& ga = t.grad_mut(ia);
      const Tensor& bv = t.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.needs_grad(ib)) {
      Tensor& gb = t.grad_mut(ib);
      const Tensor& av = t.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(const Var& a, double s) {
  return unary("scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
  return unary("add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var mul_scalar(const Var& a, const Var& s) {
  require_same_tape("mul_scalar", {a, s});
  if (s.size() != 1) fail("mul_scalar", "scale operand must have one element");
  const double sv = s.item();
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= sv;
  const std::size_t ia = a.id(), is = s.id();
  return a.tape()->record("mul_scalar", std::move(y), {a, s}, [ia, is](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_of(self);
    if (t.needs_grad(ia)) {
      const double sv = t.value(is)[0];
      Tensor& ga = t.grad_mut(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * sv;
    }
    if (t.needs_grad(is)) {
      const Tensor& av = t.value(ia);
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * av[i];
      t.grad_mut(is)[0] += acc;
    }
  });
}

Var sigmoid(const Var& a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var relu(const Var& a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var exp(const Var& a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  for (double v : a.value().data()) {
    if (!(v > 0.0)) fail("log", "argument must be positive");
  }
  return unary("log", a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Var pow_scalar(const Var& a, double exponent) {
  for (double v : a.value().data()) {
    if (v < 0.0) fail("pow_scalar", "argument must be non-negative");
  }
  return unary(
      "pow_scalar", a, [exponent](double x) { return std::pow(x, exponent); },
      [exponent](double x, double) {
        if (exponent == 0.0) return 0.0;
        return exponent * std::pow(x, exponent - 1.0);
      });
}

Var clamp(const Var& a, double lo, double hi) {
  return unary("clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Linear algebra

Var matmul(const Var& a, const Var& b) {
  require_same_tape("matmul", {a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  // Normalize to [m x k]·[k x n]; rank-1 operands act as a row/column.
  const bool a_vec = av.rank() == 1;
  const bool b_vec = bv.rank() == 1;
  if (av.rank() < 1 || av.rank() > 2 || bv.rank() < 1 || bv.rank() > 2 || (a_vec && b_vec)) {
    fail("matmul", "unsupported ranks " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  }
  const std::size_t m = a_vec ? 1 : av.dim(0);
  const std::size_t k = a_vec ? av.dim(0) : av.dim(1);
  const std::size_t kb = b_vec ? bv.dim(0) : bv.dim(0);
  const std::size_t n = b_vec ? 1 : bv.dim(1);
  if (k != kb) fail("matmul", "inner dimensions differ: " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));

  Shape out_shape = a_vec ? Shape{n} : (b_vec ? Shape{m} : Shape{m, n});
  Tensor y(out_shape);
  const double* A = av.ptr();
  const double* B = bv.ptr();
  double* Y = y.ptr();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = B + p * n;
      double* yrow = Y + i * n;
      for (std::size_t j = 0; j < n; ++j) yrow[j] += aip * brow[j];
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("matmul", std::move(y), {a, b}, [ia, ib, m, k, n](Tape& t, std::size_t self) {
    const double* G = t.grad_of(self).ptr();
    if (t.needs_grad(ia)) {
      // dA = G · B^T
      const double* B = t.value(ib).ptr();
      double* GA = t.grad_mut(ia).ptr();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = B + p * n;
          const double* grow = G + i * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          GA[i * k + p] += acc;
        }
      }
    }
    if (t.needs_grad(ib)) {
      // dB = A^T · G
      const double* A = t.value(ia).ptr();
      double* GB = t.grad_mut(ib).ptr();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          if (aip == 0.0) continue;
          double* gbrow = GB + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
        }
      }
    }
  });
}

Var transpose(const Var& a) {
  require_rank("transpose", a, 2);
  const Tensor& av = a.value();
  const std::size_t r = av.dim(0), c = av.dim(1);
  Tensor y({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y.at(j, i) = av.at(i, j);
  const std::size_t ia = a.id();
  return a.tape()->record("transpose", std::move(y), {a}, [ia, r, c](Tape& t, std::size_t self) {
    if (!t.needs_grad(ia)) return;
    const Tensor& g = t.grad_of(self);
    Tensor& ga = t.grad_mut(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga.at(i, j) += g.at(j, i);
  });
}

Var add_rowwise(const Var& m, const Var& v) {
  require_same_tape("add_rowwise", {m, v});
  require_rank("add_rowwise", m, 2);
  require_rank("add_rowwise", v, 1);
  const std::size_t rows = m.value().dim(0), cols = m.value().dim(1);
  if (v.value().dim(0) != cols) fail("add_rowwise", "vector length must equal column count");
  Tensor y = m.value();
  const Tensor& vv = v.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) y.at(r, c) += vv[c];
  const std::size_t im = m.id(), iv = v.id();
  return m.tape()->record("add_rowwise", std::move(y), {m, v}, [im, iv, rows, cols](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_of(self);
    if (t.needs_grad(im)) t.grad_mut(im).accumulate(g);
    if (t.needs_grad(iv)) {
      Tensor& gv = t.grad_mut(iv);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) gv[c] += g.at(r, c);
    }
  });
}

Var dot(const Var& a, const Var& b) {
  require_same_tape("dot", {a, b});
  require_same_shape("dot", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("dot", Tensor::scalar(s), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const double g = t.grad_of(self)[0];
    if (t.needs_grad(ia)) {
      Tensor& ga = t.grad_mut(ia);
      const Tensor& bv = t.value(ib);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * bv[i];
    }
    if (t.needs_grad(ib)) {
      Tensor& gb = t.grad_mut(ib);
      const Tensor& av = t.value(ia);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * av[i];
    }
  });
}

Var cosine_similarity(const Var& a, const Var& b) {
  require_same_tape("cosine_similarity", {a, b});
  require_same_shape("cosine_similarity", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    ab += av[i] * bv[i];
    aa += av[i] * av[i];
    bb += bv[i] * bv[i];
  }
  if (!(aa > 0.0) || !(bb > 0.0)) fail("cosine_similarity", "zero-norm vector");
  const double na = std::sqrt(aa), nb = std::sqrt(bb);
  const double s = ab / (na * nb);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("cosine_similarity", Tensor::scalar(s), {a, b},
                          [ia, ib, na, nb, s](Tape& t, std::size_t self) {
                            const double g = t.grad_of(self)[0];
                            const Tensor& av = t.value(ia);
                            const Tensor& bv = t.value(ib);
                            // ds/da = b/(|a||b|) - s a/|a|^2
                            if (t.needs_grad(ia)) {
                              Tensor& ga = t.grad_mut(ia);
                              for (std::size_t i = 0; i < ga.size(); ++i)
                                ga[i] += g * (bv[i] / (na * nb) - s * av[i] / (na * na));
                            }
                            if (t.needs_grad(ib)) {
                              Tensor& gb = t.grad_mut(ib);
                              for (std::size_t i = 0; i < gb.size(); ++i)
                                gb[i] += g * (av[i] / (na * nb) - s * bv[i] / (nb * nb));
                            }
                          });
}

Var conv1d(const Var& x, const Var& w, const Var& b) {
  require_same_tape("conv1d", {x, w, b});
  require_rank("conv1d", x, 2);
  require_rank("conv1d", w, 3);
  require_rank("conv1d", b, 1);
  const std::size_t L = x.value().dim(0), cin = x.value().dim(1);
  const std::size_t K = w.value().dim(0), H = w.value().dim(1);
  if (w.value().dim(2) != cin) fail("conv1d", "kernel channels differ from input channels");
  if (b.value().dim(0) != K) fail("conv1d", "bias length must equal kernel count");
  if (L < H) fail("conv1d", "sequence length " + std::to_string(L) + " < kernel width " + std::to_string(H));
  const std::size_t out_len = L - H + 1;
  const std::size_t span = H * cin;  // a window is contiguous in row-major x
  Tensor y({out_len, K});
  const double* X = x.value().ptr();
  const double* W = w.value().ptr();
  const double* B = b.value().ptr();
  for (std::size_t j = 0; j < out_len; ++j) {
    const double* win = X + j * cin;
    for (std::size_t k = 0; k < K; ++k) {
      const double* wk = W + k * span;
      double acc = B[k];
      for (std::size_t q = 0; q < span; ++q) acc += wk[q] * win[q];
      y.at(j, k) = acc;
    }
  }
  const std::size_t ix = x.id(), iw = w.id(), ib = b.id();
  return x.tape()->record("conv1d", std::move(y), {x, w, b},
                          [ix, iw, ib, out_len, K, span, cin](Tape& t, std::size_t self) {
                            const Tensor& g = t.grad_of(self);
                            const double* X = t.value(ix).ptr();
                            const double* W = t.value(iw).ptr();
                            double* GX = t.needs_grad(ix) ? t.grad_mut(ix).ptr() : nullptr;
                            double* GW = t.needs_grad(iw) ? t.grad_mut(iw).ptr() : nullptr;
                            double* GB = t.needs_grad(ib) ? t.grad_mut(ib).ptr() : nullptr;
                            for (std::size_t j = 0; j < out_len; ++j) {
                              for (std::size_t k = 0; k < K; ++k) {
                                const double gjk = g.at(j, k);
                                if (gjk == 0.0) continue;
                                if (GB) GB[k] += gjk;
                                if (GW) {
                                  double* gw = GW + k * span;
                                  const double* win = X + j * cin;
                                  for (std::size_t q = 0; q < span; ++q) gw[q] += gjk * win[q];
                                }
                                if (GX) {
                                  const double* wk = W + k * span;
                                  double* gx = GX + j * cin;
                                  for (std::size_t q = 0; q < span; ++q) gx[q] += gjk * wk[q];
                                }
                              }
                            }
                          });
}

Var fused_affine(const Var& emb, const Var& desc, const Var& w, const Var& b, std::size_t col_offset) {
  require_same_tape("fused_affine", {emb, desc, w, b});
  require_rank("fused_affine", emb, 2);
  require_rank("fused_affine", desc, 1);
  require_rank("fused_affine", w, 2);
  require_rank("fused_affine", b, 1);
  const std::size_t L = emb.value().dim(0), de = emb.value().dim(1), df = desc.value().dim(0);
  const std::size_t n = w.value().dim(0), cols = w.value().dim(1);
  if (cols != col_offset + de + df) fail("fused_affine", "weight width must be offset + embedding + descriptor");
  if (b.value().dim(0) != n) fail("fused_affine", "bias length must equal weight rows");
  const double* E = emb.value().ptr();
  const double* D = desc.value().ptr();
  const double* W = w.value().ptr();
  const double* B = b.value().ptr();
  std::vector<double> shared(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double* wd = W + r * cols + col_offset + de;
    double acc = B[r];
    for (std::size_t c = 0; c < df; ++c) acc += wd[c] * D[c];
    shared[r] = acc;
  }
  Tensor y({L, n});
  for (std::size_t t = 0; t < L; ++t) {
    const double* e = E + t * de;
    for (std::size_t r = 0; r < n; ++r) {
      const double* we = W + r * cols + col_offset;
      double acc = shared[r];
      for (std::size_t c = 0; c < de; ++c) acc += we[c] * e[c];
      y.at(t, r) = acc;
    }
  }
  const std::size_t ie = emb.id(), id = desc.id(), iw = w.id(), ib = b.id();
  return emb.tape()->record(
      "fused_affine", std::move(y), {emb, desc, w, b},
      [ie, id, iw, ib, L, n, cols, col_offset, de, df](Tape& t, std::size_t self) {
        const Tensor& g = t.grad_of(self);
        const double* E = t.value(ie).ptr();
        const double* D = t.value(id).ptr();
        const double* W = t.value(iw).ptr();
        double* GE = t.needs_grad(ie) ? t.grad_mut(ie).ptr() : nullptr;
        double* GD = t.needs_grad(id) ? t.grad_mut(id).ptr() : nullptr;
        double* GW = t.needs_grad(iw) ? t.grad_mut(iw).ptr() : nullptr;
        double* GB = t.needs_grad(ib) ? t.grad_mut(ib).ptr() : nullptr;
        for (std::size_t r = 0; r < n; ++r) {
          double gsum = 0.0;
          for (std::size_t tt = 0; tt < L; ++tt) gsum += g.at(tt, r);
          if (GB) GB[r] += gsum;
          const std::size_t base = r * cols + col_offset;
          if (GW) {
            for (std::size_t c = 0; c < df; ++c) GW[base + de + c] += gsum * D[c];
          }
          if (GD) {
            for (std::size_t c = 0; c < df; ++c) GD[c] += gsum * W[base + de + c];
          }
          for (std::size_t tt = 0; tt < L; ++tt) {
            const double gr = g.at(tt, r);
            if (GW) {
              for (std::size_t c = 0; c < de; ++c) GW[base + c] += gr * E[tt * de + c];
            }
            if (GE) {
              for (std::size_t c = 0; c < de; ++c) GE[tt * de + c] += gr * W[base + c];
            }
          }
        }
      });
}

Var fused_conv1d(const Var& emb, const Var& desc, const Var& w, const Var& b) {
  require_same_tape("fused_conv1d", {emb, desc, w, b});
  require_rank("fused_conv1d", emb, 2);
  require_rank("fused_conv1d", desc, 1);
  require_rank("fused_conv1d", w, 3);
  require_rank("fused_conv1d", b, 1);
  const std::size_t L = emb.value().dim(0), de = emb.value().dim(1), df = desc.value().dim(0);
  const std::size_t cin = de + df;
  const std::size_t K = w.value().dim(0), H = w.value().dim(1);
  if (w.value().dim(2) != cin) fail("fused_conv1d", "kernel channels differ from fused input width");
  if (b.value().dim(0) != K) fail("fused_conv1d", "bias length must equal kernel count");
  if (L < H) fail("fused_conv1d", "sequence length " + std::to_string(L) + " < kernel width " + std::to_string(H));
  const std::size_t out_len = L - H + 1;
  const double* E = emb.value().ptr();
  const double* D = desc.value().ptr();
  const double* W = w.value().ptr();
  const double* B = b.value().ptr();

  std::vector<double> desc_term(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    double acc = B[k];
    for (std::size_t i = 0; i < H; ++i) {
      const double* wd = W + (k * H + i) * cin + de;
      for (std::size_t c = 0; c < df; ++c) acc += wd[c] * D[c];
    }
    desc_term[k] = acc;
  }
  Tensor y({out_len, K});
  for (std::size_t j = 0; j < out_len; ++j) {
    for (std::size_t k = 0; k < K; ++k) {
      double acc = desc_term[k];
      for (std::size_t i = 0; i < H; ++i) {
        const double* we = W + (k * H + i) * cin;
        const double* e = E + (j + i) * de;
        for (std::size_t c = 0; c < de; ++c) acc += we[c] * e[c];
      }
      y.at(j, k) = acc;
    }
  }
  const std::size_t ie = emb.id(), id = desc.id(), iw = w.id(), ib = b.id();
  return emb.tape()->record(
      "fused_conv1d", std::move(y), {emb, desc, w, b},
      [ie, id, iw, ib, out_len, K, H, de, df, cin](Tape& t, std::size_t self) {
        const Tensor& g = t.grad_of(self);
        const double* E = t.value(ie).ptr();
        const double* D = t.value(id).ptr();
        const double* W = t.value(iw).ptr();
        double* GE = t.needs_grad(ie) ? t.grad_mut(ie).ptr() : nullptr;
        double* GD = t.needs_grad(id) ? t.grad_mut(id).ptr() : nullptr;
        double* GW = t.needs_grad(iw) ? t.grad_mut(iw).ptr() : nullptr;
        double* GB = t.needs_grad(ib) ? t.grad_mut(ib).ptr() : nullptr;
        std::vector<double> gsum(K, 0.0);
        for (std::size_t j = 0; j < out_len; ++j)
          for (std::size_t k = 0; k < K; ++k) gsum[k] += g.at(j, k);
        for (std::size_t k = 0; k < K; ++k) {
          if (GB) GB[k] += gsum[k];
          for (std::size_t i = 0; i < H; ++i) {
            const std::size_t base = (k * H + i) * cin;
            if (GW) {
              for (std::size_t c = 0; c < df; ++c) GW[base + de + c] += gsum[k] * D[c];
            }
            if (GD) {
              for (std::size_t c = 0; c < df; ++c) GD[c] += gsum[k] * W[base + de + c];
            }
            for (std::size_t j = 0; j < out_len; ++j) {
              const double gjk = g.at(j, k);
              if (gjk == 0.0) continue;
              if (GW) {
                const double* e = E + (j + i) * de;
                for (std::size_t c = 0; c < de; ++c) GW[base + c] += gjk * e[c];
              }
              if (GE) {
                double* ge = GE + (j + i) * de;
                for (std::size_t c = 0; c < de; ++c) ge[c] += gjk * W[base + c];
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Reductions

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  return a.tape()->record("sum", Tensor::scalar(s), {a}, [ia](Tape& t, std::size_t self) {
    if (!t.needs_grad(ia)) return;
    const double g = t.grad_of(self)[0];
    Tensor& ga = t.grad_mut(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var mean(const Var& a) {
  if (a.size() == 0) fail("mean", "empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Var softmax(const Var& a) {
  require_rank("softmax", a, 1);
  const Tensor& x = a.value();
  if (x.size() == 0) fail("softmax", "empty input");
  const double mx = *std::max_element(x.data().begin(), x.data().end());
  Tensor y(x.shape());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = std::exp(x[i] - mx);
    z += y[i];
  }
  for (std::size_t i = 0; i < y.size(); ++i) y[i] /= z;
  const std::size_t ia = a.id();
  return a.tape()->record("softmax", std::move(y), {a}, [ia](Tape& t, std::size_t self) {
    if (!t.needs_grad(ia)) return;
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad_of(self);
    double gy = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) gy += g[i] * y[i];
    Tensor& ga = t.grad_mut(ia);
    for (std::size_t i = 0; i < y.size(); ++i) ga[i] += y[i] * (g[i] - gy);
  });
}

Var logsumexp(const Var& a) {
  require_rank("logsumexp", a, 1);
  const Tensor& x = a.value();
  if (x.size() == 0) fail("logsumexp", "empty input");
  const double mx = *std::max_element(x.data().begin(), x.data().end());
  double z = 0.0;
  for (double v : x.data()) z += std::exp(v - mx);
  const double out = mx + std::log(z);
  const std::size_t ia = a.id();
  return a.tape()->record("logsumexp", Tensor::scalar(out), {a}, [ia](Tape& t, std::size_t self) {
    if (!t.needs_grad(ia)) return;
    const double g = t.grad_of(self)[0];
    const double lse = t.value(self)[0];
    const Tensor& x = t.value(ia);
    Tensor& ga = t.grad_mut(ia);
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g * std::exp(x[i] - lse);
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) fail("concat", "no operands");
  std::vector<double> data;
  std::vector<std::pair<std::size_t, std::size_t>> spans;  // (id, length)
  for (const Var& p : parts) {
    if (p.tape() != parts.front().tape()) fail("concat", "operands belong to different tapes");
    if (p.value().rank() > 1) fail("concat", "operands must be scalars or vectors");
    data.insert(data.end(), p.value().data().begin(), p.value().data().end());
    spans.emplace_back(p.id(), p.size());
  }
  return parts.front().tape()->record("concat", Tensor::vector(std::move(data)), parts,
                                      [spans](Tape& t, std::size_t self) {
                                        const Tensor& g = t.grad_of(self);
                                        std::size_t off = 0;
                                        for (auto [id, len] : spans) {
                                          if (t.needs_grad(id)) {
                                            Tensor& gp = t.grad_mut(id);
                                            for (std::size_t i = 0; i < len; ++i) gp[i] += g[off + i];
                                          }
                                          off += len;
                                        }
                                      });
}

Var concat_cols(const Var& a, const Var& b) {
  require_same_tape("concat_cols", {a, b});
  require_rank("concat_cols", a, 2);
  require_rank("concat_cols", b, 2);
  const std::size_t rows = a.value().dim(0);
  if (b.value().dim(0) != rows) fail("concat_cols", "row counts differ");
  const std::size_t ca = a.value().dim(1), cb = b.value().dim(1);
  Tensor y({rows, ca + cb});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < ca; ++c) y.at(r, c) = a.value().at(r, c);
    for (std::size_t c = 0; c < cb; ++c) y.at(r, ca + c) = b.value().at(r, c);
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("concat_cols", std::move(y), {a, b}, [ia, ib, rows, ca, cb](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_of(self);
    if (t.needs_grad(ia)) {
      Tensor& ga = t.grad_mut(ia);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < ca; ++c) ga.at(r, c) += g.at(r, c);
    }
    if (t.needs_grad(ib)) {
      Tensor& gb = t.grad_mut(ib);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cb; ++c) gb.at(r, c) += g.at(r, ca + c);
    }
  });
}

Var broadcast_rows(const Var& v, std::size_t rows) {
  require_rank("broadcast_rows", v, 1);
  const std::size_t cols = v.size();
  Tensor y({rows, cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) y.at(r, c) = v.value()[c];
  const std::size_t iv = v.id();
  return v.tape()->record("broadcast_rows", std::move(y), {v}, [iv, rows, cols](Tape& t, std::size_t self) {
    if (!t.needs_grad(iv)) return;
    const Tensor& g = t.grad_of(self);
    Tensor& gv = t.grad_mut(iv);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) gv[c] += g.at(r, c);
  });
}

Var slice(const Var& a, std::size_t begin, std::size_t end) {
  require_rank("slice", a, 1);
  if (begin > end || end > a.size()) fail("slice", "range out of bounds");
  const auto& d = a.value().data();
  std::vector<double> data(d.begin() + static_cast<std::ptrdiff_t>(begin),
                           d.begin() + static_cast<std::ptrdiff_t>(end));
  const std::size_t ia = a.id();
  return a.tape()->record("slice", Tensor::vector(std::move(data)), {a}, [ia, begin](Tape& t, std::size_t self) {
    if (!t.needs_grad(ia)) return;
    const Tensor& g = t.grad_of(self);
    Tensor& ga = t.grad_mut(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin + i] += g[i];
  });
}

Var slice_cols(const Var& m, std::size_t begin, std::size_t end) {
  require_rank("slice_cols", m, 2);
  const std::size_t rows = m.value().dim(0), cols = m.value().dim(1);
  if (begin > end || end > cols) fail("slice_cols", "range out of bounds");
  const std::size_t w = end - begin;
  Tensor y({rows, w});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < w; ++c) y.at(r, c) = m.value().at(r, begin + c);
  const std::size_t im = m.id();
  return m.tape()->record("slice_cols", std::move(y), {m}, [im, rows, begin, w](Tape& t, std::size_t self) {
    if (!t.needs_grad(im)) return;
    const Tensor& g = t.grad_of(self);
    Tensor& gm = t.grad_mut(im);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < w; ++c) gm.at(r, begin + c) += g.at(r, c);
  });
}

Var row(const Var& m, std::size_t r) {
  require_rank("row", m, 2);
  const std::size_t rows = m.value().dim(0), cols = m.value().dim(1);
  if (r >= rows) fail("row", "index out of bounds");
  const double* src = m.value().ptr() + r * cols;
  const std::size_t im = m.id();
  return m.tape()->record("row", Tensor::vector(std::vector<double>(src, src + cols)), {m},
                          [im, r, cols](Tape& t, std::size_t self) {
                            if (!t.needs_grad(im)) return;
                            const Tensor& g = t.grad_of(self);
                            double* gm = t.grad_mut(im).ptr() + r * cols;
                            for (std::size_t c = 0; c < cols; ++c) gm[c] += g[c];
                          });
}

Var stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) fail("stack_rows", "no operands");
  const std::size_t cols = rows.front().size();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  std::vector<std::size_t> ids;
  for (const Var& r : rows) {
    if (r.tape() != rows.front().tape()) fail("stack_rows", "operands belong to different tapes");
    require_rank("stack_rows", r, 1);
    if (r.size() != cols) fail("stack_rows", "row lengths differ");
    data.insert(data.end(), r.value().data().begin(), r.value().data().end());
    ids.push_back(r.id());
  }
  const std::size_t n = rows.size();
  return rows.front().tape()->record("stack_rows", Tensor({n, cols}, std::move(data)), rows,
                                     [ids, cols](Tape& t, std::size_t self) {
                                       const Tensor& g = t.grad_of(self);
                                       for (std::size_t r = 0; r < ids.size(); ++r) {
                                         if (!t.needs_grad(ids[r])) continue;
                                         Tensor& gr = t.grad_mut(ids[r]);
                                         for (std::size_t c = 0; c < cols; ++c) gr[c] += g[r * cols + c];
                                       }
                                     });
}

Var reverse_rows(const Var& m) {
  require_rank("reverse_rows", m, 2);
  const std::size_t rows = m.value().dim(0), cols = m.value().dim(1);
  Tensor y({rows, cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) y.at(r, c) = m.value().at(rows - 1 - r, c);
  const std::size_t im = m.id();
  return m.tape()->record("reverse_rows", std::move(y), {m}, [im, rows, cols](Tape& t, std::size_t self) {
    if (!t.needs_grad(im)) return;
    const Tensor& g = t.grad_of(self);
    Tensor& gm = t.grad_mut(im);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) gm.at(rows - 1 - r, c) += g.at(r, c);
  });
}

Var element(const Var& a, std::size_t i) {
  if (i >= a.size()) fail("element", "index out of bounds");
  const std::size_t ia = a.id();
  return a.tape()->record("element", Tensor::scalar(a.value()[i]), {a}, [ia, i](Tape& t, std::size_t self) {
    if (!t.needs_grad(ia)) return;
    t.grad_mut(ia)[i] += t.grad_of(self)[0];
  });
}

Var reshape(const Var& a, Shape shape) {
  if (product(shape) != a.size()) fail("reshape", "element count mismatch");
  Tensor y(std::move(shape), a.value().vec());
  const std::size_t ia = a.id();
  return a.tape()->record("reshape", std::move(y), {a}, [ia](Tape& t, std::size_t self) {
    if (!t.needs_grad(ia)) return;
    const Tensor& g = t.grad_of(self);
    Tensor& ga = t.grad_mut(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

}  // namespace avp::ad
