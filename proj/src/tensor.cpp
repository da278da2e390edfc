#include "pbench/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <sstream>

namespace pbench::ad {

namespace {

thread_local Tape* g_active_tape = nullptr;
std::atomic<uint64_t> g_tape_counter{1};

bool on_tape(const Tensor& t, const Tape* tape) {
  return tape && t.node() >= 0 && t.tape_id() == tape->id();
}

bool wants_grad(const Tensor& t) {
  return t.requires_grad() || on_tape(t, Tape::active());
}

// Registers `out` on the active tape when any input participates in the
// graph; otherwise the op is pure forward.
Tensor finalize(Op op, const std::vector<const Tensor*>& inputs, Tensor out,
                Tape::BackwardFn fn) {
  Tape* tape = Tape::active();
  if (!tape) return out;
  bool any = false;
  for (const Tensor* in : inputs) {
    if (wants_grad(*in)) {
      any = true;
      break;
    }
  }
  if (!any) return out;
  int32_t node = tape->record(op, inputs, std::move(fn));
  out.impl()->node = node;
  out.impl()->tape = tape->id();
  out.impl()->requires_grad = true;
  return out;
}

// --- broadcasting ---

struct BroadcastPlan {
  Shape out;
  std::vector<int64_t> stride_a;  // element strides padded to out rank,
  std::vector<int64_t> stride_b;  // zero on broadcast dimensions
  int64_t n = 0;
};

std::vector<int64_t> row_major_strides(const Shape& shape) {
  std::vector<int64_t> s(shape.size());
  int64_t acc = 1;
  for (size_t i = shape.size(); i > 0; --i) {
    s[i - 1] = acc;
    acc *= shape[i - 1];
  }
  return s;
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
  BroadcastPlan p;
  size_t r = std::max(a.size(), b.size());
  p.out.resize(r);
  p.stride_a.assign(r, 0);
  p.stride_b.assign(r, 0);
  auto sa = row_major_strides(a);
  auto sb = row_major_strides(b);
  for (size_t i = 0; i < r; ++i) {
    size_t oi = r - 1 - i;
    int64_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
    int64_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("cannot broadcast shapes " + shape_str(a) + " and " +
                       shape_str(b));
    }
    p.out[oi] = std::max(da, db);
    if (i < a.size() && da != 1) p.stride_a[oi] = sa[a.size() - 1 - i];
    if (i < b.size() && db != 1) p.stride_b[oi] = sb[b.size() - 1 - i];
  }
  p.n = numel(p.out);
  return p;
}

// Calls fn(out_index, a_index, b_index) for every output element.
template <class F>
void for_each_broadcast(const BroadcastPlan& p, F&& fn) {
  size_t r = p.out.size();
  if (r == 0) {
    fn(int64_t{0}, int64_t{0}, int64_t{0});
    return;
  }
  std::vector<int64_t> idx(r, 0);
  int64_t oa = 0;
  int64_t ob = 0;
  for (int64_t lin = 0; lin < p.n; ++lin) {
    fn(lin, oa, ob);
    for (size_t d = r; d-- > 0;) {
      ++idx[d];
      oa += p.stride_a[d];
      ob += p.stride_b[d];
      if (idx[d] < p.out[d]) break;
      oa -= p.stride_a[d] * p.out[d];
      ob -= p.stride_b[d] * p.out[d];
      idx[d] = 0;
    }
  }
}

// --- small accumulating GEMM kernels (row-major) ---

// C += A(m x k) * B(k x n)
void gemm_nn(int64_t m, int64_t k, int64_t n, const double* A, const double* B,
             double* C) {
  for (int64_t i = 0; i < m; ++i) {
    const double* a = A + i * k;
    double* c = C + i * n;
    for (int64_t p = 0; p < k; ++p) {
      double av = a[p];
      const double* b = B + p * n;
      for (int64_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

// C += A(m x k) * B(n x k)^T
void gemm_nt(int64_t m, int64_t k, int64_t n, const double* A, const double* B,
             double* C) {
  for (int64_t i = 0; i < m; ++i) {
    const double* a = A + i * k;
    double* c = C + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* b = B + j * k;
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) acc += a[p] * b[p];
      c[j] += acc;
    }
  }
}

// C += A(k x m)^T * B(k x n)
void gemm_tn(int64_t m, int64_t k, int64_t n, const double* A, const double* B,
             double* C) {
  for (int64_t p = 0; p < k; ++p) {
    const double* a = A + p * m;
    const double* b = B + p * n;
    for (int64_t i = 0; i < m; ++i) {
      double av = a[i];
      double* c = C + i * n;
      for (int64_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

int normalize_axis(int axis, int rank) {
  int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw ValueError("axis " + std::to_string(axis) +
                     " out of range for rank " + std::to_string(rank));
  }
  return a;
}

}  // namespace

int64_t numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

// --- Tensor ---

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  for (int64_t d : shape) {
    if (d <= 0) throw ShapeError("non-positive dimension in " + shape_str(shape));
  }
  if (numel(shape) != static_cast<int64_t>(data.size())) {
    throw ShapeError("shape " + shape_str(shape) + " does not match " +
                     std::to_string(data.size()) + " elements");
  }
  impl_ = std::make_shared<TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::ones(Shape shape, bool requires_grad) {
  return full(std::move(shape), 1.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> d(static_cast<size_t>(numel(shape)), value);
  return Tensor(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::uniform(Shape shape, double lo, double hi, Rng& rng,
                       bool requires_grad) {
  std::vector<double> d(static_cast<size_t>(numel(shape)));
  for (double& v : d) v = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(d), requires_grad);
}

double Tensor::item() const {
  if (size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  }
  return impl_->data[0];
}

const std::vector<double>& Tensor::grad() const {
  if (impl_->grad.empty()) throw ValueError("tensor has no gradient");
  return impl_->grad;
}

// --- Tape ---

Tape::Tape() : id_(g_tape_counter.fetch_add(1)) {}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) {
  g_active_tape = &tape;
}

TapeScope::~TapeScope() { g_active_tape = prev_; }

int32_t Tape::record(Op op, const std::vector<const Tensor*>& inputs,
                     BackwardFn fn) {
  Node node;
  node.op = op;
  node.inputs.reserve(inputs.size());
  for (const Tensor* in : inputs) {
    node.inputs.push_back(on_tape(*in, this) ? in->node() : -1);
  }
  node.fn = std::move(fn);
  nodes_.push_back(std::move(node));
  return static_cast<int32_t>(nodes_.size() - 1);
}

void Tape::accumulate(const Tensor& t, const std::vector<double>& g) {
  if (on_tape(t, this)) {
    auto& dst = scratch_[static_cast<size_t>(t.node())];
    if (dst.empty()) {
      dst = g;
    } else {
      for (size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }
    return;
  }
  if (!t.requires_grad()) return;
  TensorImpl* impl = t.impl();
  for (auto& [leaf, buf] : leaf_acc_) {
    if (leaf == impl) {
      for (size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
      return;
    }
  }
  leaf_acc_.emplace_back(impl, g);
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ValueError("backward requires a scalar loss");
  }
  if (!on_tape(loss, this)) {
    throw ValueError("loss tensor is not on the active tape");
  }
  // Fresh scratch per pass; leaf grads persist and therefore accumulate
  // across repeated passes until explicitly zeroed.
  scratch_.assign(nodes_.size(), {});
  leaf_acc_.clear();
  scratch_[static_cast<size_t>(loss.node())] = {1.0};
  for (size_t i = static_cast<size_t>(loss.node()) + 1; i-- > 0;) {
    if (scratch_[i].empty()) continue;  // node does not feed the loss
    nodes_[i].fn(*this, scratch_[i]);
  }
  for (auto& [leaf, buf] : leaf_acc_) {
    if (leaf->grad.empty()) leaf->grad.assign(leaf->data.size(), 0.0);
    for (size_t i = 0; i < buf.size(); ++i) leaf->grad[i] += buf[i];
  }
  leaf_acc_.clear();
  scratch_.clear();
}

void backward(const Tensor& loss) {
  Tape* tape = Tape::active();
  if (!tape) throw ValueError("backward called with no active tape");
  tape->backward(loss);
}

// --- elementwise ---

namespace {

Tensor binary_op(Op op, const Tensor& a, const Tensor& b) {
  const auto plan = plan_broadcast(a.shape(), b.shape());
  std::vector<double> out(static_cast<size_t>(plan.n));
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  switch (op) {
    case Op::Add:
      for_each_broadcast(plan, [&](int64_t o, int64_t ia, int64_t ib) {
        out[static_cast<size_t>(o)] = pa[ia] + pb[ib];
      });
      break;
    case Op::Sub:
      for_each_broadcast(plan, [&](int64_t o, int64_t ia, int64_t ib) {
        out[static_cast<size_t>(o)] = pa[ia] - pb[ib];
      });
      break;
    case Op::Mul:
      for_each_broadcast(plan, [&](int64_t o, int64_t ia, int64_t ib) {
        out[static_cast<size_t>(o)] = pa[ia] * pb[ib];
      });
      break;
    default:
      throw ValueError("not a binary op");
  }
  Tensor result(plan.out, std::move(out));
  Tensor ta = a;
  Tensor tb = b;
  return finalize(op, {&a, &b}, result,
                  [op, ta, tb, plan](Tape& tape, const std::vector<double>& g) {
                    std::vector<double> da(ta.data().size(), 0.0);
                    std::vector<double> db(tb.data().size(), 0.0);
                    const double* pa = ta.data().data();
                    const double* pb = tb.data().data();
                    for_each_broadcast(
                        plan, [&](int64_t o, int64_t ia, int64_t ib) {
                          double go = g[static_cast<size_t>(o)];
                          switch (op) {
                            case Op::Add:
                              da[static_cast<size_t>(ia)] += go;
                              db[static_cast<size_t>(ib)] += go;
                              break;
                            case Op::Sub:
                              da[static_cast<size_t>(ia)] += go;
                              db[static_cast<size_t>(ib)] -= go;
                              break;
                            case Op::Mul:
                              da[static_cast<size_t>(ia)] += go * pb[ib];
                              db[static_cast<size_t>(ib)] += go * pa[ia];
                              break;
                            default:
                              break;
                          }
                        });
                    tape.accumulate(ta, da);
                    tape.accumulate(tb, db);
                  });
}

Tensor unary_op(Op op, const Tensor& x) {
  std::vector<double> out(x.data().size());
  const double* px = x.data().data();
  for (size_t i = 0; i < out.size(); ++i) {
    switch (op) {
      case Op::Sigmoid:
        out[i] = 1.0 / (1.0 + std::exp(-px[i]));
        break;
      case Op::Tanh:
        out[i] = std::tanh(px[i]);
        break;
      case Op::Relu:
        out[i] = px[i] > 0.0 ? px[i] : 0.0;
        break;
      default:
        throw ValueError("not a unary op");
    }
  }
  Tensor result(x.shape(), std::move(out));
  Tensor tx = x;
  Tensor ty = result;
  return finalize(op, {&x}, result,
                  [op, tx, ty](Tape& tape, const std::vector<double>& g) {
                    std::vector<double> dx(g.size());
                    const double* y = ty.data().data();
                    const double* xv = tx.data().data();
                    for (size_t i = 0; i < g.size(); ++i) {
                      switch (op) {
                        case Op::Sigmoid:
                          dx[i] = g[i] * y[i] * (1.0 - y[i]);
                          break;
                        case Op::Tanh:
                          dx[i] = g[i] * (1.0 - y[i] * y[i]);
                          break;
                        case Op::Relu:
                          dx[i] = xv[i] > 0.0 ? g[i] : 0.0;
                          break;
                        default:
                          break;
                      }
                    }
                    tape.accumulate(tx, dx);
                  });
}

}  // namespace

Tensor elementwise(EwOp op, const Tensor& a, const Tensor* b) {
  bool binary = op == EwOp::Add || op == EwOp::Sub || op == EwOp::Mul;
  if (binary && b == nullptr) {
    throw ValueError("binary elementwise op requires two tensors");
  }
  if (!binary && b != nullptr) {
    throw ValueError("unary elementwise op given two tensors");
  }
  switch (op) {
    case EwOp::Add:
      return binary_op(Op::Add, a, *b);
    case EwOp::Sub:
      return binary_op(Op::Sub, a, *b);
    case EwOp::Mul:
      return binary_op(Op::Mul, a, *b);
    case EwOp::Sigmoid:
      return unary_op(Op::Sigmoid, a);
    case EwOp::Tanh:
      return unary_op(Op::Tanh, a);
    case EwOp::Relu:
      return unary_op(Op::Relu, a);
  }
  throw ValueError("unknown elementwise op");
}

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(Op::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(Op::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(Op::Mul, a, b); }
Tensor sigmoid(const Tensor& x) { return unary_op(Op::Sigmoid, x); }
Tensor tanh(const Tensor& x) { return unary_op(Op::Tanh, x); }
Tensor relu(const Tensor& x) { return unary_op(Op::Relu, x); }

// --- matmul ---

namespace {

struct MatmulPlan {
  int64_t m, k, n;
  Shape batch;                     // broadcast batch shape
  std::vector<int64_t> stride_a;   // per-batch-dim slice strides (in slices)
  std::vector<int64_t> stride_b;
  int64_t batches = 1;
};

MatmulPlan plan_matmul(const Shape& a, const Shape& b) {
  if (a.size() < 2 || b.size() < 2) {
    throw ShapeError("matmul requires rank >= 2, got " + shape_str(a) +
                     " and " + shape_str(b));
  }
  MatmulPlan p;
  p.m = a[a.size() - 2];
  p.k = a[a.size() - 1];
  int64_t k2 = b[b.size() - 2];
  p.n = b[b.size() - 1];
  if (p.k != k2) {
    throw ShapeError("matmul inner dimensions differ: " + shape_str(a) +
                     " vs " + shape_str(b));
  }
  Shape batch_a(a.begin(), a.end() - 2);
  Shape batch_b(b.begin(), b.end() - 2);
  auto plan = plan_broadcast(batch_a, batch_b);
  p.batch = plan.out;
  p.stride_a = plan.stride_a;
  p.stride_b = plan.stride_b;
  p.batches = plan.n;
  return p;
}

// Iterates batch slices, giving slice indices of a and b for each output
// slice index.
template <class F>
void for_each_batch(const MatmulPlan& p, F&& fn) {
  size_t r = p.batch.size();
  std::vector<int64_t> idx(r, 0);
  int64_t ia = 0;
  int64_t ib = 0;
  for (int64_t lin = 0; lin < p.batches; ++lin) {
    fn(lin, ia, ib);
    for (size_t d = r; d-- > 0;) {
      ++idx[d];
      ia += p.stride_a[d];
      ib += p.stride_b[d];
      if (idx[d] < p.batch[d]) break;
      ia -= p.stride_a[d] * p.batch[d];
      ib -= p.stride_b[d] * p.batch[d];
      idx[d] = 0;
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto p = plan_matmul(a.shape(), b.shape());
  Shape out_shape = p.batch;
  out_shape.push_back(p.m);
  out_shape.push_back(p.n);
  std::vector<double> out(static_cast<size_t>(p.batches * p.m * p.n), 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for_each_batch(p, [&](int64_t o, int64_t ia, int64_t ib) {
    gemm_nn(p.m, p.k, p.n, pa + ia * p.m * p.k, pb + ib * p.k * p.n,
            out.data() + o * p.m * p.n);
  });
  Tensor result(out_shape, std::move(out));
  Tensor ta = a;
  Tensor tb = b;
  return finalize(Op::MatMul, {&a, &b}, result,
                  [ta, tb, p](Tape& tape, const std::vector<double>& g) {
                    std::vector<double> da(ta.data().size(), 0.0);
                    std::vector<double> db(tb.data().size(), 0.0);
                    const double* pa = ta.data().data();
                    const double* pb = tb.data().data();
                    for_each_batch(p, [&](int64_t o, int64_t ia, int64_t ib) {
                      const double* gs = g.data() + o * p.m * p.n;
                      // dA += g * B^T ; dB += A^T * g
                      gemm_nt(p.m, p.n, p.k, gs, pb + ib * p.k * p.n,
                              da.data() + ia * p.m * p.k);
                      gemm_tn(p.k, p.m, p.n, pa + ia * p.m * p.k, gs,
                              db.data() + ib * p.k * p.n);
                    });
                    tape.accumulate(ta, da);
                    tape.accumulate(tb, db);
                  });
}

// --- softmax ---

Tensor softmax(const Tensor& x, int axis) {
  int a = normalize_axis(axis, x.rank());
  const Shape& shape = x.shape();
  int64_t outer = 1;
  int64_t inner = 1;
  for (int i = 0; i < a; ++i) outer *= shape[static_cast<size_t>(i)];
  int64_t k = shape[static_cast<size_t>(a)];
  for (int i = a + 1; i < x.rank(); ++i) inner *= shape[static_cast<size_t>(i)];

  std::vector<double> out(x.data().size());
  const double* px = x.data().data();
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      const double* src = px + o * k * inner + in;
      double* dst = out.data() + o * k * inner + in;
      double mx = src[0];
      for (int64_t j = 1; j < k; ++j) mx = std::max(mx, src[j * inner]);
      double denom = 0.0;
      for (int64_t j = 0; j < k; ++j) {
        double e = std::exp(src[j * inner] - mx);
        dst[j * inner] = e;
        denom += e;
      }
      for (int64_t j = 0; j < k; ++j) dst[j * inner] /= denom;
    }
  }
  Tensor result(shape, std::move(out));
  Tensor tx = x;
  Tensor ty = result;
  return finalize(Op::Softmax, {&x}, result,
                  [tx, ty, outer, k, inner](Tape& tape,
                                            const std::vector<double>& g) {
                    std::vector<double> dx(g.size());
                    const double* s = ty.data().data();
                    for (int64_t o = 0; o < outer; ++o) {
                      for (int64_t in = 0; in < inner; ++in) {
                        int64_t base = o * k * inner + in;
                        double dot = 0.0;
                        for (int64_t j = 0; j < k; ++j) {
                          int64_t ix = base + j * inner;
                          dot += g[static_cast<size_t>(ix)] * s[ix];
                        }
                        for (int64_t j = 0; j < k; ++j) {
                          int64_t ix = base + j * inner;
                          dx[static_cast<size_t>(ix)] =
                              s[ix] * (g[static_cast<size_t>(ix)] - dot);
                        }
                      }
                    }
                    tape.accumulate(tx, dx);
                  });
}

// --- layer norm ---

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  int64_t d = x.shape().back();
  if (gain.rank() != 1 || bias.rank() != 1 || gain.dim(0) != d ||
      bias.dim(0) != d) {
    throw ShapeError("layer_norm gain/bias must be [" + std::to_string(d) +
                     "], got " + shape_str(gain.shape()) + " and " +
                     shape_str(bias.shape()));
  }
  int64_t rows = x.size() / d;
  std::vector<double> out(x.data().size());
  auto xhat = std::make_shared<std::vector<double>>(x.data().size());
  auto inv_std = std::make_shared<std::vector<double>>(
      static_cast<size_t>(rows));
  const double* px = x.data().data();
  const double* pg = gain.data().data();
  const double* pb = bias.data().data();
  for (int64_t r = 0; r < rows; ++r) {
    const double* src = px + r * d;
    double mean = 0.0;
    for (int64_t j = 0; j < d; ++j) mean += src[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      double c = src[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[static_cast<size_t>(r)] = is;
    for (int64_t j = 0; j < d; ++j) {
      double h = (src[j] - mean) * is;
      (*xhat)[static_cast<size_t>(r * d + j)] = h;
      out[static_cast<size_t>(r * d + j)] = h * pg[j] + pb[j];
    }
  }
  Tensor result(x.shape(), std::move(out));
  Tensor tx = x;
  Tensor tgain = gain;
  Tensor tbias = bias;
  return finalize(
      Op::LayerNorm, {&x, &gain, &bias}, result,
      [tx, tgain, tbias, xhat, inv_std, rows, d](
          Tape& tape, const std::vector<double>& g) {
        std::vector<double> dx(g.size());
        std::vector<double> dgain(static_cast<size_t>(d), 0.0);
        std::vector<double> dbias(static_cast<size_t>(d), 0.0);
        const double* pg = tgain.data().data();
        for (int64_t r = 0; r < rows; ++r) {
          const double* gr = g.data() + r * d;
          const double* hr = xhat->data() + r * d;
          double is = (*inv_std)[static_cast<size_t>(r)];
          double mean_dh = 0.0;
          double mean_dh_h = 0.0;
          for (int64_t j = 0; j < d; ++j) {
            double dh = gr[j] * pg[j];
            mean_dh += dh;
            mean_dh_h += dh * hr[j];
            dgain[static_cast<size_t>(j)] += gr[j] * hr[j];
            dbias[static_cast<size_t>(j)] += gr[j];
          }
          mean_dh /= static_cast<double>(d);
          mean_dh_h /= static_cast<double>(d);
          for (int64_t j = 0; j < d; ++j) {
            double dh = gr[j] * pg[j];
            dx[static_cast<size_t>(r * d + j)] =
                is * (dh - mean_dh - hr[j] * mean_dh_h);
          }
        }
        tape.accumulate(tx, dx);
        tape.accumulate(tgain, dgain);
        tape.accumulate(tbias, dbias);
      });
}

// --- embedding ---

Tensor embedding_lookup(const Tensor& table, const IdMatrix& ids) {
  if (table.rank() != 2) {
    throw ShapeError("embedding table must be rank 2, got " +
                     shape_str(table.shape()));
  }
  int64_t vocab = table.dim(0);
  int64_t d = table.dim(1);
  int64_t rows = static_cast<int64_t>(ids.size());
  if (rows == 0) throw ValueError("embedding_lookup on empty id matrix");
  int64_t cols = static_cast<int64_t>(ids[0].size());
  for (size_t r = 0; r < ids.size(); ++r) {
    if (static_cast<int64_t>(ids[r].size()) != cols) {
      throw ShapeError("ragged id matrix in embedding_lookup");
    }
    for (size_t c = 0; c < ids[r].size(); ++c) {
      int64_t id = ids[r][c];
      if (id < 0 || id >= vocab) {
        throw ValueError("embedding id " + std::to_string(id) +
                         " out of range [0," + std::to_string(vocab) +
                         ") at row " + std::to_string(r) + " col " +
                         std::to_string(c));
      }
    }
  }
  std::vector<double> out(static_cast<size_t>(rows * cols * d));
  const double* pt = table.data().data();
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t c = 0; c < cols; ++c) {
      int64_t id = ids[static_cast<size_t>(r)][static_cast<size_t>(c)];
      std::memcpy(out.data() + (r * cols + c) * d, pt + id * d,
                  static_cast<size_t>(d) * sizeof(double));
    }
  }
  Tensor result({rows, cols, d}, std::move(out));
  Tensor ttable = table;
  auto saved_ids = std::make_shared<IdMatrix>(ids);
  return finalize(Op::Embedding, {&table}, result,
                  [ttable, saved_ids, rows, cols, d](
                      Tape& tape, const std::vector<double>& g) {
                    std::vector<double> dt(ttable.data().size(), 0.0);
                    for (int64_t r = 0; r < rows; ++r) {
                      for (int64_t c = 0; c < cols; ++c) {
                        int64_t id = (*saved_ids)[static_cast<size_t>(r)]
                                                 [static_cast<size_t>(c)];
                        const double* gs = g.data() + (r * cols + c) * d;
                        double* ds = dt.data() + id * d;
                        for (int64_t j = 0; j < d; ++j) ds[j] += gs[j];
                      }
                    }
                    tape.accumulate(ttable, dt);
                  });
}

// --- masked cross entropy ---

Tensor cross_entropy_masked(const Tensor& logits, const IdMatrix& labels) {
  if (logits.rank() != 3) {
    throw ShapeError("cross_entropy_masked expects [B,T,V] logits, got " +
                     shape_str(logits.shape()));
  }
  int64_t b = logits.dim(0);
  int64_t t = logits.dim(1);
  int64_t v = logits.dim(2);
  if (static_cast<int64_t>(labels.size()) != b) {
    throw ShapeError("label rows do not match logits batch");
  }
  auto probs = std::make_shared<std::vector<double>>(logits.data().size());
  const double* pl = logits.data().data();
  double loss = 0.0;
  int64_t count = 0;
  for (int64_t i = 0; i < b; ++i) {
    if (static_cast<int64_t>(labels[static_cast<size_t>(i)].size()) != t) {
      throw ShapeError("label cols do not match logits steps");
    }
    for (int64_t j = 0; j < t; ++j) {
      int64_t y = labels[static_cast<size_t>(i)][static_cast<size_t>(j)];
      const double* row = pl + (i * t + j) * v;
      double* prow = probs->data() + (i * t + j) * v;
      double mx = row[0];
      for (int64_t q = 1; q < v; ++q) mx = std::max(mx, row[q]);
      double denom = 0.0;
      for (int64_t q = 0; q < v; ++q) {
        double e = std::exp(row[q] - mx);
        prow[q] = e;
        denom += e;
      }
      for (int64_t q = 0; q < v; ++q) prow[q] /= denom;
      if (y == kMaskedLabel) continue;
      if (y < 0 || y >= v) {
        throw ValueError("label " + std::to_string(y) + " out of range [0," +
                         std::to_string(v) + ") at row " + std::to_string(i) +
                         " col " + std::to_string(j));
      }
      loss += std::log(denom) + mx - row[y];
      ++count;
    }
  }
  double mean = count > 0 ? loss / static_cast<double>(count) : 0.0;
  Tensor result({1}, {mean});
  Tensor tl = logits;
  auto saved = std::make_shared<IdMatrix>(labels);
  return finalize(
      Op::CrossEntropy, {&logits}, result,
      [tl, saved, probs, b, t, v, count](Tape& tape,
                                         const std::vector<double>& g) {
        std::vector<double> dl(tl.data().size(), 0.0);
        if (count > 0) {
          double scale = g[0] / static_cast<double>(count);
          for (int64_t i = 0; i < b; ++i) {
            for (int64_t j = 0; j < t; ++j) {
              int64_t y = (*saved)[static_cast<size_t>(i)]
                                  [static_cast<size_t>(j)];
              if (y == kMaskedLabel) continue;
              const double* prow = probs->data() + (i * t + j) * v;
              double* drow = dl.data() + (i * t + j) * v;
              for (int64_t q = 0; q < v; ++q) drow[q] = scale * prow[q];
              drow[y] -= scale;
            }
          }
        }
        tape.accumulate(tl, dl);
      });
}

// --- shape ops ---

Tensor concat_last(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ValueError("concat_last on empty list");
  Shape lead = parts[0].shape();
  lead.pop_back();
  int64_t total = 0;
  std::vector<int64_t> widths;
  for (const Tensor& p : parts) {
    Shape l = p.shape();
    int64_t w = l.back();
    l.pop_back();
    if (l != lead) {
      throw ShapeError("concat_last mismatch: " + shape_str(parts[0].shape()) +
                       " vs " + shape_str(p.shape()));
    }
    widths.push_back(w);
    total += w;
  }
  Shape out_shape = lead;
  out_shape.push_back(total);
  int64_t rows = numel(lead);
  std::vector<double> out(static_cast<size_t>(rows * total));
  for (int64_t r = 0; r < rows; ++r) {
    int64_t off = 0;
    for (size_t p = 0; p < parts.size(); ++p) {
      int64_t w = widths[p];
      std::memcpy(out.data() + r * total + off,
                  parts[p].data().data() + r * w,
                  static_cast<size_t>(w) * sizeof(double));
      off += w;
    }
  }
  Tensor result(out_shape, std::move(out));
  std::vector<const Tensor*> ins;
  for (const Tensor& p : parts) ins.push_back(&p);
  auto saved = std::make_shared<std::vector<Tensor>>(parts);
  return finalize(Op::Concat, ins, result,
                  [saved, widths, rows, total](Tape& tape,
                                               const std::vector<double>& g) {
                    int64_t off = 0;
                    for (size_t p = 0; p < saved->size(); ++p) {
                      int64_t w = widths[p];
                      std::vector<double> dp(static_cast<size_t>(rows * w));
                      for (int64_t r = 0; r < rows; ++r) {
                        std::memcpy(dp.data() + r * w,
                                    g.data() + r * total + off,
                                    static_cast<size_t>(w) * sizeof(double));
                      }
                      tape.accumulate((*saved)[p], dp);
                      off += w;
                    }
                  });
}

Tensor transpose_last2(const Tensor& x) {
  if (x.rank() < 2) {
    throw ShapeError("transpose_last2 requires rank >= 2, got " +
                     shape_str(x.shape()));
  }
  Shape shape = x.shape();
  int64_t m = shape[shape.size() - 2];
  int64_t n = shape[shape.size() - 1];
  std::swap(shape[shape.size() - 2], shape[shape.size() - 1]);
  int64_t slices = x.size() / (m * n);
  std::vector<double> out(x.data().size());
  const double* px = x.data().data();
  for (int64_t s = 0; s < slices; ++s) {
    const double* src = px + s * m * n;
    double* dst = out.data() + s * m * n;
    for (int64_t i = 0; i < m; ++i) {
      for (int64_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
    }
  }
  Tensor result(shape, std::move(out));
  Tensor tx = x;
  return finalize(Op::TransposeLast2, {&x}, result,
                  [tx, slices, m, n](Tape& tape, const std::vector<double>& g) {
                    std::vector<double> dx(g.size());
                    for (int64_t s = 0; s < slices; ++s) {
                      const double* src = g.data() + s * m * n;  // n x m
                      double* dst = dx.data() + s * m * n;
                      for (int64_t j = 0; j < n; ++j) {
                        for (int64_t i = 0; i < m; ++i) {
                          dst[i * n + j] = src[j * m + i];
                        }
                      }
                    }
                    tape.accumulate(tx, dx);
                  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw ShapeError("reshape from " + shape_str(x.shape()) + " to " +
                     shape_str(shape) + " changes element count");
  }
  Tensor result(shape, x.data());
  Tensor tx = x;
  return finalize(Op::Reshape, {&x}, result,
                  [tx](Tape& tape, const std::vector<double>& g) {
                    tape.accumulate(tx, g);
                  });
}

Tensor slice_step(const Tensor& x, int64_t t) {
  if (x.rank() != 3) {
    throw ShapeError("slice_step expects rank 3, got " + shape_str(x.shape()));
  }
  int64_t b = x.dim(0);
  int64_t steps = x.dim(1);
  int64_t e = x.dim(2);
  if (t < 0 || t >= steps) {
    throw ValueError("step " + std::to_string(t) + " out of range [0," +
                     std::to_string(steps) + ")");
  }
  std::vector<double> out(static_cast<size_t>(b * e));
  const double* px = x.data().data();
  for (int64_t i = 0; i < b; ++i) {
    std::memcpy(out.data() + i * e, px + (i * steps + t) * e,
                static_cast<size_t>(e) * sizeof(double));
  }
  Tensor result({b, e}, std::move(out));
  Tensor tx = x;
  return finalize(Op::SliceStep, {&x}, result,
                  [tx, t, b, steps, e](Tape& tape,
                                       const std::vector<double>& g) {
                    std::vector<double> dx(tx.data().size(), 0.0);
                    for (int64_t i = 0; i < b; ++i) {
                      std::memcpy(dx.data() + (i * steps + t) * e,
                                  g.data() + i * e,
                                  static_cast<size_t>(e) * sizeof(double));
                    }
                    tape.accumulate(tx, dx);
                  });
}

Tensor stack_steps(const std::vector<Tensor>& steps) {
  if (steps.empty()) throw ValueError("stack_steps on empty list");
  if (steps[0].rank() != 2) {
    throw ShapeError("stack_steps expects rank-2 steps, got " +
                     shape_str(steps[0].shape()));
  }
  int64_t b = steps[0].dim(0);
  int64_t e = steps[0].dim(1);
  int64_t t = static_cast<int64_t>(steps.size());
  for (const Tensor& s : steps) {
    if (s.shape() != steps[0].shape()) {
      throw ShapeError("stack_steps mismatch: " + shape_str(steps[0].shape()) +
                       " vs " + shape_str(s.shape()));
    }
  }
  std::vector<double> out(static_cast<size_t>(b * t * e));
  for (int64_t j = 0; j < t; ++j) {
    const double* src = steps[static_cast<size_t>(j)].data().data();
    for (int64_t i = 0; i < b; ++i) {
      std::memcpy(out.data() + (i * t + j) * e, src + i * e,
                  static_cast<size_t>(e) * sizeof(double));
    }
  }
  Tensor result({b, t, e}, std::move(out));
  std::vector<const Tensor*> ins;
  for (const Tensor& s : steps) ins.push_back(&s);
  auto saved = std::make_shared<std::vector<Tensor>>(steps);
  return finalize(Op::StackSteps, ins, result,
                  [saved, b, t, e](Tape& tape, const std::vector<double>& g) {
                    for (int64_t j = 0; j < t; ++j) {
                      std::vector<double> ds(static_cast<size_t>(b * e));
                      for (int64_t i = 0; i < b; ++i) {
                        std::memcpy(ds.data() + i * e,
                                    g.data() + (i * t + j) * e,
                                    static_cast<size_t>(e) * sizeof(double));
                      }
                      tape.accumulate((*saved)[static_cast<size_t>(j)], ds);
                    }
                  });
}

Tensor reduce_sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor result({1}, {acc});
  Tensor tx = x;
  return finalize(Op::ReduceSum, {&x}, result,
                  [tx](Tape& tape, const std::vector<double>& g) {
                    std::vector<double> dx(tx.data().size(), g[0]);
                    tape.accumulate(tx, dx);
                  });
}

}  // namespace pbench::ad
