#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "pbench/errors.hpp"
#include "pbench/rng.hpp"

namespace pbench::ad {

using Shape = std::vector<int64_t>;
using IdMatrix = std::vector<std::vector<int64_t>>;

// Label value that excludes a position from the loss and its gradient.
constexpr int64_t kMaskedLabel = -100;

int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

enum class Op : uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Sigmoid,
  Tanh,
  Relu,
  MatMul,
  Softmax,
  LayerNorm,
  Embedding,
  CrossEntropy,
  Concat,
  TransposeLast2,
  Reshape,
  SliceStep,
  StackSteps,
  ReduceSum,
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;   // row-major, size == numel(shape)
  std::vector<double> grad;   // empty until a backward pass reaches this leaf
  bool requires_grad = false;
  int32_t node = -1;          // producing node on `tape`, -1 for leaves
  uint64_t tape = 0;
};

// Dense double-precision tensor. Copies share storage; parameters stay
// valid across training steps while activations belong to one tape.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor ones(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value);
  static Tensor uniform(Shape shape, double lo, double hi, Rng& rng,
                        bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int64_t dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(impl_->data.size()); }

  std::vector<double>& data() { return impl_->data; }
  const std::vector<double>& data() const { return impl_->data; }

  // Value of a single-element tensor.
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool v) { impl_->requires_grad = v; }

  bool has_grad() const { return !impl_->grad.empty(); }
  const std::vector<double>& grad() const;
  void zero_grad() { impl_->grad.clear(); }

  int32_t node() const { return impl_->node; }
  uint64_t tape_id() const { return impl_->tape; }

  TensorImpl* impl() const { return impl_.get(); }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Reverse-mode tape. Node order is creation order, which is already
// topological; backward walks it once in reverse. Leaf tensors with
// requires_grad accumulate into their persistent grad buffers until
// zero_grad, so repeated backward calls add up.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  uint64_t id() const { return id_; }
  size_t size() const { return nodes_.size(); }

  void backward(const Tensor& loss);

  static Tape* active();

  // -- used by op implementations --
  using BackwardFn = std::function<void(Tape&, const std::vector<double>&)>;
  int32_t record(Op op, const std::vector<const Tensor*>& inputs,
                 BackwardFn fn);
  // Routes a gradient contribution either to a node's scratch buffer or to a
  // leaf's persistent grad.
  void accumulate(const Tensor& t, const std::vector<double>& g);

 private:
  struct Node {
    Op op;
    std::vector<int32_t> inputs;
    BackwardFn fn;
  };

  uint64_t id_;
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> scratch_;  // per-node output grads
  // Per-pass leaf totals, applied to persistent grads once per backward call
  // so that repeated passes add bit-identical amounts.
  std::vector<std::pair<TensorImpl*, std::vector<double>>> leaf_acc_;

  friend class TapeScope;
};

// RAII activation of a tape on the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

// Backpropagate from a scalar loss through the active tape.
void backward(const Tensor& loss);

enum class EwOp : uint8_t { Add, Sub, Mul, Sigmoid, Tanh, Relu };

// Dispatcher form: binary kinds take two tensors with trailing-dimension
// broadcasting, unary kinds exactly one.
Tensor elementwise(EwOp op, const Tensor& a, const Tensor* b = nullptr);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);

// Matrix product over the last two axes; leading axes broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);

// Numerically stable softmax along `axis` (negative axes count from the end).
Tensor softmax(const Tensor& x, int axis);

// Normalizes the last axis to zero mean / unit variance, then applies
// gain and bias (both shaped like the last axis).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

// Gathers rows of `table` ([V, d]) by id; output shape [rows, cols, d].
Tensor embedding_lookup(const Tensor& table, const IdMatrix& ids);

// Mean negative log-likelihood of `labels` under `logits` ([B, T, V]).
// Positions labelled kMaskedLabel contribute neither loss nor gradient;
// if every position is masked the loss is exactly zero.
Tensor cross_entropy_masked(const Tensor& logits, const IdMatrix& labels);

Tensor concat_last(const std::vector<Tensor>& parts);
Tensor transpose_last2(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

// Selects step t of a [B, T, E] tensor -> [B, E].
Tensor slice_step(const Tensor& x, int64_t t);
// Stacks T tensors of shape [B, E] -> [B, T, E].
Tensor stack_steps(const std::vector<Tensor>& steps);

Tensor reduce_sum(const Tensor& x);

}  // namespace pbench::ad
