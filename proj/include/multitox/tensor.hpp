#ifndef MULTITOX_TENSOR_HPP
#define MULTITOX_TENSOR_HPP

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "multitox/rng.hpp"

namespace multitox {

// Dense float64 tensor with reverse-mode autodiff.  A Tensor is a cheap
// handle onto shared storage; ops executed while a Tape is active record
// backward closures onto it.  Values are immutable once created except for
// the grad slot (and in-place optimizer updates between steps, which the
// single-owner training contract permits).
class Tensor {
 public:
  struct Node {
    std::vector<std::size_t> shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    bool leaf = true;
  };

  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<std::size_t> shape, double value,
                     bool requires_grad = false);
  static Tensor from_values(std::vector<std::size_t> shape,
                            std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const std::vector<std::size_t>& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->values.size(); }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t rows() const;  // first dim of a 2-D tensor
  std::size_t cols() const;  // last dim

  std::vector<double>& values() { return node_->values; }
  const std::vector<double>& values() const { return node_->values; }
  double at(std::size_t i) const { return node_->values[i]; }
  double at(std::size_t r, std::size_t c) const;
  double item() const;  // numel()==1 only

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v);
  bool is_leaf() const { return node_->leaf; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::vector<double>& grad();  // allocates zeros on first use
  const std::vector<double>& grad_view() const { return node_->grad; }
  void zero_grad();

  std::shared_ptr<Node> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
  std::shared_ptr<Node> node_;

  friend class Tape;
  friend Tensor make_op_output(std::vector<std::size_t> shape,
                               std::vector<double> values);
};

// Ordered record of executed primitives.  Ops append entries in execution
// order; backward replays them in exact reverse order, which is a valid
// reverse topological order of the recorded graph.  Single-writer.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Makes this tape the recording target for the current thread.
  class Scope {
   public:
    explicit Scope(Tape& t);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

  static Tape* active();

  void record(std::shared_ptr<Tensor::Node> output,
              std::function<void()> backward_fn);

  // Seeds d(loss)/d(loss) = 1 and accumulates grads into every reachable
  // requires_grad leaf.  Grads of recorded intermediates are reset first;
  // leaf grads accumulate additively across calls.
  void backward(const Tensor& loss);

  std::size_t size() const { return entries_.size(); }
  void clear();

 private:
  struct Entry {
    std::shared_ptr<Tensor::Node> output;
    std::function<void()> fn;
  };
  std::vector<Entry> entries_;
};

// ---- primitives -----------------------------------------------------------
// Activations and matrices are 2-D [rows x cols]; biases and LayerNorm
// gain/bias are 1-D.  Scalars have shape {1}.

Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k]x[k,n] -> [m,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T: [m,k]x[n,k] -> [m,n]
Tensor add(const Tensor& a, const Tensor& b);        // same shape
Tensor add_rowvec(const Tensor& x, const Tensor& b); // [m,n] + [n] per row
Tensor mul(const Tensor& a, const Tensor& b);        // elementwise
Tensor scale(const Tensor& x, double c);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor gelu(const Tensor& x);  // tanh approximation
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng);
Tensor concat_lastdim(const std::vector<Tensor>& parts);
Tensor slice_lastdim(const Tensor& x, std::size_t offset, std::size_t len);
Tensor take_row(const Tensor& x, std::size_t r);     // [m,n] -> [1,n]
Tensor concat_rows(const std::vector<Tensor>& rows); // k x [1,n] -> [k,n]
Tensor softmax_lastdim(const Tensor& x, const Tensor* mask = nullptr);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);
Tensor sum_all(const Tensor& x);  // -> scalar
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);  // -> scalar

// ---- initializers ----------------------------------------------------------

// Normal(0, stddev) resampled into [-2*stddev, 2*stddev].
Tensor random_trunc_normal(std::vector<std::size_t> shape, Rng& rng,
                           double stddev);
Tensor random_uniform(std::vector<std::size_t> shape, Rng& rng, double lo,
                      double hi);

}  // namespace multitox

#endif
