#include "multitox/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "multitox/errors.hpp"

namespace multitox {

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

thread_local Tape* g_active_tape = nullptr;

using NodePtr = std::shared_ptr<Tensor::Node>;

std::vector<double>& ensure_grad(Tensor::Node& n) {
  if (n.grad.empty()) n.grad.assign(n.values.size(), 0.0);
  return n.grad;
}

bool tracing(std::initializer_list<const Tensor*> inputs) {
  if (!g_active_tape) return false;
  for (const Tensor* t : inputs) {
    if (t && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

// Marks `out` as a recorded intermediate and appends its backward closure.
template <typename Fn>
void record_op(Tensor& out, Fn&& backward_fn) {
  out.node()->requires_grad = true;
  out.node()->leaf = false;
  g_active_tape->record(out.node(), std::forward<Fn>(backward_fn));
}

void require_2d(const Tensor& t, const char* op) {
  if (t.ndim() != 2) {
    throw ShapeError(std::string(op) + ": expected 2-D tensor, got " +
                     shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch: " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

}  // namespace

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->values.assign(shape_numel(shape), 0.0);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value,
                    bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->values.assign(shape_numel(shape), value);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::from_values(std::vector<std::size_t> shape,
                           std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " wants " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

std::size_t Tensor::rows() const {
  if (node_->shape.size() != 2) {
    throw ShapeError("tensor: rows() requires 2-D, got " +
                     shape_str(node_->shape));
  }
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  if (node_->shape.empty()) throw ShapeError("tensor: cols() on empty shape");
  return node_->shape.back();
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return node_->values[r * cols() + c];
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("tensor: item() requires a scalar, got " +
                     shape_str(node_->shape));
  }
  return node_->values[0];
}

void Tensor::set_requires_grad(bool v) { node_->requires_grad = v; }

std::vector<double>& Tensor::grad() { return ensure_grad(*node_); }

void Tensor::zero_grad() {
  if (!node_->grad.empty()) {
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }
}

// ---- Tape ------------------------------------------------------------------

Tape::Scope::Scope(Tape& t) : prev_(g_active_tape) { g_active_tape = &t; }
Tape::Scope::~Scope() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::shared_ptr<Tensor::Node> output,
                  std::function<void()> backward_fn) {
  entries_.push_back({std::move(output), std::move(backward_fn)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar tensor");
  }
  // Intermediates restart from scratch; leaf grads accumulate across calls.
  for (Entry& e : entries_) e.output->grad.clear();
  ensure_grad(*loss.node())[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // branch never reached the loss
    it->fn();
  }
}

void Tape::clear() { entries_.clear(); }

// ---- primitives -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2) {
    throw ShapeError("matmul: inner dims disagree: " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  }
  std::vector<double> vals(m * n, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = av[i * k + kk];
      for (std::size_t j = 0; j < n; ++j) {
        vals[i * n + j] += aik * bv[kk * n + j];
      }
    }
  }
  Tensor out = Tensor::from_values({m, n}, std::move(vals));
  if (tracing({&a, &b})) {
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    record_op(out, [an, bn, on, m, k, n]() {
      const auto& go = on->grad;
      if (an->requires_grad) {
        auto& ga = ensure_grad(*an);
        // dA = dC * B^T
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t kk = 0; kk < k; ++kk) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              acc += go[i * n + j] * bn->values[kk * n + j];
            }
            ga[i * k + kk] += acc;
          }
        }
      }
      if (bn->requires_grad) {
        auto& gb = ensure_grad(*bn);
        // dB = A^T * dC
        for (std::size_t kk = 0; kk < k; ++kk) {
          for (std::size_t i = 0; i < m; ++i) {
            const double aik = an->values[i * k + kk];
            for (std::size_t j = 0; j < n; ++j) {
              gb[kk * n + j] += aik * go[i * n + j];
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul_nt");
  require_2d(b, "matmul_nt");
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t n = b.shape()[0], k2 = b.shape()[1];
  if (k != k2) {
    throw ShapeError("matmul_nt: inner dims disagree: " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()) + "^T");
  }
  std::vector<double> vals(m * n, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) {
        acc += av[i * k + kk] * bv[j * k + kk];
      }
      vals[i * n + j] = acc;
    }
  }
  Tensor out = Tensor::from_values({m, n}, std::move(vals));
  if (tracing({&a, &b})) {
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    record_op(out, [an, bn, on, m, k, n]() {
      const auto& go = on->grad;
      if (an->requires_grad) {
        auto& ga = ensure_grad(*an);
        // dA = dC * B
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            const double g = go[i * n + j];
            for (std::size_t kk = 0; kk < k; ++kk) {
              ga[i * k + kk] += g * bn->values[j * k + kk];
            }
          }
        }
      }
      if (bn->requires_grad) {
        auto& gb = ensure_grad(*bn);
        // dB = dC^T * A
        for (std::size_t j = 0; j < n; ++j) {
          for (std::size_t i = 0; i < m; ++i) {
            const double g = go[i * n + j];
            for (std::size_t kk = 0; kk < k; ++kk) {
              gb[j * k + kk] += g * an->values[i * k + kk];
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> vals(a.numel());
  for (std::size_t i = 0; i < vals.size(); ++i) {
    vals[i] = a.values()[i] + b.values()[i];
  }
  Tensor out = Tensor::from_values(a.shape(), std::move(vals));
  if (tracing({&a, &b})) {
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    record_op(out, [an, bn, on]() {
      const auto& go = on->grad;
      if (an->requires_grad) {
        auto& ga = ensure_grad(*an);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (bn->requires_grad) {
        auto& gb = ensure_grad(*bn);
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
      }
    });
  }
  return out;
}

Tensor add_rowvec(const Tensor& x, const Tensor& b) {
  require_2d(x, "add_rowvec");
  if (b.ndim() != 1 || b.numel() != x.cols()) {
    throw ShapeError("add_rowvec: bias " + shape_str(b.shape()) +
                     " does not match row width of " + shape_str(x.shape()));
  }
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> vals(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      vals[i * n + j] = x.values()[i * n + j] + b.values()[j];
    }
  }
  Tensor out = Tensor::from_values({m, n}, std::move(vals));
  if (tracing({&x, &b})) {
    NodePtr xn = x.node(), bn = b.node(), on = out.node();
    record_op(out, [xn, bn, on, m, n]() {
      const auto& go = on->grad;
      if (xn->requires_grad) {
        auto& gx = ensure_grad(*xn);
        for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
      }
      if (bn->requires_grad) {
        auto& gb = ensure_grad(*bn);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) gb[j] += go[i * n + j];
        }
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> vals(a.numel());
  for (std::size_t i = 0; i < vals.size(); ++i) {
    vals[i] = a.values()[i] * b.values()[i];
  }
  Tensor out = Tensor::from_values(a.shape(), std::move(vals));
  if (tracing({&a, &b})) {
    NodePtr an = a.node(), bn = b.node(), on = out.node();
    record_op(out, [an, bn, on]() {
      const auto& go = on->grad;
      if (an->requires_grad) {
        auto& ga = ensure_grad(*an);
        for (std::size_t i = 0; i < go.size(); ++i) {
          ga[i] += go[i] * bn->values[i];
        }
      }
      if (bn->requires_grad) {
        auto& gb = ensure_grad(*bn);
        for (std::size_t i = 0; i < go.size(); ++i) {
          gb[i] += go[i] * an->values[i];
        }
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& x, double c) {
  std::vector<double> vals(x.numel());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = x.values()[i] * c;
  Tensor out = Tensor::from_values(x.shape(), std::move(vals));
  if (tracing({&x})) {
    NodePtr xn = x.node(), on = out.node();
    record_op(out, [xn, on, c]() {
      auto& gx = ensure_grad(*xn);
      const auto& go = on->grad;
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += c * go[i];
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> vals(x.numel());
  for (std::size_t i = 0; i < vals.size(); ++i) {
    vals[i] = 1.0 / (1.0 + std::exp(-x.values()[i]));
  }
  Tensor out = Tensor::from_values(x.shape(), std::move(vals));
  if (tracing({&x})) {
    NodePtr xn = x.node(), on = out.node();
    record_op(out, [xn, on]() {
      auto& gx = ensure_grad(*xn);
      const auto& go = on->grad;
      for (std::size_t i = 0; i < go.size(); ++i) {
        const double s = on->values[i];
        gx[i] += go[i] * s * (1.0 - s);
      }
    });
  }
  return out;
}

Tensor tanh(const Tensor& x) {
  std::vector<double> vals(x.numel());
  for (std::size_t i = 0; i < vals.size(); ++i) {
    vals[i] = std::tanh(x.values()[i]);
  }
  Tensor out = Tensor::from_values(x.shape(), std::move(vals));
  if (tracing({&x})) {
    NodePtr xn = x.node(), on = out.node();
    record_op(out, [xn, on]() {
      auto& gx = ensure_grad(*xn);
      const auto& go = on->grad;
      for (std::size_t i = 0; i < go.size(); ++i) {
        const double t = on->values[i];
        gx[i] += go[i] * (1.0 - t * t);
      }
    });
  }
  return out;
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Tensor gelu(const Tensor& x) {
  std::vector<double> vals(x.numel());
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double v = x.values()[i];
    const double u = kGeluC * (v + kGeluA * v * v * v);
    vals[i] = 0.5 * v * (1.0 + std::tanh(u));
  }
  Tensor out = Tensor::from_values(x.shape(), std::move(vals));
  if (tracing({&x})) {
    NodePtr xn = x.node(), on = out.node();
    record_op(out, [xn, on]() {
      auto& gx = ensure_grad(*xn);
      const auto& go = on->grad;
      for (std::size_t i = 0; i < go.size(); ++i) {
        const double v = xn->values[i];
        const double u = kGeluC * (v + kGeluA * v * v * v);
        const double t = std::tanh(u);
        const double du = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
        gx[i] += go[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
      }
    });
  }
  return out;
}

Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
  if (p < 0.0 || p >= 1.0) {
    throw ConfigError("dropout: p must be in [0, 1), got " + std::to_string(p));
  }
  if (!training || p == 0.0) return x;  // identity, shares storage
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  std::vector<double> vals(x.numel());
  for (std::size_t i = 0; i < vals.size(); ++i) {
    mask[i] = rng.next_bernoulli(p) ? 0.0 : keep_scale;
    vals[i] = x.values()[i] * mask[i];
  }
  Tensor out = Tensor::from_values(x.shape(), std::move(vals));
  if (tracing({&x})) {
    NodePtr xn = x.node(), on = out.node();
    record_op(out, [xn, on, mask = std::move(mask)]() {
      auto& gx = ensure_grad(*xn);
      const auto& go = on->grad;
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * mask[i];
    });
  }
  return out;
}

Tensor concat_lastdim(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_lastdim: no operands");
  const std::size_t nd = parts[0].ndim();
  std::size_t total_last = 0;
  for (const Tensor& p : parts) {
    if (p.ndim() != nd) {
      throw ShapeError("concat_lastdim: rank mismatch");
    }
    for (std::size_t d = 0; d + 1 < nd; ++d) {
      if (p.shape()[d] != parts[0].shape()[d]) {
        throw ShapeError("concat_lastdim: leading dims disagree: " +
                         shape_str(p.shape()) + " vs " +
                         shape_str(parts[0].shape()));
      }
    }
    total_last += p.cols();
  }
  std::vector<std::size_t> out_shape = parts[0].shape();
  out_shape.back() = total_last;
  const std::size_t rows = shape_numel(out_shape) / total_last;
  std::vector<double> vals(rows * total_last);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < w; ++j) {
        vals[r * total_last + offset + j] = p.values()[r * w + j];
      }
    }
    offset += w;
  }
  Tensor out = Tensor::from_values(out_shape, std::move(vals));
  bool traced = false;
  for (const Tensor& p : parts) {
    if (tracing({&p})) traced = true;
  }
  if (traced) {
    std::vector<NodePtr> ins;
    std::vector<std::size_t> widths;
    for (const Tensor& p : parts) {
      ins.push_back(p.node());
      widths.push_back(p.cols());
    }
    NodePtr on = out.node();
    record_op(out, [ins, widths, on, rows, total_last]() {
      const auto& go = on->grad;
      std::size_t off = 0;
      for (std::size_t pi = 0; pi < ins.size(); ++pi) {
        const std::size_t w = widths[pi];
        if (ins[pi]->requires_grad) {
          auto& gi = ensure_grad(*ins[pi]);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < w; ++j) {
              gi[r * w + j] += go[r * total_last + off + j];
            }
          }
        }
        off += w;
      }
    });
  }
  return out;
}

Tensor slice_lastdim(const Tensor& x, std::size_t offset, std::size_t len) {
  const std::size_t w = x.cols();
  if (len == 0 || offset + len > w) {
    throw ShapeError("slice_lastdim: window [" + std::to_string(offset) + ", " +
                     std::to_string(offset + len) + ") exceeds width " +
                     std::to_string(w));
  }
  std::vector<std::size_t> out_shape = x.shape();
  out_shape.back() = len;
  const std::size_t rows = x.numel() / w;
  std::vector<double> vals(rows * len);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < len; ++j) {
      vals[r * len + j] = x.values()[r * w + offset + j];
    }
  }
  Tensor out = Tensor::from_values(out_shape, std::move(vals));
  if (tracing({&x})) {
    NodePtr xn = x.node(), on = out.node();
    record_op(out, [xn, on, offset, len, w, rows]() {
      auto& gx = ensure_grad(*xn);
      const auto& go = on->grad;
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < len; ++j) {
          gx[r * w + offset + j] += go[r * len + j];
        }
      }
    });
  }
  return out;
}

Tensor take_row(const Tensor& x, std::size_t r) {
  require_2d(x, "take_row");
  const std::size_t m = x.rows(), n = x.cols();
  if (r >= m) {
    throw IndexError("take_row: row " + std::to_string(r) + " out of " +
                     std::to_string(m));
  }
  std::vector<double> vals(x.values().begin() + r * n,
                           x.values().begin() + (r + 1) * n);
  Tensor out = Tensor::from_values({1, n}, std::move(vals));
  if (tracing({&x})) {
    NodePtr xn = x.node(), on = out.node();
    record_op(out, [xn, on, r, n]() {
      auto& gx = ensure_grad(*xn);
      const auto& go = on->grad;
      for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += go[j];
    });
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw ShapeError("concat_rows: no operands");
  const std::size_t n = rows[0].cols();
  for (const Tensor& t : rows) {
    require_2d(t, "concat_rows");
    if (t.rows() != 1 || t.cols() != n) {
      throw ShapeError("concat_rows: expected [1x" + std::to_string(n) +
                       "] rows, got " + shape_str(t.shape()));
    }
  }
  const std::size_t m = rows.size();
  std::vector<double> vals(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    std::copy(rows[i].values().begin(), rows[i].values().end(),
              vals.begin() + i * n);
  }
  Tensor out = Tensor::from_values({m, n}, std::move(vals));
  bool traced = false;
  for (const Tensor& t : rows) {
    if (tracing({&t})) traced = true;
  }
  if (traced) {
    std::vector<NodePtr> ins;
    for (const Tensor& t : rows) ins.push_back(t.node());
    NodePtr on = out.node();
    record_op(out, [ins, on, n]() {
      const auto& go = on->grad;
      for (std::size_t i = 0; i < ins.size(); ++i) {
        if (!ins[i]->requires_grad) continue;
        auto& gi = ensure_grad(*ins[i]);
        for (std::size_t j = 0; j < n; ++j) gi[j] += go[i * n + j];
      }
    });
  }
  return out;
}

Tensor softmax_lastdim(const Tensor& x, const Tensor* mask) {
  const std::size_t n = x.cols();
  if (n < 1) throw ShapeError("softmax_lastdim: empty last dim");
  if (mask) {
    if (mask->ndim() != 1 || mask->numel() != n) {
      throw ShapeError("softmax_lastdim: mask " + shape_str(mask->shape()) +
                       " does not cover last dim " + std::to_string(n));
    }
  }
  const std::size_t rows = x.numel() / n;
  // -1e9 fill keeps backward NaN-free; masked weights are then forced to
  // exactly zero and the unmasked entries renormalized.
  constexpr double kMaskFill = -1e9;
  std::vector<double> vals(x.numel());
  bool warned_all_masked = false;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.values().data() + r * n;
    double* yr = vals.data() + r * n;
    bool any_live = false;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      const bool live = !mask || mask->values()[j] != 0.0;
      if (live) {
        any_live = true;
        mx = std::max(mx, xr[j]);
      }
    }
    if (!any_live) {
      for (std::size_t j = 0; j < n; ++j) yr[j] = 0.0;
      warned_all_masked = true;
      continue;
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const bool live = !mask || mask->values()[j] != 0.0;
      const double filled = live ? xr[j] : xr[j] + kMaskFill;
      yr[j] = std::exp(filled - mx);
      sum += live ? yr[j] : 0.0;
    }
    for (std::size_t j = 0; j < n; ++j) {
      const bool live = !mask || mask->values()[j] != 0.0;
      yr[j] = live ? yr[j] / sum : 0.0;
    }
  }
  if (warned_all_masked) {
    log_warning("softmax_lastdim: fully masked row, emitting zeros");
  }
  Tensor out = Tensor::from_values(x.shape(), std::move(vals));
  if (tracing({&x})) {
    NodePtr xn = x.node(), on = out.node();
    record_op(out, [xn, on, rows, n]() {
      auto& gx = ensure_grad(*xn);
      const auto& go = on->grad;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* w = on->values.data() + r * n;
        const double* g = go.data() + r * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += w[j] * g[j];
        for (std::size_t j = 0; j < n; ++j) {
          gx[r * n + j] += w[j] * (g[j] - dot);
        }
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  const std::size_t n = x.cols();
  if (n == 0) throw ShapeError("layer_norm: zero-length feature dim");
  if (eps <= 0.0) throw ConfigError("layer_norm: eps must be > 0");
  if (gain.numel() != n || bias.numel() != n) {
    throw ShapeError("layer_norm: gain/bias must have " + std::to_string(n) +
                     " entries");
  }
  const std::size_t rows = x.numel() / n;
  std::vector<double> vals(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.values().data() + r * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += xr[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = xr[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (xr[j] - mean) * is;
      xhat[r * n + j] = h;
      vals[r * n + j] = h * gain.values()[j] + bias.values()[j];
    }
  }
  Tensor out = Tensor::from_values(x.shape(), std::move(vals));
  if (tracing({&x, &gain, &bias})) {
    NodePtr xn = x.node(), gn = gain.node(), bn = bias.node(), on = out.node();
    record_op(out, [xn, gn, bn, on, rows, n, xhat = std::move(xhat),
                    inv_std = std::move(inv_std)]() {
      const auto& go = on->grad;
      if (gn->requires_grad) {
        auto& gg = ensure_grad(*gn);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < n; ++j) {
            gg[j] += go[r * n + j] * xhat[r * n + j];
          }
        }
      }
      if (bn->requires_grad) {
        auto& gb = ensure_grad(*bn);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < n; ++j) gb[j] += go[r * n + j];
        }
      }
      if (xn->requires_grad) {
        auto& gx = ensure_grad(*xn);
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_dh = 0.0, mean_dh_xhat = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double dh = go[r * n + j] * gn->values[j];
            mean_dh += dh;
            mean_dh_xhat += dh * xhat[r * n + j];
          }
          mean_dh *= inv_n;
          mean_dh_xhat *= inv_n;
          for (std::size_t j = 0; j < n; ++j) {
            const double dh = go[r * n + j] * gn->values[j];
            gx[r * n + j] += inv_std[r] * (dh - mean_dh -
                                           xhat[r * n + j] * mean_dh_xhat);
          }
        }
      }
    });
  }
  return out;
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
  require_2d(table, "embedding_lookup");
  const std::size_t v = table.rows(), d = table.cols();
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= v) {
      throw IndexError("embedding_lookup: id " + std::to_string(id) +
                       " outside vocabulary of size " + std::to_string(v));
    }
  }
  const std::size_t n = ids.size();
  std::vector<double> vals(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t row = static_cast<std::size_t>(ids[i]);
    std::copy(table.values().begin() + row * d,
              table.values().begin() + (row + 1) * d, vals.begin() + i * d);
  }
  Tensor out = Tensor::from_values({n, d}, std::move(vals));
  if (tracing({&table})) {
    NodePtr tn = table.node(), on = out.node();
    record_op(out, [tn, on, ids, d]() {
      auto& gt = ensure_grad(*tn);
      const auto& go = on->grad;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const std::size_t row = static_cast<std::size_t>(ids[i]);
        for (std::size_t j = 0; j < d; ++j) {
          gt[row * d + j] += go[i * d + j];
        }
      }
    });
  }
  return out;
}

Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  Tensor out = Tensor::scalar(s);
  if (tracing({&x})) {
    NodePtr xn = x.node(), on = out.node();
    record_op(out, [xn, on]() {
      auto& gx = ensure_grad(*xn);
      const double g = on->grad[0];
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    });
  }
  return out;
}

Tensor random_trunc_normal(std::vector<std::size_t> shape, Rng& rng,
                           double stddev) {
  std::size_t n = shape_numel(shape);
  std::vector<double> vals(n);
  for (auto& v : vals) v = rng.next_trunc_normal(stddev);
  return Tensor::from_values(std::move(shape), std::move(vals));
}

Tensor random_uniform(std::vector<std::size_t> shape, Rng& rng, double lo,
                      double hi) {
  std::size_t n = shape_numel(shape);
  std::vector<double> vals(n);
  for (auto& v : vals) v = rng.next_uniform(lo, hi);
  return Tensor::from_values(std::move(shape), std::move(vals));
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  require_2d(logits, "bce_with_logits");
  require_same_shape(logits, targets, "bce_with_logits");
  const std::size_t batch = logits.rows();
  for (double y : targets.values()) {
    if (y != 0.0 && y != 1.0) {
      throw ConfigError("bce_with_logits: target " + std::to_string(y) +
                        " is not binary");
    }
  }
  // Stable logit form: max(z,0) - z*y + log(1 + exp(-|z|)); summed over
  // labels, averaged over the batch only.
  double total = 0.0;
  for (std::size_t i = 0; i < logits.numel(); ++i) {
    const double z = logits.values()[i];
    const double y = targets.values()[i];
    total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::fabs(z)));
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(batch));
  if (tracing({&logits})) {
    NodePtr zn = logits.node(), yn = targets.node(), on = out.node();
    record_op(out, [zn, yn, on, batch]() {
      auto& gz = ensure_grad(*zn);
      const double g = on->grad[0] / static_cast<double>(batch);
      for (std::size_t i = 0; i < gz.size(); ++i) {
        const double p = 1.0 / (1.0 + std::exp(-zn->values[i]));
        gz[i] += g * (p - yn->values[i]);
      }
    });
  }
  return out;
}

}  // namespace multitox
