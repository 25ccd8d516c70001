#pragma once

// Reverse-mode automatic differentiation over Tensor values.
//
// A Tape is built fresh for every forward pass. Each recorded node stores its
// forward value (immutable once recorded), its parents and a backward closure
// that accumulates into the parents' gradients. Parameters live outside the
// tape and are bound to leaf nodes with Tape::param; backward() writes the
// gradients of trainable parameters back into Parameter::grad.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ghn/tensor.hpp"

namespace ghn {

template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  bool trainable = true;
  bool clamp_unit = false;  // kept inside [0, 1] after every optimizer step
  Tensor<T> grad;  // same shape as value after a backward pass; empty before

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v, bool train = true)
      : name(std::move(n)), value(std::move(v)), trainable(train) {}
};

template <class T>
class Tape;

/// Handle to a node on a tape.
template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const;
  Shape shape() const { return value().shape(); }
};

/// Global switch for finite-value checks on every recorded node. Off by
/// default; verification suites turn it on.
void set_check_finite(bool on);
bool check_finite_enabled();

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <class T>
class Tape {
 public:
  /// Receives the gradient of the node's output and adds into parent grads.
  using BackwardFn = std::function<void(Tape&, std::span<const T> grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  Var<T> leaf(Tensor<T> value, bool requires_grad);
  Var<T> param(Parameter<T>& p);

  /// Records an op result. `fn` runs only when some parent requires grad.
  Var<T> record(Tensor<T> value, std::vector<Var<T>> parents, BackwardFn fn, const char* op);

  const Tensor<T>& value(Var<T> v) const { return node(v).value; }
  bool requires_grad(Var<T> v) const { return node(v).requires_grad; }

  /// Gradient accumulated at a node (empty span if none flowed there).
  std::span<const T> grad(Var<T> v) const;

  /// Mutable gradient buffer of a parent, allocated on first use. Backward
  /// closures call this to accumulate. Returns an empty span for parents that
  /// do not require grad.
  std::span<T> grad_buffer(Var<T> v);

  /// Reverse sweep from a scalar node. Gradients of trainable parameters
  /// bound via param() are assigned to Parameter::grad.
  void backward(Var<T> loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    std::vector<T> grad;
    bool requires_grad = false;
    const char* op = "";
  };

  const Node& node(Var<T> v) const;
  Node& node(Var<T> v);

  std::vector<Node> nodes_;
  std::vector<std::pair<std::size_t, Parameter<T>*>> bound_params_;
};

template <class T>
const Tensor<T>& Var<T>::value() const {
  return tape->value(*this);
}

enum class Padding { same, valid };

const char* to_string(Padding p);
Padding parse_padding(const std::string& s);

/// Output spatial extent for a convolution along one axis.
std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride, Padding pad);

namespace ops {

template <class T> Var<T> matmul(Var<T> a, Var<T> b);
template <class T> Var<T> conv2d(Var<T> x, Var<T> k, std::size_t stride, Padding pad);
template <class T> Var<T> maxpool2d(Var<T> x, std::size_t window, std::size_t stride);

// Elementwise. Binary ops accept equal shapes or one operand with a single
// element (scalar broadcast).
template <class T> Var<T> add(Var<T> a, Var<T> b);
template <class T> Var<T> sub(Var<T> a, Var<T> b);
template <class T> Var<T> mul(Var<T> a, Var<T> b);
template <class T> Var<T> scale(Var<T> a, T c);
template <class T> Var<T> add_constant(Var<T> a, T c);
template <class T> Var<T> negate(Var<T> a);
/// 1 / (1 + exp(0.5 - x)), the membership-shifted logistic.
template <class T> Var<T> logistic(Var<T> a);
/// Plain max(0, x), used by baseline networks.
template <class T> Var<T> relu(Var<T> a);

enum class Reduce { sum, mean, max };
template <class T>
Var<T> reduce(Reduce op, Var<T> x, std::vector<std::size_t> axes, bool keepdims = false);

template <class T>
std::vector<std::size_t> all_axes(Var<T> x) {
  std::vector<std::size_t> axes(x.shape().size());
  for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
  return axes;
}

template <class T> Var<T> sum(Var<T> x) { return reduce(Reduce::sum, x, all_axes(x)); }
template <class T> Var<T> mean(Var<T> x) { return reduce(Reduce::mean, x, all_axes(x)); }

template <class T> Var<T> reshape(Var<T> x, Shape shape);
/// Expands size-1 axes to `shape` (same rank); backward sums over them.
template <class T> Var<T> broadcast_to(Var<T> x, Shape shape);

/// Mean over the batch of -log softmax(logits)[label]. logits is [n, classes].
template <class T> Var<T> softmax_cross_entropy(Var<T> logits, std::span<const int> labels);

}  // namespace ops

/// Builds a scalar graph from parameters bound on the provided tape.
template <class T>
using GraphBuilder = std::function<Var<T>(Tape<T>&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "<param>[index]" of the worst coordinate
  std::size_t coords_checked = 0;
};

/// Compares tape gradients against central differences for every coordinate
/// of every trainable parameter. Relative error is |a - n| / max(|a|, |n|,
/// 1e-8). `skip` may exclude coordinates (e.g. near kinks); it is called
/// with (param index, coordinate index).
template <class T>
GradCheckResult grad_check(const GraphBuilder<T>& f, std::span<Parameter<T>* const> params,
                           double epsilon,
                           const std::function<bool(std::size_t, std::size_t)>& skip = {});

template <class T>
constexpr double default_grad_epsilon() {
  return sizeof(T) == 4 ? 1e-2 : 1e-6;
}

}  // namespace ghn
