#include "ghn/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

#include "kernels.hpp"

namespace ghn {

namespace {

std::atomic<bool> g_check_finite{false};

template <class T>
void require_same_tape(Var<T> a, Var<T> b, const char* op) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw std::invalid_argument(std::string(op) + ": operands live on different tapes");
  }
}

}  // namespace

void set_check_finite(bool on) { g_check_finite = on; }
bool check_finite_enabled() { return g_check_finite; }

const char* to_string(Padding p) { return p == Padding::same ? "same" : "valid"; }

Padding parse_padding(const std::string& s) {
  if (s == "same") return Padding::same;
  if (s == "valid") return Padding::valid;
  throw std::invalid_argument("unknown padding '" + s + "'");
}

std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride, Padding pad) {
  if (stride == 0) throw ShapeError("stride must be >= 1");
  if (kernel == 0) throw ShapeError("kernel extent must be >= 1");
  if (pad == Padding::same) return (in + stride - 1) / stride;
  if (kernel > in) {
    throw ShapeError("kernel extent " + std::to_string(kernel) + " exceeds input extent " +
                     std::to_string(in) + " under valid padding");
  }
  return (in - kernel) / stride + 1;
}

// ---------------------------------------------------------------------------
// Tape

template <class T>
const typename Tape<T>::Node& Tape<T>::node(Var<T> v) const {
  if (v.tape != this || v.id >= nodes_.size()) throw std::invalid_argument("node is not on this tape");
  return nodes_[v.id];
}

template <class T>
typename Tape<T>::Node& Tape<T>::node(Var<T> v) {
  if (v.tape != this || v.id >= nodes_.size()) throw std::invalid_argument("node is not on this tape");
  return nodes_[v.id];
}

template <class T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  return leaf(std::move(value), false);
}

template <class T>
Var<T> Tape<T>::leaf(Tensor<T> value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.op = "leaf";
  nodes_.push_back(std::move(n));
  return Var<T>{this, nodes_.size() - 1};
}

template <class T>
Var<T> Tape<T>::param(Parameter<T>& p) {
  Var<T> v = leaf(p.value, p.trainable);
  nodes_.back().op = "param";
  bound_params_.emplace_back(v.id, &p);
  return v;
}

template <class T>
Var<T> Tape<T>::record(Tensor<T> value, std::vector<Var<T>> parents, BackwardFn fn, const char* op) {
  if (g_check_finite && !value.all_finite()) {
    throw NonFiniteError(std::string(op) + ": produced a non-finite value");
  }
  Node n;
  n.value = std::move(value);
  n.op = op;
  for (const auto& p : parents) {
    const Node& pn = node(p);
    n.parents.push_back(p.id);
    n.requires_grad = n.requires_grad || pn.requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var<T>{this, nodes_.size() - 1};
}

template <class T>
std::span<const T> Tape<T>::grad(Var<T> v) const {
  return node(v).grad;
}

template <class T>
std::span<T> Tape<T>::grad_buffer(Var<T> v) {
  Node& n = node(v);
  if (!n.requires_grad) return {};
  if (n.grad.empty()) n.grad.assign(n.value.size(), T(0));
  return n.grad;
}

template <class T>
void Tape<T>::backward(Var<T> loss) {
  Node& root = node(loss);
  if (root.value.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + shape_str(root.value.shape()));
  }
  for (auto& n : nodes_) n.grad.clear();
  if (root.requires_grad) root.grad.assign(1, T(1));
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, std::span<const T>(n.grad));
  }
  for (auto& [id, p] : bound_params_) {
    if (!p->trainable) continue;
    const Node& n = nodes_[id];
    if (n.grad.empty()) {
      p->grad = Tensor<T>(p->value.shape(), T(0));
    } else {
      p->grad = Tensor<T>(p->value.shape(), n.grad);
    }
  }
}

template class Tape<float>;
template class Tape<double>;

// ---------------------------------------------------------------------------
// Ops

namespace ops {

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  require_same_tape(a, b, "matmul");
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(av.shape()) + " x " +
                     shape_str(bv.shape()));
  }
  const std::size_t n = av.dim(0), k = av.dim(1), m = bv.dim(1);
  Tensor<T> out(Shape{n, m});
  kernels::gemm(av.vec().data(), bv.vec().data(), out.vec().data(), n, k, m, false, false, false);
  return a.tape->record(
      std::move(out), {a, b},
      [a, b, n, k, m](Tape<T>& t, std::span<const T> g) {
        auto ga = t.grad_buffer(a);
        auto gb = t.grad_buffer(b);
        if (!ga.empty()) {
          kernels::gemm(g.data(), t.value(b).vec().data(), ga.data(), n, m, k, false, true, true);
        }
        if (!gb.empty()) {
          kernels::gemm(t.value(a).vec().data(), g.data(), gb.data(), k, n, m, true, false, true);
        }
      },
      "matmul");
}

template <class T>
Var<T> conv2d(Var<T> x, Var<T> k, std::size_t stride, Padding pad) {
  require_same_tape(x, k, "conv2d");
  const auto& xv = x.value();
  const auto& kv = k.value();
  if (xv.rank() != 4 || kv.rank() != 4 || xv.dim(3) != kv.dim(2)) {
    throw ShapeError("conv2d: incompatible input " + shape_str(xv.shape()) + " and kernel " +
                     shape_str(kv.shape()));
  }
  kernels::ConvGeometry g{};
  g.n = xv.dim(0);
  g.h = xv.dim(1);
  g.w = xv.dim(2);
  g.c_in = xv.dim(3);
  g.kh = kv.dim(0);
  g.kw = kv.dim(1);
  g.c_out = kv.dim(3);
  g.stride = stride;
  g.oh = conv_out_extent(g.h, g.kh, stride, pad);
  g.ow = conv_out_extent(g.w, g.kw, stride, pad);
  if (pad == Padding::same) {
    const std::size_t need_y = (g.oh - 1) * stride + g.kh;
    const std::size_t need_x = (g.ow - 1) * stride + g.kw;
    g.pad_top = need_y > g.h ? (need_y - g.h) / 2 : 0;
    g.pad_left = need_x > g.w ? (need_x - g.w) / 2 : 0;
  }

  auto cols = std::make_shared<std::vector<T>>(g.rows() * g.patch());
  kernels::im2col(g, xv.vec().data(), cols->data());
  Tensor<T> out(Shape{g.n, g.oh, g.ow, g.c_out});
  kernels::gemm(cols->data(), kv.vec().data(), out.vec().data(), g.rows(), g.patch(), g.c_out,
                false, false, false);
  return x.tape->record(
      std::move(out), {x, k},
      [x, k, g, cols](Tape<T>& t, std::span<const T> grad) {
        auto gk = t.grad_buffer(k);
        if (!gk.empty()) {
          kernels::gemm(cols->data(), grad.data(), gk.data(), g.patch(), g.rows(), g.c_out, true,
                        false, true);
        }
        auto gx = t.grad_buffer(x);
        if (!gx.empty()) {
          std::vector<T> dcols(g.rows() * g.patch());
          kernels::gemm(grad.data(), t.value(k).vec().data(), dcols.data(), g.rows(), g.c_out,
                        g.patch(), false, true, false);
          kernels::col2im_add(g, dcols.data(), gx.data());
        }
      },
      "conv2d");
}

template <class T>
Var<T> maxpool2d(Var<T> x, std::size_t window, std::size_t stride) {
  const auto& xv = x.value();
  if (window == 0 || stride == 0) throw ShapeError("maxpool2d: window and stride must be >= 1");
  if (xv.rank() != 4) throw ShapeError("maxpool2d: expected [n,h,w,c], got " + shape_str(xv.shape()));
  const std::size_t n = xv.dim(0), h = xv.dim(1), w = xv.dim(2), c = xv.dim(3);
  if (window > h || window > w) {
    throw ShapeError("maxpool2d: window " + std::to_string(window) + " larger than input " +
                     shape_str(xv.shape()));
  }
  const std::size_t oh = (h - window) / stride + 1, ow = (w - window) / stride + 1;
  Tensor<T> out(Shape{n, oh, ow, c});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const auto& in = xv.vec();
  std::size_t o = 0;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        for (std::size_t ch = 0; ch < c; ++ch, ++o) {
          std::size_t best = ((b * h + oy * stride) * w + ox * stride) * c + ch;
          for (std::size_t dy = 0; dy < window; ++dy) {
            for (std::size_t dx = 0; dx < window; ++dx) {
              const std::size_t idx = ((b * h + oy * stride + dy) * w + ox * stride + dx) * c + ch;
              if (in[idx] > in[best]) best = idx;
            }
          }
          out[o] = in[best];
          (*argmax)[o] = best;
        }
      }
    }
  }
  return x.tape->record(
      std::move(out), {x},
      [x, argmax](Tape<T>& t, std::span<const T> g) {
        auto gx = t.grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[(*argmax)[i]] += g[i];
      },
      "maxpool2d");
}

namespace {

template <class T, class Fwd, class DA, class DB>
Var<T> binary(Var<T> a, Var<T> b, const char* op, Fwd fwd, DA da, DB db) {
  require_same_tape(a, b, op);
  const auto& av = a.value();
  const auto& bv = b.value();
  const bool a_scalar = av.size() == 1 && bv.size() != 1;
  const bool b_scalar = bv.size() == 1 && av.size() != 1;
  if (!a_scalar && !b_scalar && av.shape() != bv.shape()) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(av.shape()) + " and " +
                     shape_str(bv.shape()));
  }
  const Shape shape = a_scalar ? bv.shape() : av.shape();
  Tensor<T> out(shape);
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = fwd(av[a_scalar ? 0 : i], bv[b_scalar ? 0 : i]);
  }
  return a.tape->record(
      std::move(out), {a, b},
      [a, b, a_scalar, b_scalar, n, da, db](Tape<T>& t, std::span<const T> g) {
        const auto& av = t.value(a);
        const auto& bv = t.value(b);
        auto ga = t.grad_buffer(a);
        auto gb = t.grad_buffer(b);
        for (std::size_t i = 0; i < n; ++i) {
          const T x = av[a_scalar ? 0 : i];
          const T y = bv[b_scalar ? 0 : i];
          if (!ga.empty()) ga[a_scalar ? 0 : i] += g[i] * da(x, y);
          if (!gb.empty()) gb[b_scalar ? 0 : i] += g[i] * db(x, y);
        }
      },
      op);
}

template <class T, class Fwd, class Deriv>
Var<T> unary(Var<T> a, const char* op, Fwd fwd, Deriv deriv) {
  const auto& av = a.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
  return a.tape->record(
      std::move(out), {a},
      [a, deriv](Tape<T>& t, std::span<const T> g) {
        const auto& av = t.value(a);
        auto ga = t.grad_buffer(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(av[i]);
      },
      op);
}

}  // namespace

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  return binary(a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
                [](T, T) { return T(1); });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  return binary(a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
                [](T, T) { return T(-1); });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  return binary(a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; },
                [](T x, T) { return x; });
}

template <class T>
Var<T> scale(Var<T> a, T c) {
  return unary(a, "scale", [c](T x) { return c * x; }, [c](T) { return c; });
}

template <class T>
Var<T> add_constant(Var<T> a, T c) {
  return unary(a, "add_constant", [c](T x) { return x + c; }, [](T) { return T(1); });
}

template <class T>
Var<T> negate(Var<T> a) {
  return unary(a, "negate", [](T x) { return -x; }, [](T) { return T(-1); });
}

template <class T>
Var<T> logistic(Var<T> a) {
  auto f = [](T x) { return T(1) / (T(1) + std::exp(T(0.5) - x)); };
  return unary(a, "logistic", f, [f](T x) {
    const T y = f(x);
    return y * (T(1) - y);
  });
}

template <class T>
Var<T> relu(Var<T> a) {
  return unary(a, "relu", [](T x) { return x > T(0) ? x : T(0); },
               [](T x) { return x > T(0) ? T(1) : T(0); });
}

template <class T>
Var<T> reduce(Reduce op, Var<T> x, std::vector<std::size_t> axes, bool keepdims) {
  const auto& xv = x.value();
  const std::size_t rank = xv.rank();
  std::vector<bool> reduced(rank, false);
  for (auto ax : axes) {
    if (ax >= rank || reduced[ax]) {
      throw ShapeError("reduce: invalid axis " + std::to_string(ax) + " for shape " +
                       shape_str(xv.shape()));
    }
    reduced[ax] = true;
  }
  Shape kept_shape(rank), out_shape;
  std::size_t group = 1;
  for (std::size_t d = 0; d < rank; ++d) {
    kept_shape[d] = reduced[d] ? 1 : xv.dim(d);
    if (reduced[d]) group *= xv.dim(d);
    if (!reduced[d] || keepdims) out_shape.push_back(kept_shape[d]);
  }
  if (op == Reduce::max && group == 0) throw ShapeError("reduce: max over an empty axis");

  // Map every input coordinate to its output slot.
  std::vector<std::size_t> out_stride(rank, 0);
  {
    std::size_t s = 1;
    for (std::size_t d = rank; d-- > 0;) {
      out_stride[d] = reduced[d] ? 0 : s;
      s *= kept_shape[d];
    }
  }
  auto slots = std::make_shared<std::vector<std::size_t>>(xv.size());
  {
    std::vector<std::size_t> idx(rank, 0);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      std::size_t o = 0;
      for (std::size_t d = 0; d < rank; ++d) o += idx[d] * out_stride[d];
      (*slots)[i] = o;
      for (std::size_t d = rank; d-- > 0;) {
        if (++idx[d] < xv.dim(d)) break;
        idx[d] = 0;
      }
    }
  }

  Tensor<T> out(out_shape);
  auto argmax = std::make_shared<std::vector<std::size_t>>();
  if (op == Reduce::max) {
    argmax->assign(out.size(), std::numeric_limits<std::size_t>::max());
    for (std::size_t i = 0; i < xv.size(); ++i) {
      auto& best = (*argmax)[(*slots)[i]];
      if (best == std::numeric_limits<std::size_t>::max() || xv[i] > xv[best]) best = i;
    }
    for (std::size_t o = 0; o < out.size(); ++o) out[o] = xv[(*argmax)[o]];
  } else {
    for (std::size_t i = 0; i < xv.size(); ++i) out[(*slots)[i]] += xv[i];
    if (op == Reduce::mean && group > 0) {
      for (auto& v : out.vec()) v /= static_cast<T>(group);
    }
  }
  const T inv_group = group > 0 ? T(1) / static_cast<T>(group) : T(0);
  return x.tape->record(
      std::move(out), {x},
      [x, op, slots, argmax, inv_group](Tape<T>& t, std::span<const T> g) {
        auto gx = t.grad_buffer(x);
        if (op == Reduce::max) {
          for (std::size_t o = 0; o < g.size(); ++o) gx[(*argmax)[o]] += g[o];
          return;
        }
        const T f = op == Reduce::mean ? inv_group : T(1);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[(*slots)[i]] * f;
      },
      op == Reduce::sum ? "reduce_sum" : op == Reduce::mean ? "reduce_mean" : "reduce_max");
}

template <class T>
Var<T> reshape(Var<T> x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return x.tape->record(
      std::move(out), {x},
      [x](Tape<T>& t, std::span<const T> g) {
        auto gx = t.grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      },
      "reshape");
}

template <class T>
Var<T> broadcast_to(Var<T> x, Shape shape) {
  const auto& xv = x.value();
  if (xv.rank() != shape.size()) {
    throw ShapeError("broadcast_to: rank mismatch " + shape_str(xv.shape()) + " -> " +
                     shape_str(shape));
  }
  const std::size_t rank = shape.size();
  std::vector<std::size_t> in_stride(rank, 0);
  {
    std::size_t s = 1;
    for (std::size_t d = rank; d-- > 0;) {
      if (xv.dim(d) != shape[d] && xv.dim(d) != 1) {
        throw ShapeError("broadcast_to: cannot expand " + shape_str(xv.shape()) + " to " +
                         shape_str(shape));
      }
      in_stride[d] = xv.dim(d) == 1 ? 0 : s;
      s *= xv.dim(d);
    }
  }
  Tensor<T> out(shape);
  auto src = std::make_shared<std::vector<std::size_t>>(out.size());
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::size_t s = 0;
    for (std::size_t d = 0; d < rank; ++d) s += idx[d] * in_stride[d];
    (*src)[i] = s;
    out[i] = xv[s];
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < shape[d]) break;
      idx[d] = 0;
    }
  }
  return x.tape->record(
      std::move(out), {x},
      [x, src](Tape<T>& t, std::span<const T> g) {
        auto gx = t.grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[(*src)[i]] += g[i];
      },
      "broadcast_to");
}

template <class T>
Var<T> softmax_cross_entropy(Var<T> logits, std::span<const int> labels) {
  const auto& lv = logits.value();
  if (lv.rank() != 2 || lv.dim(0) != labels.size() || lv.dim(0) == 0) {
    throw ShapeError("softmax_cross_entropy: logits " + shape_str(lv.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = lv.dim(0), c = lv.dim(1);
  auto probs = std::make_shared<std::vector<T>>(n * c);
  auto labs = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(y) +
                              " outside [0, " + std::to_string(c) + ")");
    }
    const T* row = &lv[i * c];
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(double(row[j]) - mx);
    const double log_z = std::log(z) + mx;
    for (std::size_t j = 0; j < c; ++j) {
      (*probs)[i * c + j] = static_cast<T>(std::exp(double(row[j]) - log_z));
    }
    loss += log_z - double(row[y]);
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(loss / static_cast<double>(n)));
  return logits.tape->record(
      std::move(out), {logits},
      [logits, probs, labs, n, c](Tape<T>& t, std::span<const T> g) {
        auto gl = t.grad_buffer(logits);
        const T f = g[0] / static_cast<T>(n);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < c; ++j) {
            const T onehot = static_cast<int>(j) == (*labs)[i] ? T(1) : T(0);
            gl[i * c + j] += f * ((*probs)[i * c + j] - onehot);
          }
        }
      },
      "softmax_cross_entropy");
}

#define GHN_INSTANTIATE_OPS(T)                                                        \
  template Var<T> matmul(Var<T>, Var<T>);                                             \
  template Var<T> conv2d(Var<T>, Var<T>, std::size_t, Padding);                       \
  template Var<T> maxpool2d(Var<T>, std::size_t, std::size_t);                        \
  template Var<T> add(Var<T>, Var<T>);                                                \
  template Var<T> sub(Var<T>, Var<T>);                                                \
  template Var<T> mul(Var<T>, Var<T>);                                                \
  template Var<T> scale(Var<T>, T);                                                   \
  template Var<T> add_constant(Var<T>, T);                                            \
  template Var<T> negate(Var<T>);                                                     \
  template Var<T> logistic(Var<T>);                                                   \
  template Var<T> relu(Var<T>);                                                       \
  template Var<T> reduce(Reduce, Var<T>, std::vector<std::size_t>, bool);             \
  template Var<T> reshape(Var<T>, Shape);                                             \
  template Var<T> broadcast_to(Var<T>, Shape);                                        \
  template Var<T> softmax_cross_entropy(Var<T>, std::span<const int>);

GHN_INSTANTIATE_OPS(float)
GHN_INSTANTIATE_OPS(double)
#undef GHN_INSTANTIATE_OPS

}  // namespace ops

// ---------------------------------------------------------------------------
// Gradient checking

template <class T>
GradCheckResult grad_check(const GraphBuilder<T>& f, std::span<Parameter<T>* const> params,
                           double epsilon, const std::function<bool(std::size_t, std::size_t)>& skip) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("grad_check: epsilon must be positive");
  auto evaluate = [&]() {
    Tape<T> tape;
    Var<T> out = f(tape);
    if (out.value().size() != 1) {
      throw ShapeError("grad_check: builder must return a scalar, got " + shape_str(out.shape()));
    }
    return static_cast<double>(out.value()[0]);
  };
  {
    Tape<T> tape;
    Var<T> out = f(tape);
    if (out.value().size() != 1) {
      throw ShapeError("grad_check: builder must return a scalar, got " + shape_str(out.shape()));
    }
    tape.backward(out);
  }
  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter<T>& p = *params[pi];
    if (!p.trainable) continue;
    const Tensor<T> analytic = p.grad;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      if (skip && skip(pi, i)) continue;
      const T base = p.value[i];
      const T up = static_cast<T>(base + epsilon);
      const T down = static_cast<T>(base - epsilon);
      p.value[i] = up;
      const double f_up = evaluate();
      p.value[i] = down;
      const double f_down = evaluate();
      p.value[i] = base;
      const double numeric = (f_up - f_down) / (double(up) - double(down));
      const double a = analytic.size() ? double(analytic[i]) : 0.0;
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++result.coords_checked;
      if (rel > result.max_rel_error || result.worst.empty()) {
        result.max_rel_error = rel;
        result.worst = p.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

template GradCheckResult grad_check<float>(const GraphBuilder<float>&,
                                           std::span<Parameter<float>* const>, double,
                                           const std::function<bool(std::size_t, std::size_t)>&);
template GradCheckResult grad_check<double>(const GraphBuilder<double>&,
                                            std::span<Parameter<double>* const>, double,
                                            const std::function<bool(std::size_t, std::size_t)>&);

}  // namespace ghn
