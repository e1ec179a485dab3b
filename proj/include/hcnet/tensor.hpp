#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "hcnet/errors.hpp"
#include "hcnet/padding.hpp"
#include "hcnet/random.hpp"

namespace hcnet {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

namespace detail {
inline thread_local bool autograd_enabled = true;
}

// Disables tape recording in scope (evaluation / inference paths).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::autograd_enabled) { detail::autograd_enabled = false; }
  ~NoGradGuard() { detail::autograd_enabled = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Dense n-d tensor with tape-based reverse-mode autodiff. A Tensor is a
// shared handle to an immutable value buffer plus an optional tape node
// (parent links + backward closure). Values are written once at
// construction; the only later mutations are gradient accumulation and
// optimizer updates on leaves.
template <typename T>
class Tensor {
 public:
  struct Impl {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;  // lazily allocated on first accumulation
    bool requires_grad = false;
    // tape node: inputs this value was computed from, and the rule that
    // propagates this->grad into them
    std::vector<std::shared_ptr<Impl>> parents;
    std::function<void(Impl&)> backward_fn;

    void ensure_grad() {
      if (grad.empty()) grad.assign(values.size(), T(0));
    }
  };

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return from_vector(std::move(shape), {}, requires_grad, true);
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    std::vector<T> v(shape_numel(shape), value);
    return from_vector(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return from_vector({1}, {value}, requires_grad);
  }

  static Tensor from_vector(Shape shape, std::vector<T> values,
                            bool requires_grad = false, bool zero_fill = false) {
    auto impl = std::make_shared<Impl>();
    impl->shape = std::move(shape);
    if (zero_fill) values.assign(shape_numel(impl->shape), T(0));
    if (values.size() != shape_numel(impl->shape))
      throw DimensionError("tensor init: " + std::to_string(values.size()) +
                           " values for shape " + shape_str(impl->shape));
    impl->values = std::move(values);
    impl->requires_grad = requires_grad;
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
  }

  static Tensor randn(Shape shape, Rng& rng, T stddev = T(1), bool requires_grad = false) {
    std::vector<T> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(rng.normal()) * stddev;
    return from_vector(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor rand_uniform(Shape shape, Rng& rng, T lo, T hi, bool requires_grad = false) {
    std::vector<T> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(rng.uniform(static_cast<double>(lo), static_cast<double>(hi)));
    return from_vector(std::move(shape), std::move(v), requires_grad);
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t dim(std::size_t i) const { return impl_->shape[i]; }
  std::size_t ndim() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->values.size(); }
  bool requires_grad() const { return impl_->requires_grad; }

  const std::vector<T>& values() const { return impl_->values; }

  // Leaf-only mutable access, for the optimizer between steps. Mutating a
  // tensor that sits on a tape would invalidate recorded backward rules.
  std::vector<T>& leaf_values() {
    if (!impl_->parents.empty() || impl_->backward_fn)
      throw UsageError("in-place mutation of a non-leaf tensor is forbidden");
    return impl_->values;
  }

  const std::vector<T>& grad() const {
    impl_->ensure_grad();
    return impl_->grad;
  }
  bool has_grad() const { return !impl_->grad.empty(); }
  void zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
  }

  T item() const {
    if (numel() != 1) throw UsageError("item(): tensor has " + std::to_string(numel()) + " elements");
    return impl_->values[0];
  }

  // Detached copy of row `b` of the leading axis (no tape link).
  Tensor slice_outer(std::size_t b) const {
    if (ndim() < 2) throw DimensionError("slice_outer: need ndim >= 2, got " + shape_str(shape()));
    if (b >= dim(0)) throw DimensionError("slice_outer: index out of range");
    Shape sub(impl_->shape.begin() + 1, impl_->shape.end());
    std::size_t stride = shape_numel(sub);
    std::vector<T> v(impl_->values.begin() + b * stride, impl_->values.begin() + (b + 1) * stride);
    return from_vector(std::move(sub), std::move(v));
  }

  // Reverse-mode pass from a scalar loss. Walks the tape once in reverse
  // topological order, accumulates into every requires_grad tensor reached,
  // then releases the visited tape nodes.
  void backward() {
    if (numel() != 1) throw UsageError("backward(): loss must be scalar, got " + shape_str(shape()));
    std::vector<std::shared_ptr<Impl>> topo;
    topological_order(impl_, topo);
    impl_->ensure_grad();
    impl_->grad[0] = T(1);
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
      Impl& node = **it;
      if (node.backward_fn && !node.grad.empty()) node.backward_fn(node);
    }
    // release the tape
    for (auto& node : topo) {
      node->backward_fn = nullptr;
      node->parents.clear();
    }
  }

  std::shared_ptr<Impl> impl() const { return impl_; }

 private:
  static void topological_order(const std::shared_ptr<Impl>& root,
                                std::vector<std::shared_ptr<Impl>>& topo) {
    struct Frame {
      std::shared_ptr<Impl> node;
      std::size_t next = 0;
    };
    std::unordered_set<Impl*> visited;
    std::vector<Frame> stack;
    stack.push_back({root});
    visited.insert(root.get());
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next < f.node->parents.size()) {
        auto p = f.node->parents[f.next++];
        if (visited.insert(p.get()).second) stack.push_back({std::move(p)});
      } else {
        topo.push_back(f.node);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<Impl> impl_;
};

using Tensor64 = Tensor<double>;
using Tensor32 = Tensor<float>;

// ---------------------------------------------------------------------------
// op plumbing

namespace detail {

template <typename T>
bool grad_flows(const Tensor<T>& t) {
  return t.requires_grad();
}

template <typename T, typename... Rest>
bool grad_flows(const Tensor<T>& t, const Rest&... rest) {
  return t.requires_grad() || grad_flows(rest...);
}

// Builds the op result; records a tape node when autograd is on and gradient
// can flow from any input.
template <typename T>
Tensor<T> make_op_result(Shape shape, std::vector<T> values,
                         std::vector<Tensor<T>> inputs,
                         std::function<void(typename Tensor<T>::Impl&)> backward) {
  bool track = autograd_enabled;
  if (track) {
    track = false;
    for (const auto& in : inputs) track = track || in.requires_grad();
  }
  Tensor<T> out = Tensor<T>::from_vector(std::move(shape), std::move(values), track);
  if (track) {
    auto impl = out.impl();
    impl->parents.reserve(inputs.size());
    for (auto& in : inputs) impl->parents.push_back(in.impl());
    impl->backward_fn = std::move(backward);
  }
  return out;
}

template <typename T>
void accumulate(typename Tensor<T>::Impl& dst, std::size_t idx, T v) {
  dst.grad[idx] += v;
}

template <typename T>
void check_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise and reduction ops

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("add", a, b);
  std::vector<T> v(a.numel());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] + bv[i];
  auto pa = a.impl();
  auto pb = b.impl();
  return detail::make_op_result<T>(
      a.shape(), std::move(v), {a, b}, [pa, pb](typename Tensor<T>::Impl& out) {
        if (pa->requires_grad) {
          pa->ensure_grad();
          for (std::size_t i = 0; i < out.grad.size(); ++i) pa->grad[i] += out.grad[i];
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (std::size_t i = 0; i < out.grad.size(); ++i) pb->grad[i] += out.grad[i];
        }
      });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("sub", a, b);
  std::vector<T> v(a.numel());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] - bv[i];
  auto pa = a.impl();
  auto pb = b.impl();
  return detail::make_op_result<T>(
      a.shape(), std::move(v), {a, b}, [pa, pb](typename Tensor<T>::Impl& out) {
        if (pa->requires_grad) {
          pa->ensure_grad();
          for (std::size_t i = 0; i < out.grad.size(); ++i) pa->grad[i] += out.grad[i];
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (std::size_t i = 0; i < out.grad.size(); ++i) pb->grad[i] -= out.grad[i];
        }
      });
}

template <typename T>
Tensor<T> scalar_mul(const Tensor<T>& a, T c) {
  std::vector<T> v(a.numel());
  const auto& av = a.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] * c;
  auto pa = a.impl();
  return detail::make_op_result<T>(
      a.shape(), std::move(v), {a}, [pa, c](typename Tensor<T>::Impl& out) {
        if (!pa->requires_grad) return;
        pa->ensure_grad();
        for (std::size_t i = 0; i < out.grad.size(); ++i) pa->grad[i] += c * out.grad[i];
      });
}

template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("hadamard", a, b);
  std::vector<T> v(a.numel());
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = av[i] * bv[i];
  auto pa = a.impl();
  auto pb = b.impl();
  return detail::make_op_result<T>(
      a.shape(), std::move(v), {a, b}, [pa, pb](typename Tensor<T>::Impl& out) {
        if (pa->requires_grad) {
          pa->ensure_grad();
          for (std::size_t i = 0; i < out.grad.size(); ++i)
            pa->grad[i] += out.grad[i] * pb->values[i];
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (std::size_t i = 0; i < out.grad.size(); ++i)
            pb->grad[i] += out.grad[i] * pa->values[i];
        }
      });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  std::vector<T> v(x.numel());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = T(1) / (T(1) + std::exp(-xv[i]));
  auto px = x.impl();
  return detail::make_op_result<T>(
      x.shape(), std::move(v), {x}, [px](typename Tensor<T>::Impl& out) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (std::size_t i = 0; i < out.grad.size(); ++i) {
          T s = out.values[i];
          px->grad[i] += out.grad[i] * s * (T(1) - s);
        }
      });
}

// Tanh-approximation GELU, cubic coefficient 0.044715.
template <typename T>
inline T gelu_scalar(T z) {
  const T c = T(0.7978845608028654);  // sqrt(2/pi)
  T inner = c * (z + T(0.044715) * z * z * z);
  return T(0.5) * z * (T(1) + std::tanh(inner));
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  const T c = T(0.7978845608028654);
  std::vector<T> v(x.numel());
  std::vector<T> tanhs(x.numel());  // saved for the backward rule
  const auto& xv = x.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    T z = xv[i];
    T t = std::tanh(c * (z + T(0.044715) * z * z * z));
    tanhs[i] = t;
    v[i] = T(0.5) * z * (T(1) + t);
  }
  auto px = x.impl();
  return detail::make_op_result<T>(
      x.shape(), std::move(v), {x},
      [px, c, tanhs = std::move(tanhs)](typename Tensor<T>::Impl& out) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (std::size_t i = 0; i < out.grad.size(); ++i) {
          T z = px->values[i];
          T t = tanhs[i];
          T dinner = c * (T(1) + T(3) * T(0.044715) * z * z);
          T d = T(0.5) * (T(1) + t) + T(0.5) * z * (T(1) - t * t) * dinner;
          px->grad[i] += out.grad[i] * d;
        }
      });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = T(0);
  for (T v : x.values()) acc += v;
  auto px = x.impl();
  return detail::make_op_result<T>(
      {1}, {acc}, {x}, [px](typename Tensor<T>::Impl& out) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        T g = out.grad[0];
        for (std::size_t i = 0; i < px->grad.size(); ++i) px->grad[i] += g;
      });
}

// Arithmetic mean of scalar tensors; used to average per-sample losses.
template <typename T>
Tensor<T> mean_scalars(const std::vector<Tensor<T>>& xs) {
  if (xs.empty()) throw UsageError("mean_scalars: empty input");
  T acc = T(0);
  for (const auto& x : xs) acc += x.item();
  T inv = T(1) / static_cast<T>(xs.size());
  std::vector<typename Tensor<T>::Impl*> raw;
  raw.reserve(xs.size());
  for (const auto& x : xs) raw.push_back(x.impl().get());
  return detail::make_op_result<T>(
      {1}, {acc * inv}, xs, [raw, inv](typename Tensor<T>::Impl& out) {
        for (auto* p : raw) {
          if (!p->requires_grad) continue;
          p->ensure_grad();
          p->grad[0] += out.grad[0] * inv;
        }
      });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  auto px = x.impl();
  return detail::make_op_result<T>(
      std::move(shape), std::vector<T>(x.values()), {x},
      [px](typename Tensor<T>::Impl& out) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (std::size_t i = 0; i < out.grad.size(); ++i) px->grad[i] += out.grad[i];
      });
}

// [C,H,W] -> [C] spatial mean per channel.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  if (x.ndim() != 3) throw DimensionError("global_avg_pool: want [C,H,W], got " + shape_str(x.shape()));
  std::size_t C = x.dim(0), HW = x.dim(1) * x.dim(2);
  std::vector<T> v(C, T(0));
  const auto& xv = x.values();
  for (std::size_t c = 0; c < C; ++c) {
    T acc = T(0);
    for (std::size_t p = 0; p < HW; ++p) acc += xv[c * HW + p];
    v[c] = acc / static_cast<T>(HW);
  }
  auto px = x.impl();
  return detail::make_op_result<T>(
      {C}, std::move(v), {x}, [px, C, HW](typename Tensor<T>::Impl& out) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        T inv = T(1) / static_cast<T>(HW);
        for (std::size_t c = 0; c < C; ++c) {
          T g = out.grad[c] * inv;
          for (std::size_t p = 0; p < HW; ++p) px->grad[c * HW + p] += g;
        }
      });
}

// ---------------------------------------------------------------------------
// linear algebra

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> v(m * n, T(0));
  const T* av = a.values().data();
  const T* bv = b.values().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      T aip = av[i * k + p];
      const T* brow = bv + p * n;
      T* vrow = v.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) vrow[j] += aip * brow[j];
    }
  auto pa = a.impl();
  auto pb = b.impl();
  return detail::make_op_result<T>(
      {m, n}, std::move(v), {a, b}, [pa, pb, m, k, n](typename Tensor<T>::Impl& out) {
        const T* g = out.grad.data();
        if (pa->requires_grad) {
          pa->ensure_grad();
          // dA = G * B^T
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              T acc = T(0);
              const T* grow = g + i * n;
              const T* brow = pb->values.data() + p * n;
              for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
              pa->grad[i * k + p] += acc;
            }
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          // dB = A^T * G
          for (std::size_t p = 0; p < k; ++p)
            for (std::size_t i = 0; i < m; ++i) {
              T aip = pa->values[i * k + p];
              const T* grow = g + i * n;
              T* drow = pb->grad.data() + p * n;
              for (std::size_t j = 0; j < n; ++j) drow[j] += aip * grow[j];
            }
        }
      });
}

// Row-vector linear map: x[Cin] * w[Cin,Cout] + b[Cout].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.ndim() != 1 || w.ndim() != 2 || x.dim(0) != w.dim(0))
    throw DimensionError("linear: incompatible shapes " + shape_str(x.shape()) + " x " +
                         shape_str(w.shape()));
  if (b.ndim() != 1 || b.dim(0) != w.dim(1))
    throw DimensionError("linear: bias shape " + shape_str(b.shape()));
  std::size_t cin = x.dim(0), cout = w.dim(1);
  std::vector<T> v(b.values());
  const T* xv = x.values().data();
  const T* wv = w.values().data();
  for (std::size_t i = 0; i < cin; ++i) {
    T xi = xv[i];
    const T* wrow = wv + i * cout;
    for (std::size_t o = 0; o < cout; ++o) v[o] += xi * wrow[o];
  }
  auto px = x.impl();
  auto pw = w.impl();
  auto pbias = b.impl();
  return detail::make_op_result<T>(
      {cout}, std::move(v), {x, w, b},
      [px, pw, pbias, cin, cout](typename Tensor<T>::Impl& out) {
        const T* g = out.grad.data();
        if (px->requires_grad) {
          px->ensure_grad();
          for (std::size_t i = 0; i < cin; ++i) {
            T acc = T(0);
            const T* wrow = pw->values.data() + i * cout;
            for (std::size_t o = 0; o < cout; ++o) acc += g[o] * wrow[o];
            px->grad[i] += acc;
          }
        }
        if (pw->requires_grad) {
          pw->ensure_grad();
          for (std::size_t i = 0; i < cin; ++i) {
            T xi = px->values[i];
            T* drow = pw->grad.data() + i * cout;
            for (std::size_t o = 0; o < cout; ++o) drow[o] += xi * g[o];
          }
        }
        if (pbias->requires_grad) {
          pbias->ensure_grad();
          for (std::size_t o = 0; o < cout; ++o) pbias->grad[o] += g[o];
        }
      });
}

// Position-shared channel mix (1x1 conv): x[Cin,H,W] * w[Cin,Cout] + b[Cout].
template <typename T>
Tensor<T> channel_linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.ndim() != 3 || w.ndim() != 2 || x.dim(0) != w.dim(0))
    throw DimensionError("channel_linear: incompatible shapes " + shape_str(x.shape()) +
                         " x " + shape_str(w.shape()));
  if (b.ndim() != 1 || b.dim(0) != w.dim(1))
    throw DimensionError("channel_linear: bias shape " + shape_str(b.shape()));
  std::size_t cin = x.dim(0), H = x.dim(1), W = x.dim(2), HW = H * W, cout = w.dim(1);
  std::vector<T> v(cout * HW);
  const T* xv = x.values().data();
  const T* wv = w.values().data();
  const T* bv = b.values().data();
  for (std::size_t o = 0; o < cout; ++o) std::fill_n(v.data() + o * HW, HW, bv[o]);
  if (HW == 1) {
    for (std::size_t i = 0; i < cin; ++i) {
      T xi = xv[i];
      const T* wrow = wv + i * cout;
      for (std::size_t o = 0; o < cout; ++o) v[o] += xi * wrow[o];
    }
  } else {
    for (std::size_t i = 0; i < cin; ++i) {
      const T* xrow = xv + i * HW;
      const T* wrow = wv + i * cout;
      for (std::size_t o = 0; o < cout; ++o) {
        T wio = wrow[o];
        T* vrow = v.data() + o * HW;
        for (std::size_t p = 0; p < HW; ++p) vrow[p] += wio * xrow[p];
      }
    }
  }
  auto px = x.impl();
  auto pw = w.impl();
  auto pbias = b.impl();
  return detail::make_op_result<T>(
      {cout, H, W}, std::move(v), {x, w, b},
      [px, pw, pbias, cin, cout, HW](typename Tensor<T>::Impl& out) {
        const T* g = out.grad.data();
        if (px->requires_grad) {
          px->ensure_grad();
          for (std::size_t i = 0; i < cin; ++i) {
            T* drow = px->grad.data() + i * HW;
            const T* wrow = pw->values.data() + i * cout;
            if (HW == 1) {
              T acc = T(0);
              for (std::size_t o = 0; o < cout; ++o) acc += wrow[o] * g[o];
              drow[0] += acc;
            } else {
              for (std::size_t o = 0; o < cout; ++o) {
                T wio = wrow[o];
                const T* grow = g + o * HW;
                for (std::size_t p = 0; p < HW; ++p) drow[p] += wio * grow[p];
              }
            }
          }
        }
        if (pw->requires_grad) {
          pw->ensure_grad();
          for (std::size_t i = 0; i < cin; ++i) {
            const T* xrow = px->values.data() + i * HW;
            T* dwrow = pw->grad.data() + i * cout;
            if (HW == 1) {
              T xi = xrow[0];
              for (std::size_t o = 0; o < cout; ++o) dwrow[o] += xi * g[o];
            } else {
              for (std::size_t o = 0; o < cout; ++o) {
                const T* grow = g + o * HW;
                T acc = T(0);
                for (std::size_t p = 0; p < HW; ++p) acc += xrow[p] * grow[p];
                dwrow[o] += acc;
              }
            }
          }
        }
        if (pbias->requires_grad) {
          pbias->ensure_grad();
          for (std::size_t o = 0; o < cout; ++o) {
            const T* grow = g + o * HW;
            T acc = T(0);
            for (std::size_t p = 0; p < HW; ++p) acc += grow[p];
            pbias->grad[o] += acc;
          }
        }
      });
}

// Per-channel scale: out[c,h,w] = x[c,h,w] * s[c].
template <typename T>
Tensor<T> scale_channels(const Tensor<T>& x, const Tensor<T>& s) {
  if (x.ndim() != 3 || s.ndim() != 1 || s.dim(0) != x.dim(0))
    throw DimensionError("scale_channels: shapes " + shape_str(x.shape()) + " vs " +
                         shape_str(s.shape()));
  std::size_t C = x.dim(0), HW = x.dim(1) * x.dim(2);
  std::vector<T> v(x.numel());
  const auto& xv = x.values();
  const auto& sv = s.values();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t p = 0; p < HW; ++p) v[c * HW + p] = xv[c * HW + p] * sv[c];
  auto px = x.impl();
  auto ps = s.impl();
  return detail::make_op_result<T>(
      x.shape(), std::move(v), {x, s}, [px, ps, C, HW](typename Tensor<T>::Impl& out) {
        const T* g = out.grad.data();
        if (px->requires_grad) {
          px->ensure_grad();
          for (std::size_t c = 0; c < C; ++c) {
            T sc = ps->values[c];
            for (std::size_t p = 0; p < HW; ++p) px->grad[c * HW + p] += g[c * HW + p] * sc;
          }
        }
        if (ps->requires_grad) {
          ps->ensure_grad();
          for (std::size_t c = 0; c < C; ++c) {
            T acc = T(0);
            for (std::size_t p = 0; p < HW; ++p) acc += g[c * HW + p] * px->values[c * HW + p];
            ps->grad[c] += acc;
          }
        }
      });
}

// ---------------------------------------------------------------------------
// convolution family

// Dense valid cross-correlation with stride; used by the patch-embedding stem
// and the stage-boundary patch merges (kernel extent == stride there).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 std::size_t stride) {
  if (x.ndim() != 3 || w.ndim() != 4 || w.dim(1) != x.dim(0))
    throw DimensionError("conv2d: shapes " + shape_str(x.shape()) + " vs kernel " +
                         shape_str(w.shape()));
  std::size_t cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  std::size_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (b.ndim() != 1 || b.dim(0) != cout)
    throw DimensionError("conv2d: bias shape " + shape_str(b.shape()));
  if (kh > H || kw > W) throw DimensionError("conv2d: kernel larger than input");
  if (stride == 0) throw ConfigError("conv2d: stride must be positive");
  std::size_t oh = (H - kh) / stride + 1, ow = (W - kw) / stride + 1;
  std::vector<T> v(cout * oh * ow);
  const T* xv = x.values().data();
  const T* wv = w.values().data();
  for (std::size_t o = 0; o < cout; ++o) {
    T* vplane = v.data() + o * oh * ow;
    std::fill_n(vplane, oh * ow, b.values()[o]);
    for (std::size_t i = 0; i < cin; ++i) {
      const T* xplane = xv + i * H * W;
      const T* ker = wv + (o * cin + i) * kh * kw;
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xo = 0; xo < ow; ++xo) {
          T acc = T(0);
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const T* xr = xplane + (y * stride + ky) * W + xo * stride;
            const T* kr = ker + ky * kw;
            for (std::size_t kx = 0; kx < kw; ++kx) acc += xr[kx] * kr[kx];
          }
          vplane[y * ow + xo] += acc;
        }
    }
  }
  auto px = x.impl();
  auto pw = w.impl();
  auto pbias = b.impl();
  return detail::make_op_result<T>(
      {cout, oh, ow}, std::move(v), {x, w, b},
      [px, pw, pbias, cin, cout, H, W, kh, kw, oh, ow, stride](typename Tensor<T>::Impl& out) {
        const T* g = out.grad.data();
        bool need_x = px->requires_grad, need_w = pw->requires_grad;
        if (need_x) px->ensure_grad();
        if (need_w) pw->ensure_grad();
        if (need_x || need_w) {
          for (std::size_t o = 0; o < cout; ++o)
            for (std::size_t i = 0; i < cin; ++i) {
              const T* xplane = px->values.data() + i * H * W;
              const T* ker = pw->values.data() + (o * cin + i) * kh * kw;
              T* dxplane = need_x ? px->grad.data() + i * H * W : nullptr;
              T* dker = need_w ? pw->grad.data() + (o * cin + i) * kh * kw : nullptr;
              for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t xo = 0; xo < ow; ++xo) {
                  T go = g[(o * oh + y) * ow + xo];
                  if (go == T(0)) continue;
                  for (std::size_t ky = 0; ky < kh; ++ky)
                    for (std::size_t kx = 0; kx < kw; ++kx) {
                      std::size_t src = (y * stride + ky) * W + xo * stride + kx;
                      if (need_x) dxplane[src] += go * ker[ky * kw + kx];
                      if (need_w) dker[ky * kw + kx] += go * xplane[src];
                    }
                }
            }
        }
        if (pbias->requires_grad) {
          pbias->ensure_grad();
          for (std::size_t o = 0; o < cout; ++o) {
            T acc = T(0);
            for (std::size_t p = 0; p < oh * ow; ++p) acc += g[o * oh * ow + p];
            pbias->grad[o] += acc;
          }
        }
      });
}

// Per-channel cross-correlation preserving spatial extents; odd kernels only.
template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& kernel, PaddingMode padding) {
  if (x.ndim() != 3 || kernel.ndim() != 3)
    throw DimensionError("depthwise_conv2d: want x[C,H,W], kernel[C,kh,kw]");
  if (kernel.dim(0) != x.dim(0))
    throw DimensionError("depthwise_conv2d: channel mismatch " + shape_str(x.shape()) +
                         " vs " + shape_str(kernel.shape()));
  std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  std::size_t kh = kernel.dim(1), kw = kernel.dim(2);
  if (kh % 2 == 0 || kw % 2 == 0)
    throw ConfigError("depthwise_conv2d: kernel extents must be odd, got " +
                      shape_str(kernel.shape()));
  long rh = static_cast<long>(kh) / 2, rw = static_cast<long>(kw) / 2;
  const long Hl = static_cast<long>(H), Wl = static_cast<long>(W);
  std::vector<T> v(x.numel(), T(0));
  const T* xv = x.values().data();
  const T* kv = kernel.values().data();
  for (std::size_t c = 0; c < C; ++c) {
    const T* xplane = xv + c * H * W;
    const T* ker = kv + c * kh * kw;
    T* vplane = v.data() + c * H * W;
    for (long y = 0; y < Hl; ++y) {
      bool y_interior = y >= rh && y + rh < Hl;
      for (long xo = 0; xo < Wl; ++xo) {
        T acc = T(0);
        if (y_interior && xo >= rw && xo + rw < Wl) {
          // interior: no boundary resolution needed
          for (long ky = -rh; ky <= rh; ++ky) {
            const T* xr = xplane + (y + ky) * Wl + xo - rw;
            const T* kr = ker + (ky + rh) * static_cast<long>(kw);
            for (long kx = 0; kx < static_cast<long>(kw); ++kx) acc += xr[kx] * kr[kx];
          }
        } else {
          for (long ky = -rh; ky <= rh; ++ky) {
            long sy = resolve_index(y + ky, Hl, padding);
            if (sy < 0) continue;
            for (long kx = -rw; kx <= rw; ++kx) {
              long sx = resolve_index(xo + kx, Wl, padding);
              if (sx < 0) continue;
              acc += xplane[sy * Wl + sx] * ker[(ky + rh) * static_cast<long>(kw) + (kx + rw)];
            }
          }
        }
        vplane[y * Wl + xo] = acc;
      }
    }
  }
  auto px = x.impl();
  auto pk = kernel.impl();
  return detail::make_op_result<T>(
      x.shape(), std::move(v), {x, kernel},
      [px, pk, C, H, W, kh, kw, rh, rw, padding](typename Tensor<T>::Impl& out) {
        const T* g = out.grad.data();
        bool need_x = px->requires_grad, need_k = pk->requires_grad;
        if (need_x) px->ensure_grad();
        if (need_k) pk->ensure_grad();
        if (!need_x && !need_k) return;
        const long Hl = static_cast<long>(H), Wl = static_cast<long>(W);
        for (std::size_t c = 0; c < C; ++c) {
          const T* xplane = px->values.data() + c * H * W;
          const T* ker = pk->values.data() + c * kh * kw;
          T* dxplane = need_x ? px->grad.data() + c * H * W : nullptr;
          T* dker = need_k ? pk->grad.data() + c * kh * kw : nullptr;
          for (long y = 0; y < Hl; ++y) {
            bool y_interior = y >= rh && y + rh < Hl;
            for (long xo = 0; xo < Wl; ++xo) {
              T go = g[c * H * W + y * Wl + xo];
              if (go == T(0)) continue;
              if (y_interior && xo >= rw && xo + rw < Wl) {
                for (long ky = -rh; ky <= rh; ++ky) {
                  long row = (y + ky) * Wl + xo - rw;
                  long tap = (ky + rh) * static_cast<long>(kw);
                  for (long kx = 0; kx < static_cast<long>(kw); ++kx) {
                    if (need_x) dxplane[row + kx] += go * ker[tap + kx];
                    if (need_k) dker[tap + kx] += go * xplane[row + kx];
                  }
                }
              } else {
                for (long ky = -rh; ky <= rh; ++ky) {
                  long sy = resolve_index(y + ky, Hl, padding);
                  if (sy < 0) continue;
                  for (long kx = -rw; kx <= rw; ++kx) {
                    long sx = resolve_index(xo + kx, Wl, padding);
                    if (sx < 0) continue;
                    long src = sy * Wl + sx;
                    long tap = (ky + rh) * static_cast<long>(kw) + (kx + rw);
                    if (need_x) dxplane[src] += go * ker[tap];
                    if (need_k) dker[tap] += go * xplane[src];
                  }
                }
              }
            }
          }
        }
      });
}

// Five-point diffusion stencil: per channel c,
//   h = w0*z(i+1,j) + w1*z(i-1,j) + w2*z(i,j+1) + w3*z(i,j-1) - (sum w)*z(i,j)
// with boundary neighbours resolved by `boundary`. Axis convention matches
// the PDE grid: rows are the x direction, columns the y direction.
template <typename T>
Tensor<T> stencil5(const Tensor<T>& z, const Tensor<T>& w, PaddingMode boundary) {
  if (z.ndim() != 3) throw DimensionError("stencil5: want z[C,H,W], got " + shape_str(z.shape()));
  if (w.ndim() != 2 || w.dim(0) != z.dim(0) || w.dim(1) != 4)
    throw DimensionError("stencil5: want w[C,4], got " + shape_str(w.shape()) + " for z " +
                         shape_str(z.shape()));
  std::size_t C = z.dim(0), H = z.dim(1), W = z.dim(2);
  const long dy[4] = {1, -1, 0, 0};
  const long dx[4] = {0, 0, 1, -1};
  std::vector<T> v(z.numel());
  const T* zv = z.values().data();
  const T* wv = w.values().data();
  for (std::size_t c = 0; c < C; ++c) {
    const T* zplane = zv + c * H * W;
    const T* wc = wv + c * 4;
    T wsum = wc[0] + wc[1] + wc[2] + wc[3];
    T* vplane = v.data() + c * H * W;
    for (long i = 0; i < static_cast<long>(H); ++i)
      for (long j = 0; j < static_cast<long>(W); ++j) {
        T acc = -wsum * zplane[i * static_cast<long>(W) + j];
        for (int t = 0; t < 4; ++t) {
          long si = resolve_index(i + dy[t], static_cast<long>(H), boundary);
          long sj = resolve_index(j + dx[t], static_cast<long>(W), boundary);
          if (si < 0 || sj < 0) continue;
          acc += wc[t] * zplane[si * static_cast<long>(W) + sj];
        }
        vplane[i * static_cast<long>(W) + j] = acc;
      }
  }
  auto pz = z.impl();
  auto pw = w.impl();
  return detail::make_op_result<T>(
      z.shape(), std::move(v), {z, w},
      [pz, pw, C, H, W, dy, dx, boundary](typename Tensor<T>::Impl& out) {
        const T* g = out.grad.data();
        bool need_z = pz->requires_grad, need_w = pw->requires_grad;
        if (need_z) pz->ensure_grad();
        if (need_w) pw->ensure_grad();
        if (!need_z && !need_w) return;
        for (std::size_t c = 0; c < C; ++c) {
          const T* zplane = pz->values.data() + c * H * W;
          const T* wc = pw->values.data() + c * 4;
          T wsum = wc[0] + wc[1] + wc[2] + wc[3];
          T* dzplane = need_z ? pz->grad.data() + c * H * W : nullptr;
          T* dwc = need_w ? pw->grad.data() + c * 4 : nullptr;
          for (long i = 0; i < static_cast<long>(H); ++i)
            for (long j = 0; j < static_cast<long>(W); ++j) {
              T go = g[c * H * W + i * static_cast<long>(W) + j];
              if (go == T(0)) continue;
              long center = i * static_cast<long>(W) + j;
              if (need_z) dzplane[center] -= go * wsum;
              for (int t = 0; t < 4; ++t) {
                long si = resolve_index(i + dy[t], static_cast<long>(H), boundary);
                long sj = resolve_index(j + dx[t], static_cast<long>(W), boundary);
                if (si < 0 || sj < 0) {
                  // tap dropped by zero padding; -w_t*z(center) remains
                  if (need_w) dwc[t] -= go * zplane[center];
                  continue;
                }
                long src = si * static_cast<long>(W) + sj;
                if (need_z) dzplane[src] += go * wc[t];
                if (need_w) dwc[t] += go * (zplane[src] - zplane[center]);
              }
            }
        }
      });
}

// ---------------------------------------------------------------------------
// normalization and loss

// Layer normalization over the channel axis at every spatial position, with
// per-channel affine parameters.
template <typename T>
Tensor<T> layer_norm_channels(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                              T eps = T(1e-5)) {
  if (x.ndim() != 3) throw DimensionError("layer_norm_channels: want [C,H,W]");
  std::size_t C = x.dim(0), HW = x.dim(1) * x.dim(2);
  if (gamma.ndim() != 1 || gamma.dim(0) != C || beta.ndim() != 1 || beta.dim(0) != C)
    throw DimensionError("layer_norm_channels: affine params must be [C]");
  std::vector<T> v(x.numel());
  std::vector<T> xhat(x.numel());
  std::vector<T> inv_std(HW);
  const T* xv = x.values().data();
  const T* gv = gamma.values().data();
  const T* bv = beta.values().data();
  T invC = T(1) / static_cast<T>(C);
  for (std::size_t p = 0; p < HW; ++p) {
    T mean = T(0);
    for (std::size_t c = 0; c < C; ++c) mean += xv[c * HW + p];
    mean *= invC;
    T var = T(0);
    for (std::size_t c = 0; c < C; ++c) {
      T d = xv[c * HW + p] - mean;
      var += d * d;
    }
    var *= invC;
    T is = T(1) / std::sqrt(var + eps);
    inv_std[p] = is;
    for (std::size_t c = 0; c < C; ++c) {
      T xh = (xv[c * HW + p] - mean) * is;
      xhat[c * HW + p] = xh;
      v[c * HW + p] = gv[c] * xh + bv[c];
    }
  }
  auto px = x.impl();
  auto pg = gamma.impl();
  auto pb = beta.impl();
  return detail::make_op_result<T>(
      x.shape(), std::move(v), {x, gamma, beta},
      [px, pg, pb, C, HW, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](typename Tensor<T>::Impl& out) {
        const T* g = out.grad.data();
        T invC = T(1) / static_cast<T>(C);
        if (pg->requires_grad) {
          pg->ensure_grad();
          for (std::size_t c = 0; c < C; ++c) {
            T acc = T(0);
            for (std::size_t p = 0; p < HW; ++p) acc += g[c * HW + p] * xhat[c * HW + p];
            pg->grad[c] += acc;
          }
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (std::size_t c = 0; c < C; ++c) {
            T acc = T(0);
            for (std::size_t p = 0; p < HW; ++p) acc += g[c * HW + p];
            pb->grad[c] += acc;
          }
        }
        if (px->requires_grad) {
          px->ensure_grad();
          for (std::size_t p = 0; p < HW; ++p) {
            T sum_d = T(0), sum_dx = T(0);
            for (std::size_t c = 0; c < C; ++c) {
              T d = g[c * HW + p] * pg->values[c];  // d xhat
              sum_d += d;
              sum_dx += d * xhat[c * HW + p];
            }
            for (std::size_t c = 0; c < C; ++c) {
              T d = g[c * HW + p] * pg->values[c];
              px->grad[c * HW + p] +=
                  inv_std[p] * (d - invC * sum_d - xhat[c * HW + p] * invC * sum_dx);
            }
          }
        }
      });
}

// Numerically stable cross entropy of one sample: logits [K], target class.
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::size_t label) {
  if (logits.ndim() != 1)
    throw DimensionError("softmax_cross_entropy: want logits [K], got " + shape_str(logits.shape()));
  std::size_t K = logits.dim(0);
  if (label >= K) throw UsageError("softmax_cross_entropy: label " + std::to_string(label) +
                                   " out of range for " + std::to_string(K) + " classes");
  const auto& lv = logits.values();
  T mx = *std::max_element(lv.begin(), lv.end());
  std::vector<T> probs(K);
  T denom = T(0);
  for (std::size_t i = 0; i < K; ++i) {
    probs[i] = std::exp(lv[i] - mx);
    denom += probs[i];
  }
  for (auto& p : probs) p /= denom;
  T loss = std::log(denom) - (lv[label] - mx);
  auto pl = logits.impl();
  return detail::make_op_result<T>(
      {1}, {loss}, {logits},
      [pl, label, probs = std::move(probs)](typename Tensor<T>::Impl& out) {
        if (!pl->requires_grad) return;
        pl->ensure_grad();
        T g = out.grad[0];
        for (std::size_t i = 0; i < probs.size(); ++i) {
          T d = probs[i] - (i == label ? T(1) : T(0));
          pl->grad[i] += g * d;
        }
      });
}

template <typename T>
std::size_t argmax(const Tensor<T>& t) {
  const auto& v = t.values();
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace hcnet
