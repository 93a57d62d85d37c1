#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "como/errors.hpp"
#include "como/threading.hpp"

namespace como {

using Shape = std::vector<int>;

inline long numel_of(const Shape& s) {
  long n = 1;
  for (int e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

// Thread-local switch for graph recording. Forward passes under NoGradGuard
// produce plain values with no parents, so evaluation loops do not pay for
// tape bookkeeping.
struct GradMode {
  static bool& flag() {
    thread_local bool on = true;
    return on;
  }
};

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(GradMode::flag()) { GradMode::flag() = false; }
  ~NoGradGuard() { GradMode::flag() = prev; }
};

template <class S>
struct NodeT {
  Shape shape;
  std::vector<S> data;
  std::vector<S> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::string op = "leaf";
  std::vector<std::shared_ptr<NodeT>> parents;
  std::function<void(NodeT&)> backward_fn;

  long numel() const { return static_cast<long>(data.size()); }

  std::vector<S>& grad_buf() {
    if (grad.empty()) grad.assign(data.size(), S(0));
    return grad;
  }

  // Drops the recorded subgraph but keeps the value.
  void detach_graph() {
    parents.clear();
    backward_fn = nullptr;
  }
};

// Dense row-major tensor; a value handle onto a shared autodiff node.
// Tensors are immutable after construction except for Parameter values,
// which the optimizer updates in place between forward passes.
template <class S>
class TensorT {
 public:
  using Node = NodeT<S>;

  TensorT() = default;
  explicit TensorT(std::shared_ptr<Node> n) : n_(std::move(n)) {}

  static TensorT from_data(Shape shape, std::vector<S> data, bool requires_grad = false) {
    if (numel_of(shape) != static_cast<long>(data.size()))
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    return TensorT(std::move(n));
  }

  static TensorT zeros(const Shape& shape, bool requires_grad = false) {
    return from_data(shape, std::vector<S>(numel_of(shape), S(0)), requires_grad);
  }

  static TensorT full(const Shape& shape, S v, bool requires_grad = false) {
    return from_data(shape, std::vector<S>(numel_of(shape), v), requires_grad);
  }

  static TensorT scalar(S v) { return from_data({1}, {v}); }

  static TensorT randn(const Shape& shape, std::mt19937& rng, S stddev = S(1)) {
    std::normal_distribution<double> d(0.0, static_cast<double>(stddev));
    std::vector<S> v(numel_of(shape));
    for (auto& x : v) x = static_cast<S>(d(rng));
    return from_data(shape, std::move(v));
  }

  static TensorT uniform(const Shape& shape, std::mt19937& rng, S lo = S(0), S hi = S(1)) {
    std::uniform_real_distribution<double> d(static_cast<double>(lo), static_cast<double>(hi));
    std::vector<S> v(numel_of(shape));
    for (auto& x : v) x = static_cast<S>(d(rng));
    return from_data(shape, std::move(v));
  }

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  int dim(int i) const { return n_->shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(n_->shape.size()); }
  long numel() const { return n_->numel(); }

  const std::vector<S>& data() const { return n_->data; }
  std::vector<S>& mutable_data() { return n_->data; }

  S item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return n_->data[0];
  }

  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool b) { n_->requires_grad = b; }

  bool has_grad() const { return !n_->grad.empty(); }
  const std::vector<S>& grad() const {
    if (n_->grad.empty()) throw ContractError("grad accessed before backward");
    return n_->grad;
  }
  void zero_grad() {
    if (!n_->grad.empty()) std::fill(n_->grad.begin(), n_->grad.end(), S(0));
  }
  void ensure_grad() { n_->grad_buf(); }

  void check_finite(const std::string& what) const {
    for (S v : n_->data)
      if (!std::isfinite(static_cast<double>(v)))
        throw NumericError("non-finite value in " + what);
  }

  std::shared_ptr<Node> node() const { return n_; }

 private:
  std::shared_ptr<Node> n_;
};

namespace detail {

template <class S>
std::shared_ptr<NodeT<S>> make_node(Shape shape, const char* op,
                                    std::vector<std::shared_ptr<NodeT<S>>> parents) {
  auto n = std::make_shared<NodeT<S>>();
  n->data.assign(static_cast<size_t>(numel_of(shape)), S(0));
  n->shape = std::move(shape);
  n->op = op;
  bool rec = GradMode::flag();
  bool req = false;
  if (rec)
    for (auto& p : parents)
      if (p->requires_grad) req = true;
  n->requires_grad = req;
  if (req) n->parents = std::move(parents);
  return n;
}

inline void check_same_rank(const Shape& a, const Shape& b, const char* op) {
  if (a.size() != b.size())
    throw DimensionError(std::string(op) + ": rank mismatch " + shape_str(a) + " vs " +
                         shape_str(b));
}

// Broadcasting is allowed only across singleton extents.
inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  check_same_rank(a, b, op);
  Shape out(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i])
      out[i] = a[i];
    else if (a[i] == 1)
      out[i] = b[i];
    else if (b[i] == 1)
      out[i] = a[i];
    else
      throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a) + " vs " +
                           shape_str(b));
  }
  return out;
}

inline std::vector<long> row_major_strides(const Shape& s) {
  std::vector<long> st(s.size());
  long acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[static_cast<size_t>(i)] = s[static_cast<size_t>(i)] == 1 ? 0 : acc;
    acc *= s[static_cast<size_t>(i)];
  }
  return st;
}

// Iterates an output shape applying f(out_index, a_index, b_index).
template <class F>
void for_broadcast(const Shape& out, const Shape& a, const Shape& b, F&& f) {
  auto sa = row_major_strides(a);
  auto sb = row_major_strides(b);
  long n = numel_of(out);
  size_t r = out.size();
  std::vector<int> idx(r, 0);
  long ia = 0, ib = 0;
  for (long o = 0; o < n; ++o) {
    f(o, ia, ib);
    for (int d = static_cast<int>(r) - 1; d >= 0; --d) {
      size_t ud = static_cast<size_t>(d);
      ++idx[ud];
      ia += sa[ud];
      ib += sb[ud];
      if (idx[ud] < out[ud]) break;
      ia -= sa[ud] * out[ud];
      ib -= sb[ud] * out[ud];
      idx[ud] = 0;
    }
  }
}

// Reduces a gradient over the dims where `to` has extent 1, accumulating.
template <class S>
void reduce_into(const std::vector<S>& g, const Shape& g_shape, std::vector<S>& acc,
                 const Shape& to) {
  if (g_shape == to) {
    for (size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
    return;
  }
  auto st = row_major_strides(to);
  size_t r = g_shape.size();
  std::vector<int> idx(r, 0);
  long it = 0;
  long n = numel_of(g_shape);
  for (long o = 0; o < n; ++o) {
    acc[static_cast<size_t>(it)] += g[static_cast<size_t>(o)];
    for (int d = static_cast<int>(r) - 1; d >= 0; --d) {
      size_t ud = static_cast<size_t>(d);
      ++idx[ud];
      it += st[ud];
      if (idx[ud] < g_shape[ud]) break;
      it -= st[ud] * g_shape[ud];
      idx[ud] = 0;
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise / broadcast arithmetic
// ---------------------------------------------------------------------------

template <class S, class FwdFn, class BwdA, class BwdB>
TensorT<S> binary_broadcast_op(const TensorT<S>& a, const TensorT<S>& b, const char* name,
                               FwdFn fwd, BwdA dfa, BwdB dfb) {
  Shape out_shape = detail::broadcast_shape(a.shape(), b.shape(), name);
  auto n = detail::make_node<S>(out_shape, name, {a.node(), b.node()});
  const auto& da = a.data();
  const auto& db = b.data();
  auto& dout = n->data;
  if (a.shape() == b.shape()) {
    for (size_t i = 0; i < dout.size(); ++i) dout[i] = fwd(da[i], db[i]);
  } else {
    detail::for_broadcast(out_shape, a.shape(), b.shape(), [&](long o, long ia, long ib) {
      dout[static_cast<size_t>(o)] = fwd(da[static_cast<size_t>(ia)], db[static_cast<size_t>(ib)]);
    });
  }
  if (n->requires_grad) {
    auto an = a.node();
    auto bn = b.node();
    Shape ash = a.shape(), bsh = b.shape(), osh = out_shape;
    n->backward_fn = [an, bn, ash, bsh, osh, dfa, dfb](NodeT<S>& self) {
      std::vector<S> ga, gb;
      bool need_a = an->requires_grad;
      bool need_b = bn->requires_grad;
      if (need_a) ga.assign(self.grad.size(), S(0));
      if (need_b) gb.assign(self.grad.size(), S(0));
      if (ash == bsh) {
        for (size_t i = 0; i < self.grad.size(); ++i) {
          if (need_a) ga[i] = self.grad[i] * dfa(an->data[i], bn->data[i]);
          if (need_b) gb[i] = self.grad[i] * dfb(an->data[i], bn->data[i]);
        }
      } else {
        detail::for_broadcast(osh, ash, bsh, [&](long o, long ia, long ib) {
          S av = an->data[static_cast<size_t>(ia)];
          S bv = bn->data[static_cast<size_t>(ib)];
          S g = self.grad[static_cast<size_t>(o)];
          if (need_a) ga[static_cast<size_t>(o)] = g * dfa(av, bv);
          if (need_b) gb[static_cast<size_t>(o)] = g * dfb(av, bv);
        });
      }
      if (need_a) detail::reduce_into(ga, osh, an->grad_buf(), ash);
      if (need_b) detail::reduce_into(gb, osh, bn->grad_buf(), bsh);
    };
  }
  return TensorT<S>(n);
}

template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
  return binary_broadcast_op(
      a, b, "add", [](S x, S y) { return x + y; }, [](S, S) { return S(1); },
      [](S, S) { return S(1); });
}

template <class S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
  return binary_broadcast_op(
      a, b, "sub", [](S x, S y) { return x - y; }, [](S, S) { return S(1); },
      [](S, S) { return S(-1); });
}

template <class S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
  return binary_broadcast_op(
      a, b, "mul", [](S x, S y) { return x * y; }, [](S, S y) { return y; },
      [](S x, S) { return x; });
}

// out = k*x + c, the one scalar affine op (covers scalar-scale and shifts).
template <class S>
TensorT<S> affine(const TensorT<S>& x, S k, S c = S(0)) {
  auto n = detail::make_node<S>(x.shape(), "affine", {x.node()});
  const auto& dx = x.data();
  for (size_t i = 0; i < dx.size(); ++i) n->data[i] = k * dx[i] + c;
  if (n->requires_grad) {
    auto xn = x.node();
    n->backward_fn = [xn, k](NodeT<S>& self) {
      auto& g = xn->grad_buf();
      for (size_t i = 0; i < g.size(); ++i) g[i] += k * self.grad[i];
    };
  }
  return TensorT<S>(n);
}

template <class S>
TensorT<S> scale(const TensorT<S>& x, S k) {
  return affine(x, k, S(0));
}

template <class S, class FwdFn, class BwdFn>
TensorT<S> unary_op(const TensorT<S>& x, const char* name, FwdFn fwd, BwdFn bwd) {
  auto n = detail::make_node<S>(x.shape(), name, {x.node()});
  const auto& dx = x.data();
  for (size_t i = 0; i < dx.size(); ++i) n->data[i] = fwd(dx[i]);
  if (n->requires_grad) {
    auto xn = x.node();
    n->backward_fn = [xn, bwd](NodeT<S>& self) {
      auto& g = xn->grad_buf();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bwd(xn->data[i], self.data[i]);
    };
  }
  return TensorT<S>(n);
}

template <class S>
TensorT<S> abs_t(const TensorT<S>& x) {
  return unary_op(
      x, "abs", [](S v) { return std::abs(v); },
      [](S v, S) { return v > S(0) ? S(1) : (v < S(0) ? S(-1) : S(0)); });
}

template <class S>
TensorT<S> square(const TensorT<S>& x) {
  return unary_op(
      x, "square", [](S v) { return v * v; }, [](S v, S) { return S(2) * v; });
}

template <class S>
TensorT<S> relu(const TensorT<S>& x) {
  return unary_op(
      x, "relu", [](S v) { return v > S(0) ? v : S(0); },
      [](S v, S) { return v > S(0) ? S(1) : S(0); });
}

template <class S>
TensorT<S> leaky_relu(const TensorT<S>& x, S slope = S(0.2)) {
  return unary_op(
      x, "leaky_relu", [slope](S v) { return v > S(0) ? v : slope * v; },
      [slope](S v, S) { return v > S(0) ? S(1) : slope; });
}

template <class S>
TensorT<S> tanh_t(const TensorT<S>& x) {
  return unary_op(
      x, "tanh", [](S v) { return std::tanh(v); }, [](S, S y) { return S(1) - y * y; });
}

template <class S>
TensorT<S> exp_t(const TensorT<S>& x) {
  return unary_op(
      x, "exp", [](S v) { return std::exp(v); }, [](S, S y) { return y; });
}

template <class S>
TensorT<S> log_t(const TensorT<S>& x) {
  return unary_op(
      x, "log", [](S v) { return std::log(v); }, [](S v, S) { return S(1) / v; });
}

template <class S>
TensorT<S> operator+(const TensorT<S>& a, const TensorT<S>& b) {
  return add(a, b);
}
template <class S>
TensorT<S> operator-(const TensorT<S>& a, const TensorT<S>& b) {
  return sub(a, b);
}
template <class S>
TensorT<S> operator*(const TensorT<S>& a, const TensorT<S>& b) {
  return mul(a, b);
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> sum_all(const TensorT<S>& x) {
  auto n = detail::make_node<S>({1}, "sum", {x.node()});
  S acc = 0;
  for (S v : x.data()) acc += v;
  n->data[0] = acc;
  if (n->requires_grad) {
    auto xn = x.node();
    n->backward_fn = [xn](NodeT<S>& self) {
      auto& g = xn->grad_buf();
      S gv = self.grad[0];
      for (auto& e : g) e += gv;
    };
  }
  return TensorT<S>(n);
}

template <class S>
TensorT<S> mean_all(const TensorT<S>& x) {
  auto n = detail::make_node<S>({1}, "mean", {x.node()});
  S acc = 0;
  for (S v : x.data()) acc += v;
  S inv = S(1) / static_cast<S>(x.numel());
  n->data[0] = acc * inv;
  if (n->requires_grad) {
    auto xn = x.node();
    n->backward_fn = [xn, inv](NodeT<S>& self) {
      auto& g = xn->grad_buf();
      S gv = self.grad[0] * inv;
      for (auto& e : g) e += gv;
    };
  }
  return TensorT<S>(n);
}

// Mean over H,W -> (N,C,1,1).
template <class S>
TensorT<S> spatial_mean(const TensorT<S>& x) {
  if (x.rank() != 4) throw DimensionError("spatial_mean expects NCHW, got " + shape_str(x.shape()));
  int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  long hw = static_cast<long>(H) * W;
  auto n = detail::make_node<S>({N, C, 1, 1}, "spatial_mean", {x.node()});
  const auto& dx = x.data();
  S inv = S(1) / static_cast<S>(hw);
  for (long nc = 0; nc < static_cast<long>(N) * C; ++nc) {
    S acc = 0;
    const S* p = dx.data() + nc * hw;
    for (long i = 0; i < hw; ++i) acc += p[i];
    n->data[static_cast<size_t>(nc)] = acc * inv;
  }
  if (n->requires_grad) {
    auto xn = x.node();
    n->backward_fn = [xn, hw, inv](NodeT<S>& self) {
      auto& g = xn->grad_buf();
      for (size_t nc = 0; nc < self.data.size(); ++nc) {
        S gv = self.grad[nc] * inv;
        S* p = g.data() + static_cast<long>(nc) * hw;
        for (long i = 0; i < hw; ++i) p[i] += gv;
      }
    };
  }
  return TensorT<S>(n);
}

// ---------------------------------------------------------------------------
// Instance statistics / standardization
// ---------------------------------------------------------------------------

inline constexpr double kInstanceStatsEps = 1e-5;

namespace detail {
template <class S>
void compute_instance_stats(const std::vector<S>& x, int N, int C, long hw, std::vector<S>& mean,
                            std::vector<S>& std_out) {
  long nc = static_cast<long>(N) * C;
  mean.resize(static_cast<size_t>(nc));
  std_out.resize(static_cast<size_t>(nc));
  S inv = S(1) / static_cast<S>(hw);
  for (long i = 0; i < nc; ++i) {
    const S* p = x.data() + i * hw;
    S m = 0;
    for (long j = 0; j < hw; ++j) m += p[j];
    m *= inv;
    S v = 0;
    for (long j = 0; j < hw; ++j) {
      S d = p[j] - m;
      v += d * d;
    }
    v *= inv;
    mean[static_cast<size_t>(i)] = m;
    std_out[static_cast<size_t>(i)] = std::sqrt(v + static_cast<S>(kInstanceStatsEps));
  }
}
}  // namespace detail

// Per-(instance, channel) spatial mean and population std; std reported as
// sqrt(var + eps) so constant inputs are well-defined.
template <class S>
std::pair<TensorT<S>, TensorT<S>> instance_stats(const TensorT<S>& x) {
  if (x.rank() != 4)
    throw DimensionError("instance_stats expects NCHW, got " + shape_str(x.shape()));
  int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (static_cast<long>(H) * W < 1) throw DimensionError("instance_stats: empty spatial extent");
  long hw = static_cast<long>(H) * W;
  std::vector<S> m, s;
  detail::compute_instance_stats(x.data(), N, C, hw, m, s);

  auto mn = detail::make_node<S>({N, C, 1, 1}, "instance_mean", {x.node()});
  mn->data = m;
  auto sn = detail::make_node<S>({N, C, 1, 1}, "instance_std", {x.node()});
  sn->data = s;
  if (mn->requires_grad) {
    auto xn = x.node();
    mn->backward_fn = [xn, hw](NodeT<S>& self) {
      auto& g = xn->grad_buf();
      S inv = S(1) / static_cast<S>(hw);
      for (size_t nc = 0; nc < self.data.size(); ++nc) {
        S gv = self.grad[nc] * inv;
        S* p = g.data() + static_cast<long>(nc) * hw;
        for (long i = 0; i < hw; ++i) p[i] += gv;
      }
    };
  }
  if (sn->requires_grad) {
    auto xn = x.node();
    std::vector<S> mean_copy = m;
    sn->backward_fn = [xn, hw, mean_copy](NodeT<S>& self) {
      auto& g = xn->grad_buf();
      S inv = S(1) / static_cast<S>(hw);
      for (size_t nc = 0; nc < self.data.size(); ++nc) {
        S gv = self.grad[nc];
        S mu = mean_copy[nc];
        S sd = self.data[nc];
        const S* xp = xn->data.data() + static_cast<long>(nc) * hw;
        S* p = g.data() + static_cast<long>(nc) * hw;
        S c = gv * inv / sd;
        for (long i = 0; i < hw; ++i) p[i] += c * (xp[i] - mu);
      }
    };
  }
  return {TensorT<S>(mn), TensorT<S>(sn)};
}

// y = (x - mu) / sigma with the fused instance-norm backward.
template <class S>
TensorT<S> standardize(const TensorT<S>& x) {
  if (x.rank() != 4) throw DimensionError("standardize expects NCHW, got " + shape_str(x.shape()));
  int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  long hw = static_cast<long>(H) * W;
  std::vector<S> m, s;
  detail::compute_instance_stats(x.data(), N, C, hw, m, s);
  auto n = detail::make_node<S>(x.shape(), "standardize", {x.node()});
  const auto& dx = x.data();
  for (long nc = 0; nc < static_cast<long>(N) * C; ++nc) {
    S mu = m[static_cast<size_t>(nc)];
    S inv_sd = S(1) / s[static_cast<size_t>(nc)];
    const S* px = dx.data() + nc * hw;
    S* py = n->data.data() + nc * hw;
    for (long i = 0; i < hw; ++i) py[i] = (px[i] - mu) * inv_sd;
  }
  if (n->requires_grad) {
    auto xn = x.node();
    std::vector<S> sd = s;
    n->backward_fn = [xn, hw, sd](NodeT<S>& self) {
      // dx = (g - mean(g) - y*mean(g*y)) / sigma, means over H*W.
      auto& gx = xn->grad_buf();
      S inv = S(1) / static_cast<S>(hw);
      long ncs = static_cast<long>(self.data.size()) / hw;
      for (long nc = 0; nc < ncs; ++nc) {
        const S* g = self.grad.data() + nc * hw;
        const S* y = self.data.data() + nc * hw;
        S gm = 0, gym = 0;
        for (long i = 0; i < hw; ++i) {
          gm += g[i];
          gym += g[i] * y[i];
        }
        gm *= inv;
        gym *= inv;
        S inv_sd = S(1) / sd[static_cast<size_t>(nc)];
        S* px = gx.data() + nc * hw;
        for (long i = 0; i < hw; ++i) px[i] += (g[i] - gm - y[i] * gym) * inv_sd;
      }
    };
  }
  return TensorT<S>(n);
}

// ---------------------------------------------------------------------------
// Spatial ops
// ---------------------------------------------------------------------------

template <class S>
TensorT<S> upsample_nearest2(const TensorT<S>& x) {
  if (x.rank() != 4) throw DimensionError("upsample expects NCHW, got " + shape_str(x.shape()));
  int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  auto n = detail::make_node<S>({N, C, 2 * H, 2 * W}, "upsample2", {x.node()});
  const auto& dx = x.data();
  long planes = static_cast<long>(N) * C;
  for (long p = 0; p < planes; ++p) {
    const S* in = dx.data() + p * H * W;
    S* out = n->data.data() + p * 4 * H * W;
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        S v = in[i * W + j];
        long o = static_cast<long>(2 * i) * (2 * W) + 2 * j;
        out[o] = v;
        out[o + 1] = v;
        out[o + 2 * W] = v;
        out[o + 2 * W + 1] = v;
      }
  }
  if (n->requires_grad) {
    auto xn = x.node();
    n->backward_fn = [xn, N, C, H, W](NodeT<S>& self) {
      auto& g = xn->grad_buf();
      long planes = static_cast<long>(N) * C;
      for (long p = 0; p < planes; ++p) {
        S* gi = g.data() + p * H * W;
        const S* go = self.grad.data() + p * 4 * H * W;
        for (int i = 0; i < H; ++i)
          for (int j = 0; j < W; ++j) {
            long o = static_cast<long>(2 * i) * (2 * W) + 2 * j;
            gi[i * W + j] += go[o] + go[o + 1] + go[o + 2 * W] + go[o + 2 * W + 1];
          }
      }
    };
  }
  return TensorT<S>(n);
}

template <class S>
TensorT<S> avgpool2(const TensorT<S>& x) {
  if (x.rank() != 4) throw DimensionError("avgpool2 expects NCHW, got " + shape_str(x.shape()));
  int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % 2 || W % 2)
    throw DimensionError("avgpool2 requires even spatial extents, got " + shape_str(x.shape()));
  int OH = H / 2, OW = W / 2;
  auto n = detail::make_node<S>({N, C, OH, OW}, "avgpool2", {x.node()});
  const auto& dx = x.data();
  long planes = static_cast<long>(N) * C;
  for (long p = 0; p < planes; ++p) {
    const S* in = dx.data() + p * H * W;
    S* out = n->data.data() + p * OH * OW;
    for (int i = 0; i < OH; ++i)
      for (int j = 0; j < OW; ++j) {
        long b = static_cast<long>(2 * i) * W + 2 * j;
        out[i * OW + j] = (in[b] + in[b + 1] + in[b + W] + in[b + W + 1]) * S(0.25);
      }
  }
  if (n->requires_grad) {
    auto xn = x.node();
    n->backward_fn = [xn, N, C, H, W, OH, OW](NodeT<S>& self) {
      auto& g = xn->grad_buf();
      long planes = static_cast<long>(N) * C;
      for (long p = 0; p < planes; ++p) {
        S* gi = g.data() + p * H * W;
        const S* go = self.grad.data() + p * OH * OW;
        for (int i = 0; i < OH; ++i)
          for (int j = 0; j < OW; ++j) {
            S v = go[i * OW + j] * S(0.25);
            long b = static_cast<long>(2 * i) * W + 2 * j;
            gi[b] += v;
            gi[b + 1] += v;
            gi[b + W] += v;
            gi[b + W + 1] += v;
          }
      }
    };
  }
  return TensorT<S>(n);
}

template <class S>
TensorT<S> concat_channels(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.rank() != 4 || b.rank() != 4)
    throw DimensionError("concat_channels expects NCHW inputs");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw DimensionError("concat_channels: mismatched shapes " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  int N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
  auto n = detail::make_node<S>({N, Ca + Cb, H, W}, "concat", {a.node(), b.node()});
  long hw = static_cast<long>(H) * W;
  for (int i = 0; i < N; ++i) {
    std::copy(a.data().begin() + static_cast<long>(i) * Ca * hw,
              a.data().begin() + static_cast<long>(i + 1) * Ca * hw,
              n->data.begin() + static_cast<long>(i) * (Ca + Cb) * hw);
    std::copy(b.data().begin() + static_cast<long>(i) * Cb * hw,
              b.data().begin() + static_cast<long>(i + 1) * Cb * hw,
              n->data.begin() + static_cast<long>(i) * (Ca + Cb) * hw + Ca * hw);
  }
  if (n->requires_grad) {
    auto an = a.node();
    auto bn = b.node();
    n->backward_fn = [an, bn, N, Ca, Cb, hw](NodeT<S>& self) {
      if (an->requires_grad) {
        auto& ga = an->grad_buf();
        for (int i = 0; i < N; ++i) {
          const S* src = self.grad.data() + static_cast<long>(i) * (Ca + Cb) * hw;
          S* dst = ga.data() + static_cast<long>(i) * Ca * hw;
          for (long j = 0; j < static_cast<long>(Ca) * hw; ++j) dst[j] += src[j];
        }
      }
      if (bn->requires_grad) {
        auto& gb = bn->grad_buf();
        for (int i = 0; i < N; ++i) {
          const S* src = self.grad.data() + static_cast<long>(i) * (Ca + Cb) * hw + Ca * hw;
          S* dst = gb.data() + static_cast<long>(i) * Cb * hw;
          for (long j = 0; j < static_cast<long>(Cb) * hw; ++j) dst[j] += src[j];
        }
      }
    };
  }
  return TensorT<S>(n);
}

// ---------------------------------------------------------------------------
// Convolution (im2col + accumulate-in-k-order gemm)
// ---------------------------------------------------------------------------

namespace detail {

// C (MxN) += A (MxK) * B (KxN); accumulation over k ascending, matching the
// (c, kh, kw) order of a direct convolution loop.
template <class S>
void gemm_acc(const S* A, const S* B, S* C, int M, int K, int N) {
  for (int m = 0; m < M; ++m) {
    const S* a = A + static_cast<long>(m) * K;
    S* c = C + static_cast<long>(m) * N;
    for (int k = 0; k < K; ++k) {
      S av = a[k];
      const S* b = B + static_cast<long>(k) * N;
      for (int n = 0; n < N; ++n) c[n] += av * b[n];
    }
  }
}

template <class S>
void im2col(const S* in, int C, int H, int W, int k, int stride, int pad, int OH, int OW, S* col) {
  // col is (C*k*k) x (OH*OW), rows ordered (c, ki, kj).
  long P = static_cast<long>(OH) * OW;
  for (int c = 0; c < C; ++c) {
    const S* plane = in + static_cast<long>(c) * H * W;
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj) {
        S* row = col + (static_cast<long>(c) * k * k + ki * k + kj) * P;
        for (int oi = 0; oi < OH; ++oi) {
          int ii = oi * stride - pad + ki;
          for (int oj = 0; oj < OW; ++oj) {
            int jj = oj * stride - pad + kj;
            row[static_cast<long>(oi) * OW + oj] =
                (ii >= 0 && ii < H && jj >= 0 && jj < W) ? plane[static_cast<long>(ii) * W + jj]
                                                         : S(0);
          }
        }
      }
  }
}

template <class S>
void col2im_acc(const S* col, int C, int H, int W, int k, int stride, int pad, int OH, int OW,
                S* in_grad) {
  long P = static_cast<long>(OH) * OW;
  for (int c = 0; c < C; ++c) {
    S* plane = in_grad + static_cast<long>(c) * H * W;
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj) {
        const S* row = col + (static_cast<long>(c) * k * k + ki * k + kj) * P;
        for (int oi = 0; oi < OH; ++oi) {
          int ii = oi * stride - pad + ki;
          if (ii < 0 || ii >= H) continue;
          for (int oj = 0; oj < OW; ++oj) {
            int jj = oj * stride - pad + kj;
            if (jj < 0 || jj >= W) continue;
            plane[static_cast<long>(ii) * W + jj] += row[static_cast<long>(oi) * OW + oj];
          }
        }
      }
  }
}

}  // namespace detail

// input: (N, C, H, W); kernel: (O, C, k, k); zero padding.
template <class S>
TensorT<S> conv2d(const TensorT<S>& input, const TensorT<S>& kernel, int stride, int padding) {
  if (input.rank() != 4 || kernel.rank() != 4)
    throw DimensionError("conv2d expects NCHW input and OIkk kernel, got " +
                         shape_str(input.shape()) + " and " + shape_str(kernel.shape()));
  int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  int O = kernel.dim(0), KC = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kh != kw) throw DimensionError("conv2d requires square kernels, got " +
                                     shape_str(kernel.shape()));
  if (KC != C)
    throw DimensionError("conv2d channel mismatch: input " + shape_str(input.shape()) +
                         " vs kernel " + shape_str(kernel.shape()));
  if (stride < 1 || padding < 0) throw ContractError("conv2d: stride >= 1 and padding >= 0");
  int k = kh;
  int OH = (H + 2 * padding - k) / stride + 1;
  int OW = (W + 2 * padding - k) / stride + 1;
  if (OH <= 0 || OW <= 0)
    throw DimensionError("conv2d output empty for input " + shape_str(input.shape()) +
                         " kernel " + shape_str(kernel.shape()));

  auto n = detail::make_node<S>({N, O, OH, OW}, "conv2d", {input.node(), kernel.node()});
  long K = static_cast<long>(C) * k * k;
  long P = static_cast<long>(OH) * OW;
  const S* in = input.data().data();
  const S* wt = kernel.data().data();
  S* out = n->data.data();

  parallel_chunks(N, [&](long b, long e, int) {
    std::vector<S> col(static_cast<size_t>(K * P));
    for (long i = b; i < e; ++i) {
      detail::im2col(in + i * C * H * W, C, H, W, k, stride, padding, OH, OW, col.data());
      S* o = out + i * O * P;
      std::fill(o, o + O * P, S(0));
      detail::gemm_acc(wt, col.data(), o, O, static_cast<int>(K), static_cast<int>(P));
    }
  });

  if (n->requires_grad) {
    auto in_node = input.node();
    auto k_node = kernel.node();
    n->backward_fn = [in_node, k_node, N, C, H, W, O, k, stride, padding, OH, OW,
                      K, P](NodeT<S>& self) {
      const S* go = self.grad.data();
      bool need_in = in_node->requires_grad;
      bool need_w = k_node->requires_grad;
      std::vector<std::vector<S>> dw_parts;
      int workers = worker_count();
      if (need_w) dw_parts.assign(static_cast<size_t>(workers), {});
      std::vector<S>* gin = nullptr;
      if (need_in) gin = &in_node->grad_buf();
      const S* wt = k_node->data.data();

      parallel_chunks(N, [&](long b, long e, int wkr) {
        std::vector<S> col(static_cast<size_t>(K * P));
        std::vector<S> colT;
        std::vector<S> dcol;
        std::vector<S>* dw_local = nullptr;
        if (need_w) {
          dw_parts[static_cast<size_t>(wkr)].assign(static_cast<size_t>(O) * K, S(0));
          dw_local = &dw_parts[static_cast<size_t>(wkr)];
          colT.resize(static_cast<size_t>(K * P));
        }
        if (need_in) dcol.resize(static_cast<size_t>(K * P));
        for (long i = b; i < e; ++i) {
          const S* g = go + i * O * P;
          if (need_w) {
            detail::im2col(in_node->data.data() + i * C * H * W, C, H, W, k, stride, padding, OH,
                           OW, col.data());
            for (long kk = 0; kk < K; ++kk)
              for (long p = 0; p < P; ++p) colT[p * K + kk] = col[kk * P + p];
            // dW[o][:] += g[o][p] * colT[p][:]
            for (int o = 0; o < O; ++o) {
              S* dst = dw_local->data() + static_cast<long>(o) * K;
              const S* grow = g + static_cast<long>(o) * P;
              for (long p = 0; p < P; ++p) {
                S gv = grow[p];
                const S* src = colT.data() + p * K;
                for (long kk = 0; kk < K; ++kk) dst[kk] += gv * src[kk];
              }
            }
          }
          if (need_in) {
            // dcol[kk][:] += W[o][kk] * g[o][:]
            std::fill(dcol.begin(), dcol.end(), S(0));
            for (int o = 0; o < O; ++o) {
              const S* wrow = wt + static_cast<long>(o) * K;
              const S* grow = g + static_cast<long>(o) * P;
              for (long kk = 0; kk < K; ++kk) {
                S wv = wrow[kk];
                S* dst = dcol.data() + kk * P;
                for (long p = 0; p < P; ++p) dst[p] += wv * grow[p];
              }
            }
            detail::col2im_acc(dcol.data(), C, H, W, k, stride, padding, OH, OW,
                               gin->data() + i * C * H * W);
          }
        }
      });

      if (need_w) {
        auto& gw = k_node->grad_buf();
        for (auto& part : dw_parts) {
          if (part.empty()) continue;
          for (size_t j = 0; j < gw.size(); ++j) gw[j] += part[j];
        }
      }
    };
  }
  return TensorT<S>(n);
}

// ---------------------------------------------------------------------------
// Graph utilities
// ---------------------------------------------------------------------------

// Value copy that blocks gradient flow.
template <class S>
TensorT<S> stop_grad(const TensorT<S>& x) {
  auto n = std::make_shared<NodeT<S>>();
  n->shape = x.shape();
  n->data = x.data();
  n->op = "stop_grad";
  return TensorT<S>(n);
}

template <class S>
TensorT<S> l1_distance(const TensorT<S>& a, const TensorT<S>& b) {
  return mean_all(abs_t(sub(a, b)));
}

template <class S>
TensorT<S> l2_distance(const TensorT<S>& a, const TensorT<S>& b) {
  return mean_all(square(sub(a, b)));
}

template <class S>
TensorT<S> mean_square(const TensorT<S>& a) {
  return mean_all(square(a));
}

// Reverse-mode pass from a scalar loss. Gradients accumulate into every
// reachable node with requires_grad; the caller zeroes parameter grads
// between steps. Each node's backward runs exactly once.
template <class S>
void backward(const TensorT<S>& loss) {
  if (loss.numel() != 1)
    throw ContractError("backward requires a scalar loss, got " + shape_str(loss.shape()));
  auto root = loss.node();
  if (!root->requires_grad)
    throw ContractError("backward on a tensor with no recorded computation");

  // Iterative post-order topological sort over the recorded graph.
  std::vector<NodeT<S>*> order;
  std::vector<std::pair<NodeT<S>*, size_t>> stack;
  std::unordered_set<NodeT<S>*> seen;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    bool descended = false;
    while (idx < node->parents.size()) {
      NodeT<S>* p = node->parents[idx].get();
      ++idx;
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
        descended = true;
        break;
      }
    }
    if (!descended && stack.back().second >= stack.back().first->parents.size()) {
      order.push_back(stack.back().first);
      stack.pop_back();
    }
  }

  root->grad_buf()[0] += S(1);
  // `order` is post-order: inputs before consumers; traverse in reverse so
  // every consumer has accumulated into a node before its backward runs.
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT<S>* node = *it;
    if (!node->backward_fn) continue;
    node->grad_buf();
    node->backward_fn(*node);
    for (auto& p : node->parents) {
      if (!p->requires_grad) continue;
      for (S v : p->grad)
        if (!std::isfinite(static_cast<double>(v)))
          throw NumericError("non-finite gradient produced by op '" + node->op + "'");
    }
  }
}

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

}  // namespace como
