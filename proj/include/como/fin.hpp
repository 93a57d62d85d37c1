#pragma once

#include <string>
#include <utility>
#include <vector>

#include "como/optim.hpp"
#include "como/phi.hpp"
#include "como/tensor.hpp"

namespace como {

// Plain instance normalization parameters, per channel, stored (1,C,1,1).
template <class S>
struct InParamsT {
  ParamT<S> gamma;
  ParamT<S> beta;

  InParamsT() = default;
  InParamsT(const std::string& prefix, int channels)
      : gamma(prefix + ".gamma", TensorT<S>::full({1, channels, 1, 1}, S(1))),
        beta(prefix + ".beta", TensorT<S>::zeros({1, channels, 1, 1})) {}

  int channels() const { return gamma.value.dim(1); }

  void collect(ParamRefsT<S>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
};

// IN(x) = (x - mu)/sigma * gamma + beta.
template <class S>
TensorT<S> instance_norm(const TensorT<S>& x, InParamsT<S>& p) {
  if (x.rank() != 4 || x.dim(1) != p.channels())
    throw DimensionError("instance_norm channel mismatch: input " + shape_str(x.shape()) +
                         " vs " + std::to_string(p.channels()) + " channels");
  return add(mul(standardize(x), p.gamma.value), p.beta.value);
}

// Functional IN parameters: per-channel (a_gamma, b_gamma, a_beta, b_beta)
// plus the manifold tag fixed at construction.
//
//   linear:  f_gamma(phi) = a_gamma*phi    + b_gamma,  f_beta(phi) = a_beta*phi    + b_beta
//   cyclic:  f_gamma(phi) = a_gamma*cos(phi) + b_gamma, f_beta(phi) = a_beta*sin(phi) + b_beta
//
// Initialized to b_gamma = 1, b_beta = 0, a_* = 0, so a fresh FIN layer is an
// ordinary phi-invariant IN and the phi dependence is learned from zero.
template <class S>
struct FinParamsT {
  ParamT<S> a_gamma, b_gamma, a_beta, b_beta;
  Manifold manifold = Manifold::Linear;

  FinParamsT() = default;
  FinParamsT(const std::string& prefix, int channels, Manifold m)
      : a_gamma(prefix + ".a_gamma", TensorT<S>::zeros({1, channels, 1, 1})),
        b_gamma(prefix + ".b_gamma", TensorT<S>::full({1, channels, 1, 1}, S(1))),
        a_beta(prefix + ".a_beta", TensorT<S>::zeros({1, channels, 1, 1})),
        b_beta(prefix + ".b_beta", TensorT<S>::zeros({1, channels, 1, 1})),
        manifold(m) {}

  int channels() const { return a_gamma.value.dim(1); }

  void collect(ParamRefsT<S>& out) {
    out.push_back(&a_gamma);
    out.push_back(&b_gamma);
    out.push_back(&a_beta);
    out.push_back(&b_beta);
  }
};

// Per-sample basis factors for a batch of phi values.
// gamma basis: phi (linear) or cos(phi) (cyclic); beta basis: phi or sin(phi).
template <class S>
std::pair<TensorT<S>, TensorT<S>> fin_basis(Manifold m, const std::vector<PhiValue>& phis) {
  int n = static_cast<int>(phis.size());
  std::vector<S> bg(static_cast<size_t>(n)), bb(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const PhiValue& p = phis[static_cast<size_t>(i)];
    if (p.manifold != m)
      throw ContractError("FIN manifold mismatch: layer is " + std::string(manifold_name(m)) +
                          ", phi is " + manifold_name(p.manifold));
    if (m == Manifold::Linear) {
      bg[static_cast<size_t>(i)] = static_cast<S>(p.value);
      bb[static_cast<size_t>(i)] = static_cast<S>(p.value);
    } else {
      bg[static_cast<size_t>(i)] = static_cast<S>(std::cos(p.value));
      bb[static_cast<size_t>(i)] = static_cast<S>(std::sin(p.value));
    }
  }
  return {TensorT<S>::from_data({n, 1, 1, 1}, std::move(bg)),
          TensorT<S>::from_data({n, 1, 1, 1}, std::move(bb))};
}

// Evaluates (gamma_phi, beta_phi) as (N,C,1,1) tensors, differentiable w.r.t.
// all four parameter tensors.
template <class S>
std::pair<TensorT<S>, TensorT<S>> fin_eval(FinParamsT<S>& p, const std::vector<PhiValue>& phis) {
  auto [bg, bb] = fin_basis<S>(p.manifold, phis);
  TensorT<S> gamma = add(mul(p.a_gamma.value, bg), p.b_gamma.value);
  TensorT<S> beta = add(mul(p.a_beta.value, bb), p.b_beta.value);
  return {gamma, beta};
}

template <class S>
std::pair<TensorT<S>, TensorT<S>> fin_eval(FinParamsT<S>& p, const PhiValue& phi) {
  return fin_eval(p, std::vector<PhiValue>{phi});
}

// FIN(x, phi) = (x - mu)/sigma * f_gamma(phi) + f_beta(phi).
template <class S>
TensorT<S> fin_forward(const TensorT<S>& x, FinParamsT<S>& p, const std::vector<PhiValue>& phis) {
  if (x.rank() != 4 || x.dim(1) != p.channels())
    throw DimensionError("fin_forward channel mismatch: input " + shape_str(x.shape()) + " vs " +
                         std::to_string(p.channels()) + " channels");
  if (static_cast<int>(phis.size()) != x.dim(0))
    throw DimensionError("fin_forward: phi count " + std::to_string(phis.size()) +
                         " != batch size " + std::to_string(x.dim(0)));
  auto [gamma, beta] = fin_eval(p, phis);
  return add(mul(standardize(x), gamma), beta);
}

template <class S>
TensorT<S> fin_forward(const TensorT<S>& x, FinParamsT<S>& p, const PhiValue& phi) {
  return fin_forward(x, p, std::vector<PhiValue>(static_cast<size_t>(x.dim(0)), phi));
}

using InParams = InParamsT<float>;
using FinParams = FinParamsT<float>;

}  // namespace como
