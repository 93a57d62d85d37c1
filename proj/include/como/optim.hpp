#pragma once

#include <cmath>
#include <string>
#include <unordered_set>
#include <vector>

#include "como/errors.hpp"
#include "como/tensor.hpp"

namespace como {

// A named trainable tensor. Names are slash-free dotted paths
// (e.g. "gen.enc.conv1.weight") and must be unique within one bundle.
template <class S>
struct ParamT {
  std::string name;
  TensorT<S> value;

  ParamT() = default;
  ParamT(std::string n, TensorT<S> v) : name(std::move(n)), value(std::move(v)) {
    value.set_requires_grad(true);
  }
};

template <class S>
using ParamRefsT = std::vector<ParamT<S>*>;

template <class S>
void check_unique_names(const ParamRefsT<S>& params) {
  std::unordered_set<std::string> names;
  for (auto* p : params)
    if (!names.insert(p->name).second)
      throw ContractError("duplicate parameter name: " + p->name);
}

template <class S>
void zero_grads(const ParamRefsT<S>& params) {
  for (auto* p : params) p->value.zero_grad();
}

// Adam with bias correction. Gradients are left untouched by step();
// the caller zeroes them between steps.
template <class S>
class AdamT {
 public:
  struct Options {
    S lr = S(2e-4);
    S beta1 = S(0.5);
    S beta2 = S(0.999);
    S eps = S(1e-8);
  };

  AdamT() = default;
  AdamT(ParamRefsT<S> params, Options opt = {}) : params_(std::move(params)), opt_(opt) {
    check_unique_names(params_);
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(static_cast<size_t>(params_[i]->value.numel()), S(0));
      v_[i].assign(static_cast<size_t>(params_[i]->value.numel()), S(0));
    }
  }

  long step_count() const { return step_; }
  const Options& options() const { return opt_; }
  void set_lr(S lr) { opt_.lr = lr; }
  const ParamRefsT<S>& params() const { return params_; }

  void step() {
    ++step_;
    S bc1 = S(1) - static_cast<S>(std::pow(static_cast<double>(opt_.beta1), step_));
    S bc2 = S(1) - static_cast<S>(std::pow(static_cast<double>(opt_.beta2), step_));
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = *params_[i];
      if (!p.value.has_grad())
        throw ContractError("optimizer step with missing grad for parameter '" + p.name + "'");
      const auto& g = p.value.grad();
      auto& w = p.value.mutable_data();
      auto& m = m_[i];
      auto& v = v_[i];
      for (size_t j = 0; j < w.size(); ++j) {
        m[j] = opt_.beta1 * m[j] + (S(1) - opt_.beta1) * g[j];
        v[j] = opt_.beta2 * v[j] + (S(1) - opt_.beta2) * g[j] * g[j];
        S mh = m[j] / bc1;
        S vh = v[j] / bc2;
        w[j] -= opt_.lr * mh / (std::sqrt(vh) + opt_.eps);
      }
    }
  }

 private:
  ParamRefsT<S> params_;
  Options opt_;
  long step_ = 0;
  std::vector<std::vector<S>> m_;
  std::vector<std::vector<S>> v_;
};

using Param = ParamT<float>;
using Adam = AdamT<float>;

}  // namespace como
