#pragma once

#include <random>
#include <string>

#include "como/optim.hpp"
#include "como/tensor.hpp"

namespace como {

// Conv + bias. Weights init N(0, 0.02) as is usual for i2i backbones;
// zero_init produces an exactly-silent layer.
template <class S>
struct ConvLayerT {
  ParamT<S> weight;  // (O, I, k, k)
  ParamT<S> bias;    // (1, O, 1, 1)
  int stride = 1;
  int pad = 1;

  ConvLayerT() = default;
  ConvLayerT(const std::string& prefix, int in_ch, int out_ch, int k, int stride_, int pad_,
             std::mt19937& rng, bool zero_init = false)
      : weight(prefix + ".weight",
               zero_init ? TensorT<S>::zeros({out_ch, in_ch, k, k})
                         : TensorT<S>::randn({out_ch, in_ch, k, k}, rng, S(0.02))),
        bias(prefix + ".bias", TensorT<S>::zeros({1, out_ch, 1, 1})),
        stride(stride_),
        pad(pad_) {}

  int in_channels() const { return weight.value.dim(1); }
  int out_channels() const { return weight.value.dim(0); }

  TensorT<S> forward(const TensorT<S>& x) {
    return add(conv2d(x, weight.value, stride, pad), bias.value);
  }

  void collect(ParamRefsT<S>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

}  // namespace como
