#pragma once

#include <random>
#include <string>
#include <vector>

#include "como/fin.hpp"
#include "como/layers.hpp"
#include "como/phi.hpp"
#include "como/tensor.hpp"

namespace como {

// One residual branch: conv3x3 -> norm -> ReLU -> conv3x3 -> norm,
// channel-preserving, final conv zero-initialized so the branch (and hence
// the whole block) starts exactly silent. The phi branch normalizes with FIN
// layers, the private branches with plain IN.
template <class S>
struct ResBranchT {
  ConvLayerT<S> conv1, conv2;
  bool functional = false;
  InParamsT<S> in1, in2;
  FinParamsT<S> fin1, fin2;

  ResBranchT() = default;
  ResBranchT(const std::string& prefix, int ch, bool use_fin, Manifold m, std::mt19937& rng)
      : conv1(prefix + ".conv1", ch, ch, 3, 1, 1, rng),
        conv2(prefix + ".conv2", ch, ch, 3, 1, 1, rng, /*zero_init=*/true),
        functional(use_fin) {
    if (use_fin) {
      fin1 = FinParamsT<S>(prefix + ".fin.1", ch, m);
      fin2 = FinParamsT<S>(prefix + ".fin.2", ch, m);
    } else {
      in1 = InParamsT<S>(prefix + ".in.1", ch);
      in2 = InParamsT<S>(prefix + ".in.2", ch);
    }
  }

  TensorT<S> forward(const TensorT<S>& x, const std::vector<PhiValue>& phis) {
    TensorT<S> h = conv1.forward(x);
    h = functional ? fin_forward(h, fin1, phis) : instance_norm(h, in1);
    h = relu(h);
    h = conv2.forward(h);
    h = functional ? fin_forward(h, fin2, phis) : instance_norm(h, in2);
    return h;
  }

  void collect(ParamRefsT<S>& out) {
    conv1.collect(out);
    conv2.collect(out);
    if (functional) {
      fin1.collect(out);
      fin2.collect(out);
    } else {
      in1.collect(out);
      in2.collect(out);
    }
  }
};

template <class S>
struct DrbOutputsT {
  TensorT<S> h_y;        // h_phi + h_e + h_x
  TensorT<S> h_ym;       // h_phi + h_em + h_x
  TensorT<S> h_phi;      // shared modeled features
  TensorT<S> h_e;        // private real features
  TensorT<S> h_em;       // private model features
};

// Disentanglement residual block: three branches over the encoder feature
// map. The phi branch carries the shared continuous features; the private
// branches carry what only the real data (h_e) or only the model (h_em)
// explains. Residual summation keeps gradients flowing through the skip.
template <class S>
struct DrbBlockT {
  ResBranchT<S> branch_phi;
  ResBranchT<S> branch_real;
  ResBranchT<S> branch_model;
  int channels = 0;

  DrbBlockT() = default;
  DrbBlockT(const std::string& prefix, int ch, Manifold m, std::mt19937& rng)
      : branch_phi(prefix + ".phi", ch, /*use_fin=*/true, m, rng),
        branch_real(prefix + ".real", ch, /*use_fin=*/false, m, rng),
        branch_model(prefix + ".model", ch, /*use_fin=*/false, m, rng),
        channels(ch) {}

  DrbOutputsT<S> forward(const TensorT<S>& h_x, const std::vector<PhiValue>& phis) {
    if (h_x.rank() != 4 || h_x.dim(1) != channels)
      throw DimensionError("drb_forward expects " + std::to_string(channels) +
                           "-channel NCHW features, got " + shape_str(h_x.shape()));
    DrbOutputsT<S> out;
    out.h_phi = branch_phi.forward(h_x, phis);
    out.h_e = branch_real.forward(h_x, phis);
    out.h_em = branch_model.forward(h_x, phis);
    if (out.h_e.shape() != h_x.shape() || out.h_em.shape() != h_x.shape() ||
        out.h_phi.shape() != h_x.shape())
      throw ContractError("drb branch output shape drifted from input " + shape_str(h_x.shape()));
    // One rounded (h_phi + h_x) feeds both outputs, so h_y - h_ym cancels to
    // h_e - h_em up to the final additions.
    TensorT<S> shared = add(out.h_phi, h_x);
    out.h_y = add(shared, out.h_e);
    out.h_ym = add(shared, out.h_em);
    return out;
  }

  DrbOutputsT<S> forward(const TensorT<S>& h_x, const PhiValue& phi) {
    return forward(h_x, std::vector<PhiValue>(static_cast<size_t>(h_x.dim(0)), phi));
  }

  void collect(ParamRefsT<S>& out) {
    branch_phi.collect(out);
    branch_real.collect(out);
    branch_model.collect(out);
  }
};

using DrbBlock = DrbBlockT<float>;

}  // namespace como
