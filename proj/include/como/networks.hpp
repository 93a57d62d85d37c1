#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "como/drb.hpp"
#include "como/fin.hpp"
#include "como/layers.hpp"
#include "como/phi.hpp"
#include "como/tensor.hpp"

namespace como {

// Toy-scale i2i backbone. Images are NCHW in [0,1]; the encoder maps to
// base*4 channels at 1/8 resolution, the decoder mirrors with nearest
// upsampling, and outputs pass through tanh rescaled back to [0,1].

template <class S>
struct EncoderT {
  ConvLayerT<S> conv1, conv2, conv3;
  InParamsT<S> n1, n2, n3;

  EncoderT() = default;
  EncoderT(const std::string& prefix, int base, std::mt19937& rng)
      : conv1(prefix + ".conv1", 3, base, 3, 2, 1, rng),
        conv2(prefix + ".conv2", base, base * 2, 3, 2, 1, rng),
        conv3(prefix + ".conv3", base * 2, base * 4, 3, 2, 1, rng),
        n1(prefix + ".in.1", base),
        n2(prefix + ".in.2", base * 2),
        n3(prefix + ".in.3", base * 4) {}

  TensorT<S> forward(const TensorT<S>& x) {
    TensorT<S> h = affine(x, S(2), S(-1));  // [0,1] -> [-1,1]
    h = relu(instance_norm(conv1.forward(h), n1));
    h = relu(instance_norm(conv2.forward(h), n2));
    h = relu(instance_norm(conv3.forward(h), n3));
    return h;
  }

  void collect(ParamRefsT<S>& out) {
    conv1.collect(out);
    conv2.collect(out);
    conv3.collect(out);
    n1.collect(out);
    n2.collect(out);
    n3.collect(out);
  }
};

template <class S>
struct DecoderT {
  ConvLayerT<S> conv1, conv2, conv3;
  InParamsT<S> n1, n2;

  DecoderT() = default;
  DecoderT(const std::string& prefix, int base, std::mt19937& rng)
      : conv1(prefix + ".conv1", base * 4, base * 2, 3, 1, 1, rng),
        conv2(prefix + ".conv2", base * 2, base, 3, 1, 1, rng),
        conv3(prefix + ".conv3", base, 3, 3, 1, 1, rng),
        n1(prefix + ".in.1", base * 2),
        n2(prefix + ".in.2", base) {}

  TensorT<S> forward(const TensorT<S>& h) {
    TensorT<S> y = relu(instance_norm(conv1.forward(upsample_nearest2(h)), n1));
    y = relu(instance_norm(conv2.forward(upsample_nearest2(y)), n2));
    y = tanh_t(conv3.forward(upsample_nearest2(y)));
    return affine(y, S(0.5), S(0.5));  // [-1,1] -> [0,1]
  }

  void collect(ParamRefsT<S>& out) {
    conv1.collect(out);
    conv2.collect(out);
    conv3.collect(out);
    n1.collect(out);
    n2.collect(out);
  }
};

// Patch discriminator; no normalization on the first layer.
template <class S>
struct DiscriminatorT {
  ConvLayerT<S> conv1, conv2, conv3, conv4;
  InParamsT<S> n2, n3;

  DiscriminatorT() = default;
  DiscriminatorT(const std::string& prefix, int base, std::mt19937& rng)
      : conv1(prefix + ".conv1", 3, base, 4, 2, 1, rng),
        conv2(prefix + ".conv2", base, base * 2, 4, 2, 1, rng),
        conv3(prefix + ".conv3", base * 2, base * 4, 4, 2, 1, rng),
        conv4(prefix + ".conv4", base * 4, 1, 3, 1, 1, rng),
        n2(prefix + ".in.2", base * 2),
        n3(prefix + ".in.3", base * 4) {}

  TensorT<S> forward(const TensorT<S>& x) {
    TensorT<S> h = leaky_relu(conv1.forward(affine(x, S(2), S(-1))));
    h = leaky_relu(instance_norm(conv2.forward(h), n2));
    h = leaky_relu(instance_norm(conv3.forward(h), n3));
    return conv4.forward(h);
  }

  void collect(ParamRefsT<S>& out) {
    conv1.collect(out);
    conv2.collect(out);
    conv3.collect(out);
    conv4.collect(out);
    n2.collect(out);
    n3.collect(out);
  }
};

// Shared conv feature trunk for the phi regressors: 4 conv blocks + global
// average pooling to a (N, feat, 1, 1) descriptor.
template <class S>
struct PhiTrunkT {
  ConvLayerT<S> conv1, conv2, conv3, conv4;
  InParamsT<S> n2, n3, n4;
  int feat = 0;

  PhiTrunkT() = default;
  PhiTrunkT(const std::string& prefix, int base, std::mt19937& rng)
      : conv1(prefix + ".conv1", 3, base, 3, 2, 1, rng),
        conv2(prefix + ".conv2", base, base * 2, 3, 2, 1, rng),
        conv3(prefix + ".conv3", base * 2, base * 2, 3, 2, 1, rng),
        conv4(prefix + ".conv4", base * 2, base * 2, 3, 1, 1, rng),
        n2(prefix + ".in.2", base * 2),
        n3(prefix + ".in.3", base * 2),
        n4(prefix + ".in.4", base * 2),
        feat(base * 2) {}

  TensorT<S> forward(const TensorT<S>& x) {
    TensorT<S> h = leaky_relu(conv1.forward(affine(x, S(2), S(-1))));
    h = leaky_relu(instance_norm(conv2.forward(h), n2));
    h = leaky_relu(instance_norm(conv3.forward(h), n3));
    h = leaky_relu(instance_norm(conv4.forward(h), n4));
    return spatial_mean(h);
  }

  void collect(ParamRefsT<S>& out) {
    conv1.collect(out);
    conv2.collect(out);
    conv3.collect(out);
    conv4.collect(out);
    n2.collect(out);
    n3.collect(out);
    n4.collect(out);
  }
};

// Pairwise regressor of projected phi differences. The fusion head is
// antisymmetrized, g(a,b) - g(b,a), so delta(y,y) = 0 holds structurally and
// swapping arguments negates the output for every input.
template <class S>
struct PhiNetPairT {
  PhiTrunkT<S> trunk;
  ConvLayerT<S> fc1, fc2;
  Manifold manifold = Manifold::Linear;

  PhiNetPairT() = default;
  PhiNetPairT(const std::string& prefix, int base, Manifold m, std::mt19937& rng)
      : trunk(prefix + ".ext", base, rng),
        fc1(prefix + ".head.fc1", base * 4, base * 2, 1, 1, 0, rng),
        fc2(prefix + ".head.fc2", base * 2, phi_projection_dim(m), 1, 1, 0, rng),
        manifold(m) {}

  TensorT<S> fused(const TensorT<S>& fa, const TensorT<S>& fb) {
    return fc2.forward(leaky_relu(fc1.forward(concat_channels(fa, fb))));
  }

  // (N, proj_dim, 1, 1) estimate of proj(phi_a) - proj(phi_b).
  TensorT<S> pair_delta(const TensorT<S>& a, const TensorT<S>& b) {
    if (a.shape() != b.shape())
      throw DimensionError("phinet_pair_delta: image shapes differ, " + shape_str(a.shape()) +
                           " vs " + shape_str(b.shape()));
    TensorT<S> fa = trunk.forward(a);
    TensorT<S> fb = trunk.forward(b);
    return sub(fused(fa, fb), fused(fb, fa));
  }

  void collect(ParamRefsT<S>& out) {
    trunk.collect(out);
    fc1.collect(out);
    fc2.collect(out);
  }
};

// Single-image regressor to projected phi; cyclic outputs are normalized to
// the unit circle at decode time.
template <class S>
struct PhiNetAT {
  PhiTrunkT<S> trunk;
  ConvLayerT<S> head;
  Manifold manifold = Manifold::Linear;

  PhiNetAT() = default;
  PhiNetAT(const std::string& prefix, int base, Manifold m, std::mt19937& rng)
      : trunk(prefix + ".ext", base, rng),
        head(prefix + ".head", base * 2, phi_projection_dim(m), 1, 1, 0, rng),
        manifold(m) {}

  // Raw projected head output, (N, proj_dim, 1, 1).
  TensorT<S> forward(const TensorT<S>& x) { return head.forward(trunk.forward(x)); }

  std::vector<PhiValue> estimate(const TensorT<S>& x) {
    NoGradGuard ng;
    TensorT<S> out = forward(x);
    int n = out.dim(0), d = out.dim(1);
    std::vector<PhiValue> res;
    res.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      double a = static_cast<double>(out.data()[static_cast<size_t>(i * d)]);
      double b = d > 1 ? static_cast<double>(out.data()[static_cast<size_t>(i * d + 1)]) : 0.0;
      res.push_back(phi_decode(manifold, a, b));
    }
    return res;
  }

  void collect(ParamRefsT<S>& out) {
    trunk.collect(out);
    head.collect(out);
  }
};

struct BundleConfig {
  Manifold manifold = Manifold::Linear;
  int base_channels = 32;
  int image_size = 32;
  bool cycle = false;
  bool share_encdec = true;  // cycle mode only
  bool share_drb = true;
  unsigned seed = 1;
};

template <class S>
struct TranslationT {
  TensorT<S> y_phi;    // adversarial channel
  TensorT<S> y_phi_m;  // model-mimicry channel, compared against M(x, phi)
};

// Everything trainable: forward generator (G_E, DRB, G_D), optional reverse
// pair for cycle mode, discriminator and both phi regressors.
template <class S>
struct GeneratorBundleT {
  BundleConfig cfg;
  EncoderT<S> enc;
  DrbBlockT<S> drb;
  DecoderT<S> dec;
  std::unique_ptr<EncoderT<S>> enc_back;   // cycle && !share_encdec
  std::unique_ptr<DecoderT<S>> dec_back;
  std::unique_ptr<DrbBlockT<S>> drb_back;  // !share_drb
  DiscriminatorT<S> disc;
  PhiNetPairT<S> phinet;
  PhiNetAT<S> phineta;

  explicit GeneratorBundleT(const BundleConfig& c) : cfg(c) {
    std::mt19937 rng(c.seed);
    int b = c.base_channels;
    enc = EncoderT<S>("gen.enc", b, rng);
    drb = DrbBlockT<S>("drb", b * 4, c.manifold, rng);
    dec = DecoderT<S>("gen.dec", b, rng);
    if (c.cycle && !c.share_encdec) {
      enc_back = std::make_unique<EncoderT<S>>("gen2.enc", b, rng);
      dec_back = std::make_unique<DecoderT<S>>("gen2.dec", b, rng);
    }
    if (c.cycle && !c.share_drb)
      drb_back = std::make_unique<DrbBlockT<S>>("drb2", b * 4, c.manifold, rng);
    disc = DiscriminatorT<S>("disc", b, rng);
    phinet = PhiNetPairT<S>("phinet", b, c.manifold, rng);
    phineta = PhiNetAT<S>("phineta", b, c.manifold, rng);
  }

  ParamRefsT<S> generator_params() {
    ParamRefsT<S> out;
    enc.collect(out);
    drb.collect(out);
    dec.collect(out);
    if (enc_back) enc_back->collect(out);
    if (dec_back) dec_back->collect(out);
    if (drb_back) drb_back->collect(out);
    return out;
  }

  ParamRefsT<S> discriminator_params() {
    ParamRefsT<S> out;
    disc.collect(out);
    return out;
  }

  ParamRefsT<S> phinet_params() {
    ParamRefsT<S> out;
    phinet.collect(out);
    return out;
  }

  ParamRefsT<S> phineta_params() {
    ParamRefsT<S> out;
    phineta.collect(out);
    return out;
  }

  ParamRefsT<S> all_params() {
    ParamRefsT<S> out = generator_params();
    disc.collect(out);
    phinet.collect(out);
    phineta.collect(out);
    check_unique_names(out);
    return out;
  }

  void zero_all_grads() {
    for (auto* p : all_params()) p->value.zero_grad();
  }

  long param_count() {
    long n = 0;
    for (auto* p : all_params()) n += p->value.numel();
    return n;
  }

  // X -> Y(phi). Both outputs lie in [0,1].
  TranslationT<S> translate(const TensorT<S>& x, const std::vector<PhiValue>& phis) {
    TensorT<S> hx = enc.forward(x);
    auto parts = drb.forward(hx, phis);
    return {dec.forward(parts.h_y), dec.forward(parts.h_ym)};
  }

  TranslationT<S> translate(const TensorT<S>& x, const PhiValue& phi) {
    return translate(x, std::vector<PhiValue>(static_cast<size_t>(x.dim(0)), phi));
  }

  // Y -> X direction for cycle consistency; shares the DRB (and, when
  // configured, the encoder/decoder weights) with the forward direction.
  TranslationT<S> translate_back(const TensorT<S>& y, const std::vector<PhiValue>& phis) {
    if (!cfg.cycle) throw ContractError("translate_back requires a cycle-mode bundle");
    EncoderT<S>& e = enc_back ? *enc_back : enc;
    DecoderT<S>& d = dec_back ? *dec_back : dec;
    DrbBlockT<S>& block = drb_back ? *drb_back : drb;
    TensorT<S> hy = e.forward(y);
    auto parts = block.forward(hy, phis);
    return {d.forward(parts.h_y), d.forward(parts.h_ym)};
  }

  TranslationT<S> translate_back(const TensorT<S>& y, const PhiValue& phi) {
    return translate_back(y, std::vector<PhiValue>(static_cast<size_t>(y.dim(0)), phi));
  }
};

// phi-agnostic inference target: absolute coordinate or relative shift.
struct AgnosticTarget {
  enum class Kind { Absolute, Relative };
  Kind kind = Kind::Absolute;
  double value = 0.0;

  static AgnosticTarget absolute(double v) { return {Kind::Absolute, v}; }
  static AgnosticTarget relative(double d) { return {Kind::Relative, d}; }
};

// Estimates phi on the input with the single-image regressor, then
// translates at the requested absolute phi or at phi_est (+) delta.
template <class S>
TensorT<S> translate_agnostic(GeneratorBundleT<S>& bundle, const TensorT<S>& x,
                              const AgnosticTarget& target) {
  if (!bundle.cfg.cycle)
    throw ContractError("translate_agnostic requires a bundle trained in cycle mode");
  std::vector<PhiValue> est = bundle.phineta.estimate(x);
  std::vector<PhiValue> phis;
  phis.reserve(est.size());
  for (const auto& p : est) {
    if (target.kind == AgnosticTarget::Kind::Absolute)
      phis.push_back(PhiValue(target.value, bundle.cfg.manifold));
    else
      phis.push_back(p.shifted(target.value));
  }
  return bundle.translate(x, phis).y_phi;
}

using GeneratorBundle = GeneratorBundleT<float>;
using PhiNetPair = PhiNetPairT<float>;
using PhiNetA = PhiNetAT<float>;
using Translation = TranslationT<float>;

}  // namespace como
