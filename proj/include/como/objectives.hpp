#pragma once

#include <string>
#include <vector>

#include "como/networks.hpp"
#include "como/phi.hpp"
#include "como/tensor.hpp"

namespace como {

// Loss conventions: the ||.||_2 of the training objectives is realized as a
// per-element mean square and ||.||_1 as a per-element mean absolute error,
// so loss magnitudes are resolution independent.

// LSGAN generator term: mean((D(y) - 1)^2).
template <class S>
TensorT<S> loss_adv_g(const TensorT<S>& d_scores) {
  return mean_square(affine(d_scores, S(1), S(-1)));
}

// Model reconstruction: mean |y_m - M(x, phi)|; the target is a constant.
template <class S>
TensorT<S> loss_model(const TensorT<S>& y_m, const TensorT<S>& model_target) {
  return l1_distance(y_m, model_target);
}

// Discriminator term: mean(D(fake)^2) + mean((D(real) - 1)^2). The fake
// scores must come from a detached generator output.
template <class S>
TensorT<S> loss_disc(const TensorT<S>& d_real_scores, const TensorT<S>& d_fake_scores) {
  return add(mean_square(d_fake_scores),
             mean_square(affine(d_real_scores, S(1), S(-1))));
}

// proj(phi) constants as an (N, proj_dim, 1, 1) tensor.
template <class S>
TensorT<S> proj_tensor(Manifold m, const std::vector<PhiValue>& phis) {
  int n = static_cast<int>(phis.size());
  int d = phi_projection_dim(m);
  std::vector<S> v(static_cast<size_t>(n) * d);
  for (int i = 0; i < n; ++i) {
    auto [a, b] = phi_project(phis[static_cast<size_t>(i)]);
    v[static_cast<size_t>(i * d)] = static_cast<S>(a);
    if (d > 1) v[static_cast<size_t>(i * d + 1)] = static_cast<S>(b);
  }
  return TensorT<S>::from_data({n, d, 1, 1}, std::move(v));
}

// proj(phi) - proj(phi2): the pairwise regression target. Linear reduces to
// the scalar difference; cyclic is the difference in sin/cos space.
template <class S>
TensorT<S> delta_proj_tensor(Manifold m, const std::vector<PhiValue>& phis,
                             const std::vector<PhiValue>& phis2) {
  int n = static_cast<int>(phis.size());
  int d = phi_projection_dim(m);
  std::vector<S> v(static_cast<size_t>(n) * d);
  for (int i = 0; i < n; ++i) {
    auto [a1, b1] = phi_project(phis[static_cast<size_t>(i)]);
    auto [a2, b2] = phi_project(phis2[static_cast<size_t>(i)]);
    v[static_cast<size_t>(i * d)] = static_cast<S>(a1 - a2);
    if (d > 1) v[static_cast<size_t>(i * d + 1)] = static_cast<S>(b1 - b2);
  }
  return TensorT<S>::from_data({n, d, 1, 1}, std::move(v));
}

template <class S>
struct PhiLossesT {
  TensorT<S> l_phi_g;  // reaches generator and phi-net
  TensorT<S> l_gt;     // modeled pairs only; reaches phi-net alone
};

// Manifold-consistency losses around the pairwise regressor:
//   L_phi_G = ||net(y, ym)||^2 + ||net(y, ym') - dproj||^2
//   L_gt    = ||net(ym, ym') - dproj||^2
// ym / ym' are guidance outputs (constants), dproj = proj(phi) - proj(phi').
template <class S>
PhiLossesT<S> loss_phi(PhiNetPairT<S>& net, const TensorT<S>& y_phi, const TensorT<S>& ym_phi,
                       const TensorT<S>& ym_phi2, const TensorT<S>& dproj) {
  if (dproj.dim(1) != phi_projection_dim(net.manifold))
    throw ContractError("loss_phi: delta projection dim does not match the net manifold");
  PhiLossesT<S> out;
  out.l_phi_g = add(mean_square(net.pair_delta(y_phi, ym_phi)),
                    mean_square(sub(net.pair_delta(y_phi, ym_phi2), dproj)));
  out.l_gt = mean_square(sub(net.pair_delta(ym_phi, ym_phi2), dproj));
  return out;
}

// Spreading regularizer: ||phi-net_A(y) - proj(phi)||^2.
template <class S>
TensorT<S> loss_reg(PhiNetAT<S>& net, const TensorT<S>& y_phi, const TensorT<S>& proj_target) {
  return mean_square(sub(net.forward(y_phi), proj_target));
}

// Source identity at the anchor: mean |G(x, phi0) - x|.
template <class S>
TensorT<S> loss_identity(GeneratorBundleT<S>& bundle, const TensorT<S>& x, const PhiValue& phi0) {
  return l1_distance(bundle.translate(x, phi0).y_phi, x);
}

// Steerable-style direct edit: lambda * mean |y - M(x, phi)|.
template <class S>
TensorT<S> loss_edit(const TensorT<S>& y_phi, const TensorT<S>& model_target, S lambda) {
  return scale(l1_distance(y_phi, model_target), lambda);
}

// ---------------------------------------------------------------------------
// Training configuration
// ---------------------------------------------------------------------------

enum class TrainMode { Attached, Detached, Confusion };
enum class Ablation { None, NoLM, NoLphi, EditOnly };

const char* train_mode_name(TrainMode m);
TrainMode train_mode_from_name(const std::string& s);
const char* ablation_name(Ablation a);
Ablation ablation_from_name(const std::string& s);

struct LossWeights {
  double adv = 1.0;
  double model = 10.0;
  double phi = 1.0;
  double idt = 5.0;
  double reg = 1.0;
  double cyc = 10.0;
  double lambda_edit = 0.0;
};

struct TrainConfig {
  TrainMode mode = TrainMode::Attached;
  bool cycle = false;
  Manifold manifold = Manifold::Linear;
  LossWeights w;
  Ablation ablation = Ablation::None;
  int epochs = 20;
  int batch_size = 16;
  unsigned seed = 1;
  int image_size = 32;
  double lr = 2e-4;
  int base_channels = 32;
  bool share_encdec = true;
  bool share_drb = true;

  // Throws ConfigError listing every violated constraint at once.
  void validate() const;
};

template <class S>
struct ObjectiveParts {
  TensorT<S> adv;
  TensorT<S> model;
  TensorT<S> phi_g;
  TensorT<S> reg;
  TensorT<S> idt;
  TensorT<S> cyc;
  TensorT<S> edit;
};

// Weighted generator objective per the configured mode and ablation.
// EditOnly keeps only the adversarial and edit terms.
template <class S>
TensorT<S> generator_objective(const TrainConfig& cfg, const ObjectiveParts<S>& parts) {
  cfg.validate();
  TensorT<S> total = TensorT<S>::zeros({1});
  auto accumulate = [&total](const TensorT<S>& term, double weight) {
    if (!term.defined() || weight == 0.0) return;
    total = add(total, scale(term, static_cast<S>(weight)));
  };
  accumulate(parts.adv, cfg.w.adv);
  if (cfg.ablation == Ablation::EditOnly) {
    accumulate(parts.edit, 1.0);  // lambda is already inside loss_edit
    return total;
  }
  if (cfg.ablation != Ablation::NoLM) accumulate(parts.model, cfg.w.model);
  if (cfg.ablation != Ablation::NoLphi) accumulate(parts.phi_g, cfg.w.phi);
  accumulate(parts.reg, cfg.w.reg);
  if (cfg.mode == TrainMode::Attached) accumulate(parts.idt, cfg.w.idt);
  if (cfg.cycle) accumulate(parts.cyc, cfg.w.cyc);
  return total;
}

}  // namespace como
