#include "como/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "como/errors.hpp"

namespace como {

std::string metrics_csv_header() {
  return "step,l_adv_g,l_m,l_phi,l_gt,l_reg,l_idt,l_cyc,l_d";
}

std::string metrics_csv_line(const MetricsRow& r) {
  std::ostringstream os;
  os << r.step << ',' << r.l_adv_g << ',' << r.l_m << ',' << r.l_phi << ',' << r.l_gt << ','
     << r.l_reg << ',' << r.l_idt << ',' << r.l_cyc << ',' << r.l_d;
  return os.str();
}

Tensor make_batch(const std::vector<const Tensor*>& images) {
  if (images.empty()) throw ContractError("make_batch on empty image list");
  const Shape& s = images[0]->shape();
  std::vector<float> data;
  data.reserve(images.size() * images[0]->data().size());
  for (const Tensor* t : images) {
    if (t->shape() != s)
      throw DimensionError("make_batch: mixed shapes " + shape_str(s) + " vs " +
                           shape_str(t->shape()));
    data.insert(data.end(), t->data().begin(), t->data().end());
  }
  Shape out = {static_cast<int>(images.size()), s[0], s[1], s[2]};
  return Tensor::from_data(std::move(out), std::move(data));
}

Tensor slice_batch(const Tensor& batch, int index) {
  if (batch.rank() != 4) throw DimensionError("slice_batch expects NCHW");
  long plane = batch.numel() / batch.dim(0);
  std::vector<float> data(batch.data().begin() + index * plane,
                          batch.data().begin() + (index + 1) * plane);
  return Tensor::from_data({batch.dim(1), batch.dim(2), batch.dim(3)}, std::move(data));
}

namespace {

double checked_loss(const Tensor& loss, const char* term, long step) {
  double v = static_cast<double>(loss.item());
  if (!std::isfinite(v))
    throw NumericError(std::string("non-finite loss '") + term + "' at step " +
                       std::to_string(step));
  return v;
}

}  // namespace

Trainer::Trainer(const TrainConfig& cfg, const GuidanceModel& guidance)
    : cfg_(cfg), guidance_(guidance), rng_(cfg.seed) {
  cfg_.validate();
  if (guidance_.manifold != cfg_.manifold)
    throw ConfigError("guidance manifold does not match train config manifold");
  BundleConfig bc;
  bc.manifold = cfg_.manifold;
  bc.base_channels = cfg_.base_channels;
  bc.image_size = cfg_.image_size;
  bc.cycle = cfg_.cycle;
  bc.share_encdec = cfg_.share_encdec;
  bc.share_drb = cfg_.share_drb;
  bc.seed = cfg_.seed;
  bundle_ = std::make_unique<GeneratorBundle>(bc);

  Adam::Options opt;
  opt.lr = static_cast<float>(cfg_.lr);
  opt_g_ = Adam(bundle_->generator_params(), opt);
  opt_d_ = Adam(bundle_->discriminator_params(), opt);
  opt_phinet_ = Adam(bundle_->phinet_params(), opt);
  opt_phineta_ = Adam(bundle_->phineta_params(), opt);
}

MetricsRow Trainer::train_epoch(const std::vector<TrainItem>& source,
                                const std::vector<TrainItem>& target) {
  size_t batch = static_cast<size_t>(cfg_.batch_size);
  if (source.size() < batch || target.empty())
    throw ContractError("train_epoch: dataset smaller than one batch");

  std::vector<size_t> src_idx(source.size());
  std::iota(src_idx.begin(), src_idx.end(), 0);
  std::shuffle(src_idx.begin(), src_idx.end(), rng_);
  std::vector<size_t> tgt_idx(target.size());
  std::iota(tgt_idx.begin(), tgt_idx.end(), 0);
  std::shuffle(tgt_idx.begin(), tgt_idx.end(), rng_);

  size_t steps = source.size() / batch;
  MetricsRow mean;
  for (size_t b = 0; b < steps; ++b) {
    MetricsRow row = train_batch(source, target, src_idx, tgt_idx, b * batch);
    mean.l_adv_g += row.l_adv_g;
    mean.l_m += row.l_m;
    mean.l_phi += row.l_phi;
    mean.l_gt += row.l_gt;
    mean.l_reg += row.l_reg;
    mean.l_idt += row.l_idt;
    mean.l_cyc += row.l_cyc;
    mean.l_d += row.l_d;
  }
  double inv = 1.0 / static_cast<double>(steps);
  mean.l_adv_g *= inv;
  mean.l_m *= inv;
  mean.l_phi *= inv;
  mean.l_gt *= inv;
  mean.l_reg *= inv;
  mean.l_idt *= inv;
  mean.l_cyc *= inv;
  mean.l_d *= inv;
  mean.step = step_;
  return mean;
}

MetricsRow Trainer::train_batch(const std::vector<TrainItem>& source,
                                const std::vector<TrainItem>& target,
                                const std::vector<size_t>& src_idx,
                                const std::vector<size_t>& tgt_idx, size_t batch_start) {
  size_t batch = static_cast<size_t>(cfg_.batch_size);
  MetricsRow row;
  row.step = ++step_;

  // Assemble batch and guidance targets (constants, outside the tape).
  std::vector<const Tensor*> xs, ys;
  std::vector<PhiValue> phis, phis2;
  std::vector<Tensor> ym1_list, ym2_list;
  xs.reserve(batch);
  ys.reserve(batch);
  for (size_t i = 0; i < batch; ++i) {
    const TrainItem& item = source[src_idx[batch_start + i]];
    const TrainItem& titem = target[tgt_idx[(batch_start + i) % target.size()]];
    xs.push_back(item.image);
    ys.push_back(titem.image);
    PhiValue phi = sample_phi(cfg_.manifold, rng_);
    PhiValue phi2 = sample_phi(cfg_.manifold, rng_);
    phis.push_back(phi);
    phis2.push_back(phi2);
    ym1_list.push_back(guidance_.apply(*item.image, phi, item.depth));
    ym2_list.push_back(guidance_.apply(*item.image, phi2, item.depth));
  }
  Tensor x = make_batch(xs);
  Tensor y_real = make_batch(ys);
  std::vector<const Tensor*> ym1_ptr, ym2_ptr;
  for (auto& t : ym1_list) ym1_ptr.push_back(&t);
  for (auto& t : ym2_list) ym2_ptr.push_back(&t);
  Tensor ym1 = make_batch(ym1_ptr);
  Tensor ym2 = make_batch(ym2_ptr);

  PhiValue phi0(0.0, cfg_.manifold);
  GeneratorBundle& bundle = *bundle_;

  bool use_phi_loss = cfg_.ablation != Ablation::NoLphi && cfg_.ablation != Ablation::EditOnly;
  bool use_model_loss = cfg_.ablation != Ablation::NoLM && cfg_.ablation != Ablation::EditOnly;
  bool use_reg = cfg_.ablation != Ablation::EditOnly && cfg_.w.reg > 0;
  bool use_idt = cfg_.mode == TrainMode::Attached && cfg_.ablation != Ablation::EditOnly &&
                 cfg_.w.idt > 0;

  // --- Phase 1: generator (+ phi-net through the manifold loss) ---
  bundle.zero_all_grads();
  Translation tr = bundle.translate(x, phis);
  ObjectiveParts<float> parts;
  parts.adv = loss_adv_g(bundle.disc.forward(tr.y_phi));
  row.l_adv_g = checked_loss(parts.adv, "l_adv_g", step_);
  if (use_model_loss) {
    parts.model = loss_model(tr.y_phi_m, ym1);
    row.l_m = checked_loss(parts.model, "l_m", step_);
  }
  if (use_phi_loss) {
    Tensor dproj = delta_proj_tensor<float>(cfg_.manifold, phis, phis2);
    auto phi_losses = loss_phi(bundle.phinet, tr.y_phi, ym1, ym2, dproj);
    parts.phi_g = phi_losses.l_phi_g;
    row.l_phi = checked_loss(parts.phi_g, "l_phi_g", step_);
  }
  if (use_reg) {
    parts.reg = loss_reg(bundle.phineta, tr.y_phi, proj_tensor<float>(cfg_.manifold, phis));
    row.l_reg = checked_loss(parts.reg, "l_reg", step_);
  }
  if (use_idt) {
    parts.idt = loss_identity(bundle, x, phi0);
    row.l_idt = checked_loss(parts.idt, "l_idt", step_);
  }
  if (cfg_.cycle) {
    std::vector<PhiValue> phi0_vec(batch, phi0);
    Tensor x_rec = bundle.translate_back(tr.y_phi, phi0_vec).y_phi;
    Tensor cyc_a = l1_distance(x_rec, x);
    std::vector<PhiValue> phi_est = bundle.phineta.estimate(y_real);
    Tensor x_hat = bundle.translate_back(y_real, phi0_vec).y_phi;
    Tensor y_rec = bundle.translate(x_hat, phi_est).y_phi;
    parts.cyc = add(cyc_a, l1_distance(y_rec, y_real));
    row.l_cyc = checked_loss(parts.cyc, "l_cyc", step_);
  }
  if (cfg_.ablation == Ablation::EditOnly) {
    parts.edit = loss_edit(tr.y_phi, ym1, static_cast<float>(cfg_.w.lambda_edit));
    row.l_m = checked_loss(parts.edit, "l_edit", step_);
  }
  Tensor total = generator_objective(cfg_, parts);
  checked_loss(total, "generator_objective", step_);
  backward(total);
  // Ablated objectives leave some branch parameters untouched; they still
  // belong to the optimizer, with an all-zero gradient.
  for (auto* p : bundle.generator_params()) p->value.ensure_grad();
  opt_g_.step();
  if (use_phi_loss) opt_phinet_.step();
  bundle.zero_all_grads();

  // --- Phase 2: phi-net on modeled pairs only ---
  if (use_phi_loss) {
    Tensor dproj = delta_proj_tensor<float>(cfg_.manifold, phis, phis2);
    Tensor lgt = mean_square(sub(bundle.phinet.pair_delta(ym1, ym2), dproj));
    row.l_gt = checked_loss(lgt, "l_gt", step_);
    backward(lgt);
    opt_phinet_.step();
    bundle.zero_all_grads();
  }

  // --- Phase 3: phi-net_A regression on modeled images + detached fakes ---
  {
    Tensor proj1 = proj_tensor<float>(cfg_.manifold, phis);
    Tensor proj2 = proj_tensor<float>(cfg_.manifold, phis2);
    Tensor la = add(add(mean_square(sub(bundle.phineta.forward(ym1), proj1)),
                        mean_square(sub(bundle.phineta.forward(ym2), proj2))),
                    mean_square(sub(bundle.phineta.forward(stop_grad(tr.y_phi)), proj1)));
    checked_loss(la, "l_phineta", step_);
    backward(la);
    opt_phineta_.step();
    bundle.zero_all_grads();
  }

  // --- Phase 4: discriminator on real vs detached fake ---
  {
    Tensor fake = stop_grad(tr.y_phi);
    Tensor ld = loss_disc(bundle.disc.forward(y_real), bundle.disc.forward(fake));
    row.l_d = checked_loss(ld, "l_d", step_);
    backward(ld);
    opt_d_.step();
    bundle.zero_all_grads();
  }

  return row;
}

}  // namespace como
