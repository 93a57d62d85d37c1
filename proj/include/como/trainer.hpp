#pragma once

#include <random>
#include <string>
#include <vector>

#include "como/data.hpp"
#include "como/guidance.hpp"
#include "como/networks.hpp"
#include "como/objectives.hpp"
#include "como/optim.hpp"

namespace como {

struct MetricsRow {
  long step = 0;
  double l_adv_g = 0, l_m = 0, l_phi = 0, l_gt = 0, l_reg = 0, l_idt = 0, l_cyc = 0, l_d = 0;
};

std::string metrics_csv_header();
std::string metrics_csv_line(const MetricsRow& row);

// Stacks CHW images into one NCHW batch (a constant, not a graph node).
Tensor make_batch(const std::vector<const Tensor*>& images);
Tensor slice_batch(const Tensor& batch, int index);  // -> CHW copy

// Owns the bundle, the four optimizers and the update sequencing.
// Per batch: generator step (with the phi-net receiving the manifold loss
// gradient), phi-net step on modeled pairs, phi-net_A regression step,
// then the discriminator step on detached fakes.
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, const GuidanceModel& guidance);

  // Confusion mode passes the single pool as both views.
  MetricsRow train_epoch(const std::vector<TrainItem>& source,
                         const std::vector<TrainItem>& target);

  GeneratorBundle& bundle() { return *bundle_; }
  const TrainConfig& config() const { return cfg_; }
  const GuidanceModel& guidance() const { return guidance_; }
  long step() const { return step_; }

 private:
  MetricsRow train_batch(const std::vector<TrainItem>& source,
                         const std::vector<TrainItem>& target,
                         const std::vector<size_t>& src_idx, const std::vector<size_t>& tgt_idx,
                         size_t batch_start);

  TrainConfig cfg_;
  GuidanceModel guidance_;
  std::unique_ptr<GeneratorBundle> bundle_;
  Adam opt_g_, opt_d_, opt_phinet_, opt_phineta_;
  std::mt19937 rng_;
  long step_ = 0;
};

}  // namespace como
