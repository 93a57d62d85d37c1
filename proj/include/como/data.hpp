#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "como/guidance.hpp"
#include "como/phi.hpp"
#include "como/tensor.hpp"

namespace como {

enum class Domain { Source, Target };

enum class ToyTask {
  ToyTimelapse,
  ToyBlur,
  ToyFog,
  DigitsBrightness,
  DigitsRedness,
  DigitsConfusion,
};

const char* task_name(ToyTask t);
ToyTask task_from_name(const std::string& s);
Manifold task_manifold(ToyTask t);
int task_default_size(ToyTask t);

// The guidance model a task trains against. For ToyTimelapse a Linear
// override selects the folded day-to-night coordinate (FIN-swap ablation).
GuidanceModel task_guidance(ToyTask t, Manifold manifold);

struct DatasetSpec {
  ToyTask task = ToyTask::DigitsBrightness;
  int train_count = 2000;  // per side
  int val_count = 500;
  int image_size = 0;  // 0 -> task default
  unsigned seed = 1;

  int resolved_size() const { return image_size > 0 ? image_size : task_default_size(task); }
};

struct Sample {
  Tensor image;     // (3,H,W) in [0,1]
  PhiValue gt_phi;  // evaluation only; stripped from training views
  Domain domain = Domain::Target;
  Tensor depth;     // (1,H,W) meters, defined for fog-style tasks
};

// What training is allowed to see: image, optional depth, domain. No phi.
struct TrainItem {
  const Tensor* image = nullptr;
  const Tensor* depth = nullptr;
  Domain domain = Domain::Source;
};

struct Dataset {
  DatasetSpec spec;
  std::vector<Sample> train_source;
  std::vector<Sample> train_target;
  std::vector<Sample> val_source;
  std::vector<Sample> val_target;
  std::string private_feature;

  Manifold manifold() const { return task_manifold(spec.task); }
  bool confusion() const { return spec.task == ToyTask::DigitsConfusion; }

  std::vector<TrainItem> train_view(Domain d) const;
};

// Deterministic procedural generation: every sample is a pure function of
// (spec.seed, split, domain, index). Confusion datasets emit a single
// unlabeled pool in the target vectors.
Dataset generate_dataset(const DatasetSpec& spec);

// Digest over 8-bit-quantized pixels, domains and gt phi, stable across
// regeneration and across a PNG round trip.
uint64_t dataset_digest(const Dataset& ds);

// On-disk layout: images/ *.png + manifest.json (+ cache.cmt1 float images,
// depth.cmt1 when present). Loading prefers the float cache when its shape
// matches the manifest.
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace como
