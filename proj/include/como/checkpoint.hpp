#pragma once

#include <memory>
#include <string>

#include "como/guidance.hpp"
#include "como/networks.hpp"

namespace como {

// Checkpoint directory layout: manifest.json (step, manifold tag, config
// hash, bundle structure, tensor name -> shape table) + tensors.bin holding
// the CMT1 records in manifest order.
struct CheckpointMeta {
  long step = 0;
  std::string config_hash;
  std::string task;
  GuidanceKind guidance_kind = GuidanceKind::Brightness;
  BundleConfig bundle;
};

void save_checkpoint(const std::string& dir, GeneratorBundle& bundle, const CheckpointMeta& meta);

struct LoadedCheckpoint {
  CheckpointMeta meta;
  std::unique_ptr<GeneratorBundle> bundle;
};

LoadedCheckpoint load_checkpoint(const std::string& dir);

}  // namespace como
