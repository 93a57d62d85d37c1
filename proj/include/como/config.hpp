#pragma once

#include <string>

#include "como/data.hpp"
#include "como/guidance.hpp"
#include "como/objectives.hpp"

namespace como {

struct EvalOptions {
  int bins = 20;
  int per_bin = 64;
  int diversity_pairs = 10;
  int diversity_images = 100;
  int extractor_epochs = 3;
  unsigned seed = 7;
};

// Fully resolved run configuration. Parsing rejects unknown keys, reports
// every problem at once, fills documented defaults, and stamps a canonical
// hash that is invariant to key order in the source file.
struct RunConfig {
  std::string out_dir = "run";
  DatasetSpec dataset;
  std::string data_dir;  // optional: load dataset instead of generating
  TrainConfig train;
  EvalOptions eval;
  int checkpoint_every = 0;  // epochs; 0 = final only
  std::string hash;

  GuidanceModel guidance() const { return task_guidance(dataset.task, train.manifold); }
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Canonical resolved form (sorted keys); hashing input and provenance record.
std::string resolved_config_json(const RunConfig& cfg);

}  // namespace como
