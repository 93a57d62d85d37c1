#include "como/config.hpp"

#include <set>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "como/errors.hpp"
#include "como/io.hpp"

using nlohmann::json;

namespace como {

namespace {

// Collects every problem before throwing so a bad config reports all of its
// mistakes in one pass.
struct Checker {
  std::vector<std::string> problems;

  void fail(const std::string& msg) { problems.push_back(msg); }

  void check_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
      if (!allowed.count(it.key())) fail("unknown key '" + path + it.key() + "'");
  }

  template <class T>
  T get(const json& obj, const std::string& path, const std::string& key, T def) {
    if (!obj.contains(key)) return def;
    try {
      return obj.at(key).get<T>();
    } catch (const json::exception&) {
      fail("bad value for '" + path + key + "'");
      return def;
    }
  }

  void finish() {
    if (problems.empty()) return;
    std::ostringstream os;
    os << "invalid config:";
    for (const auto& p : problems) os << " [" << p << "]";
    throw ConfigError(os.str());
  }
};

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config root must be a JSON object");

  Checker ck;
  ck.check_keys(root, "", {"out_dir", "dataset", "train", "eval"});

  RunConfig cfg;
  cfg.out_dir = ck.get<std::string>(root, "", "out_dir", "run");

  // --- dataset ---
  json ds = root.value("dataset", json::object());
  if (!ds.is_object()) {
    ck.fail("'dataset' must be an object");
    ds = json::object();
  }
  ck.check_keys(ds, "dataset.",
                {"task", "train_count", "val_count", "image_size", "seed", "data_dir"});
  std::string task_str = ck.get<std::string>(ds, "dataset.", "task", "digits_brightness");
  try {
    cfg.dataset.task = task_from_name(task_str);
  } catch (const ConfigError& e) {
    ck.fail(e.what());
  }
  cfg.dataset.train_count = ck.get<int>(ds, "dataset.", "train_count", 2000);
  cfg.dataset.val_count = ck.get<int>(ds, "dataset.", "val_count", 500);
  cfg.dataset.image_size = ck.get<int>(ds, "dataset.", "image_size", 0);
  cfg.dataset.seed = ck.get<unsigned>(ds, "dataset.", "seed", 1);
  cfg.data_dir = ck.get<std::string>(ds, "dataset.", "data_dir", "");
  if (cfg.dataset.train_count < 1) ck.fail("dataset.train_count must be >= 1");
  if (cfg.dataset.val_count < 1) ck.fail("dataset.val_count must be >= 1");

  // --- train ---
  json tr = root.value("train", json::object());
  if (!tr.is_object()) {
    ck.fail("'train' must be an object");
    tr = json::object();
  }
  ck.check_keys(tr, "train.",
                {"mode", "cycle", "fin_encoding", "epochs", "batch_size", "seed", "lr",
                 "base_channels", "w_adv", "w_model", "w_phi", "w_idt", "w_reg", "w_cyc",
                 "lambda_edit", "ablation", "share_encdec", "share_drb", "checkpoint_every"});

  Manifold task_m = task_manifold(cfg.dataset.task);
  std::string fin_enc = ck.get<std::string>(tr, "train.", "fin_encoding", "auto");
  if (fin_enc == "auto") {
    cfg.train.manifold = task_m;
  } else if (fin_enc == "linear") {
    cfg.train.manifold = Manifold::Linear;
  } else if (fin_enc == "cyclic") {
    if (task_m != Manifold::Cyclic)
      ck.fail("train.fin_encoding 'cyclic' requires a cyclic task");
    cfg.train.manifold = Manifold::Cyclic;
  } else {
    ck.fail("train.fin_encoding must be auto|linear|cyclic");
  }

  std::string mode_str = ck.get<std::string>(tr, "train.", "mode", "auto");
  if (mode_str == "auto") {
    if (cfg.dataset.task == ToyTask::DigitsConfusion)
      cfg.train.mode = TrainMode::Confusion;
    else if (cfg.dataset.task == ToyTask::ToyFog)
      cfg.train.mode = TrainMode::Detached;
    else
      cfg.train.mode = TrainMode::Attached;
  } else {
    try {
      cfg.train.mode = train_mode_from_name(mode_str);
    } catch (const ConfigError& e) {
      ck.fail(e.what());
    }
  }
  if (cfg.dataset.task == ToyTask::DigitsConfusion && cfg.train.mode != TrainMode::Confusion)
    ck.fail("digits_confusion requires train.mode = confusion");

  std::string cycle_str = ck.get<std::string>(tr, "train.", "cycle", "auto");
  if (cycle_str == "auto") {
    cfg.train.cycle =
        cfg.dataset.task == ToyTask::ToyTimelapse && cfg.train.mode == TrainMode::Attached;
  } else if (cycle_str == "on") {
    cfg.train.cycle = true;
  } else if (cycle_str == "off") {
    cfg.train.cycle = false;
  } else {
    ck.fail("train.cycle must be auto|on|off");
  }

  std::string abl_str = ck.get<std::string>(tr, "train.", "ablation", "none");
  try {
    cfg.train.ablation = ablation_from_name(abl_str);
  } catch (const ConfigError& e) {
    ck.fail(e.what());
  }

  cfg.train.epochs = ck.get<int>(tr, "train.", "epochs", 20);
  cfg.train.batch_size = ck.get<int>(tr, "train.", "batch_size", 16);
  cfg.train.seed = ck.get<unsigned>(tr, "train.", "seed", 1);
  cfg.train.lr = ck.get<double>(tr, "train.", "lr", 2e-4);
  cfg.train.base_channels = ck.get<int>(tr, "train.", "base_channels", 32);
  cfg.train.image_size = cfg.dataset.resolved_size();
  cfg.train.w.adv = ck.get<double>(tr, "train.", "w_adv", 1.0);
  bool edit_only = cfg.train.ablation == Ablation::EditOnly;
  cfg.train.w.model = ck.get<double>(tr, "train.", "w_model", edit_only ? 0.0 : 10.0);
  cfg.train.w.phi = ck.get<double>(tr, "train.", "w_phi", edit_only ? 0.0 : 1.0);
  cfg.train.w.idt = ck.get<double>(
      tr, "train.", "w_idt", cfg.train.mode == TrainMode::Confusion ? 0.0 : 5.0);
  cfg.train.w.reg = ck.get<double>(tr, "train.", "w_reg", 1.0);
  cfg.train.w.cyc = ck.get<double>(tr, "train.", "w_cyc", 10.0);
  cfg.train.w.lambda_edit = ck.get<double>(tr, "train.", "lambda_edit", edit_only ? 1.0 : 0.0);
  cfg.train.share_encdec = ck.get<bool>(tr, "train.", "share_encdec", true);
  cfg.train.share_drb = ck.get<bool>(tr, "train.", "share_drb", true);
  cfg.checkpoint_every = ck.get<int>(tr, "train.", "checkpoint_every", 0);

  // --- eval ---
  json ev = root.value("eval", json::object());
  if (!ev.is_object()) {
    ck.fail("'eval' must be an object");
    ev = json::object();
  }
  ck.check_keys(ev, "eval.",
                {"bins", "per_bin", "diversity_pairs", "diversity_images", "extractor_epochs",
                 "seed"});
  cfg.eval.bins = ck.get<int>(ev, "eval.", "bins", 20);
  cfg.eval.per_bin = ck.get<int>(ev, "eval.", "per_bin", 64);
  cfg.eval.diversity_pairs = ck.get<int>(ev, "eval.", "diversity_pairs", 10);
  cfg.eval.diversity_images = ck.get<int>(ev, "eval.", "diversity_images", 100);
  cfg.eval.extractor_epochs = ck.get<int>(ev, "eval.", "extractor_epochs", 3);
  cfg.eval.seed = ck.get<unsigned>(ev, "eval.", "seed", 7);

  try {
    cfg.train.validate();
  } catch (const ConfigError& e) {
    ck.fail(e.what());
  }
  ck.finish();

  Fnv1a h;
  h.update_string(resolved_config_json(cfg));
  cfg.hash = hex64(h.digest());
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  return parse_run_config(read_text_file(path));
}

std::string resolved_config_json(const RunConfig& cfg) {
  json j;
  j["out_dir"] = cfg.out_dir;
  j["dataset"]["task"] = task_name(cfg.dataset.task);
  j["dataset"]["train_count"] = cfg.dataset.train_count;
  j["dataset"]["val_count"] = cfg.dataset.val_count;
  j["dataset"]["image_size"] = cfg.dataset.resolved_size();
  j["dataset"]["seed"] = cfg.dataset.seed;
  j["dataset"]["data_dir"] = cfg.data_dir;
  j["train"]["mode"] = train_mode_name(cfg.train.mode);
  j["train"]["cycle"] = cfg.train.cycle;
  j["train"]["fin_encoding"] = manifold_name(cfg.train.manifold);
  j["train"]["epochs"] = cfg.train.epochs;
  j["train"]["batch_size"] = cfg.train.batch_size;
  j["train"]["seed"] = cfg.train.seed;
  j["train"]["lr"] = cfg.train.lr;
  j["train"]["base_channels"] = cfg.train.base_channels;
  j["train"]["w_adv"] = cfg.train.w.adv;
  j["train"]["w_model"] = cfg.train.w.model;
  j["train"]["w_phi"] = cfg.train.w.phi;
  j["train"]["w_idt"] = cfg.train.w.idt;
  j["train"]["w_reg"] = cfg.train.w.reg;
  j["train"]["w_cyc"] = cfg.train.w.cyc;
  j["train"]["lambda_edit"] = cfg.train.w.lambda_edit;
  j["train"]["ablation"] = ablation_name(cfg.train.ablation);
  j["train"]["share_encdec"] = cfg.train.share_encdec;
  j["train"]["share_drb"] = cfg.train.share_drb;
  j["train"]["checkpoint_every"] = cfg.checkpoint_every;
  j["eval"]["bins"] = cfg.eval.bins;
  j["eval"]["per_bin"] = cfg.eval.per_bin;
  j["eval"]["diversity_pairs"] = cfg.eval.diversity_pairs;
  j["eval"]["diversity_images"] = cfg.eval.diversity_images;
  j["eval"]["extractor_epochs"] = cfg.eval.extractor_epochs;
  j["eval"]["seed"] = cfg.eval.seed;
  return j.dump(2);
}

}  // namespace como
