#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "como/checkpoint.hpp"
#include "como/config.hpp"
#include "como/data.hpp"
#include "como/errors.hpp"
#include "como/eval.hpp"
#include "como/guidance.hpp"
#include "como/io.hpp"
#include "como/networks.hpp"
#include "como/trainer.hpp"

namespace fs = std::filesystem;
using namespace como;

namespace {

PhiValue parse_phi(double v, Manifold m) {
  try {
    return PhiValue(v, m);
  } catch (const ContractError& e) {
    throw ConfigError(std::string("bad phi value: ") + e.what());
  }
}

Tensor load_input_image(const std::string& path) {
  Tensor img = read_png(path);
  if (img.dim(1) % 8 != 0 || img.dim(2) % 8 != 0)
    throw ConfigError("input image extents must be multiples of 8, got " +
                      shape_str(img.shape()));
  return img;
}

TranslateFn bundle_translate_fn(GeneratorBundle& bundle) {
  return [&bundle](const Tensor& x, const PhiValue& phi) {
    NoGradGuard ng;
    return bundle.translate(x, phi).y_phi;
  };
}

std::vector<PhiValue> sweep_phis(Manifold m, int k) {
  std::vector<PhiValue> out;
  if (m == Manifold::Linear) {
    for (int i = 0; i < k; ++i)
      out.push_back(PhiValue::linear(k == 1 ? 0.0 : static_cast<double>(i) / (k - 1)));
  } else {
    for (int i = 0; i < k; ++i) out.push_back(PhiValue::cyclic(kTwoPi * i / k));
  }
  return out;
}

int cmd_gen(const std::string& task, const std::string& out, unsigned seed, int count,
            int val_count, int size) {
  DatasetSpec spec;
  spec.task = task_from_name(task);
  spec.train_count = count;
  spec.val_count = val_count;
  spec.image_size = size;
  spec.seed = seed;
  Dataset ds = generate_dataset(spec);
  save_dataset(ds, out);
  std::cout << "dataset " << task_name(spec.task) << " -> " << out << " (train " << count
            << "/side, val " << val_count << ", size " << spec.resolved_size() << ", digest "
            << hex64(dataset_digest(ds)) << ")\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_override,
              const std::string& resume) {
  RunConfig cfg = load_run_config(config_path);
  std::string out_dir = out_override.empty() ? cfg.out_dir : out_override;
  fs::create_directories(out_dir);

  Dataset ds = cfg.data_dir.empty() ? generate_dataset(cfg.dataset) : load_dataset(cfg.data_dir);
  if (ds.spec.resolved_size() != cfg.train.image_size)
    throw ConfigError("dataset image size " + std::to_string(ds.spec.resolved_size()) +
                      " does not match config train size " + std::to_string(cfg.train.image_size));

  Trainer trainer(cfg.train, cfg.guidance());
  if (!resume.empty()) {
    LoadedCheckpoint ck = load_checkpoint(resume);
    auto params = trainer.bundle().all_params();
    auto loaded = ck.bundle->all_params();
    if (params.size() != loaded.size())
      throw ConfigError("resume checkpoint structure does not match config");
    for (size_t i = 0; i < params.size(); ++i) {
      if (params[i]->name != loaded[i]->name ||
          params[i]->value.shape() != loaded[i]->value.shape())
        throw ConfigError("resume checkpoint parameter mismatch at " + params[i]->name);
      params[i]->value.mutable_data() = loaded[i]->value.data();
    }
  }

  write_text_file((fs::path(out_dir) / "config_resolved.json").string(),
                  resolved_config_json(cfg));

  std::vector<TrainItem> source = ds.confusion() ? ds.train_view(Domain::Target)
                                                 : ds.train_view(Domain::Source);
  std::vector<TrainItem> target = ds.train_view(Domain::Target);

  std::ofstream csv((fs::path(out_dir) / "metrics.csv").string());
  if (!csv) throw IoError("cannot open metrics.csv under " + out_dir);
  csv << metrics_csv_header() << "\n";

  CheckpointMeta meta;
  meta.config_hash = cfg.hash;
  meta.task = task_name(cfg.dataset.task);
  meta.guidance_kind = cfg.guidance().kind;
  meta.bundle.manifold = cfg.train.manifold;
  meta.bundle.base_channels = cfg.train.base_channels;
  meta.bundle.image_size = cfg.train.image_size;
  meta.bundle.cycle = cfg.train.cycle;
  meta.bundle.share_encdec = cfg.train.share_encdec;
  meta.bundle.share_drb = cfg.train.share_drb;

  for (int e = 0; e < cfg.train.epochs; ++e) {
    MetricsRow row = trainer.train_epoch(source, target);
    csv << metrics_csv_line(row) << "\n";
    csv.flush();
    std::cout << "epoch " << (e + 1) << "/" << cfg.train.epochs << " "
              << metrics_csv_line(row) << std::endl;
    if (cfg.checkpoint_every > 0 && (e + 1) % cfg.checkpoint_every == 0 &&
        e + 1 < cfg.train.epochs) {
      meta.step = trainer.step();
      save_checkpoint((fs::path(out_dir) / ("ckpt_epoch_" + std::to_string(e + 1))).string(),
                      trainer.bundle(), meta);
    }
  }
  meta.step = trainer.step();
  save_checkpoint((fs::path(out_dir) / "ckpt_final").string(), trainer.bundle(), meta);
  std::cout << "checkpoint -> " << (fs::path(out_dir) / "ckpt_final").string() << " (hash "
            << cfg.hash << ")\n";
  return 0;
}

int cmd_translate(const std::string& ckpt, const std::string& input, double phi, bool has_phi,
                  double rel, bool has_rel, int sweep, const std::string& out) {
  int modes = (has_phi ? 1 : 0) + (has_rel ? 1 : 0) + (sweep > 0 ? 1 : 0);
  if (modes != 1) throw ConfigError("exactly one of --phi, --relative, --sweep is required");
  LoadedCheckpoint ck = load_checkpoint(ckpt);
  GeneratorBundle& bundle = *ck.bundle;
  Tensor x = load_input_image(input);

  if (sweep > 0) {
    emit_strip(bundle_translate_fn(bundle), x, sweep_phis(bundle.cfg.manifold, sweep), out);
  } else if (has_phi) {
    PhiValue p = parse_phi(phi, bundle.cfg.manifold);
    NoGradGuard ng;
    Tensor y = bundle.translate(make_batch({&x}), p).y_phi;
    write_png(out, slice_batch(y, 0));
  } else {
    if (!bundle.cfg.cycle)
      throw ConfigError("--relative requires a checkpoint trained in cycle mode");
    Tensor y = translate_agnostic(bundle, make_batch({&x}), AgnosticTarget::relative(rel));
    write_png(out, slice_batch(y, 0));
  }
  std::cout << "translated " << input << " -> " << out << "\n";
  return 0;
}

int cmd_guide(const std::string& model, const std::string& input, double phi,
              const std::string& out, const std::string& depth_path) {
  GuidanceModel gm = GuidanceModel::make(guidance_kind_from_name(model));
  Tensor x = read_png(input);
  PhiValue p = parse_phi(phi, gm.manifold);
  Tensor depth;
  if (gm.kind == GuidanceKind::Fog) {
    if (!depth_path.empty()) {
      depth = read_cmt1_file(depth_path);
    } else {
      // Default synthetic depth: linear row gradient, 80 m (top) to 5 m.
      int H = x.dim(1), W = x.dim(2);
      std::vector<float> d(static_cast<size_t>(H) * W);
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx)
          d[static_cast<size_t>(y) * W + xx] =
              static_cast<float>(80.0 - 75.0 * (static_cast<double>(y) / (H - 1)));
      depth = Tensor::from_data({1, H, W}, std::move(d));
    }
  }
  Tensor y = gm.apply(x, p, depth.defined() ? &depth : nullptr);
  write_png(out, y);
  std::cout << "guided " << input << " (" << model << ", phi " << phi << ") -> " << out << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& dataset_dir, const std::string& metrics,
             const std::string& out, unsigned seed, int bins, int per_bin, int extractor_epochs,
             int pairs, int images) {
  LoadedCheckpoint ck = load_checkpoint(ckpt);
  GeneratorBundle& bundle = *ck.bundle;
  Dataset ds = load_dataset(dataset_dir);
  if (ds.manifold() != bundle.cfg.manifold)
    throw ConfigError("checkpoint manifold does not match dataset manifold");
  if (ds.spec.resolved_size() != bundle.cfg.image_size)
    throw ConfigError("dataset image size does not match checkpoint image size");

  std::string run_dir =
      (fs::path(out) / ("eval_" + ck.meta.config_hash.substr(0, 8))).string();
  fs::create_directories(run_dir);

  std::set<std::string> wanted;
  std::stringstream ss(metrics);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item != "manifold" && item != "rolling" && item != "diversity" && item != "dual")
      throw ConfigError("unknown metric '" + item + "' (manifold|rolling|diversity|dual)");
    wanted.insert(item);
  }
  if (wanted.empty()) throw ConfigError("no metrics requested");

  nlohmann::json report;
  report["checkpoint"] = ckpt;
  report["config_hash"] = ck.meta.config_hash;
  report["dataset"] = dataset_dir;
  report["extractor"] = "toy conv extractor (domain+phi-bin), substitute for Inception";
  report["extractor_seed"] = seed;

  TranslateFn tf = bundle_translate_fn(bundle);
  const std::vector<Sample>& sources = ds.confusion() ? ds.val_target : ds.val_source;

  FeatureExtractor fe;
  bool need_fe = wanted.count("rolling") || wanted.count("diversity") || wanted.count("dual");
  if (need_fe) fe = FeatureExtractor::train(ds, extractor_epochs, seed);

  if (wanted.count("manifold")) {
    auto [mean, stdev] = manifold_error(bundle.phineta, ds.val_target);
    std::ostringstream os;
    os << "# manifold-organization error via the bundle's phi regressor\n";
    os << "mean,std,range\n";
    os << mean << ',' << stdev << ',' << (ds.manifold() == Manifold::Cyclic ? kTwoPi : 1.0)
       << "\n";
    write_text_file((fs::path(run_dir) / "manifold.csv").string(), os.str());
    report["manifold_mean"] = mean;
    report["manifold_std"] = stdev;
  }
  BinSpec bs{ds.manifold(), bins};
  if (wanted.count("rolling")) {
    RollingResult r = rolling_frechet(tf, fe, bs, sources, ds.val_target, per_bin);
    write_rolling_csv(r, (fs::path(run_dir) / "rolling.csv").string(),
                      "rolling Frechet distance vs real target bins");
    write_rolling_plot({r}, {"real"}, (fs::path(run_dir) / "rolling.png").string());
    report["rolling_mean"] = r.mean;
  }
  if (wanted.count("diversity")) {
    std::mt19937 rng(seed);
    double score = diversity_score(tf, fe, ds.val_target, pairs, images, rng);
    std::ostringstream os;
    os << "# diversity proxy: mean feature L2 between translations at random phi pairs\n";
    os << "pairs,images,score\n" << pairs << ',' << images << ',' << score << "\n";
    write_text_file((fs::path(run_dir) / "diversity.csv").string(), os.str());
    report["diversity"] = score;
  }
  if (wanted.count("dual")) {
    GuidanceModel gm = task_guidance(ds.spec.task, bundle.cfg.manifold);
    DualResult dr = dual_distance(tf, gm, fe, bs, sources, ds.val_target, per_bin);
    write_rolling_csv(dr.real_fd, (fs::path(run_dir) / "dual_real.csv").string(),
                      "generator vs real target set");
    write_rolling_csv(dr.model_fd, (fs::path(run_dir) / "dual_model.csv").string(),
                      "generator vs guidance-model outputs");
    write_rolling_plot({dr.real_fd, dr.model_fd}, {"real", "model"},
                       (fs::path(run_dir) / "dual.png").string());
    report["dual_real_mean"] = dr.real_fd.mean;
    report["dual_model_mean"] = dr.model_fd.mean;
  }
  write_text_file((fs::path(run_dir) / "report.json").string(), report.dump(2));
  std::cout << "eval -> " << run_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"continuous model-guided image translation toolkit"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a procedural toy dataset");
  std::string gen_task = "digits_brightness", gen_out = "dataset";
  unsigned gen_seed = 1;
  int gen_count = 2000, gen_val = 500, gen_size = 0;
  gen->add_option("--task", gen_task,
                  "task: toy_timelapse|toy_blur|toy_fog|digits_brightness|digits_redness|"
                  "digits_confusion")
      ->capture_default_str();
  gen->add_option("--out", gen_out, "output dataset directory")->capture_default_str();
  gen->add_option("--seed", gen_seed, "generation seed")->capture_default_str();
  gen->add_option("--count", gen_count, "train samples per side")->capture_default_str();
  gen->add_option("--val-count", gen_val, "validation samples per side")->capture_default_str();
  gen->add_option("--size", gen_size, "image size (0 = task default)")->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "train from a JSON run config");
  std::string train_config, train_out, train_resume;
  train->add_option("--config", train_config, "JSON run config path")->required();
  train->add_option("--out", train_out, "output directory (overrides config out_dir)")
      ->capture_default_str();
  train->add_option("--resume", train_resume, "checkpoint directory to resume weights from")
      ->capture_default_str();

  // translate
  auto* tr = app.add_subcommand("translate", "translate an image with a trained checkpoint");
  std::string tr_ckpt, tr_input, tr_out = "translated.png";
  double tr_phi = 0.0, tr_rel = 0.0;
  int tr_sweep = 0;
  bool has_phi = false, has_rel = false;
  tr->add_option("--ckpt", tr_ckpt, "checkpoint directory")->required();
  tr->add_option("--input", tr_input, "input PNG")->required();
  auto* phi_opt = tr->add_option("--phi", tr_phi, "absolute phi on the checkpoint manifold");
  auto* rel_opt =
      tr->add_option("--relative", tr_rel, "relative phi shift from the estimated input phi");
  tr->add_option("--sweep", tr_sweep, "emit a strip of K uniformly spaced translations")
      ->capture_default_str();
  tr->add_option("--out", tr_out, "output PNG")->capture_default_str();

  // guide
  auto* gd = app.add_subcommand("guide", "apply a closed-form guidance model to a PNG");
  std::string gd_model = "blur", gd_input, gd_out = "guided.png", gd_depth;
  double gd_phi = 0.0;
  gd->add_option("--model", gd_model, "timelapse|blur|fog|brightness|redness")
      ->capture_default_str();
  gd->add_option("--input", gd_input, "input PNG")->required();
  gd->add_option("--phi", gd_phi, "phi value (cyclic radians for timelapse, else [0,1])")
      ->capture_default_str();
  gd->add_option("--out", gd_out, "output PNG")->capture_default_str();
  gd->add_option("--depth", gd_depth, "CMT1 depth map for fog (default: synthetic gradient)")
      ->capture_default_str();

  // eval
  auto* ev = app.add_subcommand("eval", "run quantitative evaluation on a checkpoint");
  std::string ev_ckpt, ev_dataset, ev_metrics = "manifold,rolling,diversity,dual",
              ev_out = "eval";
  unsigned ev_seed = 7;
  int ev_bins = 20, ev_per_bin = 64, ev_ext_epochs = 3, ev_pairs = 10, ev_images = 100;
  ev->add_option("--ckpt", ev_ckpt, "checkpoint directory")->required();
  ev->add_option("--dataset", ev_dataset, "dataset directory")->required();
  ev->add_option("--metrics", ev_metrics, "comma list: manifold,rolling,diversity,dual")
      ->capture_default_str();
  ev->add_option("--out", ev_out, "output directory")->capture_default_str();
  ev->add_option("--seed", ev_seed, "feature-extractor training seed")->capture_default_str();
  ev->add_option("--bins", ev_bins, "rolling bin count")->capture_default_str();
  ev->add_option("--per-bin", ev_per_bin, "translations per bin")->capture_default_str();
  ev->add_option("--extractor-epochs", ev_ext_epochs, "feature-extractor epochs")
      ->capture_default_str();
  ev->add_option("--pairs", ev_pairs, "diversity phi pairs")->capture_default_str();
  ev->add_option("--images", ev_images, "diversity image count")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed())
      return cmd_gen(gen_task, gen_out, gen_seed, gen_count, gen_val, gen_size);
    if (train->parsed()) return cmd_train(train_config, train_out, train_resume);
    if (tr->parsed()) {
      has_phi = phi_opt->count() > 0;
      has_rel = rel_opt->count() > 0;
      return cmd_translate(tr_ckpt, tr_input, tr_phi, has_phi, tr_rel, has_rel, tr_sweep, tr_out);
    }
    if (gd->parsed()) return cmd_guide(gd_model, gd_input, gd_phi, gd_out, gd_depth);
    if (ev->parsed())
      return cmd_eval(ev_ckpt, ev_dataset, ev_metrics, ev_out, ev_seed, ev_bins, ev_per_bin,
                      ev_ext_epochs, ev_pairs, ev_images);
  } catch (const ConfigError& e) {
    std::cerr << "error: config: " << e.what() << std::endl;
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: io: " << e.what() << std::endl;
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "error: numeric: " << e.what() << std::endl;
    return 4;
  } catch (const ContractError& e) {
    std::cerr << "error: config: " << e.what() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
