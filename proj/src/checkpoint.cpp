#include "como/checkpoint.hpp"

#include <filesystem>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "como/errors.hpp"
#include "como/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace como {

void save_checkpoint(const std::string& dir, GeneratorBundle& bundle,
                     const CheckpointMeta& meta) {
  fs::create_directories(dir);
  auto params = bundle.all_params();

  json manifest;
  manifest["step"] = meta.step;
  manifest["config_hash"] = meta.config_hash;
  manifest["task"] = meta.task;
  manifest["guidance"] = guidance_kind_name(meta.guidance_kind);
  manifest["manifold"] = manifold_name(meta.bundle.manifold);
  manifest["base_channels"] = meta.bundle.base_channels;
  manifest["image_size"] = meta.bundle.image_size;
  manifest["cycle"] = meta.bundle.cycle;
  manifest["share_encdec"] = meta.bundle.share_encdec;
  manifest["share_drb"] = meta.bundle.share_drb;
  json tensors = json::array();
  for (auto* p : params) {
    json t;
    t["name"] = p->name;
    t["shape"] = p->value.shape();
    tensors.push_back(std::move(t));
  }
  manifest["tensors"] = std::move(tensors);
  write_text_file((fs::path(dir) / "manifest.json").string(), manifest.dump(2));

  std::ofstream bin((fs::path(dir) / "tensors.bin").string(), std::ios::binary);
  if (!bin) throw IoError("cannot open " + dir + "/tensors.bin");
  for (auto* p : params) write_cmt1(bin, p->value);
}

LoadedCheckpoint load_checkpoint(const std::string& dir) {
  fs::path manifest_path = fs::path(dir) / "manifest.json";
  if (!fs::exists(manifest_path))
    throw IoError("missing checkpoint manifest: " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(read_text_file(manifest_path.string()));
  } catch (const json::exception& e) {
    throw IoError("corrupt checkpoint manifest " + manifest_path.string() + ": " + e.what());
  }

  LoadedCheckpoint out;
  try {
    out.meta.step = manifest.at("step").get<long>();
    out.meta.config_hash = manifest.at("config_hash").get<std::string>();
    out.meta.task = manifest.at("task").get<std::string>();
    out.meta.guidance_kind = guidance_kind_from_name(manifest.at("guidance").get<std::string>());
    std::string m = manifest.at("manifold").get<std::string>();
    out.meta.bundle.manifold = m == "cyclic" ? Manifold::Cyclic : Manifold::Linear;
    out.meta.bundle.base_channels = manifest.at("base_channels").get<int>();
    out.meta.bundle.image_size = manifest.at("image_size").get<int>();
    out.meta.bundle.cycle = manifest.at("cycle").get<bool>();
    out.meta.bundle.share_encdec = manifest.at("share_encdec").get<bool>();
    out.meta.bundle.share_drb = manifest.at("share_drb").get<bool>();
  } catch (const json::exception& e) {
    throw IoError("corrupt checkpoint manifest " + manifest_path.string() + ": " + e.what());
  }

  out.bundle = std::make_unique<GeneratorBundle>(out.meta.bundle);
  auto params = out.bundle->all_params();
  std::unordered_map<std::string, Param*> by_name;
  for (auto* p : params) by_name[p->name] = p;

  std::ifstream bin((fs::path(dir) / "tensors.bin").string(), std::ios::binary);
  if (!bin) throw IoError("missing checkpoint payload: " + dir + "/tensors.bin");
  for (const json& t : manifest.at("tensors")) {
    std::string name = t.at("name").get<std::string>();
    Tensor loaded = read_cmt1(bin, dir + "/tensors.bin[" + name + "]");
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw IoError("checkpoint tensor '" + name + "' has no matching parameter");
    if (loaded.shape() != it->second->value.shape())
      throw IoError("checkpoint tensor '" + name + "' shape " + shape_str(loaded.shape()) +
                    " != parameter shape " + shape_str(it->second->value.shape()));
    it->second->value.mutable_data() = loaded.data();
    by_name.erase(it);
  }
  if (!by_name.empty())
    throw IoError("checkpoint is missing " + std::to_string(by_name.size()) +
                  " parameters (first: " + by_name.begin()->first + ")");
  return out;
}

}  // namespace como
