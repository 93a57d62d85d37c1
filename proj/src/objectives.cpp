#include "como/objectives.hpp"

#include <sstream>

#include "como/errors.hpp"

namespace como {

const char* train_mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::Attached: return "attached";
    case TrainMode::Detached: return "detached";
    case TrainMode::Confusion: return "confusion";
  }
  return "?";
}

TrainMode train_mode_from_name(const std::string& s) {
  if (s == "attached") return TrainMode::Attached;
  if (s == "detached") return TrainMode::Detached;
  if (s == "confusion") return TrainMode::Confusion;
  throw ConfigError("unknown train mode: " + s);
}

const char* ablation_name(Ablation a) {
  switch (a) {
    case Ablation::None: return "none";
    case Ablation::NoLM: return "no_lm";
    case Ablation::NoLphi: return "no_lphi";
    case Ablation::EditOnly: return "edit_only";
  }
  return "?";
}

Ablation ablation_from_name(const std::string& s) {
  if (s == "none") return Ablation::None;
  if (s == "no_lm") return Ablation::NoLM;
  if (s == "no_lphi") return Ablation::NoLphi;
  if (s == "edit_only") return Ablation::EditOnly;
  throw ConfigError("unknown ablation: " + s);
}

void TrainConfig::validate() const {
  std::vector<std::string> problems;
  if (epochs < 0) problems.push_back("epochs must be >= 0");
  if (batch_size < 1) problems.push_back("batch_size must be >= 1");
  if (image_size < 8 || image_size % 8 != 0)
    problems.push_back("image_size must be a positive multiple of 8");
  if (lr < 0) problems.push_back("lr must be >= 0");
  if (w.adv < 0 || w.model < 0 || w.phi < 0 || w.idt < 0 || w.reg < 0 || w.cyc < 0 ||
      w.lambda_edit < 0)
    problems.push_back("loss weights must be >= 0");
  if (ablation == Ablation::EditOnly) {
    if (w.model != 0.0) problems.push_back("edit_only requires w_model = 0");
    if (w.phi != 0.0) problems.push_back("edit_only requires w_phi = 0");
    if (w.lambda_edit <= 0.0) problems.push_back("edit_only requires lambda_edit > 0");
  } else if (w.lambda_edit != 0.0) {
    problems.push_back("lambda_edit is only meaningful with the edit_only ablation");
  }
  if (mode == TrainMode::Attached && ablation != Ablation::EditOnly && w.idt <= 0.0)
    problems.push_back("attached mode requires w_idt > 0 (source identity term)");
  if (mode == TrainMode::Confusion && w.idt != 0.0)
    problems.push_back("confusion mode has no fixed phi0 identity term; set w_idt = 0");
  if (!problems.empty()) {
    std::ostringstream os;
    os << "invalid train config:";
    for (const auto& p : problems) os << " [" << p << "]";
    throw ConfigError(os.str());
  }
}

}  // namespace como
