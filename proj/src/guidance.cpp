#include "como/guidance.hpp"

#include <cmath>
#include <vector>

#include "como/errors.hpp"

namespace como {

const char* guidance_kind_name(GuidanceKind k) {
  switch (k) {
    case GuidanceKind::Timelapse: return "timelapse";
    case GuidanceKind::Blur: return "blur";
    case GuidanceKind::Fog: return "fog";
    case GuidanceKind::Brightness: return "brightness";
    case GuidanceKind::Redness: return "redness";
  }
  return "?";
}

GuidanceKind guidance_kind_from_name(const std::string& name) {
  if (name == "timelapse") return GuidanceKind::Timelapse;
  if (name == "blur") return GuidanceKind::Blur;
  if (name == "fog") return GuidanceKind::Fog;
  if (name == "brightness") return GuidanceKind::Brightness;
  if (name == "redness") return GuidanceKind::Redness;
  throw ConfigError("unknown guidance model: " + name);
}

namespace {

void check_image(const Tensor& x, const char* who) {
  if (x.rank() != 3 || x.dim(0) != 3)
    throw DimensionError(std::string(who) + " expects a (3,H,W) image, got " +
                         shape_str(x.shape()));
}

inline float clamp01(double v) {
  if (v < 0.0) v = 0.0;
  if (v > 1.0) v = 1.0;
  return static_cast<float>(v);
}

// Symmetric (edge-repeating) reflection: the even periodic extension of the
// signal, which preserves total mass under normalized symmetric kernels.
inline int reflect_index(int j, int n) {
  int period = 2 * n;
  j %= period;
  if (j < 0) j += period;
  return j < n ? j : period - 1 - j;
}

}  // namespace

Tensor guide_timelapse(const Tensor& x, const PhiValue& phi, const GuidanceParams& p) {
  check_image(x, "guide_timelapse");
  if (phi.manifold != Manifold::Cyclic)
    throw ContractError("guide_timelapse expects a cyclic phi");
  double theta = phi.value;
  double c = std::cos(theta), s = std::sin(theta);
  double a = (1.0 - c) / 2.0;
  double e = p.exposure_floor + (1.0 - p.exposure_floor) * (1.0 + c) / 2.0;
  double sky[3], corr[3];
  for (int ch = 0; ch < 3; ++ch) sky[ch] = (1.0 - a) + a * p.night_rgb[ch];
  corr[0] = p.hue_kappa * s;
  corr[1] = 0.0;
  corr[2] = -p.hue_kappa * s;

  int H = x.dim(1), W = x.dim(2);
  long hw = static_cast<long>(H) * W;
  std::vector<float> out(static_cast<size_t>(3 * hw));
  const float* in = x.data().data();
  for (int ch = 0; ch < 3; ++ch) {
    double tone = (sky[ch] + corr[ch]) * e;
    const float* src = in + static_cast<long>(ch) * hw;
    float* dst = out.data() + static_cast<long>(ch) * hw;
    for (long i = 0; i < hw; ++i) {
      double v = static_cast<double>(src[i]);
      dst[i] = clamp01((1.0 - a) * v + a * v * tone + corr[ch]);
    }
  }
  return Tensor::from_data(x.shape(), std::move(out));
}

Tensor guide_blur(const Tensor& x, const PhiValue& phi, const GuidanceParams& p) {
  check_image(x, "guide_blur");
  if (phi.manifold != Manifold::Linear)
    throw ContractError("guide_blur expects a linear phi");
  double sigma = p.sigma_max * phi.value;
  if (sigma <= 0.0) return Tensor::from_data(x.shape(), x.data());
  int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    double w = std::exp(-0.5 * (static_cast<double>(i) * i) / (sigma * sigma));
    kernel[static_cast<size_t>(i + radius)] = w;
    sum += w;
  }
  for (auto& w : kernel) w /= sum;

  int H = x.dim(1), W = x.dim(2);
  long hw = static_cast<long>(H) * W;
  std::vector<double> tmp(static_cast<size_t>(hw));
  std::vector<double> tmp2(static_cast<size_t>(hw));
  std::vector<float> out(static_cast<size_t>(3 * hw));
  for (int ch = 0; ch < 3; ++ch) {
    const float* src = x.data().data() + static_cast<long>(ch) * hw;
    // horizontal
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t)
          acc += kernel[static_cast<size_t>(t + radius)] *
                 static_cast<double>(src[static_cast<long>(i) * W + reflect_index(j + t, W)]);
        tmp[static_cast<long>(i) * W + j] = acc;
      }
    // vertical
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t)
          acc += kernel[static_cast<size_t>(t + radius)] *
                 tmp[static_cast<long>(reflect_index(i + t, H)) * W + j];
        tmp2[static_cast<long>(i) * W + j] = acc;
      }
    float* dst = out.data() + static_cast<long>(ch) * hw;
    for (long i = 0; i < hw; ++i) dst[i] = clamp01(tmp2[static_cast<size_t>(i)]);
  }
  return Tensor::from_data(x.shape(), std::move(out));
}

Tensor guide_fog(const Tensor& x, const PhiValue& phi, const Tensor& depth,
                 const GuidanceParams& p) {
  check_image(x, "guide_fog");
  if (phi.manifold != Manifold::Linear) throw ContractError("guide_fog expects a linear phi");
  int H = x.dim(1), W = x.dim(2);
  if (!depth.defined() || depth.numel() != static_cast<long>(H) * W)
    throw ContractError("guide_fog requires a depth map matching the image extent");
  for (float d : depth.data())
    if (!(d > 0.0f)) throw ContractError("guide_fog: depth must be strictly positive");

  double beta = p.beta_max * phi.value;
  long hw = static_cast<long>(H) * W;
  std::vector<float> out(static_cast<size_t>(3 * hw));
  const float* in = x.data().data();
  const float* dp = depth.data().data();
  for (int ch = 0; ch < 3; ++ch) {
    const float* src = in + static_cast<long>(ch) * hw;
    float* dst = out.data() + static_cast<long>(ch) * hw;
    double A = p.airlight[ch];
    for (long i = 0; i < hw; ++i) {
      double t = std::exp(-beta * static_cast<double>(dp[i]));
      dst[i] = clamp01(static_cast<double>(src[i]) * t + A * (1.0 - t));
    }
  }
  return Tensor::from_data(x.shape(), std::move(out));
}

Tensor guide_brightness(const Tensor& x, const PhiValue& phi, const GuidanceParams& p) {
  check_image(x, "guide_brightness");
  if (phi.manifold != Manifold::Linear)
    throw ContractError("guide_brightness expects a linear phi");
  double k = 1.0 - p.brightness_strength * phi.value;
  std::vector<float> out(x.data().size());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = clamp01(static_cast<double>(x.data()[i]) * k);
  return Tensor::from_data(x.shape(), std::move(out));
}

Tensor guide_redness(const Tensor& x, const PhiValue& phi, const GuidanceParams& p) {
  check_image(x, "guide_redness");
  if (phi.manifold != Manifold::Linear)
    throw ContractError("guide_redness expects a linear phi");
  double t = phi.value;
  int H = x.dim(1), W = x.dim(2);
  long hw = static_cast<long>(H) * W;
  std::vector<float> out(x.data().size());
  const float* in = x.data().data();
  double target[3] = {1.0, p.redness_floor, p.redness_floor};
  for (int ch = 0; ch < 3; ++ch) {
    const float* src = in + static_cast<long>(ch) * hw;
    float* dst = out.data() + static_cast<long>(ch) * hw;
    for (long i = 0; i < hw; ++i)
      dst[i] = clamp01((1.0 - t) * static_cast<double>(src[i]) + t * target[ch]);
  }
  return Tensor::from_data(x.shape(), std::move(out));
}

GuidanceModel GuidanceModel::make(GuidanceKind kind) {
  return make(kind, kind == GuidanceKind::Timelapse ? Manifold::Cyclic : Manifold::Linear);
}

GuidanceModel GuidanceModel::make(GuidanceKind kind, Manifold manifold) {
  if (kind != GuidanceKind::Timelapse && manifold == Manifold::Cyclic)
    throw ContractError(std::string("guidance model ") + guidance_kind_name(kind) +
                        " is linear only");
  GuidanceModel m;
  m.kind = kind;
  m.manifold = manifold;
  return m;
}

Tensor GuidanceModel::apply(const Tensor& x, const PhiValue& phi, const Tensor* depth) const {
  if (phi.manifold != manifold)
    throw ContractError(std::string("guidance model ") + guidance_kind_name(kind) + " is " +
                        manifold_name(manifold) + " but phi is " + manifold_name(phi.manifold));
  NoGradGuard ng;
  switch (kind) {
    case GuidanceKind::Timelapse: {
      if (manifold == Manifold::Cyclic) return guide_timelapse(x, phi, params);
      // Folded linear coordinate: theta = arccos(1 - 2*phi) collapses the
      // dusk/dawn branches onto a single day-to-night segment.
      double theta = std::acos(1.0 - 2.0 * phi.value);
      return guide_timelapse(x, PhiValue::cyclic(theta), params);
    }
    case GuidanceKind::Blur:
      return guide_blur(x, phi, params);
    case GuidanceKind::Fog:
      if (!depth) throw ContractError("fog guidance requires a depth map");
      return guide_fog(x, phi, *depth, params);
    case GuidanceKind::Brightness:
      return guide_brightness(x, phi, params);
    case GuidanceKind::Redness:
      return guide_redness(x, phi, params);
  }
  throw ContractError("unreachable guidance kind");
}

}  // namespace como
