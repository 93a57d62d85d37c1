#pragma once

#include <optional>
#include <string>

#include "como/phi.hpp"
#include "como/tensor.hpp"

namespace como {

// Closed-form guidance models M(x, phi): pure, non-learned, never part of the
// differentiation tape. Images are CHW float tensors with values in [0,1];
// outputs are clamped to [0,1]. Every model is the identity at its anchor
// phi0 = 0, bitwise.

enum class GuidanceKind { Timelapse, Blur, Fog, Brightness, Redness };

const char* guidance_kind_name(GuidanceKind k);
GuidanceKind guidance_kind_from_name(const std::string& name);

struct GuidanceParams {
  // timelapse
  double hue_kappa = 0.1;
  double night_rgb[3] = {0.15, 0.2, 0.35};
  double exposure_floor = 0.1;
  // blur
  double sigma_max = 4.0;
  // fog: beta_max such that phi=1 is 70 m visibility at the 2% contrast
  // threshold (-ln 0.02 = 3.912).
  double beta_max = 3.912 / 70.0;
  double airlight[3] = {0.8, 0.8, 0.82};
  // brightness / redness
  double brightness_strength = 0.9;
  double redness_floor = 0.2;
};

// Day-to-night tone mapping with sky-color blend and asymmetric hue shift:
//   M = (1-a)*x + a * x.(sky(phi)+corr(phi)) * e(phi) + corr(phi)
// with a = (1-cos phi)/2, e = 0.1 + 0.9*(1+cos phi)/2, sky a white-to-blue
// blend driven by a, corr = kappa*sin(phi)*(+R,-B) so dusk reddens and dawn
// goes purple-blue.
Tensor guide_timelapse(const Tensor& x, const PhiValue& phi, const GuidanceParams& p = {});

// Gaussian blur with sigma = sigma_max*phi, kernel radius ceil(3*sigma),
// normalized to sum 1, symmetric reflection at edges. phi = 0 returns x.
Tensor guide_blur(const Tensor& x, const PhiValue& phi, const GuidanceParams& p = {});

// Koschmieder fog: I = x*exp(-beta*d) + A*(1 - exp(-beta*d)); depth in
// meters, per pixel, strictly positive.
Tensor guide_fog(const Tensor& x, const PhiValue& phi, const Tensor& depth,
                 const GuidanceParams& p = {});

Tensor guide_brightness(const Tensor& x, const PhiValue& phi, const GuidanceParams& p = {});
Tensor guide_redness(const Tensor& x, const PhiValue& phi, const GuidanceParams& p = {});

// A guidance model instance: kind + manifold tag + anchor + parameters.
// A cyclic-native model (Timelapse) declared with a Linear tag operates on
// the folded coordinate theta = arccos(1 - 2*phi), which collapses the
// dusk/dawn branches onto one day-to-night segment.
struct GuidanceModel {
  GuidanceKind kind = GuidanceKind::Brightness;
  Manifold manifold = Manifold::Linear;
  GuidanceParams params;

  static GuidanceModel make(GuidanceKind kind);
  static GuidanceModel make(GuidanceKind kind, Manifold manifold);

  PhiValue anchor() const { return PhiValue(0.0, manifold); }

  // depth is required for Fog, ignored otherwise.
  Tensor apply(const Tensor& x, const PhiValue& phi, const Tensor* depth = nullptr) const;
};

}  // namespace como
