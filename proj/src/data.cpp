#include "como/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include <json.hpp>

#include "como/errors.hpp"
#include "como/font.hpp"
#include "como/io.hpp"
#include "como/threading.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace como {

const char* task_name(ToyTask t) {
  switch (t) {
    case ToyTask::ToyTimelapse: return "toy_timelapse";
    case ToyTask::ToyBlur: return "toy_blur";
    case ToyTask::ToyFog: return "toy_fog";
    case ToyTask::DigitsBrightness: return "digits_brightness";
    case ToyTask::DigitsRedness: return "digits_redness";
    case ToyTask::DigitsConfusion: return "digits_confusion";
  }
  return "?";
}

ToyTask task_from_name(const std::string& s) {
  for (ToyTask t : {ToyTask::ToyTimelapse, ToyTask::ToyBlur, ToyTask::ToyFog,
                    ToyTask::DigitsBrightness, ToyTask::DigitsRedness, ToyTask::DigitsConfusion})
    if (s == task_name(t)) return t;
  throw ConfigError("unknown task: " + s);
}

Manifold task_manifold(ToyTask t) {
  return t == ToyTask::ToyTimelapse ? Manifold::Cyclic : Manifold::Linear;
}

int task_default_size(ToyTask t) {
  switch (t) {
    case ToyTask::ToyTimelapse:
    case ToyTask::ToyBlur:
    case ToyTask::ToyFog:
      return 64;
    default:
      return 32;
  }
}

GuidanceModel task_guidance(ToyTask t, Manifold manifold) {
  switch (t) {
    case ToyTask::ToyTimelapse: return GuidanceModel::make(GuidanceKind::Timelapse, manifold);
    case ToyTask::ToyBlur: return GuidanceModel::make(GuidanceKind::Blur);
    case ToyTask::ToyFog: return GuidanceModel::make(GuidanceKind::Fog);
    case ToyTask::DigitsBrightness:
    case ToyTask::DigitsConfusion:
      return GuidanceModel::make(GuidanceKind::Brightness);
    case ToyTask::DigitsRedness: return GuidanceModel::make(GuidanceKind::Redness);
  }
  throw ContractError("unreachable task");
}

std::vector<TrainItem> Dataset::train_view(Domain d) const {
  const std::vector<Sample>& src = d == Domain::Source ? train_source : train_target;
  std::vector<TrainItem> out;
  out.reserve(src.size());
  for (const Sample& s : src)
    out.push_back({&s.image, s.depth.defined() ? &s.depth : nullptr, s.domain});
  return out;
}

namespace {

// ---------------------------------------------------------------------------
// Deterministic per-sample randomness
// ---------------------------------------------------------------------------

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::mt19937 sample_rng(unsigned base_seed, int split, int domain, long index) {
  uint64_t s = splitmix64((static_cast<uint64_t>(base_seed) << 32) ^
                          (static_cast<uint64_t>(split) << 60) ^
                          (static_cast<uint64_t>(domain) << 56) ^ static_cast<uint64_t>(index));
  return std::mt19937(static_cast<uint32_t>(s ^ (s >> 32)));
}

double urand(std::mt19937& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int irand(std::mt19937& rng, int lo, int hi) {  // inclusive
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// ---------------------------------------------------------------------------
// Canvas helpers
// ---------------------------------------------------------------------------

struct Canvas {
  int H, W;
  std::vector<float> px;  // (3,H,W)

  Canvas(int h, int w) : H(h), W(w), px(static_cast<size_t>(3) * h * w, 0.0f) {}

  float& at(int c, int y, int x) {
    return px[static_cast<size_t>(c) * H * W + static_cast<size_t>(y) * W + x];
  }

  void set(int y, int x, const double rgb[3]) {
    for (int c = 0; c < 3; ++c) at(c, y, x) = static_cast<float>(std::clamp(rgb[c], 0.0, 1.0));
  }

  void fill_rect(int y0, int x0, int y1, int x1, const double rgb[3]) {
    y0 = std::max(0, y0);
    x0 = std::max(0, x0);
    y1 = std::min(H, y1);
    x1 = std::min(W, x1);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) set(y, x, rgb);
  }

  void fill_disc(double cy, double cx, double r, const double rgb[3]) {
    int y0 = std::max(0, static_cast<int>(std::floor(cy - r)));
    int y1 = std::min(H, static_cast<int>(std::ceil(cy + r)) + 1);
    int x0 = std::max(0, static_cast<int>(std::floor(cx - r)));
    int x1 = std::min(W, static_cast<int>(std::ceil(cx + r)) + 1);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) {
        double d = std::hypot(y - cy, x - cx);
        if (d <= r) set(y, x, rgb);
      }
  }

  Tensor tensor() const { return Tensor::from_data({3, H, W}, px); }
};

// Two-octave value noise in [-1, 1], pure function of (seed, y, x).
struct ValueNoise {
  uint64_t seed;
  double cell;

  double lattice(long cy, long cx) const {
    uint64_t h = splitmix64(seed ^ (static_cast<uint64_t>(cy) * 0x5851f42d4c957f2dull) ^
                            (static_cast<uint64_t>(cx) + 0x14057b7ef767814full));
    return static_cast<double>(h >> 11) / static_cast<double>(1ull << 53) * 2.0 - 1.0;
  }

  double octave(double y, double x, double c) const {
    double fy = y / c, fx = x / c;
    long iy = static_cast<long>(std::floor(fy)), ix = static_cast<long>(std::floor(fx));
    double ty = fy - iy, tx = fx - ix;
    double a = lattice(iy, ix), b = lattice(iy, ix + 1);
    double d = lattice(iy + 1, ix), e = lattice(iy + 1, ix + 1);
    double top = a + (b - a) * tx;
    double bot = d + (e - d) * tx;
    return top + (bot - top) * ty;
  }

  double operator()(int y, int x) const {
    return 0.7 * octave(y, x, cell) + 0.3 * octave(y, x, cell / 2.0);
  }
};

void add_noise(Canvas& cv, const ValueNoise& vn, double amp) {
  for (int y = 0; y < cv.H; ++y)
    for (int x = 0; x < cv.W; ++x) {
      double n = vn(y, x) * amp;
      for (int c = 0; c < 3; ++c)
        cv.at(c, y, x) = static_cast<float>(std::clamp(cv.at(c, y, x) + n, 0.0, 1.0));
    }
}

void hsv_to_rgb(double h, double s, double v, double out[3]) {
  double c = v * s;
  double hp = h * 6.0;
  double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else { r = c; b = x; }
  out[0] = r + (v - c);
  out[1] = g + (v - c);
  out[2] = b + (v - c);
}

// ---------------------------------------------------------------------------
// Toy timelapse: sky, sun, ground, buildings; emissive windows are the
// private non-modeled feature, lit only when cos(phi) < -0.3.
// ---------------------------------------------------------------------------

struct WindowRect {
  int y0, x0, y1, x1;
};

Sample make_timelapse_sample(std::mt19937& rng, int size, Domain domain, double phi_star) {
  int H = size, W = size;
  Canvas cv(H, W);
  int horizon = static_cast<int>(0.55 * H);
  double c = std::cos(phi_star);

  double top[3] = {urand(rng, 0.36, 0.46), urand(rng, 0.58, 0.68), urand(rng, 0.88, 0.96)};
  double bot[3] = {0.78, 0.86, 0.97};
  for (int y = 0; y < horizon; ++y) {
    double t = static_cast<double>(y) / std::max(1, horizon - 1);
    double rgb[3];
    for (int ch = 0; ch < 3; ++ch) rgb[ch] = top[ch] + (bot[ch] - top[ch]) * t;
    for (int x = 0; x < W; ++x) cv.set(y, x, rgb);
  }
  double ground[3] = {0.34, 0.44, 0.30};
  cv.fill_rect(horizon, 0, H, W, ground);
  ValueNoise ground_noise{rng(), std::max(4.0, H / 8.0)};
  for (int y = horizon; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double n = ground_noise(y, x) * 0.05;
      for (int ch = 0; ch < 3; ++ch)
        cv.at(ch, y, x) = static_cast<float>(std::clamp(cv.at(ch, y, x) + n, 0.0, 1.0));
    }

  // Sun follows the manifold coordinate; only above the horizon by day.
  double sun_x = urand(rng, 0.15 * W, 0.85 * W);
  if (c > 0.02) {
    double sun_y = horizon - c * 0.45 * H;
    double sun[3] = {1.0, 0.96, 0.82};
    cv.fill_disc(sun_y, sun_x, H / 12.0, sun);
  }

  int nb = irand(rng, 2, 4);
  std::vector<WindowRect> windows;
  for (int b = 0; b < nb; ++b) {
    int bw = static_cast<int>(urand(rng, 0.10, 0.20) * W);
    int bh = static_cast<int>(urand(rng, 0.18, 0.38) * H);
    int bx = irand(rng, 0, std::max(1, W - bw - 1));
    int by = horizon - bh;
    double shade = urand(rng, 0.30, 0.52);
    double body[3] = {shade, shade * urand(rng, 0.92, 1.05), shade * urand(rng, 0.95, 1.1)};
    cv.fill_rect(by, bx, horizon, bx + bw, body);
    double dark[3] = {0.08, 0.08, 0.10};
    int wsz = std::max(2, bw / 5);
    for (int wy = 0; wy < 2; ++wy)
      for (int wx = 0; wx < 2; ++wx) {
        int y0 = by + 2 + wy * (bh / 2);
        int x0 = bx + 2 + wx * (bw / 2);
        int y1 = std::min(horizon - 1, y0 + wsz);
        int x1 = std::min(bx + bw - 1, x0 + wsz);
        if (y1 <= y0 || x1 <= x0) continue;
        cv.fill_rect(y0, x0, y1, x1, dark);
        windows.push_back({y0, x0, y1, x1});
      }
  }

  Tensor day = cv.tensor();
  Tensor img = guide_timelapse(day, PhiValue::cyclic(phi_star));

  if (c < -0.3) {
    // Emissive windows: present in the target data, absent from the model.
    Canvas lit(H, W);
    lit.px = img.data();
    double warm[3] = {1.0, 0.85, 0.45};
    for (const auto& w : windows) lit.fill_rect(w.y0, w.x0, w.y1, w.x1, warm);
    img = lit.tensor();
  }

  Sample s;
  s.image = img;
  s.gt_phi = PhiValue::cyclic(phi_star);
  s.domain = domain;
  return s;
}

// ---------------------------------------------------------------------------
// Toy blur: sharp flower-like blob scenes; targets carry a private vignette.
// ---------------------------------------------------------------------------

Tensor render_flowers(std::mt19937& rng, int size) {
  int H = size, W = size;
  Canvas cv(H, W);
  double top[3] = {0.74, 0.80, 0.70};
  double bot[3] = {0.90, 0.92, 0.86};
  for (int y = 0; y < H; ++y) {
    double t = static_cast<double>(y) / (H - 1);
    double rgb[3];
    for (int ch = 0; ch < 3; ++ch) rgb[ch] = top[ch] + (bot[ch] - top[ch]) * t;
    for (int x = 0; x < W; ++x) cv.set(y, x, rgb);
  }
  ValueNoise bg_noise{rng(), std::max(4.0, H / 6.0)};
  add_noise(cv, bg_noise, 0.03);

  int nf = irand(rng, 3, 6);
  for (int f = 0; f < nf; ++f) {
    double cy = urand(rng, 0.15 * H, 0.85 * H);
    double cx = urand(rng, 0.15 * W, 0.85 * W);
    double r = urand(rng, 0.06, 0.12) * H;
    double petal[3];
    hsv_to_rgb(urand(rng, 0.0, 1.0), 0.75, 0.9, petal);
    int np = irand(rng, 5, 7);
    double phase = urand(rng, 0.0, kTwoPi);
    for (int p = 0; p < np; ++p) {
      double a = phase + kTwoPi * p / np;
      cv.fill_disc(cy + std::sin(a) * 1.2 * r, cx + std::cos(a) * 1.2 * r, 0.8 * r, petal);
    }
    double core[3] = {0.95, 0.85, 0.20};
    cv.fill_disc(cy, cx, 0.55 * r, core);
  }
  return cv.tensor();
}

void apply_vignette(Tensor& img) {
  int H = img.dim(1), W = img.dim(2);
  long hw = static_cast<long>(H) * W;
  float* d = img.mutable_data().data();
  double cy = (H - 1) / 2.0, cx = (W - 1) / 2.0;
  double rmax = std::hypot(cy, cx);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double r = std::hypot(y - cy, x - cx) / rmax;
      float k = static_cast<float>(1.0 - 0.35 * r * r);
      for (int c = 0; c < 3; ++c) d[static_cast<long>(c) * hw + static_cast<long>(y) * W + x] *= k;
    }
}

Sample make_blur_sample(std::mt19937& rng, int size, Domain domain, double phi_star) {
  Tensor base = render_flowers(rng, size);
  Sample s;
  s.domain = domain;
  if (domain == Domain::Source) {
    s.image = base;
    s.gt_phi = PhiValue::linear(0.0);
  } else {
    Tensor blurred = guide_blur(base, PhiValue::linear(phi_star));
    apply_vignette(blurred);  // private non-modeled feature
    s.image = blurred;
    s.gt_phi = PhiValue::linear(phi_star);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Toy fog: detached styles (flat source vs textured target); targets are
// fogged over a linear-gradient depth map and carry a private gray cast.
// ---------------------------------------------------------------------------

Tensor fog_depth_map(int H, int W) {
  std::vector<float> d(static_cast<size_t>(H) * W);
  for (int y = 0; y < H; ++y) {
    float depth = static_cast<float>(80.0 - (80.0 - 5.0) * (static_cast<double>(y) / (H - 1)));
    for (int x = 0; x < W; ++x) d[static_cast<size_t>(y) * W + x] = depth;
  }
  return Tensor::from_data({1, H, W}, std::move(d));
}

Tensor render_fog_scene(std::mt19937& rng, int size, bool textured) {
  int H = size, W = size;
  Canvas cv(H, W);
  double sky[3] = {0.72, 0.78, 0.85};
  double ground[3] = {0.46, 0.43, 0.40};
  int horizon = static_cast<int>(0.40 * H);
  cv.fill_rect(0, 0, horizon, W, sky);
  cv.fill_rect(horizon, 0, H, W, ground);

  int nb = irand(rng, 3, 5);
  for (int b = 0; b < nb; ++b) {
    int bw = static_cast<int>(urand(rng, 0.08, 0.18) * W);
    int bh = static_cast<int>(urand(rng, 0.15, 0.40) * H);
    int bx = irand(rng, 0, std::max(1, W - bw - 1));
    int bottom = irand(rng, static_cast<int>(0.55 * H), H - 1);
    double rgb[3];
    hsv_to_rgb(urand(rng, 0.0, 1.0), 0.55, urand(rng, 0.5, 0.8), rgb);
    cv.fill_rect(bottom - bh, bx, bottom, bx + bw, rgb);
  }
  if (textured) {
    ValueNoise tex{rng(), std::max(3.0, H / 12.0)};
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double k = 1.0 + 0.15 * tex(y, x);
        for (int c = 0; c < 3; ++c)
          cv.at(c, y, x) = static_cast<float>(std::clamp(cv.at(c, y, x) * k, 0.0, 1.0));
      }
  }
  return cv.tensor();
}

Sample make_fog_sample(std::mt19937& rng, int size, Domain domain, double phi_star) {
  Sample s;
  s.domain = domain;
  s.depth = fog_depth_map(size, size);
  if (domain == Domain::Source) {
    s.image = render_fog_scene(rng, size, /*textured=*/false);
    s.gt_phi = PhiValue::linear(0.0);
  } else {
    Tensor base = render_fog_scene(rng, size, /*textured=*/true);
    // Private gray cast, applied before fogging so far pixels still converge
    // to the airlight exactly.
    float* d = base.mutable_data().data();
    for (size_t i = 0; i < base.data().size(); ++i)
      d[i] = 0.85f * d[i] + 0.15f * 0.5f;
    s.image = guide_fog(base, PhiValue::linear(phi_star), s.depth);
    s.gt_phi = PhiValue::linear(phi_star);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Digits: glyphs on textured backgrounds; target renders carry a private
// border frame the guidance model never produces.
// ---------------------------------------------------------------------------

Tensor render_digit(std::mt19937& rng, int size, bool with_border) {
  int H = size, W = size;
  Canvas cv(H, W);
  double base[3] = {urand(rng, 0.25, 0.55), urand(rng, 0.25, 0.55), urand(rng, 0.25, 0.55)};
  cv.fill_rect(0, 0, H, W, base);
  ValueNoise tex{rng(), std::max(3.0, H / 8.0)};
  add_noise(cv, tex, 0.12);

  int digit = irand(rng, 0, 9);
  double color[3];
  hsv_to_rgb(urand(rng, 0.0, 1.0), 0.85, 0.95, color);
  int scale = std::max(2, size / 11);
  int gw = 5 * scale, gh = 7 * scale;
  int x0 = (W - gw) / 2 + irand(rng, -3, 3);
  int y0 = (H - gh) / 2 + irand(rng, -3, 3);
  Tensor img = cv.tensor();
  draw_text(img, std::string(1, static_cast<char>('0' + digit)), x0, y0, scale,
            static_cast<float>(color[0]), static_cast<float>(color[1]),
            static_cast<float>(color[2]));
  if (with_border) {
    Canvas framed(H, W);
    framed.px = img.data();
    double frame[3] = {0.92, 0.20, 0.20};
    framed.fill_rect(0, 0, 1, W, frame);
    framed.fill_rect(H - 1, 0, H, W, frame);
    framed.fill_rect(0, 0, H, 1, frame);
    framed.fill_rect(0, W - 1, H, W, frame);
    img = framed.tensor();
  }
  return img;
}

Sample make_digits_sample(std::mt19937& rng, int size, Domain domain, double phi_star,
                          GuidanceKind kind, bool confusion) {
  Sample s;
  s.domain = domain;
  bool target_style = domain == Domain::Target || confusion;
  Tensor base = render_digit(rng, size, /*with_border=*/target_style);
  if (domain == Domain::Source) {
    s.image = base;
    s.gt_phi = PhiValue::linear(0.0);
  } else {
    PhiValue phi = PhiValue::linear(phi_star);
    s.image = kind == GuidanceKind::Redness ? guide_redness(base, phi)
                                            : guide_brightness(base, phi);
    s.gt_phi = phi;
  }
  return s;
}

Sample make_sample(const DatasetSpec& spec, int split, Domain domain, long index) {
  std::mt19937 rng = sample_rng(spec.seed, split, domain == Domain::Source ? 0 : 1, index);
  int size = spec.resolved_size();
  double u = urand(rng, 0.0, 1.0);
  switch (spec.task) {
    case ToyTask::ToyTimelapse: {
      double phi = domain == Domain::Source ? 0.0 : u * kTwoPi;
      if (phi >= kTwoPi) phi = 0.0;
      return make_timelapse_sample(rng, size, domain, phi);
    }
    case ToyTask::ToyBlur:
      return make_blur_sample(rng, size, domain, u);
    case ToyTask::ToyFog:
      return make_fog_sample(rng, size, domain, u);
    case ToyTask::DigitsBrightness:
      return make_digits_sample(rng, size, domain, domain == Domain::Source ? 0.0 : u,
                                GuidanceKind::Brightness, false);
    case ToyTask::DigitsRedness:
      return make_digits_sample(rng, size, domain, domain == Domain::Source ? 0.0 : u,
                                GuidanceKind::Redness, false);
    case ToyTask::DigitsConfusion:
      return make_digits_sample(rng, size, Domain::Target, u, GuidanceKind::Brightness, true);
  }
  throw ContractError("unreachable task");
}

const char* private_feature_of(ToyTask t) {
  switch (t) {
    case ToyTask::ToyTimelapse:
      return "emissive window patches lit when cos(phi) < -0.3; absent from the tone-mapping model";
    case ToyTask::ToyBlur:
      return "radial vignette on target images; absent from the Gaussian blur model";
    case ToyTask::ToyFog:
      return "textured shading and gray color cast on targets; absent from the fog model";
    default:
      return "red border frame on target renders; absent from the pixel-wise guidance models";
  }
}

}  // namespace

Dataset generate_dataset(const DatasetSpec& spec) {
  if (spec.train_count < 1 || spec.val_count < 1)
    throw ConfigError("dataset counts must be positive");
  Dataset ds;
  ds.spec = spec;
  ds.private_feature = private_feature_of(spec.task);

  auto fill = [&spec](std::vector<Sample>& out, int split, Domain domain, int count) {
    out.resize(static_cast<size_t>(count));
    parallel_for(count, [&](long i) { out[static_cast<size_t>(i)] = make_sample(spec, split, domain, i); });
  };

  if (spec.task == ToyTask::DigitsConfusion) {
    fill(ds.train_target, 0, Domain::Target, spec.train_count);
    fill(ds.val_target, 1, Domain::Target, spec.val_count);
  } else {
    fill(ds.train_source, 0, Domain::Source, spec.train_count);
    fill(ds.train_target, 0, Domain::Target, spec.train_count);
    fill(ds.val_source, 1, Domain::Source, spec.val_count);
    fill(ds.val_target, 1, Domain::Target, spec.val_count);
  }
  return ds;
}

namespace {

void digest_samples(Fnv1a& h, const std::vector<Sample>& samples) {
  for (const Sample& s : samples) {
    for (float v : s.image.data()) {
      float q = std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f);
      h.update_u8(static_cast<uint8_t>(q));
    }
    h.update_u8(s.domain == Domain::Source ? 0 : 1);
    int64_t phi_q = static_cast<int64_t>(std::llround(s.gt_phi.value * 1e9));
    h.update(&phi_q, sizeof(phi_q));
  }
}

json sample_record(const Sample& s, long index, const std::string& file, const DatasetSpec& spec,
                   const std::string& split, long depth_index) {
  json j;
  j["index"] = index;
  j["file"] = file;
  j["domain"] = s.domain == Domain::Source ? "source" : "target";
  j["gt_phi"] = s.gt_phi.value;
  j["task"] = task_name(spec.task);
  j["seed"] = spec.seed;
  j["split"] = split;
  if (depth_index >= 0) j["depth_index"] = depth_index;
  return j;
}

struct SplitRef {
  const char* name;
  const std::vector<Sample>* samples;
};

std::vector<SplitRef> split_refs(const Dataset& ds) {
  return {{"train_source", &ds.train_source},
          {"train_target", &ds.train_target},
          {"val_source", &ds.val_source},
          {"val_target", &ds.val_target}};
}

}  // namespace

uint64_t dataset_digest(const Dataset& ds) {
  Fnv1a h;
  h.update_string(task_name(ds.spec.task));
  for (const auto& ref : split_refs(ds)) digest_samples(h, *ref.samples);
  return h.digest();
}

void save_dataset(const Dataset& ds, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "images");
  json manifest;
  manifest["task"] = task_name(ds.spec.task);
  manifest["seed"] = ds.spec.seed;
  manifest["image_size"] = ds.spec.resolved_size();
  manifest["train_count"] = ds.spec.train_count;
  manifest["val_count"] = ds.spec.val_count;
  manifest["manifold"] = manifold_name(ds.manifold());
  manifest["private_feature"] = ds.private_feature;
  manifest["digest"] = hex64(dataset_digest(ds));
  json records = json::array();

  long index = 0;
  long depth_index = 0;
  bool any_depth = false;
  std::vector<const Tensor*> depths;
  std::vector<const Tensor*> images;
  for (const auto& ref : split_refs(ds)) {
    for (const Sample& s : *ref.samples) {
      std::ostringstream name;
      name << ref.name << "_" << std::setw(5) << std::setfill('0') << index << ".png";
      std::string file = "images/" + name.str();
      write_png((fs::path(dir) / file).string(), s.image);
      long di = -1;
      if (s.depth.defined()) {
        di = depth_index++;
        depths.push_back(&s.depth);
        any_depth = true;
      }
      records.push_back(sample_record(s, index, file, ds.spec, ref.name, di));
      images.push_back(&s.image);
      ++index;
    }
  }
  manifest["samples"] = std::move(records);
  write_text_file((fs::path(dir) / "manifest.json").string(), manifest.dump(2));

  // Float-precision cache: one rank-4 tensor in manifest order.
  if (!images.empty()) {
    int H = images[0]->dim(1), W = images[0]->dim(2);
    std::vector<float> all;
    all.reserve(images.size() * 3 * static_cast<size_t>(H) * W);
    for (const Tensor* t : images) all.insert(all.end(), t->data().begin(), t->data().end());
    write_cmt1_file((fs::path(dir) / "cache.cmt1").string(),
                    Tensor::from_data({static_cast<int>(images.size()), 3, H, W}, std::move(all)));
  }
  if (any_depth) {
    int H = depths[0]->dim(1), W = depths[0]->dim(2);
    std::vector<float> all;
    for (const Tensor* t : depths) all.insert(all.end(), t->data().begin(), t->data().end());
    write_cmt1_file((fs::path(dir) / "depth.cmt1").string(),
                    Tensor::from_data({static_cast<int>(depths.size()), 1, H, W}, std::move(all)));
  }
}

Dataset load_dataset(const std::string& dir) {
  fs::path root(dir);
  fs::path manifest_path = root / "manifest.json";
  if (!fs::exists(manifest_path)) throw IoError("missing dataset manifest: " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(read_text_file(manifest_path.string()));
  } catch (const json::exception& e) {
    throw IoError("corrupt dataset manifest " + manifest_path.string() + ": " + e.what());
  }

  Dataset ds;
  try {
    ds.spec.task = task_from_name(manifest.at("task").get<std::string>());
    ds.spec.seed = manifest.at("seed").get<unsigned>();
    ds.spec.image_size = manifest.at("image_size").get<int>();
    ds.spec.train_count = manifest.at("train_count").get<int>();
    ds.spec.val_count = manifest.at("val_count").get<int>();
    ds.private_feature = manifest.at("private_feature").get<std::string>();
  } catch (const json::exception& e) {
    throw IoError("corrupt dataset manifest " + manifest_path.string() + ": " + e.what());
  }

  const json& records = manifest.at("samples");
  Manifold m = ds.manifold();

  // Optional float caches.
  Tensor cache, depth_cache;
  fs::path cache_path = root / "cache.cmt1";
  if (fs::exists(cache_path)) {
    cache = read_cmt1_file(cache_path.string());
    if (cache.rank() != 4 || cache.dim(0) != static_cast<int>(records.size())) cache = Tensor();
  }
  fs::path depth_path = root / "depth.cmt1";
  if (fs::exists(depth_path)) depth_cache = read_cmt1_file(depth_path.string());

  long idx = 0;
  for (const json& rec : records) {
    Sample s;
    std::string split = rec.at("split").get<std::string>();
    s.domain = rec.at("domain").get<std::string>() == "source" ? Domain::Source : Domain::Target;
    s.gt_phi = PhiValue(rec.at("gt_phi").get<double>(), m);
    if (cache.defined()) {
      int C = cache.dim(1), H = cache.dim(2), W = cache.dim(3);
      long plane = static_cast<long>(C) * H * W;
      std::vector<float> img(cache.data().begin() + idx * plane,
                             cache.data().begin() + (idx + 1) * plane);
      s.image = Tensor::from_data({C, H, W}, std::move(img));
    } else {
      fs::path img_path = root / rec.at("file").get<std::string>();
      if (!fs::exists(img_path)) throw IoError("missing dataset image: " + img_path.string());
      s.image = read_png(img_path.string());
    }
    if (rec.contains("depth_index")) {
      if (!depth_cache.defined())
        throw IoError("dataset references depth maps but depth.cmt1 is missing in " + dir);
      long di = rec.at("depth_index").get<long>();
      int H = depth_cache.dim(2), W = depth_cache.dim(3);
      long plane = static_cast<long>(H) * W;
      std::vector<float> d(depth_cache.data().begin() + di * plane,
                           depth_cache.data().begin() + (di + 1) * plane);
      s.depth = Tensor::from_data({1, H, W}, std::move(d));
    }
    if (split == "train_source") ds.train_source.push_back(std::move(s));
    else if (split == "train_target") ds.train_target.push_back(std::move(s));
    else if (split == "val_source") ds.val_source.push_back(std::move(s));
    else if (split == "val_target") ds.val_target.push_back(std::move(s));
    else throw IoError("unknown split '" + split + "' in " + manifest_path.string());
    ++idx;
  }
  return ds;
}

}  // namespace como
