#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "como/data.hpp"
#include "como/networks.hpp"
#include "como/phi.hpp"
#include "como/tensor.hpp"

namespace como {

// Translation hook: a batch of source images -> translated batch at phi.
// Lets the metrics run over a trained generator, the raw guidance model, or
// synthetic stand-ins alike.
using TranslateFn = std::function<Tensor(const Tensor& x, const PhiValue& phi)>;

// Small conv classifier trained on an auxiliary labeled task over the toy
// data (domain + coarse phi-bin classification), then frozen; features are
// the penultimate (pooled) activations. Stands in for the usual pretrained
// Inception backbone, which this artifact deliberately avoids; report
// headers state the substitution.
class FeatureExtractor {
 public:
  FeatureExtractor() = default;

  // Trains on the dataset's train split using gt phi (evaluation-only data).
  static FeatureExtractor train(const Dataset& ds, int epochs, unsigned seed);

  int feature_dim() const { return trunk_.feat; }
  unsigned train_seed() const { return seed_; }

  // (N, feature_dim) row-major features; no gradients.
  std::vector<std::vector<float>> features(const Tensor& batch) const;
  std::vector<float> features_one(const Tensor& chw) const;

 private:
  mutable PhiTrunkT<float> trunk_;
  unsigned seed_ = 0;
};

double feature_l2(const std::vector<float>& a, const std::vector<float>& b);

struct GaussianStats {
  std::vector<double> mean;
  std::vector<double> cov;  // row-major dim x dim
  int dim = 0;
};

GaussianStats gaussian_stats(const std::vector<std::vector<float>>& features);

// |mu1-mu2|^2 + Tr(S1 + S2 - 2*(S1*S2)^{1/2}); the matrix square root uses
// the eigendecomposition of sqrt(S1)*S2*sqrt(S1) with negative eigenvalues
// clipped at zero.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

struct BinSpec {
  Manifold manifold = Manifold::Linear;
  int count = 20;

  double range() const { return manifold == Manifold::Cyclic ? kTwoPi : 1.0; }
  double spacing() const { return range() / count; }
  double width() const { return 2.0 * spacing(); }  // 50% overlap
  double center(int i) const { return (i + 0.5) * spacing(); }
  bool contains(int i, const PhiValue& phi) const;
};

struct RollingResult {
  std::vector<double> centers;
  std::vector<double> scores;      // valid where present
  std::vector<bool> present;       // bins with >= min_real real samples
  std::vector<int> real_counts;
  double mean = 0.0;               // over present bins
};

// Per-bin Frechet distance between translations at the bin center and real
// samples whose gt phi falls inside the bin. Bins with fewer than min_real
// real samples are marked absent and excluded from the mean.
RollingResult rolling_frechet(const TranslateFn& translate, const FeatureExtractor& extractor,
                              const BinSpec& bins, const std::vector<Sample>& sources,
                              const std::vector<Sample>& targets, int per_bin = 64,
                              int min_real = 8);

// Mean feature-space L2 distance between translations of the same image at
// random (phi1, phi2) couples; 0 iff translations are phi-invariant in
// feature space.
double diversity_score(const TranslateFn& translate, const FeatureExtractor& extractor,
                       const std::vector<Sample>& images, int pairs, int image_count,
                       std::mt19937& rng);

struct DualResult {
  RollingResult real_fd;
  RollingResult model_fd;
};

// Rolling curves against the real target set and against guidance-model
// outputs at matching phi.
DualResult dual_distance(const TranslateFn& translate, const GuidanceModel& model,
                         const FeatureExtractor& extractor, const BinSpec& bins,
                         const std::vector<Sample>& sources, const std::vector<Sample>& targets,
                         int per_bin = 64);

// Manifold-organization error: manifold-aware |estimate - gt| over target
// samples, aggregated as (mean, std).
std::pair<double, double> manifold_error(PhiNetA& net, const std::vector<Sample>& val_targets);

// Horizontal strip of translations at the given phi values with the numeric
// labels baked into a footer row. Returns the strip image.
Tensor emit_strip(const TranslateFn& translate, const Tensor& x,
                  const std::vector<PhiValue>& phis, const std::string& path);

// CSV/plot emission; every header carries the feature-space note.
void write_rolling_csv(const RollingResult& r, const std::string& path, const std::string& note);
void write_rolling_plot(const std::vector<RollingResult>& series,
                        const std::vector<std::string>& labels, const std::string& path);

}  // namespace como
