#include "como/eval.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "como/errors.hpp"
#include "como/font.hpp"
#include "como/io.hpp"
#include "como/optim.hpp"
#include "como/trainer.hpp"

namespace como {

namespace {

constexpr int kPhiBins = 8;
constexpr const char* kFeatureNote =
    "feature space: toy conv extractor trained on domain+phi-bin classification "
    "(substitute for a pretrained Inception backbone)";

// Softmax cross entropy over the channel dim of (N,K,1,1) logits, with the
// analytic softmax-minus-onehot backward.
Tensor softmax_ce(const Tensor& logits, const std::vector<int>& labels) {
  int N = logits.dim(0), K = logits.dim(1);
  if (static_cast<int>(labels.size()) != N)
    throw DimensionError("softmax_ce: label count mismatch");
  auto node = detail::make_node<float>({1}, "softmax_ce", {logits.node()});
  const auto& d = logits.data();
  std::vector<float> probs(static_cast<size_t>(N) * K);
  double total = 0.0;
  for (int n = 0; n < N; ++n) {
    const float* row = d.data() + static_cast<long>(n) * K;
    float m = row[0];
    for (int k = 1; k < K; ++k) m = std::max(m, row[k]);
    double sum = 0.0;
    for (int k = 0; k < K; ++k) sum += std::exp(static_cast<double>(row[k] - m));
    double lse = static_cast<double>(m) + std::log(sum);
    total += lse - static_cast<double>(row[labels[static_cast<size_t>(n)]]);
    for (int k = 0; k < K; ++k)
      probs[static_cast<size_t>(n * K + k)] =
          static_cast<float>(std::exp(static_cast<double>(row[k]) - lse));
  }
  node->data[0] = static_cast<float>(total / N);
  if (node->requires_grad) {
    auto ln = logits.node();
    std::vector<int> lbl = labels;
    node->backward_fn = [ln, probs, lbl, N, K](NodeT<float>& self) {
      auto& g = ln->grad_buf();
      float gv = self.grad[0] / static_cast<float>(N);
      for (int n = 0; n < N; ++n)
        for (int k = 0; k < K; ++k) {
          float p = probs[static_cast<size_t>(n * K + k)];
          float onehot = k == lbl[static_cast<size_t>(n)] ? 1.0f : 0.0f;
          g[static_cast<size_t>(n * K + k)] += gv * (p - onehot);
        }
    };
  }
  return Tensor(node);
}

int phi_bin_of(const PhiValue& phi, Manifold m) {
  double r = m == Manifold::Cyclic ? kTwoPi : 1.0;
  int b = static_cast<int>(phi.value / r * kPhiBins);
  return std::clamp(b, 0, kPhiBins - 1);
}

}  // namespace

FeatureExtractor FeatureExtractor::train(const Dataset& ds, int epochs, unsigned seed) {
  FeatureExtractor fe;
  fe.seed_ = seed;
  std::mt19937 rng(seed);
  fe.trunk_ = PhiTrunkT<float>("eval.ext", 32, rng);
  ConvLayerT<float> head_domain("eval.head.domain", fe.trunk_.feat, 2, 1, 1, 0, rng);
  ConvLayerT<float> head_bin("eval.head.bin", fe.trunk_.feat, kPhiBins, 1, 1, 0, rng);

  struct Item {
    const Sample* s;
    int domain;
    int bin;
  };
  std::vector<Item> items;
  Manifold m = ds.manifold();
  for (const Sample& s : ds.train_source) items.push_back({&s, 0, phi_bin_of(s.gt_phi, m)});
  for (const Sample& s : ds.train_target) items.push_back({&s, 1, phi_bin_of(s.gt_phi, m)});
  if (items.empty()) throw ContractError("feature extractor: empty dataset");

  ParamRefsT<float> params;
  fe.trunk_.collect(params);
  head_domain.collect(params);
  head_bin.collect(params);
  Adam::Options opt;
  opt.lr = 1e-3f;
  opt.beta1 = 0.9f;
  Adam adam(params, opt);

  const size_t batch = 32;
  std::vector<size_t> idx(items.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (int e = 0; e < epochs; ++e) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (size_t b = 0; b + batch <= items.size(); b += batch) {
      std::vector<const Tensor*> imgs;
      std::vector<int> dom, bin;
      for (size_t i = b; i < b + batch; ++i) {
        imgs.push_back(&items[idx[i]].s->image);
        dom.push_back(items[idx[i]].domain);
        bin.push_back(items[idx[i]].bin);
      }
      Tensor x = make_batch(imgs);
      Tensor feat = fe.trunk_.forward(x);
      Tensor loss = add(softmax_ce(head_domain.forward(feat), dom),
                        softmax_ce(head_bin.forward(feat), bin));
      if (!std::isfinite(static_cast<double>(loss.item())))
        throw NumericError("non-finite loss while training the feature extractor");
      backward(loss);
      adam.step();
      zero_grads(params);
    }
  }
  return fe;
}

std::vector<std::vector<float>> FeatureExtractor::features(const Tensor& batch) const {
  NoGradGuard ng;
  Tensor f = trunk_.forward(batch);
  int N = f.dim(0), D = f.dim(1);
  std::vector<std::vector<float>> out(static_cast<size_t>(N));
  for (int n = 0; n < N; ++n)
    out[static_cast<size_t>(n)] =
        std::vector<float>(f.data().begin() + static_cast<long>(n) * D,
                           f.data().begin() + static_cast<long>(n + 1) * D);
  return out;
}

std::vector<float> FeatureExtractor::features_one(const Tensor& chw) const {
  return features(make_batch({&chw}))[0];
}

double feature_l2(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) throw DimensionError("feature_l2: dim mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return std::sqrt(acc);
}

GaussianStats gaussian_stats(const std::vector<std::vector<float>>& features) {
  if (features.empty()) throw ContractError("gaussian_stats on empty feature set");
  int dim = static_cast<int>(features[0].size());
  long n = static_cast<long>(features.size());
  GaussianStats st;
  st.dim = dim;
  st.mean.assign(static_cast<size_t>(dim), 0.0);
  st.cov.assign(static_cast<size_t>(dim) * dim, 0.0);
  for (const auto& f : features)
    for (int i = 0; i < dim; ++i) st.mean[static_cast<size_t>(i)] += f[static_cast<size_t>(i)];
  for (auto& v : st.mean) v /= static_cast<double>(n);
  if (n > 1) {
    for (const auto& f : features)
      for (int i = 0; i < dim; ++i) {
        double di = f[static_cast<size_t>(i)] - st.mean[static_cast<size_t>(i)];
        for (int j = 0; j < dim; ++j) {
          double dj = f[static_cast<size_t>(j)] - st.mean[static_cast<size_t>(j)];
          st.cov[static_cast<size_t>(i) * dim + j] += di * dj;
        }
      }
    for (auto& v : st.cov) v /= static_cast<double>(n - 1);
  }
  return st;
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  if (a.dim != b.dim)
    throw DimensionError("frechet_distance: dim mismatch " + std::to_string(a.dim) + " vs " +
                         std::to_string(b.dim));
  int d = a.dim;
  using Mat = Eigen::MatrixXd;
  Eigen::Map<const Mat> c1(a.cov.data(), d, d);
  Eigen::Map<const Mat> c2(b.cov.data(), d, d);

  double mean_term = 0.0;
  for (int i = 0; i < d; ++i) {
    double diff = a.mean[static_cast<size_t>(i)] - b.mean[static_cast<size_t>(i)];
    mean_term += diff * diff;
  }

  // sqrt(S1) via symmetric eigendecomposition, negative eigenvalues clipped.
  Eigen::SelfAdjointEigenSolver<Mat> es1(0.5 * (c1 + c1.transpose()));
  Eigen::VectorXd ev1 = es1.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  Mat s1h = es1.eigenvectors() * ev1.asDiagonal() * es1.eigenvectors().transpose();

  Mat prod = s1h * (0.5 * (c2 + c2.transpose())) * s1h;
  Eigen::SelfAdjointEigenSolver<Mat> es2(0.5 * (prod + prod.transpose()));
  double tr_sqrt = es2.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  double fd = mean_term + c1.trace() + c2.trace() - 2.0 * tr_sqrt;
  return fd < 0.0 ? 0.0 : fd;
}

bool BinSpec::contains(int i, const PhiValue& phi) const {
  double c = center(i);
  double dist;
  if (manifold == Manifold::Cyclic) {
    double diff = std::fmod(std::abs(phi.value - c), kTwoPi);
    dist = std::min(diff, kTwoPi - diff);
  } else {
    dist = std::abs(phi.value - c);
  }
  return dist <= width() / 2.0;
}

namespace {

std::vector<std::vector<float>> translated_features(const TranslateFn& translate,
                                                    const FeatureExtractor& extractor,
                                                    const std::vector<const Tensor*>& images,
                                                    const PhiValue& phi) {
  Tensor x = make_batch(images);
  Tensor y = translate(x, phi);
  return extractor.features(y);
}

}  // namespace

RollingResult rolling_frechet(const TranslateFn& translate, const FeatureExtractor& extractor,
                              const BinSpec& bins, const std::vector<Sample>& sources,
                              const std::vector<Sample>& targets, int per_bin, int min_real) {
  if (sources.empty()) throw ContractError("rolling_frechet: no source samples");
  RollingResult out;
  out.centers.resize(static_cast<size_t>(bins.count));
  out.scores.assign(static_cast<size_t>(bins.count), 0.0);
  out.present.assign(static_cast<size_t>(bins.count), false);
  out.real_counts.assign(static_cast<size_t>(bins.count), 0);

  std::vector<const Tensor*> src_imgs;
  for (int i = 0; i < per_bin; ++i)
    src_imgs.push_back(&sources[static_cast<size_t>(i) % sources.size()].image);

  double total = 0.0;
  int present_count = 0;
  for (int b = 0; b < bins.count; ++b) {
    out.centers[static_cast<size_t>(b)] = bins.center(b);
    std::vector<std::vector<float>> real_feats;
    std::vector<const Tensor*> real_imgs;
    for (const Sample& s : targets) {
      if (!bins.contains(b, s.gt_phi)) continue;
      real_imgs.push_back(&s.image);
      if (static_cast<int>(real_imgs.size()) >= 2 * per_bin) break;
    }
    out.real_counts[static_cast<size_t>(b)] = static_cast<int>(real_imgs.size());
    if (static_cast<int>(real_imgs.size()) < min_real) continue;
    real_feats = extractor.features(make_batch(real_imgs));
    PhiValue center(bins.center(b), bins.manifold);
    auto gen_feats = translated_features(translate, extractor, src_imgs, center);
    double fd = frechet_distance(gaussian_stats(gen_feats), gaussian_stats(real_feats));
    out.scores[static_cast<size_t>(b)] = fd;
    out.present[static_cast<size_t>(b)] = true;
    total += fd;
    ++present_count;
  }
  out.mean = present_count ? total / present_count : 0.0;
  return out;
}

double diversity_score(const TranslateFn& translate, const FeatureExtractor& extractor,
                       const std::vector<Sample>& images, int pairs, int image_count,
                       std::mt19937& rng) {
  if (images.empty()) throw ContractError("diversity_score: no images");
  Manifold m = images[0].gt_phi.manifold;
  std::vector<const Tensor*> imgs;
  for (int i = 0; i < image_count; ++i)
    imgs.push_back(&images[static_cast<size_t>(i) % images.size()].image);

  double total = 0.0;
  long count = 0;
  for (int p = 0; p < pairs; ++p) {
    PhiValue phi1 = sample_phi(m, rng);
    PhiValue phi2 = sample_phi(m, rng);
    auto f1 = translated_features(translate, extractor, imgs, phi1);
    auto f2 = translated_features(translate, extractor, imgs, phi2);
    for (size_t i = 0; i < f1.size(); ++i) {
      total += feature_l2(f1[i], f2[i]);
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

DualResult dual_distance(const TranslateFn& translate, const GuidanceModel& model,
                         const FeatureExtractor& extractor, const BinSpec& bins,
                         const std::vector<Sample>& sources, const std::vector<Sample>& targets,
                         int per_bin) {
  DualResult out;
  out.real_fd = rolling_frechet(translate, extractor, bins, sources, targets, per_bin);

  // Model side: per-bin reference set is the guidance model applied to the
  // same source images at the bin center; every bin is present.
  out.model_fd.centers.resize(static_cast<size_t>(bins.count));
  out.model_fd.scores.assign(static_cast<size_t>(bins.count), 0.0);
  out.model_fd.present.assign(static_cast<size_t>(bins.count), true);
  out.model_fd.real_counts.assign(static_cast<size_t>(bins.count), per_bin);
  std::vector<const Sample*> srcs;
  for (int i = 0; i < per_bin; ++i)
    srcs.push_back(&sources[static_cast<size_t>(i) % sources.size()]);
  std::vector<const Tensor*> src_imgs;
  for (auto* s : srcs) src_imgs.push_back(&s->image);

  double total = 0.0;
  for (int b = 0; b < bins.count; ++b) {
    PhiValue center(bins.center(b), bins.manifold);
    out.model_fd.centers[static_cast<size_t>(b)] = bins.center(b);
    std::vector<const Tensor*> model_imgs;
    std::vector<Tensor> storage;
    storage.reserve(srcs.size());
    for (auto* s : srcs) {
      storage.push_back(model.apply(s->image, center, s->depth.defined() ? &s->depth : nullptr));
      model_imgs.push_back(&storage.back());
    }
    auto model_feats = extractor.features(make_batch(model_imgs));
    auto gen_feats = translated_features(translate, extractor, src_imgs, center);
    double fd = frechet_distance(gaussian_stats(gen_feats), gaussian_stats(model_feats));
    out.model_fd.scores[static_cast<size_t>(b)] = fd;
    total += fd;
  }
  out.model_fd.mean = total / bins.count;
  return out;
}

std::pair<double, double> manifold_error(PhiNetA& net, const std::vector<Sample>& val_targets) {
  if (val_targets.empty()) throw ContractError("manifold_error on empty validation set");
  std::vector<double> errors;
  errors.reserve(val_targets.size());
  const size_t batch = 64;
  for (size_t b = 0; b < val_targets.size(); b += batch) {
    std::vector<const Tensor*> imgs;
    size_t end = std::min(val_targets.size(), b + batch);
    for (size_t i = b; i < end; ++i) imgs.push_back(&val_targets[i].image);
    std::vector<PhiValue> est = net.estimate(make_batch(imgs));
    for (size_t i = b; i < end; ++i)
      errors.push_back(phi_abs_error(est[i - b], val_targets[i].gt_phi));
  }
  double mean = std::accumulate(errors.begin(), errors.end(), 0.0) / errors.size();
  double var = 0.0;
  for (double e : errors) var += (e - mean) * (e - mean);
  var /= static_cast<double>(errors.size());
  return {mean, std::sqrt(var)};
}

Tensor emit_strip(const TranslateFn& translate, const Tensor& x,
                  const std::vector<PhiValue>& phis, const std::string& path) {
  if (phis.empty()) throw ContractError("emit_strip: empty phi list");
  int H = x.dim(1), W = x.dim(2);
  int footer = 12;
  int k = static_cast<int>(phis.size());
  Tensor strip = Tensor::zeros({3, H + footer, W * k});
  long out_hw = static_cast<long>(H + footer) * (W * k);
  float* out = strip.mutable_data().data();
  for (int p = 0; p < k; ++p) {
    Tensor y = translate(make_batch({&x}), phis[static_cast<size_t>(p)]);
    Tensor panel = slice_batch(y, 0);
    const float* src = panel.data().data();
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j)
          out[static_cast<long>(c) * out_hw + static_cast<long>(i) * (W * k) + p * W + j] =
              src[static_cast<long>(c) * H * W + static_cast<long>(i) * W + j];
    std::ostringstream label;
    label.setf(std::ios::fixed);
    label.precision(2);
    label << phis[static_cast<size_t>(p)].value;
    draw_text(strip, label.str(), p * W + 2, H + 3, 1, 1.0f, 1.0f, 1.0f);
  }
  if (!path.empty()) write_png(path, strip);
  return strip;
}

void write_rolling_csv(const RollingResult& r, const std::string& path, const std::string& note) {
  std::ostringstream os;
  os << "# " << kFeatureNote << "\n";
  if (!note.empty()) os << "# " << note << "\n";
  os << "bin_center,score,present,real_count\n";
  for (size_t i = 0; i < r.centers.size(); ++i)
    os << r.centers[i] << ',' << r.scores[i] << ',' << (r.present[i] ? 1 : 0) << ','
       << r.real_counts[i] << "\n";
  os << "# mean," << r.mean << "\n";
  write_text_file(path, os.str());
}

void write_rolling_plot(const std::vector<RollingResult>& series,
                        const std::vector<std::string>& labels, const std::string& path) {
  int W = 480, H = 320, margin = 30;
  Tensor img = Tensor::full({3, H, W}, 1.0f);
  float* d = img.mutable_data().data();
  long hw = static_cast<long>(H) * W;
  auto put = [&](int y, int x, float r, float g, float b) {
    if (y < 0 || y >= H || x < 0 || x >= W) return;
    d[0 * hw + static_cast<long>(y) * W + x] = r;
    d[1 * hw + static_cast<long>(y) * W + x] = g;
    d[2 * hw + static_cast<long>(y) * W + x] = b;
  };
  for (int x = margin; x < W - margin; ++x) put(H - margin, x, 0, 0, 0);
  for (int y = margin; y < H - margin; ++y) put(y, margin, 0, 0, 0);

  double max_score = 1e-9;
  double max_center = 1e-9;
  for (const auto& s : series)
    for (size_t i = 0; i < s.scores.size(); ++i) {
      if (s.present[i]) max_score = std::max(max_score, s.scores[i]);
      max_center = std::max(max_center, s.centers[i]);
    }
  const float colors[3][3] = {{0.1f, 0.3f, 0.9f}, {0.95f, 0.5f, 0.1f}, {0.1f, 0.7f, 0.2f}};
  for (size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const float* col = colors[si % 3];
    int prev_x = -1, prev_y = -1;
    for (size_t i = 0; i < s.centers.size(); ++i) {
      if (!s.present[i]) {
        prev_x = -1;
        continue;
      }
      int x = margin + static_cast<int>((W - 2.0 * margin) * s.centers[i] / max_center);
      int y = H - margin - static_cast<int>((H - 2.0 * margin) * s.scores[i] / max_score);
      if (prev_x >= 0) {
        int steps = std::max(std::abs(x - prev_x), std::abs(y - prev_y)) + 1;
        for (int t = 0; t <= steps; ++t) {
          int px = prev_x + (x - prev_x) * t / steps;
          int py = prev_y + (y - prev_y) * t / steps;
          put(py, px, col[0], col[1], col[2]);
          put(py + 1, px, col[0], col[1], col[2]);
        }
      }
      prev_x = x;
      prev_y = y;
    }
    if (si < labels.size())
      draw_text(img, labels[si], margin + 4, margin + 4 + static_cast<int>(si) * 10, 1, col[0],
                col[1], col[2]);
  }
  write_png(path, img);
}

}  // namespace como
