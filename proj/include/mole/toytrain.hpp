#pragma once

// Toy-scale training on top of a frozen first layer: synthetic class
// templates, a softmax linear head trained by mini-batch gradient descent,
// and the accuracy parity experiment.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mole/augconv.hpp"
#include "mole/d2r.hpp"
#include "mole/error.hpp"
#include "mole/linalg.hpp"
#include "mole/morphing.hpp"
#include "mole/rng.hpp"

namespace mole {

struct SyntheticDataset {
  std::vector<ImageTensor> images;
  std::vector<std::size_t> labels;
  std::size_t classes = 0;
};

struct SyntheticOptions {
  double base = 0.5;
  /// Half the brightness step between quadrants of opposite sign.
  double contrast = 0.02;
  /// Noise std as a fraction of the largest template magnitude.
  double noise = 0.1;
};

/// Class c's template is base ± contrast on each (channel, quadrant) cell,
/// the signs given by a distinct random 4α-bit code. Images are the
/// template plus i.i.d. Gaussian noise, listed class by class.
inline SyntheticDataset gen_synthetic(std::size_t classes, std::size_t per_class, std::size_t alpha, std::size_t m,
                                      SeededRng& rng, const SyntheticOptions& opt = {}) {
  if (classes < 2) throw Error(Errc::DomainError, "at least two classes are required");
  if (m < 4) throw Error(Errc::InvalidGeometry, "m must be at least 4");
  if (alpha == 0) throw Error(Errc::InvalidGeometry, "alpha must be positive");
  if (!(opt.noise >= 0.0)) throw Error(Errc::DomainError, "noise fraction must be non-negative");
  const std::size_t bits = 4 * alpha;
  if (bits < 64 && classes > (std::uint64_t{1} << bits))
    throw Error(Errc::DomainError, "too many classes for distinct quadrant codes");

  std::vector<std::uint64_t> codes;
  std::set<std::uint64_t> seen;
  while (codes.size() < classes) {
    const std::uint64_t c = bits < 64 ? rng.below(std::uint64_t{1} << bits) : rng.next_u64();
    if (seen.insert(c).second) codes.push_back(c);
  }

  const std::size_t half = m / 2;
  std::vector<ImageTensor> templates;
  double amp = 0.0;
  for (std::uint64_t code : codes) {
    ImageTensor t(alpha, m);
    for (std::size_t ch = 0; ch < alpha; ++ch)
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < m; ++c) {
          const std::size_t quad = (r < half ? 0 : 2) + (c < half ? 0 : 1);
          const bool bit = (code >> (ch * 4 + quad)) & 1u;
          t.at(ch, r, c) = opt.base + (bit ? opt.contrast : -opt.contrast);
        }
    amp = std::max(amp, max_abs(t.data()));
    templates.push_back(std::move(t));
  }

  SyntheticDataset ds;
  ds.classes = classes;
  const double sd = opt.noise * amp;
  for (std::size_t k = 0; k < classes; ++k)
    for (std::size_t i = 0; i < per_class; ++i) {
      ImageTensor img = templates[k];
      if (sd > 0.0)
        for (double& v : img.data()) v += sd * rng.normal();
      ds.images.push_back(std::move(img));
      ds.labels.push_back(k);
    }
  return ds;
}

/// Linear classifier: logits = x·W[0..d) + W[d].
struct LinearHead {
  Matrix weights;  // (d + 1) × classes

  std::size_t inputs() const noexcept { return weights.rows() - 1; }
  std::size_t classes() const noexcept { return weights.cols(); }

  std::vector<double> logits(std::span<const double> x) const {
    if (x.size() != inputs()) throw Error(Errc::DimensionMismatch, "feature length does not match the head");
    std::vector<double> z(weights.row(inputs()).begin(), weights.row(inputs()).end());
    for (std::size_t k = 0; k < x.size(); ++k) {
      const auto w = weights.row(k);
      for (std::size_t c = 0; c < z.size(); ++c) z[c] += x[k] * w[c];
    }
    return z;
  }

  std::size_t predict(std::span<const double> x) const {
    const auto z = logits(x);
    return static_cast<std::size_t>(std::ranges::max_element(z) - z.begin());
  }
};

struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t epochs = 200;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
};

struct HeadFit {
  LinearHead head;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

namespace detail {

/// Cross-entropy of one sample; leaves the softmax probabilities in `prob`.
inline double softmax_xent(const Matrix& w, std::span<const double> x, std::size_t label, std::vector<double>& prob) {
  const std::size_t d = w.rows() - 1;
  const std::size_t cls = w.cols();
  prob.assign(w.row(d).begin(), w.row(d).end());
  for (std::size_t k = 0; k < d; ++k) {
    const auto wr = w.row(k);
    for (std::size_t c = 0; c < cls; ++c) prob[c] += x[k] * wr[c];
  }
  const double zmax = *std::ranges::max_element(prob);
  double s = 0.0;
  for (double& v : prob) {
    v = std::exp(v - zmax);
    s += v;
  }
  for (double& v : prob) v /= s;
  return -std::log(std::max(prob[label], 1e-300));
}

}  // namespace detail

/// Softmax regression by mini-batch gradient descent from zero weights.
/// Features are standardised with training-set mean and deviation; the
/// scaling is folded back into the returned weights, so the head consumes
/// raw features.
inline HeadFit train_head(const std::vector<RowVector>& features, const std::vector<std::size_t>& labels,
                          std::size_t classes, const TrainConfig& config) {
  if (features.empty()) throw Error(Errc::DomainError, "no training samples");
  if (features.size() != labels.size()) throw Error(Errc::DimensionMismatch, "one label per sample is required");
  if (classes < 2) throw Error(Errc::DomainError, "at least two classes are required");
  if (!(config.learning_rate >= 0.0)) throw Error(Errc::DomainError, "learning rate must be non-negative");
  if (config.epochs < 1 || config.batch_size < 1) throw Error(Errc::DomainError, "epochs and batch size must be >= 1");
  const std::size_t d = features.front().size();
  const std::size_t n = features.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (features[i].size() != d) throw Error(Errc::DimensionMismatch, "inconsistent feature shapes");
    if (labels[i] >= classes) throw Error(Errc::DomainError, "label out of range");
  }

  std::vector<double> mu(d, 0.0), sd(d, 0.0);
  for (const auto& f : features)
    for (std::size_t k = 0; k < d; ++k) mu[k] += f[k];
  for (double& v : mu) v /= static_cast<double>(n);
  for (const auto& f : features)
    for (std::size_t k = 0; k < d; ++k) sd[k] += (f[k] - mu[k]) * (f[k] - mu[k]);
  for (double& v : sd) {
    v = std::sqrt(v / static_cast<double>(n));
    if (!(v > 0.0)) v = 1.0;
  }
  std::vector<std::vector<double>> xs(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) xs[i][k] = (features[i][k] - mu[k]) / sd[k];

  Matrix w(d + 1, classes);
  std::vector<double> prob;
  auto mean_loss = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += detail::softmax_xent(w, xs[i], labels[i], prob);
    return s / static_cast<double>(n);
  };

  HeadFit fit;
  fit.initial_loss = mean_loss();
  SeededRng rng(config.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Matrix grad(d + 1, classes);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    for (std::size_t b0 = 0; b0 < n; b0 += config.batch_size) {
      const std::size_t b1 = std::min(n, b0 + config.batch_size);
      std::ranges::fill(grad.data(), 0.0);
      for (std::size_t t = b0; t < b1; ++t) {
        const std::size_t i = order[t];
        detail::softmax_xent(w, xs[i], labels[i], prob);
        prob[labels[i]] -= 1.0;
        for (std::size_t k = 0; k < d; ++k) {
          const double xk = xs[i][k];
          auto g = grad.row(k);
          for (std::size_t c = 0; c < classes; ++c) g[c] += xk * prob[c];
        }
        auto gb = grad.row(d);
        for (std::size_t c = 0; c < classes; ++c) gb[c] += prob[c];
      }
      const double step = config.learning_rate / static_cast<double>(b1 - b0);
      for (std::size_t e = 0; e < w.size(); ++e) w.data()[e] -= step * grad.data()[e];
    }
  }
  fit.final_loss = mean_loss();

  // logits = ((x − μ)/s)·W + b  =  x·(W/s) + (b − Σ μ_k W_k / s_k)
  Matrix folded(d + 1, classes);
  for (std::size_t c = 0; c < classes; ++c) {
    double bias = w(d, c);
    for (std::size_t k = 0; k < d; ++k) {
      folded(k, c) = w(k, c) / sd[k];
      bias -= mu[k] * folded(k, c);
    }
    folded(d, c) = bias;
  }
  fit.head = LinearHead{std::move(folded)};
  return fit;
}

inline HeadFit train_head(const std::vector<FeatureTensor>& features, const std::vector<std::size_t>& labels,
                          std::size_t classes, const TrainConfig& config) {
  std::vector<RowVector> rows;
  rows.reserve(features.size());
  for (const auto& f : features) rows.push_back(unroll(f));
  return train_head(rows, labels, classes, config);
}

inline double accuracy(const LinearHead& head, const std::vector<RowVector>& features,
                       const std::vector<std::size_t>& labels) {
  if (features.size() != labels.size()) throw Error(Errc::DimensionMismatch, "one label per sample is required");
  if (features.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < features.size(); ++i) hit += head.predict(features[i].data()) == labels[i];
  return static_cast<double>(hit) / static_cast<double>(features.size());
}

// ---------------------------------------------------------------------------
// parity experiment

struct ParityResult {
  double acc_clean = 0.0;
  double acc_morphed_augconv = 0.0;
  double acc_morphed_plainC = 0.0;
  /// max |Aug-Conv feature − permuted clean feature| over all samples
  double feature_max_diff = 0.0;
  /// smallest ||plain-C feature − clean feature|| / ||clean feature||
  double plainC_min_rel_error = 0.0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
};

/// Three heads trained with the same config on the same 80/20 split:
/// (i) clean images through the convolution, (ii) morphed images through
/// the Aug-Conv layer, (iii) morphed images through the original lowered
/// convolution.
inline ParityResult parity_experiment(const SyntheticDataset& ds, const KernelSet& kernels, const MorphCore& core,
                                      const ChannelPermutation& perm, const TrainConfig& config,
                                      Padding padding = Padding::Valid) {
  if (ds.images.size() != ds.labels.size() || ds.images.size() < 2)
    throw Error(Errc::DomainError, "dataset needs at least two labelled images");
  const std::size_t m = ds.images.front().side();
  for (const auto& img : ds.images)
    if (img.channels() != kernels.alpha() || img.side() != m)
      throw Error(Errc::GeometryMismatch, "image geometry disagrees with the kernels");
  const ConvMatrix conv = build_conv_matrix(kernels, m, padding);
  const AugConvMatrix ac = build_augconv(core, conv, perm);

  const std::size_t total = ds.images.size();
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  SeededRng split_rng = SeededRng(config.seed).split(0);
  for (std::size_t i = total - 1; i > 0; --i) std::swap(order[i], order[split_rng.below(i + 1)]);
  const std::size_t ntr = std::max<std::size_t>(1, total * 4 / 5);

  std::vector<RowVector> f1, f2, f3;
  std::vector<std::size_t> labels;
  ParityResult r;
  r.plainC_min_rel_error = std::numeric_limits<double>::infinity();
  for (std::size_t idx : order) {
    const ImageTensor& img = ds.images[idx];
    const FeatureTensor clean = conv_direct(img, kernels, padding);
    const RowVector tr = morph(unroll(img), core);
    const FeatureTensor viaac = apply_augconv(tr, ac);
    const RowVector plain = row_times(tr, conv.matrix);

    r.feature_max_diff =
        std::max(r.feature_max_diff, max_abs_diff(viaac.data(), permute_features(clean, perm).data()));
    const RowVector cr = unroll(clean);
    double num = 0.0;
    for (std::size_t k = 0; k < cr.size(); ++k) num += (plain[k] - cr[k]) * (plain[k] - cr[k]);
    const double den = l2_norm(cr.data());
    r.plainC_min_rel_error = std::min(r.plainC_min_rel_error, den > 0.0 ? std::sqrt(num) / den : 0.0);

    f1.push_back(cr);
    f2.push_back(unroll(viaac));
    f3.push_back(plain);
    labels.push_back(ds.labels[idx]);
  }

  auto run = [&](const std::vector<RowVector>& f) {
    const std::vector<RowVector> tr_f(f.begin(), f.begin() + static_cast<std::ptrdiff_t>(ntr));
    const std::vector<RowVector> te_f(f.begin() + static_cast<std::ptrdiff_t>(ntr), f.end());
    const std::vector<std::size_t> tr_y(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(ntr));
    const std::vector<std::size_t> te_y(labels.begin() + static_cast<std::ptrdiff_t>(ntr), labels.end());
    const HeadFit fit = train_head(tr_f, tr_y, ds.classes, config);
    return accuracy(fit.head, te_f, te_y);
  };
  r.acc_clean = run(f1);
  r.acc_morphed_augconv = run(f2);
  r.acc_morphed_plainC = run(f3);
  r.train_size = ntr;
  r.test_size = total - ntr;
  return r;
}

/// 3×3 bank of p×p low-pass kernels: a normalised Gaussian (std p/4)
/// weighted per channel by luminance and two colour-opponent rows.
inline KernelSet lowpass_opponent_kernels(std::size_t p) {
  if (p == 0) throw Error(Errc::InvalidGeometry, "p must be positive");
  static constexpr double w[3][3] = {{1, 1, 1}, {1, 0, -1}, {1, -2, 1}};
  std::vector<double> g(p * p);
  const double mid = (static_cast<double>(p) - 1.0) / 2.0;
  const double s = static_cast<double>(p) / 4.0;
  double sum = 0.0;
  for (std::size_t a = 0; a < p; ++a)
    for (std::size_t b = 0; b < p; ++b) {
      const double u = static_cast<double>(a) - mid, v = static_cast<double>(b) - mid;
      g[a * p + b] = std::exp(-(u * u + v * v) / (2.0 * s * s));
      sum += g[a * p + b];
    }
  KernelSet k(3, 3, p);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t a = 0; a < p; ++a)
        for (std::size_t b = 0; b < p; ++b) k.at(i, j, a, b) = w[j][i] * g[a * p + b] / sum;
  return k;
}

/// The reference parity task: 4 classes × 50 RGB 16×16 images, 13×13
/// kernels with valid padding (4×4 outputs), a single full-size core.
struct ParityTask {
  SyntheticDataset dataset;
  KernelSet kernels;
  Padding padding = Padding::Valid;
  MorphCore core;
  ChannelPermutation perm;
  TrainConfig config;
};

inline ParityTask default_parity_task(std::uint64_t seed) {
  constexpr std::size_t alpha = 3, m = 16, p = 13, classes = 4, per_class = 50, kappa = 1;
  const SeededRng root(seed);
  SeededRng data_rng = root.split(0);
  SeededRng core_rng = root.split(1);
  SeededRng perm_rng = root.split(2);
  SyntheticDataset ds = gen_synthetic(classes, per_class, alpha, m, data_rng);
  KernelSet k = lowpass_opponent_kernels(p);
  MorphCore core = MorphCore::generate(alpha, m, kappa, core_rng);
  ChannelPermutation perm = random_permutation(k.beta(), perm_rng);
  TrainConfig cfg;
  cfg.seed = seed;
  return ParityTask{std::move(ds), std::move(k), Padding::Valid, std::move(core), std::move(perm), cfg};
}

}  // namespace mole
