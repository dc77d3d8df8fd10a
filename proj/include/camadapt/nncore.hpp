#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "camadapt/matrix.hpp"
#include "camadapt/rng.hpp"
#include "camadapt/synthdata.hpp"

namespace camadapt {

// Two-layer MLP: raw_dim -> hidden (tanh) -> feat (linear). tanh keeps the
// loss surface smooth away from hinge kinks, which the finite-difference
// gradient checks rely on.
struct Encoder {
  int in_dim = 0;
  int hidden_dim = 0;
  int feat_dim = 0;
  Matrix w1;               // in_dim x hidden_dim
  std::vector<double> b1;  // hidden_dim
  Matrix w2;               // hidden_dim x feat_dim
  std::vector<double> b2;  // feat_dim

  static Encoder init(int in_dim, int hidden_dim, int feat_dim, Rng& rng) {
    Encoder e;
    e.in_dim = in_dim;
    e.hidden_dim = hidden_dim;
    e.feat_dim = feat_dim;
    e.w1 = Matrix(in_dim, hidden_dim);
    e.w2 = Matrix(hidden_dim, feat_dim);
    e.b1.assign(hidden_dim, 0.0);
    e.b2.assign(feat_dim, 0.0);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(in_dim));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    for (double& w : e.w1.data) w = s1 * rng.normal();
    for (double& w : e.w2.data) w = s2 * rng.normal();
    return e;
  }
};

struct EncoderCache {
  Matrix input;   // n x in_dim
  Matrix hidden;  // n x hidden_dim, post-tanh
};

struct EncoderGrads {
  Matrix w1;
  std::vector<double> b1;
  Matrix w2;
  std::vector<double> b2;

  static EncoderGrads zeros_like(const Encoder& e) {
    EncoderGrads g;
    g.w1 = Matrix(e.w1.rows, e.w1.cols);
    g.w2 = Matrix(e.w2.rows, e.w2.cols);
    g.b1.assign(e.b1.size(), 0.0);
    g.b2.assign(e.b2.size(), 0.0);
    return g;
  }
};

inline Matrix encoder_forward(const Encoder& enc, const Matrix& batch,
                              EncoderCache* cache = nullptr) {
  if (batch.cols != static_cast<std::size_t>(enc.in_dim))
    throw std::invalid_argument("encoder_forward: batch width != in_dim");
  const std::size_t n = batch.rows;
  Matrix hidden(n, enc.hidden_dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (int h = 0; h < enc.hidden_dim; ++h) {
      double acc = enc.b1[h];
      for (int j = 0; j < enc.in_dim; ++j) acc += batch(i, j) * enc.w1(j, h);
      hidden(i, h) = std::tanh(acc);
    }
  }
  Matrix feat(n, enc.feat_dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (int f = 0; f < enc.feat_dim; ++f) {
      double acc = enc.b2[f];
      for (int h = 0; h < enc.hidden_dim; ++h)
        acc += hidden(i, h) * enc.w2(h, f);
      feat(i, f) = acc;
    }
  }
  if (cache) {
    cache->input = batch;
    cache->hidden = std::move(hidden);
  }
  return feat;
}

// Backpropagates dL/dfeatures to parameter gradients (accumulated into
// `grads`) and, when `input_grad` is non-null, to dL/dinput.
inline void encoder_backward(const Encoder& enc, const EncoderCache& cache,
                             const Matrix& dfeat, EncoderGrads& grads,
                             Matrix* input_grad = nullptr) {
  const std::size_t n = cache.input.rows;
  require_shape(dfeat, n, enc.feat_dim, "encoder_backward dfeat");

  // Output layer.
  for (std::size_t i = 0; i < n; ++i)
    for (int f = 0; f < enc.feat_dim; ++f) {
      const double d = dfeat(i, f);
      if (d == 0.0) continue;
      grads.b2[f] += d;
      for (int h = 0; h < enc.hidden_dim; ++h)
        grads.w2(h, f) += cache.hidden(i, h) * d;
    }

  // Through tanh.
  Matrix dpre(n, enc.hidden_dim);
  for (std::size_t i = 0; i < n; ++i)
    for (int h = 0; h < enc.hidden_dim; ++h) {
      double acc = 0.0;
      for (int f = 0; f < enc.feat_dim; ++f)
        acc += dfeat(i, f) * enc.w2(h, f);
      const double t = cache.hidden(i, h);
      dpre(i, h) = acc * (1.0 - t * t);
    }

  for (std::size_t i = 0; i < n; ++i)
    for (int h = 0; h < enc.hidden_dim; ++h) {
      const double d = dpre(i, h);
      if (d == 0.0) continue;
      grads.b1[h] += d;
      for (int j = 0; j < enc.in_dim; ++j)
        grads.w1(j, h) += cache.input(i, j) * d;
    }

  if (input_grad) {
    *input_grad = Matrix(n, enc.in_dim);
    for (std::size_t i = 0; i < n; ++i)
      for (int j = 0; j < enc.in_dim; ++j) {
        double acc = 0.0;
        for (int h = 0; h < enc.hidden_dim; ++h)
          acc += dpre(i, h) * enc.w1(j, h);
        (*input_grad)(i, j) = acc;
      }
  }
}

struct ClassifierHead {
  int feat_dim = 0;
  int n_classes = 0;
  Matrix w;               // feat_dim x n_classes
  std::vector<double> b;  // n_classes

  static ClassifierHead init(int feat_dim, int n_classes, Rng& rng) {
    ClassifierHead h;
    h.feat_dim = feat_dim;
    h.n_classes = n_classes;
    h.w = Matrix(feat_dim, n_classes);
    h.b.assign(n_classes, 0.0);
    const double s = 1.0 / std::sqrt(static_cast<double>(feat_dim));
    for (double& w : h.w.data) w = s * rng.normal();
    return h;
  }
};

struct ClsResult {
  double loss = 0.0;
  Matrix dfeatures;
  Matrix dw;
  std::vector<double> db;
};

// Mean negative log softmax probability of the true class over the batch.
inline ClsResult loss_cls(const ClassifierHead& head, const Matrix& features,
                          std::span<const int> labels) {
  const std::size_t n = features.rows;
  if (labels.size() != n)
    throw std::invalid_argument("loss_cls: labels size != batch size");
  require_shape(features, n, head.feat_dim, "loss_cls features");
  for (int y : labels)
    if (y < 0 || y >= head.n_classes)
      throw std::invalid_argument("loss_cls: label out of range");

  ClsResult res;
  res.dfeatures = Matrix(n, head.feat_dim);
  res.dw = Matrix(head.w.rows, head.w.cols);
  res.db.assign(head.b.size(), 0.0);

  std::vector<double> logits(head.n_classes);
  std::vector<double> probs(head.n_classes);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    double maxz = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < head.n_classes; ++c) {
      double acc = head.b[c];
      for (int f = 0; f < head.feat_dim; ++f)
        acc += features(i, f) * head.w(f, c);
      logits[c] = acc;
      maxz = std::max(maxz, acc);
    }
    double denom = 0.0;
    for (int c = 0; c < head.n_classes; ++c) {
      probs[c] = std::exp(logits[c] - maxz);
      denom += probs[c];
    }
    const int y = labels[i];
    res.loss += -(logits[y] - maxz - std::log(denom)) * inv_n;
    for (int c = 0; c < head.n_classes; ++c) {
      const double dz = (probs[c] / denom - (c == y ? 1.0 : 0.0)) * inv_n;
      res.db[c] += dz;
      for (int f = 0; f < head.feat_dim; ++f) {
        res.dw(f, c) += features(i, f) * dz;
        res.dfeatures(i, f) += dz * head.w(f, c);
      }
    }
  }
  return res;
}

struct TripletResult {
  double loss = 0.0;
  Matrix dfeatures;
  int n_valid_anchors = 0;
};

// Batch-hard triplet loss. For each anchor with at least one positive and
// one negative, every positive contributes a hinge against the single
// hardest (closest) negative; the batch loss is the mean of the per-anchor
// hinge sums over valid anchors. Conventions pinned for determinism:
// hardest-negative ties break toward the lowest sample index, the hinge
// subgradient at the kink is 0, and a zero anchor-pair distance contributes
// a zero direction vector.
inline TripletResult loss_triplet_batch_hard(const Matrix& features,
                                             std::span<const int> labels,
                                             double margin) {
  const std::size_t n = features.rows;
  if (labels.size() != n)
    throw std::invalid_argument("triplet: labels size != batch size");
  if (n < 2) throw std::invalid_argument("triplet: batch too small");
  {
    bool two_labels = false;
    for (std::size_t i = 1; i < n; ++i)
      if (labels[i] != labels[0]) {
        two_labels = true;
        break;
      }
    if (!two_labels)
      throw std::invalid_argument(
          "triplet: batch contains a single label, no negatives exist");
  }

  Matrix dist(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = euclidean(features.row(i), features.row(j));
      dist(i, j) = d;
      dist(j, i) = d;
    }

  TripletResult res;
  res.dfeatures = Matrix(n, features.cols);
  struct Active {
    std::size_t anchor, pos, neg;
  };
  std::vector<Active> active;
  for (std::size_t a = 0; a < n; ++a) {
    std::size_t hardest_neg = n;
    double best = std::numeric_limits<double>::infinity();
    bool has_pos = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a) continue;
      if (labels[j] == labels[a]) {
        has_pos = true;
      } else if (dist(a, j) < best) {
        best = dist(a, j);
        hardest_neg = j;
      }
    }
    if (!has_pos || hardest_neg == n) continue;
    ++res.n_valid_anchors;
    for (std::size_t p = 0; p < n; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      const double term = margin + dist(a, p) - dist(a, hardest_neg);
      if (term > 0.0) {
        res.loss += term;
        active.push_back({a, p, hardest_neg});
      }
    }
  }

  if (res.n_valid_anchors == 0) return res;  // no triplets: zero loss/grad
  const double inv = 1.0 / static_cast<double>(res.n_valid_anchors);
  res.loss *= inv;

  auto add_dir = [&](std::size_t i, std::size_t j, double w) {
    // w * d||f_i - f_j|| / df_i, and the negated contribution on f_j
    const double d = dist(i, j);
    if (d == 0.0) return;
    const double s = w / d;
    for (std::size_t c = 0; c < features.cols; ++c) {
      const double diff = (features(i, c) - features(j, c)) * s;
      res.dfeatures(i, c) += diff;
      res.dfeatures(j, c) -= diff;
    }
  };
  for (const Active& t : active) {
    add_dir(t.anchor, t.pos, inv);
    add_dir(t.anchor, t.neg, -inv);
  }
  return res;
}

// SGD with momentum: v = momentum*v - lr*grad; param += v.
struct SgdOptimizer {
  double lr = 1e-2;
  double momentum = 0.9;
  std::vector<std::vector<double>> velocity;

  void validate() const {
    if (lr <= 0.0) throw std::invalid_argument("SgdOptimizer: lr must be > 0");
    if (momentum < 0.0 || momentum >= 1.0)
      throw std::invalid_argument("SgdOptimizer: momentum must be in [0,1)");
  }
};

struct ParamGrad {
  double* param;
  const double* grad;
  std::size_t size;
};

inline void sgd_step(SgdOptimizer& opt, std::span<const ParamGrad> params) {
  if (opt.velocity.empty()) {
    opt.velocity.resize(params.size());
    for (std::size_t k = 0; k < params.size(); ++k)
      opt.velocity[k].assign(params[k].size, 0.0);
  }
  if (opt.velocity.size() != params.size())
    throw std::invalid_argument("sgd_step: parameter group count changed");
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& v = opt.velocity[k];
    if (v.size() != params[k].size)
      throw std::invalid_argument("sgd_step: parameter shape changed");
    double* p = params[k].param;
    const double* g = params[k].grad;
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = opt.momentum * v[i] - opt.lr * g[i];
      p[i] += v[i];
    }
  }
}

inline std::vector<ParamGrad> encoder_params(Encoder& enc, EncoderGrads& g) {
  return {
      {enc.w1.data.data(), g.w1.data.data(), enc.w1.data.size()},
      {enc.b1.data(), g.b1.data(), enc.b1.size()},
      {enc.w2.data.data(), g.w2.data.data(), enc.w2.data.size()},
      {enc.b2.data(), g.b2.data(), enc.b2.size()},
  };
}

// Source-domain hyperparameters. n_t records the target-side batch size for
// bookkeeping; the adaptation loop's batch size is P * K_img.
struct TrainHyper {
  double margin = 0.5;
  int n_s = 32;
  int n_t = 32;
  int epochs = 15;

  void validate() const {
    if (margin <= 0.0) throw std::invalid_argument("TrainHyper: margin <= 0");
    if (n_s < 2 || n_t < 2)
      throw std::invalid_argument("TrainHyper: batch sizes must be >= 2");
    if (epochs < 0) throw std::invalid_argument("TrainHyper: epochs < 0");
  }
};

// Supervised pretraining on the labelled source domain: classification +
// triplet loss over shuffled mini-batches. Returns the mean batch loss per
// epoch. Batches that happen to contain a single identity skip the triplet
// term rather than submitting an invalid batch to it.
inline std::vector<double> pretrain_source(Encoder& enc, ClassifierHead& head,
                                           const Dataset& source,
                                           const TrainHyper& hyper,
                                           SgdOptimizer& opt,
                                           std::uint64_t seed) {
  hyper.validate();
  opt.validate();
  const int n = source.size();
  if (n < hyper.n_s)
    throw std::invalid_argument("pretrain_source: dataset smaller than batch");
  Rng rng(seed);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  SgdOptimizer head_opt{opt.lr, opt.momentum, {}};
  std::vector<double> epoch_losses;
  Matrix batch(hyper.n_s, source.raw_dim);
  std::vector<int> labels(hyper.n_s);
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    // Fisher-Yates shuffle
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(rng.uniform_index(i + 1));
      std::swap(order[i], order[j]);
    }
    double epoch_loss = 0.0;
    int n_batches = 0;
    for (int start = 0; start + hyper.n_s <= n; start += hyper.n_s) {
      for (int k = 0; k < hyper.n_s; ++k) {
        const Sample& s = source.samples[order[start + k]];
        for (int j = 0; j < source.raw_dim; ++j) batch(k, j) = s.raw[j];
        labels[k] = s.identity;
      }
      EncoderCache cache;
      Matrix feat = encoder_forward(enc, batch, &cache);
      ClsResult cls = loss_cls(head, feat, labels);
      double total = cls.loss;
      Matrix dfeat = std::move(cls.dfeatures);
      const bool single_label =
          std::all_of(labels.begin(), labels.end(),
                      [&](int y) { return y == labels[0]; });
      if (!single_label) {
        TripletResult tri =
            loss_triplet_batch_hard(feat, labels, hyper.margin);
        total += tri.loss;
        for (std::size_t i = 0; i < dfeat.data.size(); ++i)
          dfeat.data[i] += tri.dfeatures.data[i];
      }
      EncoderGrads grads = EncoderGrads::zeros_like(enc);
      encoder_backward(enc, cache, dfeat, grads);
      auto enc_pg = encoder_params(enc, grads);
      sgd_step(opt, enc_pg);
      const ParamGrad head_pg[] = {
          {head.w.data.data(), cls.dw.data.data(), head.w.data.size()},
          {head.b.data(), cls.db.data(), head.b.size()},
      };
      sgd_step(head_opt, head_pg);
      epoch_loss += total;
      ++n_batches;
    }
    epoch_losses.push_back(n_batches > 0 ? epoch_loss / n_batches : 0.0);
  }
  return epoch_losses;
}

struct GradCheckItem {
  double* value;
  double analytic;
};

// Central finite differences against supplied analytic gradients. Returns
// max over entries of |analytic - numeric| / max(|analytic|, |numeric|,
// 1e-12). The closure must be a deterministic function of the checked
// values.
inline double grad_check(const std::function<double()>& loss,
                         std::span<GradCheckItem> items, double step) {
  double worst = 0.0;
  for (GradCheckItem& it : items) {
    const double saved = *it.value;
    *it.value = saved + step;
    const double up = loss();
    *it.value = saved - step;
    const double down = loss();
    *it.value = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double denom =
        std::max({std::abs(it.analytic), std::abs(numeric), 1e-12});
    worst = std::max(worst, std::abs(it.analytic - numeric) / denom);
  }
  return worst;
}

}  // namespace camadapt
