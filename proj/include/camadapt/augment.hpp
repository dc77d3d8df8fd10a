#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "camadapt/cluster.hpp"
#include "camadapt/matrix.hpp"
#include "camadapt/nncore.hpp"
#include "camadapt/synthdata.hpp"

namespace camadapt {

// Identity-preserving cross-camera translator: one affine map per target
// camera, g(x, c) = U_c * x + v_c. Identity initialisation makes g a no-op
// until trained.
struct StyleGenerator {
  int n_cameras = 0;
  int raw_dim = 0;
  std::vector<Matrix> u;               // per camera, raw_dim x raw_dim
  std::vector<std::vector<double>> v;  // per camera, raw_dim

  static StyleGenerator identity(int n_cameras, int raw_dim) {
    StyleGenerator g;
    g.n_cameras = n_cameras;
    g.raw_dim = raw_dim;
    g.u.assign(n_cameras, Matrix(raw_dim, raw_dim));
    g.v.assign(n_cameras, std::vector<double>(raw_dim, 0.0));
    for (int c = 0; c < n_cameras; ++c)
      for (int j = 0; j < raw_dim; ++j) g.u[c](j, j) = 1.0;
    return g;
  }

  static StyleGenerator random_near_identity(int n_cameras, int raw_dim,
                                             double scale, Rng& rng) {
    StyleGenerator g = identity(n_cameras, raw_dim);
    for (int c = 0; c < n_cameras; ++c) {
      for (double& w : g.u[c].data) w += scale * rng.normal();
      for (double& w : g.v[c]) w += scale * rng.normal();
    }
    return g;
  }
};

struct GeneratorGrads {
  std::vector<Matrix> u;
  std::vector<std::vector<double>> v;

  static GeneratorGrads zeros_like(const StyleGenerator& g) {
    GeneratorGrads gr;
    gr.u.assign(g.n_cameras, Matrix(g.raw_dim, g.raw_dim));
    gr.v.assign(g.n_cameras, std::vector<double>(g.raw_dim, 0.0));
    return gr;
  }
};

inline std::vector<ParamGrad> generator_params(StyleGenerator& g,
                                               GeneratorGrads& gr) {
  std::vector<ParamGrad> out;
  out.reserve(2 * g.n_cameras);
  for (int c = 0; c < g.n_cameras; ++c) {
    out.push_back({g.u[c].data.data(), gr.u[c].data.data(),
                   g.u[c].data.size()});
    out.push_back({g.v[c].data(), gr.v[c].data(), g.v[c].size()});
  }
  return out;
}

inline std::vector<double> generate(const StyleGenerator& g,
                                    std::span<const double> raw,
                                    int target_camera) {
  if (target_camera < 0 || target_camera >= g.n_cameras)
    throw std::invalid_argument("generate: camera out of range");
  if (raw.size() != static_cast<std::size_t>(g.raw_dim))
    throw std::invalid_argument("generate: raw dimension mismatch");
  std::vector<double> out(g.v[target_camera]);
  const Matrix& u = g.u[target_camera];
  for (int i = 0; i < g.raw_dim; ++i)
    for (int j = 0; j < g.raw_dim; ++j) out[i] += u(i, j) * raw[j];
  return out;
}

struct AugmentedSample {
  std::vector<double> raw;
  int pseudo_label = 0;
  int source_index = 0;
  int target_camera = 0;
};

// One augmented sample per camera other than the original's, inheriting the
// pseudo-label. Noise samples produce nothing.
inline std::vector<AugmentedSample> augment_cluster_samples(
    const StyleGenerator& g, const Dataset& ds,
    const ClusterAssignment& assignment) {
  if (assignment.labels.size() != ds.samples.size())
    throw std::invalid_argument("augment_cluster_samples: stale assignment");
  std::vector<AugmentedSample> out;
  for (int i = 0; i < ds.size(); ++i) {
    const int label = assignment.labels[i];
    if (label == kNoise) continue;
    const Sample& s = ds.samples[i];
    for (int c = 0; c < g.n_cameras; ++c) {
      if (c == s.camera) continue;
      out.push_back({generate(g, s.raw, c), label, i, c});
    }
  }
  return out;
}

struct GenHyper {
  double lambda = 0.03;      // diversity attenuation
  double beta_recon = 1.0;   // reconstruction weight
  double gen_lr = 1e-3;
  double gen_momentum = 0.9;

  void validate() const {
    if (lambda <= 0.0) throw std::invalid_argument("GenHyper: lambda <= 0");
    if (beta_recon < 0.0)
      throw std::invalid_argument("GenHyper: beta_recon < 0");
    if (gen_lr <= 0.0) throw std::invalid_argument("GenHyper: gen_lr <= 0");
    if (gen_momentum < 0.0 || gen_momentum >= 1.0)
      throw std::invalid_argument("GenHyper: gen_momentum not in [0,1)");
  }
};

// One generator-side training sample: a raw vector, the cluster it belongs
// to and the camera it will be translated to.
struct MaxStepSample {
  std::vector<double> raw;
  int camera = 0;       // camera of the original sample
  int cluster = 0;      // pseudo-label; never noise
  int gen_camera = 0;   // translation target
};

// Per-sample diversity: distance between the encoded translated sample and
// its cluster center. Centers must come from the current encoder over the
// original cluster members.
inline std::vector<double> diversity(const Encoder& enc,
                                     const StyleGenerator& g,
                                     std::span<const MaxStepSample> batch,
                                     const Matrix& centers) {
  std::vector<double> out;
  out.reserve(batch.size());
  Matrix translated(batch.size(), g.raw_dim);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].cluster == kNoise)
      throw std::invalid_argument("diversity: noise sample in batch");
    const std::vector<double> gx = generate(g, batch[i].raw,
                                            batch[i].gen_camera);
    for (int j = 0; j < g.raw_dim; ++j) translated(i, j) = gx[j];
  }
  const Matrix feat = encoder_forward(enc, translated);
  for (std::size_t i = 0; i < batch.size(); ++i)
    out.push_back(euclidean(feat.row(i),
                            centers.row(batch[i].cluster)));
  return out;
}

// L_div = mean exp(-lambda * D_div). Bounded in (0, 1] and strictly
// decreasing in every D_div, so pushing it down raises diversity.
inline double loss_div_value(std::span<const double> d_div, double lambda) {
  if (lambda <= 0.0) throw std::invalid_argument("loss_div: lambda <= 0");
  double acc = 0.0;
  for (double d : d_div) acc += std::exp(-lambda * d);
  return d_div.empty() ? 1.0 : acc / static_cast<double>(d_div.size());
}

struct ReconResult {
  double loss = 0.0;
  GeneratorGrads grads;
};

// Identity-preservation penalty: for every sample and every camera other
// than its own, a cycle term ||g(g(x,c'),c) - x||^2 plus a same-camera
// term ||g(x,c) - x||^2, averaged over all (sample, c') pairs. Zero exactly
// at the identity generator.
inline ReconResult loss_recon(const StyleGenerator& g, const Matrix& raws,
                              std::span<const int> cameras,
                              bool want_grads = true) {
  if (cameras.size() != raws.rows)
    throw std::invalid_argument("loss_recon: camera count mismatch");
  ReconResult res;
  if (want_grads) res.grads = GeneratorGrads::zeros_like(g);
  const std::size_t n = raws.rows;
  const int dim = g.raw_dim;
  if (n == 0 || g.n_cameras < 2) return res;
  const double inv = 1.0 / (static_cast<double>(n) * (g.n_cameras - 1));

  std::vector<double> mid(dim), out(dim), resid(dim), dmid(dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = raws.row(i);
    const int own = cameras[i];
    if (own < 0 || own >= g.n_cameras)
      throw std::invalid_argument("loss_recon: camera out of range");
    for (int cp = 0; cp < g.n_cameras; ++cp) {
      if (cp == own) continue;
      // cycle: back-translate through the sample's own camera
      for (int a = 0; a < dim; ++a) {
        double acc = g.v[cp][a];
        for (int b = 0; b < dim; ++b) acc += g.u[cp](a, b) * x[b];
        mid[a] = acc;
      }
      for (int a = 0; a < dim; ++a) {
        double acc = g.v[own][a];
        for (int b = 0; b < dim; ++b) acc += g.u[own](a, b) * mid[b];
        out[a] = acc;
        resid[a] = out[a] - x[a];
        res.loss += resid[a] * resid[a] * inv;
      }
      if (want_grads) {
        for (int a = 0; a < dim; ++a) {
          const double da = 2.0 * resid[a] * inv;
          res.grads.v[own][a] += da;
          for (int b = 0; b < dim; ++b)
            res.grads.u[own](a, b) += da * mid[b];
        }
        for (int b = 0; b < dim; ++b) {
          double acc = 0.0;
          for (int a = 0; a < dim; ++a)
            acc += 2.0 * resid[a] * inv * g.u[own](a, b);
          dmid[b] = acc;
        }
        for (int a = 0; a < dim; ++a) {
          res.grads.v[cp][a] += dmid[a];
          for (int b = 0; b < dim; ++b)
            res.grads.u[cp](a, b) += dmid[a] * x[b];
        }
      }
      // same-camera identity term
      for (int a = 0; a < dim; ++a) {
        double acc = g.v[own][a];
        for (int b = 0; b < dim; ++b) acc += g.u[own](a, b) * x[b];
        resid[a] = acc - x[a];
        res.loss += resid[a] * resid[a] * inv;
      }
      if (want_grads) {
        for (int a = 0; a < dim; ++a) {
          const double da = 2.0 * resid[a] * inv;
          res.grads.v[own][a] += da;
          for (int b = 0; b < dim; ++b)
            res.grads.u[own](a, b) += da * x[b];
        }
      }
    }
  }
  return res;
}

struct DivLossResult {
  double loss = 0.0;
  std::vector<double> d_div;
  GeneratorGrads grads;
};

// L_div and its gradient w.r.t. the generator parameters, backpropagated
// through the frozen encoder to its input and from there to the affine
// maps. A zero diversity contributes a zero direction.
inline DivLossResult loss_div_backward(const Encoder& enc,
                                       const StyleGenerator& g,
                                       std::span<const MaxStepSample> batch,
                                       const Matrix& centers, double lambda) {
  if (lambda <= 0.0)
    throw std::invalid_argument("loss_div_backward: lambda <= 0");
  if (batch.empty())
    throw std::invalid_argument("loss_div_backward: empty batch");
  const std::size_t n = batch.size();
  const int dim = g.raw_dim;

  Matrix translated(n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    if (batch[i].cluster == kNoise)
      throw std::invalid_argument("loss_div_backward: noise sample in batch");
    const std::vector<double> gx = generate(g, batch[i].raw,
                                            batch[i].gen_camera);
    for (int j = 0; j < dim; ++j) translated(i, j) = gx[j];
  }

  EncoderCache cache;
  const Matrix feat = encoder_forward(enc, translated, &cache);

  DivLossResult res;
  res.d_div.resize(n);
  Matrix dfeat(n, enc.feat_dim);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = centers.row(batch[i].cluster);
    const double dd = euclidean(feat.row(i), c);
    res.d_div[i] = dd;
    const double e = std::exp(-lambda * dd);
    res.loss += e * inv_n;
    if (dd > 0.0) {
      const double scale = -lambda * e * inv_n / dd;
      for (int f = 0; f < enc.feat_dim; ++f)
        dfeat(i, f) = scale * (feat(i, f) - c[f]);
    }
  }

  EncoderGrads unused = EncoderGrads::zeros_like(enc);
  Matrix dinput;
  encoder_backward(enc, cache, dfeat, unused, &dinput);

  res.grads = GeneratorGrads::zeros_like(g);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = batch[i].gen_camera;
    for (int a = 0; a < dim; ++a) {
      const double da = dinput(i, a);
      res.grads.v[c][a] += da;
      for (int b = 0; b < dim; ++b)
        res.grads.u[c](a, b) += da * batch[i].raw[b];
    }
  }
  return res;
}

struct MaxStepStats {
  double mean_d_div = 0.0;
  double loss_div = 0.0;
  double loss_recon = 0.0;
};

// Max-step: one SGD step on the generator minimising
// L_div + beta_recon * L_rec with the encoder frozen.
inline MaxStepStats max_step(StyleGenerator& g, const Encoder& enc,
                             std::span<const MaxStepSample> batch,
                             const Matrix& centers, const GenHyper& hyper,
                             SgdOptimizer& opt) {
  hyper.validate();
  DivLossResult div = loss_div_backward(enc, g, batch, centers, hyper.lambda);

  MaxStepStats stats;
  stats.loss_div = div.loss;
  for (double d : div.d_div) stats.mean_d_div += d;
  stats.mean_d_div /= static_cast<double>(div.d_div.size());

  GeneratorGrads grads = std::move(div.grads);
  if (hyper.beta_recon > 0.0) {
    const std::size_t n = batch.size();
    Matrix raws(n, g.raw_dim);
    std::vector<int> cameras(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (int j = 0; j < g.raw_dim; ++j) raws(i, j) = batch[i].raw[j];
      cameras[i] = batch[i].camera;
    }
    ReconResult rec = loss_recon(g, raws, cameras);
    stats.loss_recon = rec.loss;
    for (int c = 0; c < g.n_cameras; ++c) {
      for (std::size_t k = 0; k < grads.u[c].data.size(); ++k)
        grads.u[c].data[k] += hyper.beta_recon * rec.grads.u[c].data[k];
      for (std::size_t k = 0; k < grads.v[c].size(); ++k)
        grads.v[c][k] += hyper.beta_recon * rec.grads.v[c][k];
    }
  }

  auto pg = generator_params(g, grads);
  sgd_step(opt, pg);
  return stats;
}

// Fits the generator toward identity reconstruction from a random start;
// used by the augmentation-only ablation, where the residual style jitter
// is the whole point of the pre-fit.
inline StyleGenerator prefit_style_generator(const Dataset& target,
                                             double init_scale, int steps,
                                             const GenHyper& hyper,
                                             std::uint64_t seed) {
  Rng rng(seed);
  StyleGenerator g = StyleGenerator::random_near_identity(
      target.n_cameras, target.raw_dim, init_scale, rng);
  const Matrix raws = target.raw_matrix();
  std::vector<int> cameras(target.size());
  for (int i = 0; i < target.size(); ++i)
    cameras[i] = target.samples[i].camera;
  SgdOptimizer opt{hyper.gen_lr, hyper.gen_momentum, {}};
  for (int s = 0; s < steps; ++s) {
    ReconResult rec = loss_recon(g, raws, cameras);
    GeneratorGrads grads = std::move(rec.grads);
    auto pg = generator_params(g, grads);
    sgd_step(opt, pg);
  }
  return g;
}

}  // namespace camadapt
