#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "camadapt/augment.hpp"
#include "camadapt/cluster.hpp"
#include "camadapt/eval.hpp"
#include "camadapt/matrix.hpp"
#include "camadapt/nncore.hpp"
#include "camadapt/rng.hpp"
#include "camadapt/synthdata.hpp"

namespace camadapt {

enum class AdaptMode { Baseline, BaselineAsa, Full };

inline const char* to_string(AdaptMode m) {
  switch (m) {
    case AdaptMode::Baseline: return "baseline";
    case AdaptMode::BaselineAsa: return "asa";
    case AdaptMode::Full: return "full";
  }
  return "?";
}

struct AdaptConfig {
  int n_cluster_iterations = 10;
  int epochs_per_iteration = 10;
  int P = 8;      // pseudo-identities per batch
  int K_img = 4;  // samples per pseudo-identity
  int aug_ratio = 3;  // originals per augmented sample (R:1)
  AdaptMode mode = AdaptMode::Full;
  std::uint64_t seed = 1;
  int asa_prefit_steps = 50;
  double asa_init_scale = 0.1;

  void validate() const {
    if (n_cluster_iterations < 0)
      throw std::invalid_argument("AdaptConfig: n_cluster_iterations < 0");
    if (epochs_per_iteration < 1)
      throw std::invalid_argument("AdaptConfig: epochs_per_iteration < 1");
    if (P < 2 || K_img < 2)
      throw std::invalid_argument("AdaptConfig: need P >= 2 and K_img >= 2");
    if (aug_ratio < 1) throw std::invalid_argument("AdaptConfig: aug_ratio < 1");
    if (asa_prefit_steps < 0 || asa_init_scale < 0.0)
      throw std::invalid_argument("AdaptConfig: bad ASA pre-fit settings");
  }
};

struct IterationRecord {
  int iteration = 0;
  int n_clusters = 0;
  int n_noise = 0;
  double pseudo_fscore = 0.0;
  double mAP = 0.0;
  double cmc1 = 0.0;
  double cmc5 = 0.0;
  double cmc10 = 0.0;
  double J = 0.0;
  double mean_L_div = 0.0;
  double mean_L_tri = 0.0;
};

using History = std::vector<IterationRecord>;

// One slot of a PK batch; gen_camera < 0 marks an original sample.
struct PkEntry {
  int sample_index = 0;
  int gen_camera = -1;
  int pseudo_label = 0;

  bool is_augmented() const { return gen_camera >= 0; }
};

// PK sampling over pseudo-identities: P clusters with >= 2 members, K_img
// slots each, of which n_aug are cross-camera augmentations of cluster
// members. Members are drawn without replacement when the cluster is large
// enough, with replacement otherwise.
inline std::vector<PkEntry> sample_pk_batch(const ClusterAssignment& a,
                                            std::span<const int> cameras,
                                            int n_cameras, int P, int K_img,
                                            int n_aug, Rng& rng) {
  if (P < 2 || K_img < 2)
    throw std::invalid_argument("sample_pk_batch: need P >= 2, K_img >= 2");
  if (n_aug < 0 || n_aug >= K_img)
    throw std::invalid_argument("sample_pk_batch: n_aug out of range");
  std::vector<std::vector<int>> members(a.n_clusters());
  for (std::size_t i = 0; i < a.labels.size(); ++i)
    if (a.labels[i] != kNoise) members[a.labels[i]].push_back(i);
  std::vector<int> eligible;
  for (int c = 0; c < a.n_clusters(); ++c)
    if (members[c].size() >= 2) eligible.push_back(c);
  if (static_cast<int>(eligible.size()) < P)
    throw std::invalid_argument(
        "sample_pk_batch: fewer than P clusters with >= 2 members");

  // P distinct clusters via partial Fisher-Yates.
  for (int t = 0; t < P; ++t) {
    const std::size_t j = t + rng.uniform_index(eligible.size() - t);
    std::swap(eligible[t], eligible[j]);
  }

  std::vector<PkEntry> batch;
  batch.reserve(static_cast<std::size_t>(P) * K_img);
  const int n_orig = K_img - n_aug;
  std::vector<int> pool;
  for (int t = 0; t < P; ++t) {
    const int cluster = eligible[t];
    const auto& mem = members[cluster];
    if (static_cast<int>(mem.size()) >= n_orig) {
      pool = mem;
      for (int k = 0; k < n_orig; ++k) {
        const std::size_t j = k + rng.uniform_index(pool.size() - k);
        std::swap(pool[k], pool[j]);
        batch.push_back({pool[k], -1, cluster});
      }
    } else {
      for (int k = 0; k < n_orig; ++k)
        batch.push_back(
            {mem[rng.uniform_index(mem.size())], -1, cluster});
    }
    for (int k = 0; k < n_aug; ++k) {
      const int src = mem[rng.uniform_index(mem.size())];
      const int own = cameras[src];
      // uniform over the other cameras
      int cam = static_cast<int>(rng.uniform_index(n_cameras - 1));
      if (cam >= own) ++cam;
      batch.push_back({src, cam, cluster});
    }
  }
  return batch;
}

// Min-step: one SGD step on the encoder driven by the batch-hard triplet
// loss over the materialised batch. Returns the loss before the step.
inline double min_step(Encoder& f, const Matrix& raws,
                       std::span<const int> labels, double margin,
                       SgdOptimizer& opt) {
  EncoderCache cache;
  const Matrix feat = encoder_forward(f, raws, &cache);
  TripletResult tri = loss_triplet_batch_hard(feat, labels, margin);
  EncoderGrads grads = EncoderGrads::zeros_like(f);
  encoder_backward(f, cache, tri.dfeatures, grads);
  auto pg = encoder_params(f, grads);
  sgd_step(opt, pg);
  return tri.loss;
}

namespace detail {

// Feature-space centers of the given clusters under the current encoder,
// computed from original members only. Rows of clusters not requested stay
// zero.
inline Matrix encode_centers(const Encoder& f, const Dataset& target,
                             const ClusterAssignment& a,
                             std::span<const int> clusters) {
  Matrix centers(a.n_clusters(), f.feat_dim);
  std::vector<char> wanted(a.n_clusters(), 0);
  for (int c : clusters) wanted[c] = 1;
  std::vector<int> rows;
  for (std::size_t i = 0; i < a.labels.size(); ++i)
    if (a.labels[i] != kNoise && wanted[a.labels[i]]) rows.push_back(i);
  Matrix raws(rows.size(), target.raw_dim);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (int j = 0; j < target.raw_dim; ++j)
      raws(r, j) = target.samples[rows[r]].raw[j];
  const Matrix feat = encoder_forward(f, raws);
  std::vector<int> counts(a.n_clusters(), 0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int c = a.labels[rows[r]];
    ++counts[c];
    for (int k = 0; k < f.feat_dim; ++k) centers(c, k) += feat(r, k);
  }
  for (int c = 0; c < a.n_clusters(); ++c)
    if (counts[c] > 0)
      for (int k = 0; k < f.feat_dim; ++k)
        centers(c, k) /= static_cast<double>(counts[c]);
  return centers;
}

}  // namespace detail

// The adaptation loop: per clustering iteration, extract features once,
// predict pseudo-labels, then run PK mini-batches. FULL alternates one
// generator max-step and one encoder min-step per batch; BASELINE trains on
// originals only and never touches the generator; BASELINE_ASA augments
// with a generator pre-fit on reconstruction alone, frozen throughout, and
// never evaluates the diversity loss. If clustering yields fewer than two
// usable clusters the iteration falls back to the previous labels; without
// any, it records the iteration and skips training.
using IterationCallback =
    std::function<void(const IterationRecord&, const Encoder&,
                       const StyleGenerator&)>;

inline History adapt(Encoder& f, StyleGenerator& g, const Dataset& target,
                     const AdaptConfig& cfg, const ClusterParams& cp,
                     const GenHyper& gh, double margin, SgdOptimizer& opt_f,
                     SgdOptimizer& opt_g, const QueryGallerySplit& split,
                     const IterationCallback& on_iteration = {}) {
  cfg.validate();
  cp.validate();
  gh.validate();

  if (cfg.mode == AdaptMode::BaselineAsa)
    g = prefit_style_generator(target, cfg.asa_init_scale,
                               cfg.asa_prefit_steps, gh,
                               derive_seed(cfg.seed, 11));
  Rng rng(derive_seed(cfg.seed, 12));

  const Matrix target_raws = target.raw_matrix();
  std::vector<int> identities(target.size()), cameras(target.size());
  for (int i = 0; i < target.size(); ++i) {
    identities[i] = target.samples[i].identity;
    cameras[i] = target.samples[i].camera;
  }
  const int n_aug =
      cfg.mode == AdaptMode::Baseline ? 0 : cfg.K_img / (cfg.aug_ratio + 1);

  History history;
  std::optional<std::vector<int>> prev_labels;
  for (int iter = 0; iter < cfg.n_cluster_iterations; ++iter) {
    const Matrix features = encoder_forward(f, target_raws);
    ClusterAssignment assignment = assign_pseudo_labels(features, cp);

    auto eligible_count = [](const ClusterAssignment& a) {
      int c = 0;
      for (int s : a.cluster_sizes) c += s >= 2;
      return c;
    };
    bool usable = assignment.n_clusters() >= 2 && eligible_count(assignment) >= 2;
    if (!usable && prev_labels) {
      assignment.labels = *prev_labels;
      auto [centers, sizes] = cluster_centers(features, assignment.labels);
      assignment.centers = std::move(centers);
      assignment.cluster_sizes = std::move(sizes);
      usable = eligible_count(assignment) >= 2;
    }

    IterationRecord rec;
    rec.iteration = iter;
    rec.n_clusters = assignment.n_clusters();
    rec.n_noise = assignment.n_noise();

    if (usable) {
      prev_labels = assignment.labels;
      const int effective_p =
          std::min(cfg.P, eligible_count(assignment));
      const int n_clustered =
          target.size() - assignment.n_noise();
      const int batch_size = cfg.P * cfg.K_img;
      const int batches_per_epoch =
          (n_clustered + batch_size - 1) / batch_size;

      double sum_div = 0.0, sum_tri = 0.0;
      int n_div = 0, n_tri = 0;
      for (int epoch = 0; epoch < cfg.epochs_per_iteration; ++epoch) {
        for (int b = 0; b < batches_per_epoch; ++b) {
          const std::vector<PkEntry> pk = sample_pk_batch(
              assignment, cameras, target.n_cameras, effective_p, cfg.K_img,
              n_aug, rng);

          if (cfg.mode == AdaptMode::Full) {
            // Max-step on the batch originals, each translated to a random
            // other camera, against centers under the current encoder.
            std::vector<MaxStepSample> max_batch;
            std::vector<int> batch_clusters;
            for (const PkEntry& e : pk) {
              if (e.is_augmented()) continue;
              const int own = cameras[e.sample_index];
              int cam = static_cast<int>(
                  rng.uniform_index(target.n_cameras - 1));
              if (cam >= own) ++cam;
              max_batch.push_back({target.samples[e.sample_index].raw, own,
                                   e.pseudo_label, cam});
              batch_clusters.push_back(e.pseudo_label);
            }
            const Matrix centers =
                detail::encode_centers(f, target, assignment, batch_clusters);
            const MaxStepStats stats =
                max_step(g, f, max_batch, centers, gh, opt_g);
            sum_div += stats.loss_div;
            ++n_div;
          }

          // Min-step over originals plus generated samples.
          Matrix raws(pk.size(), target.raw_dim);
          std::vector<int> labels(pk.size());
          for (std::size_t k = 0; k < pk.size(); ++k) {
            const PkEntry& e = pk[k];
            labels[k] = e.pseudo_label;
            if (e.is_augmented()) {
              const std::vector<double> gen_raw = generate(
                  g, target.samples[e.sample_index].raw, e.gen_camera);
              for (int j = 0; j < target.raw_dim; ++j)
                raws(k, j) = gen_raw[j];
            } else {
              for (int j = 0; j < target.raw_dim; ++j)
                raws(k, j) = target.samples[e.sample_index].raw[j];
            }
          }
          sum_tri += min_step(f, raws, labels, margin, opt_f);
          ++n_tri;
        }
      }
      rec.mean_L_div = n_div > 0 ? sum_div / n_div : 0.0;
      rec.mean_L_tri = n_tri > 0 ? sum_tri / n_tri : 0.0;
    }

    // Post-iteration evaluation with the current encoder.
    const Matrix eval_feat = encoder_forward(f, target_raws);
    const Metrics m =
        map_cmc(eval_feat, split.query, split.gallery, identities, cameras);
    rec.mAP = m.mAP;
    rec.cmc1 = m.cmc1;
    rec.cmc5 = m.cmc5;
    rec.cmc10 = m.cmc10;
    rec.J = scatter_ratio(eval_feat, identities);
    if (assignment.n_noise() <= target.size() - 2)
      rec.pseudo_fscore =
          pairwise_fscore(assignment.labels, identities).fscore;
    history.push_back(rec);
    if (on_iteration) on_iteration(rec, f, g);
  }
  return history;
}

}  // namespace camadapt
