#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "camadapt/cluster.hpp"
#include "camadapt/matrix.hpp"

namespace camadapt {

struct Metrics {
  double mAP = 0.0;
  double cmc1 = 0.0;
  double cmc5 = 0.0;
  double cmc10 = 0.0;
  int n_queries_evaluated = 0;
};

// Cross-camera retrieval metrics. For each query, gallery entries sharing
// both its identity and camera are excluded; the rest is ranked by
// ascending feature distance, ties broken by ascending gallery position.
// Queries left without any positive are skipped.
inline Metrics map_cmc(const Matrix& features, std::span<const int> query_idx,
                       std::span<const int> gallery_idx,
                       std::span<const int> identities,
                       std::span<const int> cameras) {
  if (identities.size() != features.rows || cameras.size() != features.rows)
    throw std::invalid_argument("map_cmc: metadata size mismatch");
  Metrics m;
  double sum_ap = 0.0;
  int hit1 = 0, hit5 = 0, hit10 = 0;
  std::vector<std::pair<double, int>> ranked;  // (distance, gallery position)
  for (int q : query_idx) {
    ranked.clear();
    int n_pos = 0;
    for (std::size_t gi = 0; gi < gallery_idx.size(); ++gi) {
      const int g = gallery_idx[gi];
      if (identities[g] == identities[q] && cameras[g] == cameras[q])
        continue;  // standard same-camera exclusion
      if (identities[g] == identities[q]) ++n_pos;
      ranked.emplace_back(euclidean(features.row(q), features.row(g)),
                          static_cast<int>(gi));
    }
    if (n_pos == 0) continue;  // skipped, not evaluated
    std::sort(ranked.begin(), ranked.end());
    ++m.n_queries_evaluated;
    double ap = 0.0;
    int seen_pos = 0;
    int first_pos_rank = -1;
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      const int g = gallery_idx[ranked[r].second];
      if (identities[g] != identities[q]) continue;
      ++seen_pos;
      if (first_pos_rank < 0) first_pos_rank = static_cast<int>(r);
      ap += static_cast<double>(seen_pos) / static_cast<double>(r + 1);
    }
    sum_ap += ap / static_cast<double>(n_pos);
    if (first_pos_rank < 1) ++hit1;
    if (first_pos_rank < 5) ++hit5;
    if (first_pos_rank < 10) ++hit10;
  }
  if (m.n_queries_evaluated == 0)
    throw std::invalid_argument("map_cmc: no query has a valid positive");
  const double inv = 1.0 / static_cast<double>(m.n_queries_evaluated);
  m.mAP = sum_ap * inv;
  m.cmc1 = hit1 * inv;
  m.cmc5 = hit5 * inv;
  m.cmc10 = hit10 * inv;
  return m;
}

struct FScore {
  double precision = 0.0;
  double recall = 0.0;
  double fscore = 0.0;
};

// Pairwise clustering quality against ground-truth identities, computed
// over all pairs of non-noise samples. With no predicted or no true pairs
// the f-score is 0 by convention.
inline FScore pairwise_fscore(std::span<const int> pseudo_labels,
                              std::span<const int> true_identities) {
  if (pseudo_labels.size() != true_identities.size())
    throw std::invalid_argument("pairwise_fscore: size mismatch");
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < pseudo_labels.size(); ++i)
    if (pseudo_labels[i] != kNoise) keep.push_back(i);
  if (keep.size() < 2)
    throw std::invalid_argument("pairwise_fscore: need >= 2 non-noise samples");

  long long predicted = 0, truth = 0, both = 0;
  for (std::size_t a = 0; a < keep.size(); ++a)
    for (std::size_t b = a + 1; b < keep.size(); ++b) {
      const std::size_t i = keep[a], j = keep[b];
      const bool same_pred = pseudo_labels[i] == pseudo_labels[j];
      const bool same_true = true_identities[i] == true_identities[j];
      predicted += same_pred;
      truth += same_true;
      both += same_pred && same_true;
    }
  FScore f;
  f.precision = predicted > 0 ? static_cast<double>(both) / predicted : 0.0;
  f.recall = truth > 0 ? static_cast<double>(both) / truth : 0.0;
  f.fscore = (f.precision + f.recall) > 0.0
                 ? 2.0 * f.precision * f.recall / (f.precision + f.recall)
                 : 0.0;
  return f;
}

// Ratio of between-class to within-class scatter (traces), classes weighted
// by size. Larger means more separated classes.
inline double scatter_ratio(const Matrix& features,
                            std::span<const int> identities) {
  if (identities.size() != features.rows)
    throw std::invalid_argument("scatter_ratio: size mismatch");
  const std::size_t n = features.rows;
  const std::size_t dim = features.cols;

  // class means, in order of first appearance
  std::vector<int> class_of(n);
  std::vector<int> class_ids;
  std::vector<std::vector<double>> means;
  std::vector<int> counts;
  for (std::size_t i = 0; i < n; ++i) {
    int cls = -1;
    for (std::size_t k = 0; k < class_ids.size(); ++k)
      if (class_ids[k] == identities[i]) {
        cls = static_cast<int>(k);
        break;
      }
    if (cls < 0) {
      cls = static_cast<int>(class_ids.size());
      class_ids.push_back(identities[i]);
      means.emplace_back(dim, 0.0);
      counts.push_back(0);
    }
    class_of[i] = cls;
    ++counts[cls];
    for (std::size_t c = 0; c < dim; ++c) means[cls][c] += features(i, c);
  }
  if (class_ids.size() < 2)
    throw std::invalid_argument("scatter_ratio: need >= 2 classes");
  std::vector<double> global(dim, 0.0);
  for (std::size_t k = 0; k < class_ids.size(); ++k)
    for (std::size_t c = 0; c < dim; ++c) {
      global[c] += means[k][c];
      // defer the division so the global mean uses raw sums
    }
  for (std::size_t c = 0; c < dim; ++c) global[c] /= static_cast<double>(n);
  for (std::size_t k = 0; k < class_ids.size(); ++k)
    for (std::size_t c = 0; c < dim; ++c)
      means[k][c] /= static_cast<double>(counts[k]);

  double within = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& mu = means[class_of[i]];
    for (std::size_t c = 0; c < dim; ++c) {
      const double d = features(i, c) - mu[c];
      within += d * d;
    }
  }
  double between = 0.0;
  for (std::size_t k = 0; k < class_ids.size(); ++k)
    for (std::size_t c = 0; c < dim; ++c) {
      const double d = means[k][c] - global[c];
      between += counts[k] * d * d;
    }
  return between / (within + 1e-12);
}

}  // namespace camadapt
