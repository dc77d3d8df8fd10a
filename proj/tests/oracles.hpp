#pragma once

// Reference implementations used only by the test suites. They are written
// as direct, naive transcriptions of the definitions and stay independent
// of the optimised library code paths they check.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "camadapt/cluster.hpp"
#include "camadapt/matrix.hpp"

namespace oracle {

using camadapt::DistanceMatrix;
using camadapt::Matrix;

// ---------------------------------------------------------------------------
// k-reciprocal re-ranking, dense transcription.
// ---------------------------------------------------------------------------

inline std::vector<int> ranked_neighbours(const DistanceMatrix& d, int i) {
  std::vector<int> order(d.n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (d.at(i, a) != d.at(i, b)) return d.at(i, a) < d.at(i, b);
    return a < b;
  });
  return order;
}

inline bool in_top_k(const DistanceMatrix& d, int who, int member, int k) {
  const std::vector<int> order = ranked_neighbours(d, who);
  for (int t = 0; t < k; ++t)
    if (order[t] == member) return true;
  return false;
}

inline std::vector<int> reciprocal_neighbours(const DistanceMatrix& d, int i,
                                              int k) {
  std::vector<int> out;
  const std::vector<int> order = ranked_neighbours(d, i);
  for (int t = 0; t < k; ++t)
    if (in_top_k(d, order[t], i, k)) out.push_back(order[t]);
  std::sort(out.begin(), out.end());
  return out;
}

inline DistanceMatrix naive_rerank(const DistanceMatrix& d, int k1, int k2,
                                   double lambda_rr) {
  const int n = static_cast<int>(d.n);
  const int half = (k1 + 1) / 2;

  std::vector<std::vector<int>> r_k1(n), r_half(n);
  for (int i = 0; i < n; ++i) {
    r_k1[i] = reciprocal_neighbours(d, i, k1);
    r_half[i] = reciprocal_neighbours(d, i, half);
  }

  std::vector<std::vector<int>> expanded(n);
  for (int i = 0; i < n; ++i) {
    std::vector<int> acc = r_k1[i];
    for (int j : r_k1[i]) {
      std::size_t overlap = 0;
      for (int x : r_half[j])
        if (std::find(r_k1[i].begin(), r_k1[i].end(), x) != r_k1[i].end())
          ++overlap;
      if (!r_half[j].empty() && 3 * overlap >= 2 * r_half[j].size())
        acc.insert(acc.end(), r_half[j].begin(), r_half[j].end());
    }
    std::sort(acc.begin(), acc.end());
    acc.erase(std::unique(acc.begin(), acc.end()), acc.end());
    expanded[i] = std::move(acc);
  }

  Matrix enc(n, n);
  for (int i = 0; i < n; ++i)
    for (int j : expanded[i]) enc(i, j) = std::exp(-d.at(i, j));

  Matrix v(n, n);
  for (int i = 0; i < n; ++i) {
    const std::vector<int> order = ranked_neighbours(d, i);
    for (int t = 0; t < k2; ++t)
      for (int c = 0; c < n; ++c) v(i, c) += enc(order[t], c);
    for (int c = 0; c < n; ++c) v(i, c) /= static_cast<double>(k2);
  }

  DistanceMatrix out(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double mn = 0.0, mx = 0.0;
      for (int c = 0; c < n; ++c) {
        mn += std::min(v(i, c), v(j, c));
        mx += std::max(v(i, c), v(j, c));
      }
      const double jaccard = mx > 0.0 ? std::max(0.0, 1.0 - mn / mx) : 1.0;
      out.at(i, j) = (1.0 - lambda_rr) * jaccard + lambda_rr * d.at(i, j);
    }
  for (int i = 0; i < n; ++i) {
    out.at(i, i) = 0.0;
    for (int j = i + 1; j < n; ++j) {
      const double avg = 0.5 * (out.at(i, j) + out.at(j, i));
      out.at(i, j) = avg;
      out.at(j, i) = avg;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// DBSCAN via transitive closure of the eps-graph restricted to core points.
// ---------------------------------------------------------------------------

inline std::vector<int> brute_dbscan(const DistanceMatrix& d, double eps,
                                     int min_pts) {
  const int n = static_cast<int>(d.n);
  std::vector<char> core(n, 0);
  for (int i = 0; i < n; ++i) {
    int cnt = 0;
    for (int j = 0; j < n; ++j)
      if (d.at(i, j) <= eps) ++cnt;
    core[i] = cnt >= min_pts;
  }

  // reachability closure among cores (Warshall)
  std::vector<std::vector<char>> reach(n, std::vector<char>(n, 0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      reach[i][j] = core[i] && core[j] && (i == j || d.at(i, j) <= eps);
  for (int k = 0; k < n; ++k) {
    if (!core[k]) continue;
    for (int i = 0; i < n; ++i) {
      if (!reach[i][k]) continue;
      for (int j = 0; j < n; ++j)
        if (reach[k][j]) reach[i][j] = 1;
    }
  }

  std::vector<int> labels(n, camadapt::kNoise);
  int next = 0;
  for (int i = 0; i < n; ++i) {
    if (!core[i] || labels[i] != camadapt::kNoise) continue;
    const int id = next++;
    for (int j = 0; j < n; ++j)
      if (reach[i][j]) labels[j] = id;
  }
  for (int i = 0; i < n; ++i) {
    if (core[i]) continue;
    for (int j = 0; j < n; ++j)
      if (core[j] && d.at(i, j) <= eps) {
        labels[i] = labels[j];  // smallest-index core neighbour
        break;
      }
  }
  return labels;
}

// Renumber cluster ids by first appearance so partitions can be compared
// across implementations with different numbering rules.
inline std::vector<int> canonical_partition(std::span<const int> labels) {
  std::vector<int> mapping;
  std::vector<int> out(labels.size(), camadapt::kNoise);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == camadapt::kNoise) continue;
    int found = -1;
    for (std::size_t k = 0; k < mapping.size(); ++k)
      if (mapping[k] == labels[i]) {
        found = static_cast<int>(k);
        break;
      }
    if (found < 0) {
      found = static_cast<int>(mapping.size());
      mapping.push_back(labels[i]);
    }
    out[i] = found;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Average precision by full ranked-list enumeration.
// ---------------------------------------------------------------------------

struct BruteQueryResult {
  double ap = 0.0;
  int first_hit_rank = -1;  // 0-based; -1 when the query has no positive
};

inline BruteQueryResult brute_average_precision(
    const Matrix& features, int query, std::span<const int> gallery,
    std::span<const int> identities, std::span<const int> cameras) {
  struct Entry {
    double dist;
    int position;
    bool positive;
  };
  std::vector<Entry> entries;
  for (std::size_t p = 0; p < gallery.size(); ++p) {
    const int g = gallery[p];
    if (identities[g] == identities[query] && cameras[g] == cameras[query])
      continue;
    entries.push_back({camadapt::euclidean(features.row(query),
                                           features.row(g)),
                       static_cast<int>(p),
                       identities[g] == identities[query]});
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    return a.position < b.position;
  });
  BruteQueryResult res;
  int positives = 0;
  for (const Entry& e : entries) positives += e.positive;
  if (positives == 0) return res;
  int hits = 0;
  double ap = 0.0;
  for (std::size_t r = 0; r < entries.size(); ++r) {
    if (!entries[r].positive) continue;
    ++hits;
    if (res.first_hit_rank < 0) res.first_hit_rank = static_cast<int>(r);
    ap += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  res.ap = ap / positives;
  return res;
}

}  // namespace oracle
