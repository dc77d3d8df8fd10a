#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "camadapt/matrix.hpp"

namespace camadapt {

constexpr int kNoise = -1;

// Symmetric pairwise distance matrix with zero diagonal.
struct DistanceMatrix {
  std::size_t n = 0;
  std::vector<double> d;

  DistanceMatrix() = default;
  explicit DistanceMatrix(std::size_t n_) : n(n_), d(n_ * n_, 0.0) {}

  double& at(std::size_t i, std::size_t j) { return d[i * n + j]; }
  double at(std::size_t i, std::size_t j) const { return d[i * n + j]; }
};

struct ClusterParams {
  int k1 = 20;
  int k2 = 6;
  double lambda_rr = 0.3;    // mix of original distance into the re-ranked one
  double eps_quantile = 0.002;
  int min_pts = 4;           // counts the point itself

  void validate() const {
    if (k1 < 1 || k2 < 1 || k2 > k1)
      throw std::invalid_argument("ClusterParams: need 1 <= k2 <= k1");
    if (lambda_rr < 0.0 || lambda_rr > 1.0)
      throw std::invalid_argument("ClusterParams: lambda_rr must be in [0,1]");
    if (!(eps_quantile > 0.0 && eps_quantile < 1.0))
      throw std::invalid_argument(
          "ClusterParams: eps_quantile must be in (0,1)");
    if (min_pts < 2)
      throw std::invalid_argument("ClusterParams: min_pts must be >= 2");
  }
};

struct ClusterAssignment {
  std::vector<int> labels;  // cluster id in [0, C) or kNoise
  Matrix centers;           // C x feat_dim
  std::vector<int> cluster_sizes;

  int n_clusters() const { return static_cast<int>(cluster_sizes.size()); }
  int n_noise() const {
    return static_cast<int>(
        std::count(labels.begin(), labels.end(), kNoise));
  }
};

inline DistanceMatrix pairwise_euclidean(const Matrix& features) {
  const std::size_t n = features.rows;
  DistanceMatrix dm(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = euclidean(features.row(i), features.row(j));
      dm.at(i, j) = d;
      dm.at(j, i) = d;
    }
  return dm;
}

namespace detail {

// Rank list of point i: all n indices ordered by (distance to i, index).
// The point itself sorts first through its zero self-distance, so "the k
// nearest neighbours of i" include i.
inline std::vector<int> rank_list(const DistanceMatrix& d, std::size_t i) {
  std::vector<int> order(d.n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double da = d.at(i, a), db = d.at(i, b);
    if (da != db) return da < db;
    return a < b;
  });
  return order;
}

}  // namespace detail

// k-reciprocal re-ranking of a distance matrix:
//   1. reciprocal neighbour sets R(i,k1),
//   2. expansion of R(i,k1) by R(j,ceil(k1/2)) for every j whose
//      half-neighbourhood overlaps R(i,k1) in at least 2/3 of its size,
//   3. encoding vectors V[i][j] = exp(-d(i,j)) on the expanded set,
//      followed by local query expansion: V[i] <- mean of V[j] over the k2
//      nearest neighbours of i,
//   4. Jaccard distance dJ(i,j) = 1 - sum_k min(V_ik,V_jk) / sum_k
//      max(V_ik,V_jk), mixed with the input as
//      (1-lambda_rr)*dJ + lambda_rr*d, then symmetrised by averaging.
// Encoding weights are not row-normalised.
inline DistanceMatrix k_reciprocal_rerank(const DistanceMatrix& d,
                                          const ClusterParams& p) {
  p.validate();
  const std::size_t n = d.n;
  if (n <= static_cast<std::size_t>(p.k1))
    throw std::invalid_argument("k_reciprocal_rerank: need n > k1");

  // Top-(k1) neighbour lists, kept twice: rank order for slicing and index
  // order for membership tests.
  const int k1 = p.k1;
  const int half = (k1 + 1) / 2;
  std::vector<std::vector<int>> top_by_rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<int> order = detail::rank_list(d, i);
    top_by_rank[i].assign(order.begin(), order.begin() + k1);
  }
  // Membership for reciprocal tests needs the top-k prefix in index order
  // for both k1 and half, so keep sorted prefixes per point.
  std::vector<std::vector<int>> prefix_k1(n), prefix_half(n);
  for (std::size_t i = 0; i < n; ++i) {
    prefix_k1[i] = top_by_rank[i];
    std::sort(prefix_k1[i].begin(), prefix_k1[i].end());
    prefix_half[i].assign(top_by_rank[i].begin(),
                          top_by_rank[i].begin() + half);
    std::sort(prefix_half[i].begin(), prefix_half[i].end());
  }
  auto in_topk = [&](const std::vector<std::vector<int>>& prefix, int who,
                     int member) {
    const auto& v = prefix[who];
    return std::binary_search(v.begin(), v.end(), member);
  };

  std::vector<std::vector<int>> recip_k1(n), recip_half(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int j : top_by_rank[i])
      if (in_topk(prefix_k1, j, static_cast<int>(i)))
        recip_k1[i].push_back(j);
    std::sort(recip_k1[i].begin(), recip_k1[i].end());
    for (int idx = 0; idx < half; ++idx) {
      const int j = top_by_rank[i][idx];
      if (in_topk(prefix_half, j, static_cast<int>(i)))
        recip_half[i].push_back(j);
    }
    std::sort(recip_half[i].begin(), recip_half[i].end());
  }

  // Expanded sets.
  std::vector<std::vector<int>> expanded(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<int> acc = recip_k1[i];
    for (int j : recip_k1[i]) {
      const auto& cand = recip_half[j];
      if (cand.empty()) continue;
      std::size_t inter = 0;
      for (int x : cand)
        if (std::binary_search(recip_k1[i].begin(), recip_k1[i].end(), x))
          ++inter;
      if (3 * inter >= 2 * cand.size())
        acc.insert(acc.end(), cand.begin(), cand.end());
    }
    std::sort(acc.begin(), acc.end());
    acc.erase(std::unique(acc.begin(), acc.end()), acc.end());
    expanded[i] = std::move(acc);
  }

  // Sparse encoding rows: (index, weight) with indices ascending.
  struct SparseRow {
    std::vector<int> idx;
    std::vector<double> val;
  };
  std::vector<SparseRow> enc(n);
  for (std::size_t i = 0; i < n; ++i) {
    enc[i].idx = expanded[i];
    enc[i].val.resize(expanded[i].size());
    for (std::size_t t = 0; t < expanded[i].size(); ++t)
      enc[i].val[t] = std::exp(-d.at(i, expanded[i][t]));
  }

  // Local query expansion over the k2 nearest neighbours (self included).
  std::vector<SparseRow> v(n);
  {
    std::vector<double> dense(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<int> touched;
      for (int t = 0; t < p.k2; ++t) {
        const int j = top_by_rank[i][t];
        const SparseRow& row = enc[j];
        for (std::size_t u = 0; u < row.idx.size(); ++u) {
          if (dense[row.idx[u]] == 0.0) touched.push_back(row.idx[u]);
          dense[row.idx[u]] += row.val[u];
        }
      }
      std::sort(touched.begin(), touched.end());
      const double inv_k2 = 1.0 / static_cast<double>(p.k2);
      v[i].idx.reserve(touched.size());
      v[i].val.reserve(touched.size());
      for (int t : touched) {
        v[i].idx.push_back(t);
        v[i].val.push_back(dense[t] * inv_k2);
        dense[t] = 0.0;
      }
    }
  }

  // Row sums and an inverted index over encoding dimensions.
  std::vector<double> row_sum(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (double w : v[i].val) row_sum[i] += w;
  std::vector<std::vector<int>> inverted(n);
  for (std::size_t i = 0; i < n; ++i)
    for (int k : v[i].idx) inverted[k].push_back(static_cast<int>(i));

  // Jaccard via sum(max) = S_i + S_j - sum(min); pairs with disjoint
  // support have dJ = 1.
  DistanceMatrix out(n);
  std::vector<double> min_sum(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(min_sum.begin(), min_sum.end(), 0.0);
    for (std::size_t t = 0; t < v[i].idx.size(); ++t) {
      const int k = v[i].idx[t];
      const double wi = v[i].val[t];
      const auto& rows = inverted[k];
      // weight of dimension k in row j, found by position match
      for (int j : rows) {
        const auto& vj = v[j];
        const auto it = std::lower_bound(vj.idx.begin(), vj.idx.end(), k);
        const double wj = vj.val[it - vj.idx.begin()];
        min_sum[j] += std::min(wi, wj);
      }
    }
    for (std::size_t j = 0; j < n; ++j) {
      const double max_sum = row_sum[i] + row_sum[j] - min_sum[j];
      const double jaccard =
          max_sum > 0.0 ? std::max(0.0, 1.0 - min_sum[j] / max_sum) : 1.0;
      out.at(i, j) = (1.0 - p.lambda_rr) * jaccard + p.lambda_rr * d.at(i, j);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    out.at(i, i) = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double avg = 0.5 * (out.at(i, j) + out.at(j, i));
      out.at(i, j) = avg;
      out.at(j, i) = avg;
    }
  }
  return out;
}

// Density radius from the distance distribution: the value at quantile rho
// of the ascending off-diagonal upper-triangle entries, lower-index
// convention (index = floor(rho * count)).
inline double select_eps(const DistanceMatrix& d, double rho) {
  if (d.n < 2) throw std::invalid_argument("select_eps: need n >= 2");
  if (!(rho > 0.0 && rho < 1.0))
    throw std::invalid_argument("select_eps: rho must be in (0,1)");
  std::vector<double> vals;
  vals.reserve(d.n * (d.n - 1) / 2);
  for (std::size_t i = 0; i < d.n; ++i)
    for (std::size_t j = i + 1; j < d.n; ++j) vals.push_back(d.at(i, j));
  std::sort(vals.begin(), vals.end());
  std::size_t idx = static_cast<std::size_t>(rho * vals.size());
  if (idx >= vals.size()) idx = vals.size() - 1;
  return vals[idx];
}

// DBSCAN on a precomputed distance matrix. A point is core when at least
// min_pts points (itself included) lie within eps. Clusters are the
// connected components of core points under the eps graph; a border point
// joins the cluster of its smallest-index core neighbour; the rest is
// noise. Cluster ids are numbered by first appearance in ascending sample
// order.
inline std::vector<int> dbscan(const DistanceMatrix& d, double eps,
                               int min_pts) {
  const std::size_t n = d.n;
  std::vector<char> core(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    int cnt = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (d.at(i, j) <= eps) ++cnt;
    core[i] = cnt >= min_pts;
  }

  // Union-find over core points.
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&parent](int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (!core[i]) continue;
    for (std::size_t j = i + 1; j < n; ++j)
      if (core[j] && d.at(i, j) <= eps) {
        const int ri = find(static_cast<int>(i)), rj = find(static_cast<int>(j));
        if (ri != rj) parent[std::max(ri, rj)] = std::min(ri, rj);
      }
  }

  std::vector<int> labels(n, kNoise);
  std::vector<int> component_label(n, -1);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!core[i]) continue;
    const int root = find(static_cast<int>(i));
    if (component_label[root] < 0) component_label[root] = next++;
    labels[i] = component_label[root];
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) continue;
    for (std::size_t j = 0; j < n; ++j)
      if (core[j] && d.at(i, j) <= eps) {
        labels[i] = labels[j];
        break;  // smallest-index core neighbour
      }
  }
  return labels;
}

// Arithmetic mean of member rows per cluster; labels must use every id in
// [0, C) at least once.
inline std::pair<Matrix, std::vector<int>> cluster_centers(
    const Matrix& features, std::span<const int> labels) {
  if (labels.size() != features.rows)
    throw std::invalid_argument("cluster_centers: label count mismatch");
  int n_clusters = 0;
  for (int l : labels) n_clusters = std::max(n_clusters, l + 1);
  Matrix centers(n_clusters, features.cols);
  std::vector<int> sizes(n_clusters, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int l = labels[i];
    if (l == kNoise) continue;
    if (l < 0) throw std::invalid_argument("cluster_centers: bad label");
    ++sizes[l];
    for (std::size_t c = 0; c < features.cols; ++c)
      centers(l, c) += features(i, c);
  }
  for (int l = 0; l < n_clusters; ++l) {
    if (sizes[l] == 0)
      throw std::invalid_argument("cluster_centers: empty cluster " +
                                  std::to_string(l));
    for (std::size_t c = 0; c < features.cols; ++c)
      centers(l, c) /= static_cast<double>(sizes[l]);
  }
  return {std::move(centers), std::move(sizes)};
}

// Full pseudo-label pipeline: distances -> re-ranking -> radius selection
// -> density clustering -> centers.
inline ClusterAssignment assign_pseudo_labels(const Matrix& features,
                                              const ClusterParams& p) {
  const DistanceMatrix base = pairwise_euclidean(features);
  const DistanceMatrix reranked = k_reciprocal_rerank(base, p);
  const double eps = select_eps(reranked, p.eps_quantile);
  ClusterAssignment out;
  out.labels = dbscan(reranked, eps, p.min_pts);
  const bool any = std::any_of(out.labels.begin(), out.labels.end(),
                               [](int l) { return l != kNoise; });
  if (any) {
    auto [centers, sizes] = cluster_centers(features, out.labels);
    out.centers = std::move(centers);
    out.cluster_sizes = std::move(sizes);
  }
  return out;
}

inline void write_assignment_csv(const std::string& path,
                                 const ClusterAssignment& a) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "sample_index,pseudo_label\n";
  for (std::size_t i = 0; i < a.labels.size(); ++i)
    out << i << "," << a.labels[i] << "\n";
}

}  // namespace camadapt
