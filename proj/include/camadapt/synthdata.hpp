#pragma once

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "camadapt/matrix.hpp"
#include "camadapt/rng.hpp"

namespace camadapt {

struct Sample {
  int identity = 0;  // ground truth; hidden from target-domain training
  int camera = 0;
  std::vector<double> raw;
};

struct Dataset {
  std::vector<Sample> samples;
  int n_identities = 0;
  int n_cameras = 0;
  int raw_dim = 0;

  int size() const { return static_cast<int>(samples.size()); }

  Matrix raw_matrix() const {
    Matrix m(samples.size(), static_cast<std::size_t>(raw_dim));
    for (std::size_t i = 0; i < samples.size(); ++i)
      for (int j = 0; j < raw_dim; ++j) m(i, j) = samples[i].raw[j];
    return m;
  }
};

// Two-domain synthetic benchmark: identity prototypes in raw space, a random
// affine style per camera, and an extra global affine shift on the target
// domain that creates the transfer gap.
struct SynthConfig {
  int n_identities_source = 32;
  int n_identities_target = 50;
  int samples_per_identity_per_camera = 5;
  int n_cameras_source = 4;
  int n_cameras_target = 4;
  int raw_dim = 16;
  double prototype_scale = 1.0;
  double within_identity_noise = 0.1;
  double camera_style_strength = 0.25;
  double domain_shift_strength = 0.5;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_identities_source < 1 || n_identities_target < 1 ||
        samples_per_identity_per_camera < 1 || raw_dim < 1)
      throw std::invalid_argument("SynthConfig: all counts must be >= 1");
    if (n_cameras_source < 2 || n_cameras_target < 2)
      throw std::invalid_argument(
          "SynthConfig: need at least 2 cameras per domain for cross-camera "
          "evaluation");
    if (prototype_scale < 0.0 || within_identity_noise < 0.0 ||
        camera_style_strength < 0.0 || domain_shift_strength < 0.0)
      throw std::invalid_argument(
          "SynthConfig: noise/strength parameters must be >= 0");
  }
};

namespace detail {

struct Affine {
  Matrix a;               // raw_dim x raw_dim
  std::vector<double> b;  // raw_dim
};

inline Affine random_style(int dim, double strength, Rng& rng) {
  Affine st;
  st.a = Matrix(dim, dim);
  st.b.assign(dim, 0.0);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j)
      st.a(i, j) = (i == j ? 1.0 : 0.0) + strength * rng.normal();
  for (int i = 0; i < dim; ++i) st.b[i] = strength * rng.normal();
  return st;
}

inline std::vector<double> apply_affine(const Affine& st,
                                        std::span<const double> x) {
  std::vector<double> y(st.b);
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j) y[i] += st.a(i, j) * x[j];
  return y;
}

// One domain: for each identity a Gaussian prototype, for each camera an
// affine style; sample = style(prototype + per-sample noise), then the
// optional domain-level affine on top. Draw order is fixed (prototypes,
// styles, shift, then samples in identity/camera/replica order) so the
// output is a pure function of (config, seed).
inline Dataset generate_domain(int n_identities, int id_offset, int n_cameras,
                               int per_id_per_cam, int dim,
                               double prototype_scale, double noise,
                               double style_strength, double shift_strength,
                               Rng& rng) {
  std::vector<std::vector<double>> prototypes(n_identities);
  for (auto& z : prototypes) {
    z.assign(dim, 0.0);
    for (int j = 0; j < dim; ++j) z[j] = prototype_scale * rng.normal();
  }
  std::vector<Affine> styles;
  styles.reserve(n_cameras);
  for (int c = 0; c < n_cameras; ++c)
    styles.push_back(random_style(dim, style_strength, rng));
  const Affine shift = random_style(dim, shift_strength, rng);

  Dataset ds;
  ds.n_identities = n_identities;
  ds.n_cameras = n_cameras;
  ds.raw_dim = dim;
  ds.samples.reserve(static_cast<std::size_t>(n_identities) * n_cameras *
                     per_id_per_cam);
  std::vector<double> point(dim);
  for (int id = 0; id < n_identities; ++id) {
    for (int cam = 0; cam < n_cameras; ++cam) {
      for (int k = 0; k < per_id_per_cam; ++k) {
        for (int j = 0; j < dim; ++j)
          point[j] = prototypes[id][j] + noise * rng.normal();
        std::vector<double> raw = apply_affine(styles[cam], point);
        if (shift_strength > 0.0) raw = apply_affine(shift, raw);
        ds.samples.push_back(Sample{id + id_offset, cam, std::move(raw)});
      }
    }
  }
  return ds;
}

}  // namespace detail

// Source identities are labelled [0, M_s); target identities are offset by
// M_s so the two label spaces are disjoint, matching the open-set setting.
inline std::pair<Dataset, Dataset> generate_dataset(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  Dataset source = detail::generate_domain(
      cfg.n_identities_source, 0, cfg.n_cameras_source,
      cfg.samples_per_identity_per_camera, cfg.raw_dim, cfg.prototype_scale,
      cfg.within_identity_noise, cfg.camera_style_strength,
      /*shift_strength=*/0.0, rng);
  Dataset target = detail::generate_domain(
      cfg.n_identities_target, cfg.n_identities_source, cfg.n_cameras_target,
      cfg.samples_per_identity_per_camera, cfg.raw_dim, cfg.prototype_scale,
      cfg.within_identity_noise, cfg.camera_style_strength,
      cfg.domain_shift_strength, rng);
  return {std::move(source), std::move(target)};
}

struct QueryGallerySplit {
  std::vector<int> query;
  std::vector<int> gallery;
};

// One query per identity, drawn from a random camera; everything else is
// gallery. Every identity must appear in >= 2 cameras so each query keeps a
// cross-camera positive in the gallery.
inline QueryGallerySplit split_query_gallery(const Dataset& ds,
                                             std::uint64_t seed) {
  // identity -> camera -> sample indices, in order of first appearance
  std::vector<std::pair<int, std::vector<std::vector<int>>>> per_identity;
  {
    std::vector<int> id_to_slot;
    for (int i = 0; i < ds.size(); ++i) {
      const Sample& s = ds.samples[i];
      if (s.identity < 0) throw std::invalid_argument("negative identity");
      if (static_cast<std::size_t>(s.identity) >= id_to_slot.size())
        id_to_slot.resize(s.identity + 1, -1);
      if (id_to_slot[s.identity] < 0) {
        id_to_slot[s.identity] = static_cast<int>(per_identity.size());
        per_identity.emplace_back(
            s.identity, std::vector<std::vector<int>>(ds.n_cameras));
      }
      per_identity[id_to_slot[s.identity]].second[s.camera].push_back(i);
    }
  }

  Rng rng(seed);
  QueryGallerySplit split;
  std::vector<char> is_query(ds.samples.size(), 0);
  for (auto& [identity, cams] : per_identity) {
    std::vector<int> present;
    for (int c = 0; c < ds.n_cameras; ++c)
      if (!cams[c].empty()) present.push_back(c);
    if (present.size() < 2)
      throw std::invalid_argument(
          "split_query_gallery: identity " + std::to_string(identity) +
          " appears in fewer than 2 cameras");
    const int cam = present[rng.uniform_index(present.size())];
    const auto& pool = cams[cam];
    const int pick = pool[rng.uniform_index(pool.size())];
    is_query[pick] = 1;
    split.query.push_back(pick);
  }
  for (int i = 0; i < ds.size(); ++i)
    if (!is_query[i]) split.gallery.push_back(i);
  return split;
}

}  // namespace camadapt
