#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "camadapt/synthdata.hpp"

using namespace camadapt;

namespace {

SynthConfig tiny_config() {
  SynthConfig cfg;
  cfg.n_identities_source = 3;
  cfg.n_identities_target = 2;
  cfg.samples_per_identity_per_camera = 3;
  cfg.n_cameras_source = 2;
  cfg.n_cameras_target = 2;
  cfg.raw_dim = 8;
  cfg.seed = 42;
  return cfg;
}

}  // namespace

TEST_CASE("generate_dataset counts and shapes") {
  const auto [source, target] = generate_dataset(tiny_config());
  REQUIRE(target.size() == 2 * 2 * 3);
  REQUIRE(source.size() == 3 * 2 * 3);
  for (const Sample& s : target.samples) {
    REQUIRE(s.raw.size() == 8);
    for (double v : s.raw) REQUIRE(std::isfinite(v));
  }
}

TEST_CASE("generate_dataset is deterministic") {
  const auto [s1, t1] = generate_dataset(tiny_config());
  const auto [s2, t2] = generate_dataset(tiny_config());
  REQUIRE(s1.size() == s2.size());
  for (int i = 0; i < s1.size(); ++i) {
    REQUIRE(s1.samples[i].identity == s2.samples[i].identity);
    REQUIRE(s1.samples[i].camera == s2.samples[i].camera);
    REQUIRE(s1.samples[i].raw == s2.samples[i].raw);  // bitwise
  }
  for (int i = 0; i < t1.size(); ++i)
    REQUIRE(t1.samples[i].raw == t2.samples[i].raw);
}

TEST_CASE("zero noise and zero style collapse identities to points") {
  SynthConfig cfg = tiny_config();
  cfg.within_identity_noise = 0.0;
  cfg.camera_style_strength = 0.0;
  const auto [source, target] = generate_dataset(cfg);
  for (const Dataset* ds : {&source, &target}) {
    for (const Sample& a : ds->samples)
      for (const Sample& b : ds->samples)
        if (a.identity == b.identity) REQUIRE(a.raw == b.raw);
  }
}

TEST_CASE("source and target identity spaces are disjoint") {
  const auto [source, target] = generate_dataset(tiny_config());
  std::set<int> src_ids, tgt_ids;
  for (const Sample& s : source.samples) src_ids.insert(s.identity);
  for (const Sample& s : target.samples) tgt_ids.insert(s.identity);
  for (int id : tgt_ids) REQUIRE(src_ids.count(id) == 0);
  REQUIRE(src_ids.size() == 3);
  REQUIRE(tgt_ids.size() == 2);
}

TEST_CASE("identity coverage is exact per camera") {
  const SynthConfig cfg = tiny_config();
  const auto [source, target] = generate_dataset(cfg);
  for (const Dataset* ds : {&source, &target}) {
    std::map<std::pair<int, int>, int> counts;
    for (const Sample& s : ds->samples) ++counts[{s.identity, s.camera}];
    for (const auto& [key, cnt] : counts)
      REQUIRE(cnt == cfg.samples_per_identity_per_camera);
    REQUIRE(counts.size() ==
            static_cast<std::size_t>(ds->n_identities * ds->n_cameras));
  }
}

TEST_CASE("single-camera configurations are rejected") {
  SynthConfig cfg = tiny_config();
  cfg.n_cameras_target = 1;
  REQUIRE_THROWS_AS(generate_dataset(cfg), std::invalid_argument);
}

TEST_CASE("separable data is nearest-neighbour perfect within a domain") {
  SynthConfig cfg = tiny_config();
  cfg.within_identity_noise = 0.0;
  cfg.camera_style_strength = 0.0;
  cfg.n_identities_source = 6;
  const auto [source, target] = generate_dataset(cfg);
  (void)target;
  for (int i = 0; i < source.size(); ++i) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int j = 0; j < source.size(); ++j) {
      if (j == i) continue;
      const double d = euclidean(source.samples[i].raw, source.samples[j].raw);
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    REQUIRE(source.samples[best].identity == source.samples[i].identity);
  }
}

TEST_CASE("query/gallery split properties") {
  SynthConfig cfg = tiny_config();
  cfg.n_identities_target = 2;
  cfg.samples_per_identity_per_camera = 1;
  const auto [source, target] = generate_dataset(cfg);
  (void)source;

  const QueryGallerySplit split = split_query_gallery(target, 7);
  SECTION("smallest valid split: one query per identity") {
    REQUIRE(split.query.size() == 2);
    REQUIRE(split.gallery.size() == 2);
  }
  SECTION("query and gallery are disjoint and within range") {
    std::set<int> q(split.query.begin(), split.query.end());
    for (int g : split.gallery) {
      REQUIRE(q.count(g) == 0);
      REQUIRE(g >= 0);
      REQUIRE(g < target.size());
    }
    REQUIRE(split.query.size() + split.gallery.size() ==
            static_cast<std::size_t>(target.size()));
  }
  SECTION("every query keeps a cross-camera positive") {
    for (int q : split.query) {
      bool found = false;
      for (int g : split.gallery)
        if (target.samples[g].identity == target.samples[q].identity &&
            target.samples[g].camera != target.samples[q].camera)
          found = true;
      REQUIRE(found);
    }
  }
  SECTION("same seed gives the same split") {
    const QueryGallerySplit again = split_query_gallery(target, 7);
    REQUIRE(again.query == split.query);
    REQUIRE(again.gallery == split.gallery);
  }
}
