#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "camadapt/nncore.hpp"
#include "camadapt/synthdata.hpp"

using namespace camadapt;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng,
                     double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data) v = scale * rng.normal();
  return m;
}

std::vector<GradCheckItem> encoder_items(Encoder& enc,
                                         const EncoderGrads& grads) {
  std::vector<GradCheckItem> items;
  for (std::size_t i = 0; i < enc.w1.data.size(); ++i)
    items.push_back({&enc.w1.data[i], grads.w1.data[i]});
  for (std::size_t i = 0; i < enc.b1.size(); ++i)
    items.push_back({&enc.b1[i], grads.b1[i]});
  for (std::size_t i = 0; i < enc.w2.data.size(); ++i)
    items.push_back({&enc.w2.data[i], grads.w2.data[i]});
  for (std::size_t i = 0; i < enc.b2.size(); ++i)
    items.push_back({&enc.b2[i], grads.b2[i]});
  return items;
}

// Batch with labels where every anchor keeps a comfortable margin from both
// the hinge kink and hardest-negative ties, so finite differences are safe.
bool triplet_instance_is_tie_free(const Matrix& features,
                                  std::span<const int> labels, double margin,
                                  double gap = 1e-3) {
  const std::size_t n = features.rows;
  for (std::size_t a = 0; a < n; ++a) {
    double best = std::numeric_limits<double>::infinity();
    double second = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a || labels[j] == labels[a]) continue;
      const double d = euclidean(features.row(a), features.row(j));
      if (d < best) {
        second = best;
        best = d;
      } else if (d < second) {
        second = d;
      }
    }
    if (std::isfinite(second) && second - best < gap) return false;
    for (std::size_t p = 0; p < n; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      const double dp = euclidean(features.row(a), features.row(p));
      if (dp < gap) return false;
      if (std::abs(margin + dp - best) < gap) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("encoder forward basics") {
  Rng rng(3);
  Encoder enc = Encoder::init(4, 6, 3, rng);

  SECTION("zero parameters give zero features") {
    Encoder zero = enc;
    zero.w1.fill(0.0);
    zero.w2.fill(0.0);
    std::fill(zero.b1.begin(), zero.b1.end(), 0.0);
    std::fill(zero.b2.begin(), zero.b2.end(), 0.0);
    const Matrix batch = random_matrix(5, 4, rng);
    const Matrix feat = encoder_forward(zero, batch);
    for (double v : feat.data) REQUIRE(v == 0.0);
  }

  SECTION("rows are independent: duplicated input gives duplicated output") {
    Matrix batch(2, 4);
    for (int j = 0; j < 4; ++j) {
      batch(0, j) = 0.3 * j - 0.5;
      batch(1, j) = batch(0, j);
    }
    const Matrix feat = encoder_forward(enc, batch);
    for (int f = 0; f < 3; ++f) REQUIRE(feat(0, f) == feat(1, f));
  }

  SECTION("shape mismatch is rejected") {
    const Matrix bad = random_matrix(2, 5, rng);
    REQUIRE_THROWS_AS(encoder_forward(enc, bad), std::invalid_argument);
  }
}

TEST_CASE("encoder gradients match finite differences") {
  Rng rng(11);
  Encoder enc = Encoder::init(5, 7, 4, rng);
  const Matrix batch = random_matrix(6, 5, rng);

  // scalar probe: weighted sum of squared features
  const Matrix weights = random_matrix(6, 4, rng);
  auto loss_fn = [&] {
    const Matrix f = encoder_forward(enc, batch);
    double acc = 0.0;
    for (std::size_t i = 0; i < f.data.size(); ++i)
      acc += weights.data[i] * f.data[i] * f.data[i];
    return acc;
  };

  EncoderCache cache;
  const Matrix f = encoder_forward(enc, batch, &cache);
  Matrix dfeat(6, 4);
  for (std::size_t i = 0; i < f.data.size(); ++i)
    dfeat.data[i] = 2.0 * weights.data[i] * f.data[i];
  EncoderGrads grads = EncoderGrads::zeros_like(enc);
  encoder_backward(enc, cache, dfeat, grads);

  auto items = encoder_items(enc, grads);
  REQUIRE(grad_check(loss_fn, items, 1e-5) < 1e-4);
}

TEST_CASE("encoder input gradients match finite differences") {
  Rng rng(13);
  Encoder enc = Encoder::init(4, 6, 3, rng);
  Matrix batch = random_matrix(3, 4, rng);

  auto loss_fn = [&] {
    const Matrix f = encoder_forward(enc, batch);
    double acc = 0.0;
    for (double v : f.data) acc += v * v;
    return acc;
  };
  EncoderCache cache;
  const Matrix f = encoder_forward(enc, batch, &cache);
  Matrix dfeat = f;
  for (double& v : dfeat.data) v *= 2.0;
  EncoderGrads grads = EncoderGrads::zeros_like(enc);
  Matrix dinput;
  encoder_backward(enc, cache, dfeat, grads, &dinput);

  std::vector<GradCheckItem> items;
  for (std::size_t i = 0; i < batch.data.size(); ++i)
    items.push_back({&batch.data[i], dinput.data[i]});
  REQUIRE(grad_check(loss_fn, items, 1e-5) < 1e-4);
}

TEST_CASE("classification loss values") {
  Rng rng(17);
  ClassifierHead head = ClassifierHead::init(4, 5, rng);

  SECTION("uniform logits give ln(M)") {
    head.w.fill(0.0);
    std::fill(head.b.begin(), head.b.end(), 0.0);
    const Matrix features = random_matrix(3, 4, rng);
    const std::vector<int> labels = {0, 2, 4};
    const ClsResult res = loss_cls(head, features, labels);
    REQUIRE_THAT(res.loss,
                 Catch::Matchers::WithinAbs(std::log(5.0), 1e-12));
  }

  SECTION("a dominant true logit drives the loss to zero") {
    head.w.fill(0.0);
    std::fill(head.b.begin(), head.b.end(), 0.0);
    head.b[1] = 60.0;
    Matrix features(1, 4);
    const std::vector<int> labels = {1};
    const ClsResult res = loss_cls(head, features, labels);
    REQUIRE(res.loss < 1e-12);
    REQUIRE(res.loss >= 0.0);
  }

  SECTION("out-of-range labels are rejected") {
    const Matrix features = random_matrix(2, 4, rng);
    REQUIRE_THROWS_AS(loss_cls(head, features, std::vector<int>{0, 5}),
                      std::invalid_argument);
  }
}

TEST_CASE("classification loss gradients match finite differences") {
  Rng rng(19);
  Encoder enc = Encoder::init(4, 6, 3, rng);
  ClassifierHead head = ClassifierHead::init(3, 4, rng);
  const Matrix batch = random_matrix(5, 4, rng);
  const std::vector<int> labels = {0, 1, 2, 3, 1};

  auto loss_fn = [&] {
    const Matrix f = encoder_forward(enc, batch);
    return loss_cls(head, f, labels).loss;
  };

  EncoderCache cache;
  const Matrix f = encoder_forward(enc, batch, &cache);
  const ClsResult res = loss_cls(head, f, labels);
  EncoderGrads grads = EncoderGrads::zeros_like(enc);
  encoder_backward(enc, cache, res.dfeatures, grads);

  auto items = encoder_items(enc, grads);
  for (std::size_t i = 0; i < head.w.data.size(); ++i)
    items.push_back({&head.w.data[i], res.dw.data[i]});
  for (std::size_t i = 0; i < head.b.size(); ++i)
    items.push_back({&head.b[i], res.db[i]});
  REQUIRE(grad_check(loss_fn, items, 1e-5) < 1e-4);
}

TEST_CASE("triplet loss closed forms") {
  SECTION("comfortable margins give zero loss") {
    Matrix f(3, 1);
    f(0, 0) = 0.0;
    f(1, 0) = 0.2;
    f(2, 0) = 1.0;
    const std::vector<int> labels = {0, 0, 1};
    const TripletResult res = loss_triplet_batch_hard(f, labels, 0.5);
    REQUIRE(res.loss == 0.0);
    for (double g : res.dfeatures.data) REQUIRE(g == 0.0);
  }

  SECTION("hand-computed hinge sum") {
    // d(0,1)=0.6, d(0,2)=0.2, d(1,2)=0.8
    Matrix f(3, 1);
    f(0, 0) = 0.0;
    f(1, 0) = 0.6;
    f(2, 0) = -0.2;
    const std::vector<int> labels = {0, 0, 1};
    // anchor 0: 0.5 + 0.6 - 0.2 = 0.9; anchor 1: 0.5 + 0.6 - 0.8 = 0.3
    const TripletResult res = loss_triplet_batch_hard(f, labels, 0.5);
    REQUIRE(res.n_valid_anchors == 2);
    REQUIRE_THAT(res.loss, Catch::Matchers::WithinAbs(0.6, 1e-12));
  }

  SECTION("single-label batches are rejected") {
    Matrix f(3, 2);
    const std::vector<int> labels = {4, 4, 4};
    REQUIRE_THROWS_AS(loss_triplet_batch_hard(f, labels, 0.5),
                      std::invalid_argument);
  }
}

TEST_CASE("triplet loss gradient matches finite differences away from ties") {
  Rng rng(23);
  const std::vector<int> labels = {0, 0, 0, 1, 1, 2, 2, 2};
  Matrix features;
  for (int attempt = 0;; ++attempt) {
    REQUIRE(attempt < 200);
    features = random_matrix(8, 3, rng);
    if (triplet_instance_is_tie_free(features, labels, 0.5)) break;
  }
  const TripletResult res = loss_triplet_batch_hard(features, labels, 0.5);
  auto loss_fn = [&] {
    return loss_triplet_batch_hard(features, labels, 0.5).loss;
  };
  std::vector<GradCheckItem> items;
  for (std::size_t i = 0; i < features.data.size(); ++i)
    items.push_back({&features.data[i], res.dfeatures.data[i]});
  REQUIRE(grad_check(loss_fn, items, 1e-5) < 1e-4);
}

TEST_CASE("triplet loss invariances") {
  Rng rng(29);
  const std::vector<int> labels = {0, 1, 0, 1, 2, 2};
  const Matrix features = random_matrix(6, 4, rng);
  const TripletResult base = loss_triplet_batch_hard(features, labels, 0.5);

  SECTION("translation of all features leaves the loss unchanged") {
    Matrix shifted = features;
    for (std::size_t i = 0; i < shifted.rows; ++i)
      for (std::size_t c = 0; c < shifted.cols; ++c)
        shifted(i, c) += 3.7 - 0.9 * static_cast<double>(c);
    const TripletResult res = loss_triplet_batch_hard(shifted, labels, 0.5);
    REQUIRE_THAT(res.loss, Catch::Matchers::WithinAbs(base.loss, 1e-9));
  }

  SECTION("permuting batch rows permutes nothing observable") {
    const std::vector<int> perm = {3, 0, 5, 1, 4, 2};
    Matrix permuted(6, 4);
    std::vector<int> permuted_labels(6);
    for (int i = 0; i < 6; ++i) {
      permuted_labels[i] = labels[perm[i]];
      for (int c = 0; c < 4; ++c) permuted(i, c) = features(perm[i], c);
    }
    const TripletResult res =
        loss_triplet_batch_hard(permuted, permuted_labels, 0.5);
    REQUIRE_THAT(res.loss, Catch::Matchers::WithinAbs(base.loss, 1e-9));
  }
}

TEST_CASE("sgd momentum recurrence") {
  SECTION("plain gradient step") {
    double p = 1.0;
    const double g = 0.25;
    SgdOptimizer opt{1.0, 0.0, {}};
    const ParamGrad pg[] = {{&p, &g, 1}};
    sgd_step(opt, pg);
    REQUIRE(p == 0.75);
  }

  SECTION("two steps with momentum unroll to -0.29") {
    double p = 0.0;
    const double g = 1.0;
    SgdOptimizer opt{0.1, 0.9, {}};
    const ParamGrad pg[] = {{&p, &g, 1}};
    sgd_step(opt, pg);
    REQUIRE_THAT(p, Catch::Matchers::WithinAbs(-0.1, 1e-15));
    sgd_step(opt, pg);
    REQUIRE_THAT(p, Catch::Matchers::WithinAbs(-0.29, 1e-15));
  }

  SECTION("zero gradients decay the velocity geometrically") {
    double p = 0.0;
    double g = 1.0;
    SgdOptimizer opt{1.0, 0.5, {}};
    const ParamGrad pg[] = {{&p, &g, 1}};
    sgd_step(opt, pg);
    REQUIRE(opt.velocity[0][0] == -1.0);
    g = 0.0;
    sgd_step(opt, pg);
    REQUIRE(opt.velocity[0][0] == -0.5);
    sgd_step(opt, pg);
    REQUIRE(opt.velocity[0][0] == -0.25);
  }
}

TEST_CASE("grad_check itself is exact on a quadratic") {
  std::vector<double> p = {1.0, 2.0};
  auto loss_fn = [&] { return p[0] * p[0] + p[1] * p[1]; };
  std::vector<GradCheckItem> items = {{&p[0], 2.0}, {&p[1], 4.0}};
  REQUIRE(grad_check(loss_fn, items, 1e-5) < 1e-8);
}

TEST_CASE("pretraining separates a clean source domain") {
  SynthConfig cfg;
  cfg.n_identities_source = 6;
  cfg.n_identities_target = 2;
  cfg.samples_per_identity_per_camera = 3;
  cfg.n_cameras_source = 2;
  cfg.n_cameras_target = 2;
  cfg.raw_dim = 8;
  cfg.within_identity_noise = 0.0;
  cfg.camera_style_strength = 0.0;
  cfg.seed = 5;
  const auto [source, target] = generate_dataset(cfg);
  (void)target;

  Rng rng(99);
  Encoder enc = Encoder::init(8, 16, 8, rng);
  ClassifierHead head = ClassifierHead::init(8, 6, rng);
  TrainHyper hyper;
  hyper.n_s = 12;
  hyper.epochs = 20;
  SgdOptimizer opt{1e-2, 0.9, {}};

  const Matrix raws = source.raw_matrix();
  std::vector<int> labels(source.size());
  for (int i = 0; i < source.size(); ++i) labels[i] = source.samples[i].identity;
  const double initial_tri =
      loss_triplet_batch_hard(encoder_forward(enc, raws), labels, hyper.margin)
          .loss;

  const std::vector<double> losses =
      pretrain_source(enc, head, source, hyper, opt, 1234);
  REQUIRE(losses.size() == 20);
  for (double l : losses) REQUIRE(std::isfinite(l));

  const double final_tri =
      loss_triplet_batch_hard(encoder_forward(enc, raws), labels, hyper.margin)
          .loss;
  REQUIRE(final_tri <= initial_tri);

  // rank-1 on the source query/gallery split must be perfect
  const QueryGallerySplit split = split_query_gallery(source, 3);
  const Matrix feat = encoder_forward(enc, raws);
  for (int q : split.query) {
    double best = std::numeric_limits<double>::infinity();
    int best_g = -1;
    for (int g : split.gallery) {
      if (source.samples[g].identity == source.samples[q].identity &&
          source.samples[g].camera == source.samples[q].camera)
        continue;
      const double dist = euclidean(feat.row(q), feat.row(g));
      if (dist < best) {
        best = dist;
        best_g = g;
      }
    }
    REQUIRE(source.samples[best_g].identity == source.samples[q].identity);
  }
}
