#pragma once

#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "camadapt/checkpoint.hpp"
#include "camadapt/config.hpp"
#include "camadapt/csvio.hpp"
#include "camadapt/trainer.hpp"

namespace camadapt {

// Seed streams hanging off RunConfig::seed. Streams 1 and 3 are claimed by
// RunConfig::reseed for data generation and adaptation.
constexpr std::uint64_t kSplitStream = 2;
constexpr std::uint64_t kInitStream = 4;
constexpr std::uint64_t kPretrainStream = 5;

namespace detail {

inline std::vector<NamedArray> encoder_arrays(const Encoder& e,
                                              const std::string& prefix) {
  return {
      {prefix + ".w1",
       {static_cast<std::uint64_t>(e.in_dim),
        static_cast<std::uint64_t>(e.hidden_dim)},
       e.w1.data},
      {prefix + ".b1", {static_cast<std::uint64_t>(e.hidden_dim)}, e.b1},
      {prefix + ".w2",
       {static_cast<std::uint64_t>(e.hidden_dim),
        static_cast<std::uint64_t>(e.feat_dim)},
       e.w2.data},
      {prefix + ".b2", {static_cast<std::uint64_t>(e.feat_dim)}, e.b2},
  };
}

inline Encoder encoder_from_arrays(std::span<const NamedArray> arrays,
                                   const std::string& prefix) {
  const NamedArray& w1 = find_array(arrays, prefix + ".w1");
  const NamedArray& b1 = find_array(arrays, prefix + ".b1");
  const NamedArray& w2 = find_array(arrays, prefix + ".w2");
  const NamedArray& b2 = find_array(arrays, prefix + ".b2");
  if (w1.dims.size() != 2 || w2.dims.size() != 2)
    throw CheckpointError(CheckpointError::Kind::Malformed,
                          "encoder weights must be rank 2");
  Encoder e;
  e.in_dim = static_cast<int>(w1.dims[0]);
  e.hidden_dim = static_cast<int>(w1.dims[1]);
  e.feat_dim = static_cast<int>(w2.dims[1]);
  e.w1 = Matrix(w1.dims[0], w1.dims[1]);
  e.w1.data = w1.data;
  e.w2 = Matrix(w2.dims[0], w2.dims[1]);
  e.w2.data = w2.data;
  e.b1 = b1.data;
  e.b2 = b2.data;
  return e;
}

inline std::vector<NamedArray> generator_arrays(const StyleGenerator& g,
                                                const std::string& prefix) {
  std::vector<NamedArray> out;
  for (int c = 0; c < g.n_cameras; ++c) {
    const std::string tag = prefix + ".cam" + std::to_string(c);
    out.push_back({tag + ".u",
                   {static_cast<std::uint64_t>(g.raw_dim),
                    static_cast<std::uint64_t>(g.raw_dim)},
                   g.u[c].data});
    out.push_back({tag + ".v", {static_cast<std::uint64_t>(g.raw_dim)},
                   g.v[c]});
  }
  return out;
}

inline std::vector<NamedArray> dataset_arrays(const Dataset& ds,
                                              const std::string& prefix) {
  NamedArray raw{prefix + ".raw",
                 {static_cast<std::uint64_t>(ds.size()),
                  static_cast<std::uint64_t>(ds.raw_dim)},
                 {}};
  NamedArray identity{prefix + ".identity",
                      {static_cast<std::uint64_t>(ds.size())}, {}};
  NamedArray camera{prefix + ".camera",
                    {static_cast<std::uint64_t>(ds.size())}, {}};
  raw.data.reserve(raw.expected_count());
  for (const Sample& s : ds.samples) {
    raw.data.insert(raw.data.end(), s.raw.begin(), s.raw.end());
    identity.data.push_back(static_cast<double>(s.identity));
    camera.data.push_back(static_cast<double>(s.camera));
  }
  return {std::move(raw), std::move(identity), std::move(camera)};
}

}  // namespace detail

struct PipelineResult {
  Dataset source;
  Dataset target;
  QueryGallerySplit split;
  Encoder encoder;           // adapted
  Encoder pretrained;        // before adaptation (direct transfer)
  StyleGenerator generator;
  Metrics direct_transfer;
  History history;
  IterationRecord final_record;
};

// pretrain -> adapt -> evaluate, entirely in memory. The CLI layers file
// output on top of this; tests call it directly.
inline PipelineResult run_pipeline(const RunConfig& cfg,
                                   std::ostream* log = nullptr,
                                   const IterationCallback& on_iteration = {}) {
  cfg.validate();
  PipelineResult res;
  auto [source, target] = generate_dataset(cfg.synth);
  res.source = std::move(source);
  res.target = std::move(target);
  res.split = split_query_gallery(res.target, derive_seed(cfg.seed, kSplitStream));

  Rng init_rng(derive_seed(cfg.seed, kInitStream));
  res.encoder = Encoder::init(cfg.synth.raw_dim, cfg.hidden_dim, cfg.feat_dim,
                              init_rng);
  ClassifierHead head = ClassifierHead::init(
      cfg.feat_dim, cfg.synth.n_identities_source, init_rng);
  SgdOptimizer opt_f{cfg.lr, cfg.momentum, {}};
  pretrain_source(res.encoder, head, res.source, cfg.train, opt_f,
                  derive_seed(cfg.seed, kPretrainStream));
  res.pretrained = res.encoder;

  std::vector<int> identities(res.target.size()), cameras(res.target.size());
  for (int i = 0; i < res.target.size(); ++i) {
    identities[i] = res.target.samples[i].identity;
    cameras[i] = res.target.samples[i].camera;
  }
  {
    const Matrix feat = encoder_forward(res.encoder, res.target.raw_matrix());
    res.direct_transfer = map_cmc(feat, res.split.query, res.split.gallery,
                                  identities, cameras);
  }
  if (log)
    *log << "direct transfer: mAP=" << format_double(res.direct_transfer.mAP)
         << " rank1=" << format_double(res.direct_transfer.cmc1) << "\n";

  res.generator = StyleGenerator::identity(res.target.n_cameras,
                                           res.target.raw_dim);
  SgdOptimizer opt_adapt{cfg.lr, cfg.momentum, {}};
  SgdOptimizer opt_g{cfg.gen.gen_lr, cfg.gen.gen_momentum, {}};
  res.history = adapt(res.encoder, res.generator, res.target, cfg.adapt,
                      cfg.cluster, cfg.gen, cfg.train.margin, opt_adapt, opt_g,
                      res.split, on_iteration);

  // Final evaluation of the returned encoder.
  const Matrix feat = encoder_forward(res.encoder, res.target.raw_matrix());
  const Metrics m =
      map_cmc(feat, res.split.query, res.split.gallery, identities, cameras);
  res.final_record.iteration = cfg.adapt.n_cluster_iterations;
  res.final_record.mAP = m.mAP;
  res.final_record.cmc1 = m.cmc1;
  res.final_record.cmc5 = m.cmc5;
  res.final_record.cmc10 = m.cmc10;
  res.final_record.J = scatter_ratio(feat, identities);
  if (!res.history.empty()) {
    res.final_record.n_clusters = res.history.back().n_clusters;
    res.final_record.n_noise = res.history.back().n_noise;
    res.final_record.pseudo_fscore = res.history.back().pseudo_fscore;
    res.final_record.mean_L_div = res.history.back().mean_L_div;
    res.final_record.mean_L_tri = res.history.back().mean_L_tri;
  }
  if (log)
    *log << "final: mAP=" << format_double(m.mAP)
         << " rank1=" << format_double(m.cmc1) << "\n";
  return res;
}

inline std::string iteration_checkpoint_name(int iteration) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "checkpoint_iter_%03d.adck", iteration);
  return buf;
}

// Full run with file outputs: history.csv, final_metrics.csv, a checkpoint
// per clustering iteration boundary and checkpoint_final.adck.
inline PipelineResult cmd_run(const RunConfig& cfg,
                              const std::filesystem::path& out_dir,
                              std::ostream* log = nullptr) {
  std::filesystem::create_directories(out_dir);
  const IterationCallback save_iter = [&](const IterationRecord& rec,
                                          const Encoder& enc,
                                          const StyleGenerator& gen) {
    std::vector<NamedArray> arrays = detail::encoder_arrays(enc, "encoder");
    auto g = detail::generator_arrays(gen, "generator");
    arrays.insert(arrays.end(), g.begin(), g.end());
    write_checkpoint(
        (out_dir / iteration_checkpoint_name(rec.iteration)).string(),
        arrays);
  };
  PipelineResult res = run_pipeline(cfg, log, save_iter);
  write_history_csv((out_dir / "history.csv").string(), res.history);
  write_final_metrics_csv((out_dir / "final_metrics.csv").string(),
                          res.final_record);
  std::vector<NamedArray> arrays =
      detail::encoder_arrays(res.encoder, "encoder");
  {
    auto gen = detail::generator_arrays(res.generator, "generator");
    arrays.insert(arrays.end(), gen.begin(), gen.end());
  }
  write_checkpoint((out_dir / "checkpoint_final.adck").string(), arrays);
  return res;
}

// Re-runs adaptation per lambda value in FULL mode and tabulates the final
// retrieval quality; rows keep the order of `values`.
inline void cmd_sweep_lambda(RunConfig cfg, std::span<const double> values,
                             const std::filesystem::path& out_dir,
                             std::ostream* log = nullptr) {
  for (double v : values)
    if (v <= 0.0) throw ConfigError("lambda values must be > 0");
  std::filesystem::create_directories(out_dir);
  std::ofstream out = open_csv((out_dir / "lambda_sweep.csv").string());
  out << "lambda,mAP,rank1\n";
  cfg.adapt.mode = AdaptMode::Full;
  for (double v : values) {
    cfg.gen.lambda = v;
    const PipelineResult res = run_pipeline(cfg, log);
    out << format_double(v) << "," << format_double(res.final_record.mAP)
        << "," << format_double(res.final_record.cmc1) << "\n";
    if (log)
      *log << "lambda=" << format_double(v)
           << " mAP=" << format_double(res.final_record.mAP) << "\n";
  }
}

// Re-evaluates the encoder stored in a checkpoint on the config's target
// domain; writes eval_metrics.csv.
inline Metrics cmd_eval(const RunConfig& cfg, const std::string& ckpt_path,
                        const std::filesystem::path& out_dir,
                        std::ostream* log = nullptr) {
  const std::vector<NamedArray> arrays = read_checkpoint(ckpt_path);
  const Encoder enc = detail::encoder_from_arrays(arrays, "encoder");
  auto [source, target] = generate_dataset(cfg.synth);
  (void)source;
  const QueryGallerySplit split =
      split_query_gallery(target, derive_seed(cfg.seed, kSplitStream));
  std::vector<int> identities(target.size()), cameras(target.size());
  for (int i = 0; i < target.size(); ++i) {
    identities[i] = target.samples[i].identity;
    cameras[i] = target.samples[i].camera;
  }
  const Matrix feat = encoder_forward(enc, target.raw_matrix());
  const Metrics m =
      map_cmc(feat, split.query, split.gallery, identities, cameras);
  const double j = scatter_ratio(feat, identities);
  std::filesystem::create_directories(out_dir);
  std::ofstream out = open_csv((out_dir / "eval_metrics.csv").string());
  out << "mAP,cmc1,cmc5,cmc10,J\n";
  out << format_double(m.mAP) << "," << format_double(m.cmc1) << ","
      << format_double(m.cmc5) << "," << format_double(m.cmc10) << ","
      << format_double(j) << "\n";
  if (log)
    *log << "eval: mAP=" << format_double(m.mAP)
         << " rank1=" << format_double(m.cmc1) << "\n";
  return m;
}

// Materialises the synthetic domains into the checkpoint container.
inline void cmd_synth(const RunConfig& cfg,
                      const std::filesystem::path& out_dir) {
  auto [source, target] = generate_dataset(cfg.synth);
  std::vector<NamedArray> arrays = detail::dataset_arrays(source, "source");
  auto t = detail::dataset_arrays(target, "target");
  arrays.insert(arrays.end(), std::make_move_iterator(t.begin()),
                std::make_move_iterator(t.end()));
  std::filesystem::create_directories(out_dir);
  write_checkpoint((out_dir / "dataset.adck").string(), arrays);
}

}  // namespace camadapt
