#pragma once

#include <charconv>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "camadapt/augment.hpp"
#include "camadapt/cluster.hpp"
#include "camadapt/nncore.hpp"
#include "camadapt/synthdata.hpp"
#include "camadapt/trainer.hpp"

namespace camadapt {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  SynthConfig synth;
  int hidden_dim = 32;
  int feat_dim = 16;
  TrainHyper train;
  double lr = 1e-2;
  double momentum = 0.9;
  ClusterParams cluster;
  GenHyper gen;
  AdaptConfig adapt;
  std::string output_dir = "out";
  std::uint64_t seed = 1;

  // The run seed fans out into per-stage streams so an override (--seed)
  // reseeds data generation and adaptation coherently.
  void reseed(std::uint64_t s) {
    seed = s;
    synth.seed = derive_seed(s, 1);
    adapt.seed = derive_seed(s, 3);
  }

  void validate() const {
    synth.validate();
    train.validate();
    cluster.validate();
    gen.validate();
    adapt.validate();
    if (hidden_dim < 1 || feat_dim < 1)
      throw ConfigError("hidden_dim and feat_dim must be >= 1");
    if (lr <= 0.0) throw ConfigError("lr must be > 0");
    if (momentum < 0.0 || momentum >= 1.0)
      throw ConfigError("momentum must be in [0,1)");
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

[[noreturn]] inline void fail(int line, const std::string& key,
                              const std::string& what) {
  throw ConfigError("config line " + std::to_string(line) + ", key '" + key +
                    "': " + what);
}

inline double parse_double(std::string_view v, int line,
                           const std::string& key) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    fail(line, key, "expected a number, got '" + std::string(v) + "'");
  return out;
}

inline std::int64_t parse_int(std::string_view v, int line,
                              const std::string& key) {
  std::int64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    fail(line, key, "expected an integer, got '" + std::string(v) + "'");
  return out;
}

inline std::uint64_t parse_u64(std::string_view v, int line,
                               const std::string& key) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    fail(line, key, "expected an unsigned integer, got '" + std::string(v) + "'");
  return out;
}

}  // namespace detail

inline AdaptMode parse_mode(std::string_view v) {
  if (v == "baseline") return AdaptMode::Baseline;
  if (v == "asa") return AdaptMode::BaselineAsa;
  if (v == "full") return AdaptMode::Full;
  throw ConfigError("mode must be one of baseline|asa|full, got '" +
                    std::string(v) + "'");
}

// Flat "key = value" configuration, '#' starts a comment, unknown keys are
// rejected with their line number, missing keys keep the defaults above.
inline RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    std::string_view line = text.substr(
        pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;

    const std::size_t hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;

    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected 'key = value', got '" + std::string(line) +
                        "'");
    const std::string key{detail::trim(line.substr(0, eq))};
    const std::string_view value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": empty key or value");

    auto num = [&] { return detail::parse_double(value, line_no, key); };
    auto integer = [&] { return detail::parse_int(value, line_no, key); };
    auto check = [&](bool ok, const std::string& what) {
      if (!ok) detail::fail(line_no, key, what);
    };

    if (key == "seed") {
      cfg.seed = detail::parse_u64(value, line_no, key);
    } else if (key == "output_dir") {
      cfg.output_dir = std::string(value);
    } else if (key == "n_identities_source") {
      const auto v = integer(); check(v >= 1, "must be >= 1");
      cfg.synth.n_identities_source = static_cast<int>(v);
    } else if (key == "n_identities_target") {
      const auto v = integer(); check(v >= 1, "must be >= 1");
      cfg.synth.n_identities_target = static_cast<int>(v);
    } else if (key == "samples_per_identity_per_camera") {
      const auto v = integer(); check(v >= 1, "must be >= 1");
      cfg.synth.samples_per_identity_per_camera = static_cast<int>(v);
    } else if (key == "n_cameras_source") {
      const auto v = integer(); check(v >= 2, "must be >= 2");
      cfg.synth.n_cameras_source = static_cast<int>(v);
    } else if (key == "n_cameras_target") {
      const auto v = integer(); check(v >= 2, "must be >= 2");
      cfg.synth.n_cameras_target = static_cast<int>(v);
    } else if (key == "raw_dim") {
      const auto v = integer(); check(v >= 1, "must be >= 1");
      cfg.synth.raw_dim = static_cast<int>(v);
    } else if (key == "prototype_scale") {
      const auto v = num(); check(v >= 0.0, "must be >= 0");
      cfg.synth.prototype_scale = v;
    } else if (key == "within_identity_noise") {
      const auto v = num(); check(v >= 0.0, "must be >= 0");
      cfg.synth.within_identity_noise = v;
    } else if (key == "camera_style_strength") {
      const auto v = num(); check(v >= 0.0, "must be >= 0");
      cfg.synth.camera_style_strength = v;
    } else if (key == "domain_shift_strength") {
      const auto v = num(); check(v >= 0.0, "must be >= 0");
      cfg.synth.domain_shift_strength = v;
    } else if (key == "hidden_dim") {
      const auto v = integer(); check(v >= 1, "must be >= 1");
      cfg.hidden_dim = static_cast<int>(v);
    } else if (key == "feat_dim") {
      const auto v = integer(); check(v >= 1, "must be >= 1");
      cfg.feat_dim = static_cast<int>(v);
    } else if (key == "margin") {
      const auto v = num(); check(v > 0.0, "must be > 0");
      cfg.train.margin = v;
    } else if (key == "batch_source") {
      const auto v = integer(); check(v >= 2, "must be >= 2");
      cfg.train.n_s = static_cast<int>(v);
    } else if (key == "pretrain_epochs") {
      const auto v = integer(); check(v >= 0, "must be >= 0");
      cfg.train.epochs = static_cast<int>(v);
    } else if (key == "lr") {
      const auto v = num(); check(v > 0.0, "must be > 0");
      cfg.lr = v;
    } else if (key == "momentum") {
      const auto v = num(); check(v >= 0.0 && v < 1.0, "must be in [0,1)");
      cfg.momentum = v;
    } else if (key == "k1") {
      const auto v = integer(); check(v >= 1, "must be >= 1");
      cfg.cluster.k1 = static_cast<int>(v);
    } else if (key == "k2") {
      const auto v = integer(); check(v >= 1, "must be >= 1");
      cfg.cluster.k2 = static_cast<int>(v);
    } else if (key == "lambda_rr") {
      const auto v = num(); check(v >= 0.0 && v <= 1.0, "must be in [0,1]");
      cfg.cluster.lambda_rr = v;
    } else if (key == "eps_quantile") {
      const auto v = num(); check(v > 0.0 && v < 1.0, "must be in (0,1)");
      cfg.cluster.eps_quantile = v;
    } else if (key == "min_pts") {
      const auto v = integer(); check(v >= 2, "must be >= 2");
      cfg.cluster.min_pts = static_cast<int>(v);
    } else if (key == "lambda") {
      const auto v = num(); check(v > 0.0, "must be > 0");
      cfg.gen.lambda = v;
    } else if (key == "beta_recon") {
      const auto v = num(); check(v >= 0.0, "must be >= 0");
      cfg.gen.beta_recon = v;
    } else if (key == "gen_lr") {
      const auto v = num(); check(v > 0.0, "must be > 0");
      cfg.gen.gen_lr = v;
    } else if (key == "gen_momentum") {
      const auto v = num(); check(v >= 0.0 && v < 1.0, "must be in [0,1)");
      cfg.gen.gen_momentum = v;
    } else if (key == "n_cluster_iterations") {
      const auto v = integer(); check(v >= 0, "must be >= 0");
      cfg.adapt.n_cluster_iterations = static_cast<int>(v);
    } else if (key == "epochs_per_iteration") {
      const auto v = integer(); check(v >= 1, "must be >= 1");
      cfg.adapt.epochs_per_iteration = static_cast<int>(v);
    } else if (key == "P") {
      const auto v = integer(); check(v >= 2, "must be >= 2");
      cfg.adapt.P = static_cast<int>(v);
    } else if (key == "K_img") {
      const auto v = integer(); check(v >= 2, "must be >= 2");
      cfg.adapt.K_img = static_cast<int>(v);
    } else if (key == "aug_ratio") {
      const auto v = integer(); check(v >= 1, "must be >= 1");
      cfg.adapt.aug_ratio = static_cast<int>(v);
    } else if (key == "mode") {
      try {
        cfg.adapt.mode = parse_mode(value);
      } catch (const ConfigError& e) {
        detail::fail(line_no, key, e.what());
      }
    } else if (key == "asa_prefit_steps") {
      const auto v = integer(); check(v >= 0, "must be >= 0");
      cfg.adapt.asa_prefit_steps = static_cast<int>(v);
    } else if (key == "asa_init_scale") {
      const auto v = num(); check(v >= 0.0, "must be >= 0");
      cfg.adapt.asa_init_scale = v;
    } else {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": unknown key '" + key + "'");
    }
  }
  cfg.reseed(cfg.seed);
  cfg.train.n_t = cfg.adapt.P * cfg.adapt.K_img;
  cfg.validate();
  return cfg;
}

}  // namespace camadapt
