// Flat key = value configuration with [section] headers and '#' comments.
// Unknown keys are errors. The canonical serialization of the model-defining
// sections is hashed into a digest that checkpoints carry, so evaluation can
// refuse a checkpoint whose architecture does not match.
#pragma once

#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mvdepth/augment.hpp"
#include "mvdepth/model.hpp"
#include "mvdepth/objective.hpp"
#include "mvdepth/optim.hpp"
#include "mvdepth/scenedata.hpp"

namespace mvdepth {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

class ConfigMap {
 public:
  static ConfigMap parse(const std::string& text, const std::string& origin) {
    ConfigMap m;
    m.origin_ = origin;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']')
          throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section");
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
      m.values_[section + "." + key] = value;
    }
    return m;
  }

  bool take(const std::string& qualified, std::string& out) {
    auto it = values_.find(qualified);
    if (it == values_.end()) return false;
    out = it->second;
    values_.erase(it);
    return true;
  }

  template <typename T>
  void get(const std::string& qualified, T& out) {
    std::string raw;
    if (!take(qualified, raw)) return;
    std::istringstream ss(raw);
    T v{};
    if constexpr (std::is_same_v<T, bool>) {
      if (raw == "true" || raw == "1")
        v = true;
      else if (raw == "false" || raw == "0")
        v = false;
      else
        throw ConfigError(origin_ + ": key " + qualified + " expects true/false");
    } else if constexpr (std::is_same_v<T, std::string>) {
      v = raw;
    } else {
      if (!(ss >> v) || !ss.eof())
        throw ConfigError(origin_ + ": cannot parse value for " + qualified + ": " + raw);
    }
    out = v;
  }

  void reject_unknown() const {
    if (values_.empty()) return;
    std::string keys;
    for (const auto& [k, v] : values_) keys += (keys.empty() ? "" : ", ") + k;
    throw ConfigError(origin_ + ": unknown keys: " + keys);
  }

 private:
  std::string origin_;
  std::map<std::string, std::string> values_;
};

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

struct RunConfig {
  // [data]
  std::string dataset;
  std::string mode = "video";  // stereo | video | overfit
  int overfit_views = 4;
  // [model]
  ModelConfig model;
  // [augment]
  AugmentConfig augment;
  // [loss]
  LossWeights loss;
  // [optim]
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  // [train]
  std::uint64_t seed = 1;
  int steps = 2000;
  int eval_every = 500;
  int query_pixels = 512;  // pixel-subset size per supervised frame, 0 = all
  int eval_samples = 4;    // eval samples per scene
  std::string precision = "f64";  // f64 | f32

  static RunConfig from_text(const std::string& text, const std::string& origin) {
    RunConfig c;
    auto m = detail::ConfigMap::parse(text, origin);
    m.get("data.dataset", c.dataset);
    m.get("data.mode", c.mode);
    m.get("data.overfit_views", c.overfit_views);

    m.get("model.latent_slots", c.model.latent_slots);
    m.get("model.latent_dim", c.model.latent_dim);
    m.get("model.blocks", c.model.blocks);
    m.get("model.heads", c.model.heads);
    m.get("model.head_dim", c.model.head_dim);
    m.get("model.mlp_ratio", c.model.mlp_ratio);
    m.get("model.d_min", c.model.d_min);
    m.get("model.d_max", c.model.d_max);
    m.get("model.inverse_depth", c.model.inverse_depth);
    m.get("model.image_channels1", c.model.image.stage_channels[0]);
    m.get("model.image_channels2", c.model.image.stage_channels[1]);
    m.get("model.image_channels3", c.model.image.stage_channels[2]);

    m.get("embedding.k_origin", c.model.embedding.k_origin);
    m.get("embedding.k_ray", c.model.embedding.k_ray);
    m.get("embedding.mu_origin", c.model.embedding.mu_origin);
    m.get("embedding.mu_ray", c.model.embedding.mu_ray);
    m.get("embedding.global_rays", c.model.embedding.global_rays);

    m.get("augment.canonical_jitter", c.augment.canonical_jitter);
    m.get("augment.canonical_randomization", c.augment.canonical_randomization);
    m.get("augment.virtual_cameras", c.augment.virtual_cameras);
    m.get("augment.sigma_virtual", c.augment.sigma_virtual);
    m.get("augment.sigma_center", c.augment.sigma_center);
    m.get("augment.sigma_translation", c.augment.sigma_translation);
    m.get("augment.sigma_rotation", c.augment.sigma_rotation);
    m.get("augment.splat_radius", c.augment.splat_radius);

    m.get("loss.lambda_synthesis", c.loss.lambda_synthesis);
    m.get("loss.lambda_virtual", c.loss.lambda_virtual);

    m.get("optim.lr", c.lr);
    m.get("optim.beta1", c.beta1);
    m.get("optim.beta2", c.beta2);
    m.get("optim.eps", c.adam_eps);

    m.get("train.seed", c.seed);
    m.get("train.steps", c.steps);
    m.get("train.eval_every", c.eval_every);
    m.get("train.query_pixels", c.query_pixels);
    m.get("train.eval_samples", c.eval_samples);
    m.get("train.precision", c.precision);
    m.reject_unknown();

    if (c.mode != "stereo" && c.mode != "video" && c.mode != "overfit")
      throw ConfigError(origin + ": data.mode must be stereo, video or overfit");
    if (c.precision != "f64" && c.precision != "f32")
      throw ConfigError(origin + ": train.precision must be f64 or f32");
    c.model.validate();
    return c;
  }

  static RunConfig from_file(const std::string& path) {
    return from_text(detail::read_text_file(path), path);
  }

  // Canonical serialization; every key, fixed order.
  std::string to_text() const {
    std::ostringstream o;
    o << "[data]\n";
    o << "dataset = " << dataset << "\n";
    o << "mode = " << mode << "\n";
    o << "overfit_views = " << overfit_views << "\n";
    o << model_text();
    o << "[augment]\n";
    o << "canonical_jitter = " << (augment.canonical_jitter ? "true" : "false") << "\n";
    o << "canonical_randomization = "
      << (augment.canonical_randomization ? "true" : "false") << "\n";
    o << "virtual_cameras = " << augment.virtual_cameras << "\n";
    o << "sigma_virtual = " << fmt(augment.sigma_virtual) << "\n";
    o << "sigma_center = " << fmt(augment.sigma_center) << "\n";
    o << "sigma_translation = " << fmt(augment.sigma_translation) << "\n";
    o << "sigma_rotation = " << fmt(augment.sigma_rotation) << "\n";
    o << "splat_radius = " << augment.splat_radius << "\n";
    o << "[loss]\n";
    o << "lambda_synthesis = " << fmt(loss.lambda_synthesis) << "\n";
    o << "lambda_virtual = " << fmt(loss.lambda_virtual) << "\n";
    o << "[optim]\n";
    o << "lr = " << fmt(lr) << "\n";
    o << "beta1 = " << fmt(beta1) << "\n";
    o << "beta2 = " << fmt(beta2) << "\n";
    o << "eps = " << fmt(adam_eps) << "\n";
    o << "[train]\n";
    o << "seed = " << seed << "\n";
    o << "steps = " << steps << "\n";
    o << "eval_every = " << eval_every << "\n";
    o << "query_pixels = " << query_pixels << "\n";
    o << "eval_samples = " << eval_samples << "\n";
    o << "precision = " << precision << "\n";
    return o.str();
  }

  // The architecture-defining part hashed into checkpoints.
  std::string model_text() const {
    std::ostringstream o;
    o << "[model]\n";
    o << "latent_slots = " << model.latent_slots << "\n";
    o << "latent_dim = " << model.latent_dim << "\n";
    o << "blocks = " << model.blocks << "\n";
    o << "heads = " << model.heads << "\n";
    o << "head_dim = " << model.head_dim << "\n";
    o << "mlp_ratio = " << model.mlp_ratio << "\n";
    o << "d_min = " << fmt(model.d_min) << "\n";
    o << "d_max = " << fmt(model.d_max) << "\n";
    o << "inverse_depth = " << (model.inverse_depth ? "true" : "false") << "\n";
    o << "image_channels1 = " << model.image.stage_channels[0] << "\n";
    o << "image_channels2 = " << model.image.stage_channels[1] << "\n";
    o << "image_channels3 = " << model.image.stage_channels[2] << "\n";
    o << "[embedding]\n";
    o << "k_origin = " << model.embedding.k_origin << "\n";
    o << "k_ray = " << model.embedding.k_ray << "\n";
    o << "mu_origin = " << fmt(model.embedding.mu_origin) << "\n";
    o << "mu_ray = " << fmt(model.embedding.mu_ray) << "\n";
    o << "global_rays = " << (model.embedding.global_rays ? "true" : "false") << "\n";
    return o.str();
  }

  std::uint64_t model_digest() const { return detail::fnv1a64(model_text()); }

 private:
  static std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  }
};

// Dataset-generation spec file: the [dataset] section drives scene count and
// splits; [scene] mirrors SceneSpec.
struct GenerateConfig {
  DatasetGenConfig gen;
  int stride = 3;
  int context_radius = 3;

  static GenerateConfig from_file(const std::string& path) {
    GenerateConfig c;
    auto m = detail::ConfigMap::parse(detail::read_text_file(path), path);
    m.get("dataset.seed", c.gen.seed);
    m.get("dataset.train_scenes", c.gen.train_scenes);
    m.get("dataset.test_scenes", c.gen.test_scenes);
    m.get("dataset.stride", c.stride);
    m.get("dataset.context_radius", c.context_radius);
    m.get("scene.width", c.gen.scene.width);
    m.get("scene.height", c.gen.scene.height);
    m.get("scene.frames", c.gen.scene.frames);
    m.get("scene.room_x", c.gen.scene.room.x());
    m.get("scene.room_y", c.gen.scene.room.y());
    m.get("scene.room_z", c.gen.scene.room.z());
    m.get("scene.boxes", c.gen.scene.boxes);
    m.get("scene.planes", c.gen.scene.planes);
    m.get("scene.fov_deg", c.gen.scene.fov_deg);
    m.get("scene.trajectory", c.gen.scene.trajectory);
    m.get("scene.traj_jitter", c.gen.scene.traj_jitter);
    m.get("scene.arc_span_deg", c.gen.scene.arc_span_deg);
    m.reject_unknown();
    if (c.gen.train_scenes < 1) throw ConfigError(path + ": need at least one train scene");
    c.gen.scene.validate();
    return c;
  }
};

}  // namespace mvdepth
