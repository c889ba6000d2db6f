// Training loop and evaluation protocols.
//
// Every training step: sample a batch, re-express poses (canonical
// randomization then jittering), render virtual ground truth, encode tokens,
// decode sparse pixel subsets for the supervised and virtual views, combine
// the four loss terms, backprop, Adam. All randomness flows from the run
// seed through named substreams (init / data / augment / queries), so runs
// are bit-reproducible and disabling an augmentation never shifts the data
// stream.
//
// Evaluation protocols: stereo, video, zero-shot (median-scaled video),
// overfit (the encoded views themselves), and the novel-view protocols
// (interpolate / extrapolate) which compare latent querying against explicit
// projection of the encoded frames.
#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "mvdepth/augment.hpp"
#include "mvdepth/checkpoint.hpp"
#include "mvdepth/config.hpp"
#include "mvdepth/model.hpp"
#include "mvdepth/objective.hpp"
#include "mvdepth/scenedata.hpp"

namespace mvdepth {

struct StepLosses {
  double total = 0, depth = 0, rgb = 0, virtual_depth = 0, virtual_rgb = 0;
};

struct CurvePoint {
  std::string mode;  // "query" | "projection"
  int offset = 0;
  double rmse = 0;
  double coverage = 0;
  int samples = 0;
};

inline void write_curves_csv(const std::string& path, const std::string& protocol,
                             const std::vector<CurvePoint>& points) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "protocol,mode,offset,rmse,coverage\n";
  char buf[192];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%s,%s,%d,%.10g,%.10g\n", protocol.c_str(),
                  p.mode.c_str(), p.offset, p.rmse, p.coverage);
    out << buf;
  }
}

template <typename S>
class Pipeline {
 public:
  Pipeline(const RunConfig& cfg, const Dataset* dataset)
      : cfg_(cfg),
        ds_(dataset),
        root_(cfg.seed),
        rng_data_(root_.substream("data")),
        rng_augment_(root_.substream("augment")),
        rng_queries_(root_.substream("queries")) {
    Rng init = root_.substream("init");
    model_ = std::make_unique<Model<S>>(cfg.model, init);
  }

  Model<S>& model() { return *model_; }
  const RunConfig& config() const { return cfg_; }

  void restore(const LoadedCheckpoint& ck) { restore_params(ck, model_->store); }

  // Full training run; writes train_log.csv, metrics.csv and checkpoint.bin
  // under out_dir.
  void train(const std::string& out_dir, std::ostream* progress = nullptr) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::ofstream log(fs::path(out_dir) / "train_log.csv");
    if (!log) throw DataError("cannot write train log in " + out_dir);
    log << "step,loss,depth,rgb,virtual_depth,virtual_rgb\n";
    MetricsCsv metrics((fs::path(out_dir) / "metrics.csv").string());

    const std::string eval_split = eval_split_name();
    for (int step = 1; step <= cfg_.steps; ++step) {
      StepLosses l;
      try {
        l = train_step();
      } catch (const NumericError& e) {
        throw NumericError("step " + std::to_string(step) + ": " + e.what());
      }
      char buf[192];
      std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g,%.10g,%.10g\n", step, l.total,
                    l.depth, l.rgb, l.virtual_depth, l.virtual_rgb);
      log << buf;
      log.flush();
      if (progress && (step % 100 == 0 || step == 1))
        *progress << "step " << step << "/" << cfg_.steps << " loss " << l.total << "\n";
      if (cfg_.eval_every > 0 && step % cfg_.eval_every == 0 && step != cfg_.steps)
        metrics.row(eval_split, step, eval_depth(eval_protocol(), eval_split));
    }
    metrics.row(eval_split, cfg_.steps, eval_depth(eval_protocol(), eval_split));
    save_checkpoint((fs::path(out_dir) / "checkpoint.bin").string(), cfg_, model_->store);
  }

  // One optimization step; exposed for smoke tests.
  StepLosses train_step() {
    const BatchMode mode = parse_batch_mode(cfg_.mode);
    const BatchSample batch =
        sample_batch(*ds_, "train", mode, rng_data_, cfg_.overfit_views);
    const Scene& scene = ds_->scenes[static_cast<std::size_t>(batch.scene)];

    std::vector<FrameRecord> frames;
    frames.reserve(batch.encoded.size());
    for (int idx : batch.encoded) frames.push_back(scene.frames[static_cast<std::size_t>(idx)]);

    std::vector<Pose<double>> poses;
    for (const auto& f : frames) poses.push_back(f.camera.pose);
    if (cfg_.augment.canonical_randomization) poses = canonical_randomize(poses, rng_augment_);
    if (cfg_.augment.canonical_jitter)
      poses = canonical_jitter(poses, cfg_.augment.sigma_translation,
                               cfg_.augment.sigma_rotation, rng_augment_);
    for (std::size_t i = 0; i < frames.size(); ++i) frames[i].camera.pose = poses[i];

    std::vector<VirtualFrame> virtuals;
    for (int v = 0; v < cfg_.augment.virtual_cameras; ++v) {
      const Camera<double> vcam = sample_virtual_camera(
          frames, cfg_.augment.sigma_virtual, cfg_.augment.sigma_center, rng_augment_);
      VirtualFrame vf = render_virtual_gt(frames, vcam, cfg_.augment.splat_radius);
      if (!vf.empty()) virtuals.push_back(std::move(vf));
    }

    Tape<S> tape;
    model_->store.attach(tape);
    const auto latent = model_->encode(
        assemble_encoder_tokens(views_of(frames), model_->image_enc, cfg_.model.embedding));

    const bool with_rgb = cfg_.loss.lambda_synthesis > 0.0;
    Tensor<S> loss_d = Tensor<S>::scalar(S(0));
    Tensor<S> loss_s = Tensor<S>::scalar(S(0));
    int supervised = 0;
    for (int idx : batch.supervised) {
      const auto pos = std::find(batch.encoded.begin(), batch.encoded.end(), idx);
      const FrameRecord& f = frames[static_cast<std::size_t>(pos - batch.encoded.begin())];
      const auto subset = pixel_subset(f);
      if (subset.empty()) continue;
      const auto queries = assemble_decoder_queries(to_scalar_camera(f.camera),
                                                    f.camera.height, f.camera.width,
                                                    cfg_.model.embedding, &subset);
      loss_d = add(loss_d, depth_loss(model_->decode_depth(latent, queries),
                                      gather_depth(f, subset)));
      if (with_rgb)
        loss_s =
            add(loss_s, rgb_loss(model_->decode_rgb(latent, queries), gather_rgb(f, subset)));
      ++supervised;
    }
    if (supervised == 0) throw DataError("batch has no supervisable pixels");
    loss_d = scale(loss_d, S(1) / static_cast<S>(supervised));
    loss_s = scale(loss_s, S(1) / static_cast<S>(supervised));

    Tensor<S> loss_dv = Tensor<S>::scalar(S(0));
    Tensor<S> loss_sv = Tensor<S>::scalar(S(0));
    for (const VirtualFrame& vf : virtuals) {
      const auto subset = virtual_subset(vf);
      const auto queries = assemble_decoder_queries(to_scalar_camera(vf.camera),
                                                    vf.camera.height, vf.camera.width,
                                                    cfg_.model.embedding, &subset.pixels);
      loss_dv = add(loss_dv, depth_loss(model_->decode_depth(latent, queries), subset.depth));
      if (with_rgb)
        loss_sv = add(loss_sv, rgb_loss(model_->decode_rgb(latent, queries), subset.rgb));
    }
    if (!virtuals.empty()) {
      loss_dv = scale(loss_dv, S(1) / static_cast<S>(virtuals.size()));
      loss_sv = scale(loss_sv, S(1) / static_cast<S>(virtuals.size()));
    }

    const auto loss = total_loss(loss_d, loss_s, loss_dv, loss_sv, cfg_.loss);
    tape.backward(loss);
    AdamConfig<S> adam;
    adam.lr = static_cast<S>(cfg_.lr);
    adam.beta1 = static_cast<S>(cfg_.beta1);
    adam.beta2 = static_cast<S>(cfg_.beta2);
    adam.eps = static_cast<S>(cfg_.adam_eps);
    model_->store.adam_step(adam);
    model_->store.detach();

    StepLosses out;
    out.total = static_cast<double>(loss.value());
    out.depth = static_cast<double>(loss_d.value());
    out.rgb = static_cast<double>(loss_s.value());
    out.virtual_depth = static_cast<double>(loss_dv.value());
    out.virtual_rgb = static_cast<double>(loss_sv.value());
    return out;
  }

  // Encode a set of frames as-is (no augmentation); parameters stay
  // detached, so this never touches a tape.
  LatentState<S> encode_frames(const std::vector<FrameRecord>& frames) {
    return model_->encode(
        assemble_encoder_tokens(views_of(frames), model_->image_enc, cfg_.model.embedding));
  }

  // Full-resolution depth and rgb for one camera.
  struct ViewEstimate {
    std::vector<double> depth;
    std::vector<double> rgb;
  };
  ViewEstimate query_view(const LatentState<S>& latent, const Camera<double>& cam) {
    const auto queries =
        assemble_decoder_queries(to_scalar_camera(cam), cam.height, cam.width,
                                 cfg_.model.embedding);
    ViewEstimate est;
    const auto d = model_->decode_depth(latent, queries);
    est.depth.assign(d.values().begin(), d.values().end());
    const auto r = model_->decode_rgb(latent, queries);
    est.rgb.assign(r.values().begin(), r.values().end());
    return est;
  }

  // Depth metrics under a named protocol, averaged per frame.
  DepthMetrics eval_depth(const std::string& protocol, const std::string& split) {
    DepthMetrics acc;
    int frames_evaluated = 0;
    auto eval_frame = [&](const LatentState<S>& latent, const FrameRecord& gt_frame) {
      const auto est = query_view(latent, gt_frame.camera);
      std::vector<std::uint8_t> mask(gt_frame.depth.size());
      for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = gt_frame.depth[i] > 0.0;
      std::vector<double> pred = est.depth;
      if (protocol == "zero-shot") pred = median_scale(pred, gt_frame.depth, mask);
      const DepthMetrics m = compute_metrics(pred, gt_frame.depth, mask);
      acc.abs_rel += m.abs_rel;
      acc.sq_rel += m.sq_rel;
      acc.rmse += m.rmse;
      acc.delta1 += m.delta1;
      acc.delta2 += m.delta2;
      acc.delta3 += m.delta3;
      acc.pixels += m.pixels;
      ++frames_evaluated;
    };

    if (protocol == "overfit") {
      const auto scenes = ds_->split_indices("train");
      if (scenes.empty()) throw DataError("overfit eval: no train scenes");
      const Scene& scene = ds_->scenes[static_cast<std::size_t>(scenes[0])];
      std::vector<FrameRecord> frames;
      for (int idx : overfit_views(static_cast<int>(scene.frames.size()), cfg_.overfit_views))
        frames.push_back(scene.frames[static_cast<std::size_t>(idx)]);
      const auto latent = encode_frames(frames);
      for (const auto& f : frames) eval_frame(latent, f);
    } else if (protocol == "stereo" || protocol == "video" || protocol == "zero-shot") {
      const bool stereo = protocol == "stereo";
      const int reach = stereo ? ds_->stride : ds_->stride * ds_->context_radius;
      for (int si : ds_->split_indices(split)) {
        const Scene& scene = ds_->scenes[static_cast<std::size_t>(si)];
        const int n = static_cast<int>(scene.frames.size());
        const int lo = stereo ? 0 : reach;
        const int hi = stereo ? n - reach - 1 : n - reach - 1;
        if (hi < lo) continue;
        for (int t : spread_indices(lo, hi, cfg_.eval_samples)) {
          std::vector<FrameRecord> frames;
          if (stereo) {
            frames = {scene.frames[static_cast<std::size_t>(t)],
                      scene.frames[static_cast<std::size_t>(t + ds_->stride)]};
          } else {
            for (int i = -ds_->context_radius; i <= ds_->context_radius; ++i)
              frames.push_back(scene.frames[static_cast<std::size_t>(t + i * ds_->stride)]);
          }
          const auto latent = encode_frames(frames);
          if (stereo) {
            for (const auto& f : frames) eval_frame(latent, f);
          } else {
            eval_frame(latent, scene.frames[static_cast<std::size_t>(t)]);
          }
        }
      }
    } else {
      throw DataError("unknown eval protocol " + protocol);
    }

    if (frames_evaluated == 0) throw DataError("eval produced no frames");
    const double n = frames_evaluated;
    acc.abs_rel /= n;
    acc.sq_rel /= n;
    acc.rmse /= n;
    acc.delta1 /= n;
    acc.delta2 /= n;
    acc.delta3 /= n;
    return acc;
  }

  // Novel-view protocols: RMSE-vs-offset for latent queries and for explicit
  // projection of the encoded frames, plus pixel coverage of each mode.
  std::vector<CurvePoint> eval_novel_view(bool extrapolate, int enumeration_step = 11) {
    const auto samples = enumerate_protocol(*ds_, "test", extrapolate, enumeration_step);
    if (samples.empty()) throw DataError("novel-view eval: no protocol samples");
    struct Acc {
      double rmse = 0, coverage = 0;
      int n = 0;
    };
    std::map<std::pair<std::string, int>, Acc> acc;

    for (const auto& sample : samples) {
      const Scene& scene = ds_->scenes[static_cast<std::size_t>(sample.scene)];
      std::vector<FrameRecord> encoded;
      for (int idx : sample.encoded)
        encoded.push_back(scene.frames[static_cast<std::size_t>(idx)]);
      const auto latent = encode_frames(encoded);
      for (std::size_t qi = 0; qi < sample.queries.size(); ++qi) {
        const FrameRecord& target =
            scene.frames[static_cast<std::size_t>(sample.queries[qi])];
        const int offset = sample.queries[qi] - sample.t;

        std::int64_t valid = 0;
        for (double d : target.depth) valid += d > 0.0;
        if (valid == 0) continue;

        // Latent query: dense prediction, full coverage.
        {
          const auto est = query_view(latent, target.camera);
          double se = 0;
          std::int64_t n = 0;
          for (std::size_t i = 0; i < target.depth.size(); ++i) {
            if (!(target.depth[i] > 0.0)) continue;
            const double e = est.depth[i] - target.depth[i];
            se += e * e;
            ++n;
          }
          Acc& a = acc[{"query", offset}];
          a.rmse += std::sqrt(se / static_cast<double>(n));
          a.coverage += static_cast<double>(n) / static_cast<double>(valid);
          ++a.n;
        }
        // Explicit projection of the encoded frames into the target view.
        {
          const VirtualFrame vf =
              render_virtual_gt(encoded, target.camera, cfg_.augment.splat_radius);
          double se = 0;
          std::int64_t n = 0;
          for (std::size_t i = 0; i < vf.pixels.size(); ++i) {
            const double gt = target.depth[static_cast<std::size_t>(vf.pixels[i])];
            if (!(gt > 0.0)) continue;
            const double e = vf.depth[i] - gt;
            se += e * e;
            ++n;
          }
          Acc& a = acc[{"projection", offset}];
          a.rmse += n ? std::sqrt(se / static_cast<double>(n)) : 0.0;
          a.coverage += static_cast<double>(n) / static_cast<double>(valid);
          ++a.n;
        }
      }
    }

    std::vector<CurvePoint> out;
    for (const auto& [key, a] : acc) {
      CurvePoint p;
      p.mode = key.first;
      p.offset = key.second;
      p.rmse = a.rmse / a.n;
      p.coverage = a.coverage / a.n;
      p.samples = a.n;
      out.push_back(p);
    }
    return out;
  }

  std::string eval_protocol() const {
    return cfg_.mode == "overfit" ? "overfit" : cfg_.mode;
  }

  std::string eval_split_name() const {
    if (cfg_.mode == "overfit") return "train";
    return ds_->split_indices("test").empty() ? "train" : "test";
  }

 private:
  static Camera<S> to_scalar_camera(const Camera<double>& c) {
    if constexpr (std::is_same_v<S, double>) {
      return c;
    } else {
      Camera<S> out;
      out.width = c.width;
      out.height = c.height;
      out.intrinsics = {static_cast<S>(c.intrinsics.fx), static_cast<S>(c.intrinsics.fy),
                        static_cast<S>(c.intrinsics.cx), static_cast<S>(c.intrinsics.cy)};
      out.pose.rotation = c.pose.rotation.template cast<S>();
      out.pose.translation = c.pose.translation.template cast<S>();
      return out;
    }
  }

  std::vector<ViewInput<S>> views_of(const std::vector<FrameRecord>& frames) const {
    std::vector<ViewInput<S>> views;
    views.reserve(frames.size());
    for (const auto& f : frames) {
      ViewInput<S> v;
      std::vector<S> rgb(f.rgb.size());
      for (std::size_t i = 0; i < rgb.size(); ++i) rgb[i] = static_cast<S>(f.rgb[i]);
      v.rgb = Tensor<S>({f.pixel_count(), 3}, std::move(rgb));
      v.camera = to_scalar_camera(f.camera);
      views.push_back(std::move(v));
    }
    return views;
  }

  // k distinct valid pixels in row-major order.
  std::vector<std::int64_t> pixel_subset(const FrameRecord& f) {
    std::vector<std::int64_t> valid;
    valid.reserve(static_cast<std::size_t>(f.pixel_count()));
    for (std::int64_t i = 0; i < f.pixel_count(); ++i)
      if (f.depth_valid(i)) valid.push_back(i);
    return choose_sorted(std::move(valid), cfg_.query_pixels, rng_queries_);
  }

  struct VirtualSubset {
    std::vector<std::int64_t> pixels;
    Tensor<S> depth;
    Tensor<S> rgb;
  };
  VirtualSubset virtual_subset(const VirtualFrame& vf) {
    std::vector<std::int64_t> list(vf.pixels.size());
    for (std::size_t i = 0; i < list.size(); ++i) list[i] = static_cast<std::int64_t>(i);
    const auto chosen = choose_sorted(std::move(list), cfg_.query_pixels, rng_queries_);
    VirtualSubset out;
    std::vector<S> d, c;
    for (auto li : chosen) {
      const auto i = static_cast<std::size_t>(li);
      out.pixels.push_back(vf.pixels[i]);
      d.push_back(static_cast<S>(vf.depth[i]));
      c.push_back(static_cast<S>(vf.rgb[i].x()));
      c.push_back(static_cast<S>(vf.rgb[i].y()));
      c.push_back(static_cast<S>(vf.rgb[i].z()));
    }
    out.depth = Tensor<S>({static_cast<std::int64_t>(chosen.size()), 1}, std::move(d));
    out.rgb = Tensor<S>({static_cast<std::int64_t>(chosen.size()), 3}, std::move(c));
    return out;
  }

  static std::vector<std::int64_t> choose_sorted(std::vector<std::int64_t> pool, int k,
                                                 Rng& rng) {
    if (k <= 0 || k >= static_cast<int>(pool.size())) return pool;
    // Partial Fisher-Yates, then restore row-major order.
    for (int i = 0; i < k; ++i) {
      const auto j = i + rng.uniform_int(static_cast<std::int64_t>(pool.size()) - i);
      std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    }
    pool.resize(static_cast<std::size_t>(k));
    std::sort(pool.begin(), pool.end());
    return pool;
  }

  Tensor<S> gather_depth(const FrameRecord& f, const std::vector<std::int64_t>& subset) const {
    std::vector<S> d;
    d.reserve(subset.size());
    for (auto i : subset) d.push_back(static_cast<S>(f.depth[static_cast<std::size_t>(i)]));
    return Tensor<S>({static_cast<std::int64_t>(subset.size()), 1}, std::move(d));
  }

  Tensor<S> gather_rgb(const FrameRecord& f, const std::vector<std::int64_t>& subset) const {
    std::vector<S> c;
    c.reserve(subset.size() * 3);
    for (auto i : subset)
      for (int ch = 0; ch < 3; ++ch)
        c.push_back(static_cast<S>(f.rgb[static_cast<std::size_t>(3 * i + ch)]));
    return Tensor<S>({static_cast<std::int64_t>(subset.size()), 3}, std::move(c));
  }

  static std::vector<int> spread_indices(int lo, int hi, int count) {
    std::vector<int> out;
    if (hi < lo || count < 1) return out;
    if (count == 1) {
      out.push_back((lo + hi) / 2);
      return out;
    }
    int prev = lo - 1;
    for (int i = 0; i < count; ++i) {
      const int t = lo + static_cast<int>(std::lround(static_cast<double>(i) * (hi - lo) /
                                                      (count - 1)));
      if (t != prev) out.push_back(t);
      prev = t;
    }
    return out;
  }

  RunConfig cfg_;
  const Dataset* ds_;
  std::unique_ptr<Model<S>> model_;
  Rng root_;
  Rng rng_data_;
  Rng rng_augment_;
  Rng rng_queries_;
};

}  // namespace mvdepth
