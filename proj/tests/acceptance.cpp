// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion. Exit code is the number of
// failed criteria.
//
// The training-based criteria share fixtures: the overfit run doubles as the
// lambda_s=1 arm of the auxiliary-task comparison, and the augmentation
// ablation's augmented run is reused for the query-vs-projection protocol.
//
// Usage: acceptance [workdir]   (default: <tmp>/mvdepth_acceptance)

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

#include "mvdepth/trainer.hpp"
#include "test_util.hpp"

using namespace mvdepth;
namespace fs = std::filesystem;
using Td = Tensor<double>;
using V3 = Vec3<double>;

namespace {

struct Criterion {
  int id;
  std::string label;
  std::function<bool(std::string&)> run;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Shared fixtures.
// ---------------------------------------------------------------------------

fs::path g_work;

Dataset make_overfit_dataset() {
  DatasetGenConfig cfg;
  cfg.seed = 1;
  cfg.train_scenes = 1;
  cfg.test_scenes = 0;
  cfg.scene.width = 64;
  cfg.scene.height = 48;
  cfg.scene.frames = 60;
  Dataset ds = generate_dataset(cfg);
  ds.stride = 3;
  ds.context_radius = 3;
  return ds;
}

Dataset make_heldout_dataset() {
  DatasetGenConfig cfg;
  cfg.seed = 7;
  cfg.train_scenes = 3;
  cfg.test_scenes = 2;
  cfg.scene.width = 64;
  cfg.scene.height = 48;
  cfg.scene.frames = 60;
  Dataset ds = generate_dataset(cfg);
  ds.stride = 3;
  ds.context_radius = 3;
  return ds;
}

// Default tiny config of the acceptance experiments (48x64, N_l=128).
RunConfig acceptance_config() {
  RunConfig c;
  c.mode = "overfit";
  c.overfit_views = 4;
  c.steps = 2000;
  c.eval_every = 500;
  c.seed = 1;
  return c;  // model/embedding/augment/loss/optim keep their defaults
}

struct TrainedRun {
  std::unique_ptr<Dataset> ds;
  std::unique_ptr<Pipeline<double>> pipe;
  double seconds = 0;
};

TrainedRun train_run(Dataset ds, RunConfig cfg, const std::string& name) {
  TrainedRun run;
  run.ds = std::make_unique<Dataset>(std::move(ds));
  run.pipe = std::make_unique<Pipeline<double>>(cfg, run.ds.get());
  const auto t0 = std::chrono::steady_clock::now();
  run.pipe->train((g_work / name).string());
  run.seconds = seconds_since(t0);
  return run;
}

// Cached heavy fixtures, built on first use.
TrainedRun& overfit_run() {
  static TrainedRun run = [] {
    std::cout << "  [fixture] training overfit run (2000 steps, lambda_s=1)...\n";
    return train_run(make_overfit_dataset(), acceptance_config(), "overfit_ls1");
  }();
  return run;
}

TrainedRun& depth_only_run() {
  static TrainedRun run = [] {
    std::cout << "  [fixture] training depth-only run (2000 steps, lambda_s=0)...\n";
    RunConfig cfg = acceptance_config();
    cfg.loss.lambda_synthesis = 0.0;
    return train_run(make_overfit_dataset(), cfg, "overfit_ls0");
  }();
  return run;
}

RunConfig ablation_config() {
  RunConfig c;
  c.mode = "stereo";
  c.steps = 700;
  c.eval_every = 0;
  c.seed = 1;
  c.eval_samples = 3;
  return c;
}

TrainedRun& aug_on_run() {
  static TrainedRun run = [] {
    std::cout << "  [fixture] training with virtual cameras (700 steps)...\n";
    return train_run(make_heldout_dataset(), ablation_config(), "aug_on");
  }();
  return run;
}

TrainedRun& aug_off_run() {
  static TrainedRun run = [] {
    std::cout << "  [fixture] training without virtual cameras (700 steps)...\n";
    RunConfig cfg = ablation_config();
    cfg.augment.virtual_cameras = 0;
    return train_run(make_heldout_dataset(), cfg, "aug_off");
  }();
  return run;
}

// Mean query-mode RMSE over the interpolation protocol on held-out scenes.
double heldout_novel_view_rmse(Pipeline<double>& pipe, std::vector<CurvePoint>* out = nullptr) {
  const auto points = pipe.eval_novel_view(false, 11);
  double rmse = 0;
  int n = 0;
  for (const auto& p : points) {
    if (p.mode != "query") continue;
    rmse += p.rmse;
    ++n;
  }
  if (out) *out = points;
  return rmse / n;
}

// ---------------------------------------------------------------------------
// Criterion 1: gradient integrity.
// ---------------------------------------------------------------------------

bool criterion_gradients(std::string& detail) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2024);
  bool ok = true;

  using Op = std::function<Td(const Td&)>;
  Td mm_w({5, 3}, mvtest::random_values(15, rng));
  Td cat_other({2, 3}, mvtest::random_values(6, rng));
  Td gamma({5}, mvtest::random_values(5, rng, 0.5, 1.5));
  Td beta({5}, mvtest::random_values(5, rng));
  struct OpCase {
    const char* name;
    Shape shape;
    Op op;
    double lo, hi;
  };
  const std::vector<OpCase> cases = {
      {"add", {4, 5}, [&](const Td& x) { return add(x, x); }, -2, 2},
      {"sub", {4, 5}, [&](const Td& x) { return sub(scale(x, 3.0), x); }, -2, 2},
      {"mul", {4, 5}, [&](const Td& x) { return mul(x, x); }, -2, 2},
      {"scale", {4, 5}, [](const Td& x) { return scale(x, -1.7); }, -2, 2},
      {"sigmoid", {4, 5}, [](const Td& x) { return sigmoid(x); }, -4, 4},
      {"gelu", {4, 5}, [](const Td& x) { return gelu(x); }, -4, 4},
      {"log", {4, 5}, [](const Td& x) { return log(x); }, 0.3, 3},
      {"exp", {4, 5}, [](const Td& x) { return exp(x); }, -2, 2},
      {"square", {4, 5}, [](const Td& x) { return square(x); }, -2, 2},
      {"abs", {4, 5}, [](const Td& x) { return abs(x); }, 0.2, 2},
      {"reciprocal", {4, 5}, [](const Td& x) { return reciprocal(x); }, 0.4, 3},
      {"mean", {4, 5}, [](const Td& x) { return mean(x); }, -2, 2},
      {"sum", {4, 5}, [](const Td& x) { return sum(x); }, -2, 2},
      {"matmul", {4, 5}, [&](const Td& x) { return matmul(x, mm_w); }, -2, 2},
      {"softmax", {4, 5}, [](const Td& x) { return softmax_lastdim(x); }, -3, 3},
      {"layer_norm", {4, 5}, [&](const Td& x) { return layer_norm(x, gamma, beta); }, -2, 2},
      {"concat", {4, 3}, [&](const Td& x) { return concat<double>({x, cat_other}, 0); }, -2, 2},
      {"slice", {4, 5}, [](const Td& x) { return slice(x, 1, 1, 3); }, -2, 2},
      {"take_rows", {4, 5}, [](const Td& x) { return take_rows(x, {3, 0, 3}); }, -2, 2},
      {"transpose", {4, 5}, [](const Td& x) { return transpose(x); }, -2, 2},
      {"reshape", {4, 5}, [](const Td& x) { return reshape(x, {2, 10}); }, -2, 2},
      {"im2col", {16, 3}, [](const Td& x) { return im2col(x, 4, 4, 3, 2, 1); }, -2, 2},
      {"upsample", {4, 2}, [](const Td& x) { return upsample_bilinear(x, 2, 2, 4, 4); }, -2, 2},
  };
  int failures = 0;
  for (const auto& c : cases)
    for (int inst = 0; inst < 20; ++inst) {
      auto vals = mvtest::random_values(static_cast<std::size_t>(shape_numel(c.shape)), rng,
                                        c.lo, c.hi);
      if (!mvtest::check_op_gradient(c.op, c.shape, vals, rng, 1e-4, 1e-5)) {
        ++failures;
        detail += std::string(" op=") + c.name;
        break;
      }
    }
  ok = failures == 0;

  // End-to-end: tiny model on a 4x4 image, rel err < 1e-3.
  ModelConfig mc;
  mc.latent_slots = 8;
  mc.latent_dim = 16;
  mc.blocks = 1;
  mc.heads = 2;
  mc.head_dim = 8;
  mc.mlp_ratio = 1;
  mc.image.stage_channels = {2, 2, 2};
  mc.embedding.k_origin = 1;
  mc.embedding.k_ray = 1;
  Model<double> model(mc, rng);
  ViewInput<double> view;
  view.rgb = Td({16, 3}, mvtest::random_values(48, rng, 0, 1));
  view.camera.width = view.camera.height = 4;
  view.camera.intrinsics = {4, 4, 1.5, 1.5};
  const auto queries = assemble_decoder_queries(view.camera, 4, 4, mc.embedding);
  Td target({16, 1}, mvtest::random_values(16, rng, 0.5, 5.0));
  auto forward = [&] {
    auto lat = model.encode(
        assemble_encoder_tokens<double>({view}, model.image_enc, mc.embedding));
    return add(mean(square(sub(model.decode_depth(lat, queries), target))),
               mean(model.decode_rgb(lat, queries)));
  };
  Tape<double> tape;
  model.store.attach(tape);
  tape.backward(forward());
  std::vector<std::vector<double>> analytic;
  for (auto& e : model.store) {
    auto g = tape.grad(e.tracked);
    analytic.emplace_back(g.begin(), g.end());
  }
  model.store.detach();
  std::size_t idx = 0;
  int e2e_failures = 0;
  for (auto& e : model.store) {
    auto& vals = e.value.values();
    const auto fd = mvtest::fd_gradient(
        [&](const std::vector<double>& v) {
          auto saved = vals;
          vals = v;
          const double out = forward().value();
          vals = saved;
          return out;
        },
        vals);
    if (!mvtest::grad_close(analytic[idx++], fd, 1e-3)) {
      ++e2e_failures;
      detail += " e2e=" + e.name;
    }
  }
  ok = ok && e2e_failures == 0;

  char buf[96];
  std::snprintf(buf, sizeof buf, " (%d ops x 20 instances, %zu e2e params, %.1fs)",
                static_cast<int>(cases.size()), model.store.size(), seconds_since(t0));
  detail += buf;
  return ok && seconds_since(t0) < 60.0;
}

// ---------------------------------------------------------------------------
// Criterion 2: geometry invariants, 1000-case property suites.
// ---------------------------------------------------------------------------

bool criterion_geometry(std::string& detail) {
  Rng rng(55);
  auto rand_pose = [&](Rng& r) {
    Pose<double> p;
    p.rotation = euler_to_rotation(r.uniform(-1.2, 1.2), r.uniform(-1.2, 1.2),
                                   r.uniform(-1.2, 1.2));
    p.translation = V3(r.uniform(-2, 2), r.uniform(-2, 2), r.uniform(-2, 2));
    return p;
  };

  double max_px = 0, max_depth = 0, max_rel = 0, max_ortho = 0, max_ray = 0;
  for (int i = 0; i < 1000; ++i) {
    const Intrinsics<double> k{rng.uniform(50, 500), rng.uniform(50, 500),
                               rng.uniform(20, 60), rng.uniform(20, 60)};
    const Pose<double> pose = rand_pose(rng);
    const double u = rng.uniform(0, 128), v = rng.uniform(0, 96);
    const double d = rng.uniform(0.5, 10);

    // project(unproject) identity.
    const auto back = project(k, pose, unproject(k, pose, u, v, d));
    if (!back) return false;
    max_px = std::max({max_px, std::abs(back->u - u), std::abs(back->v - v)});
    max_depth = std::max(max_depth, std::abs(back->z - d));

    // Canonical jitter preserves relative_pose; randomization preserves
    // T_i T_k^-1; every produced rotation stays orthonormal.
    std::vector<Pose<double>> poses{rand_pose(rng), rand_pose(rng), rand_pose(rng)};
    const auto jit = canonical_jitter(poses, 1.0, 0.1, rng);
    const auto rnd = canonical_randomize(poses, rng);
    for (std::size_t a = 0; a < poses.size(); ++a) {
      max_ortho = std::max(max_ortho,
                           (jit[a].rotation.transpose() * jit[a].rotation -
                            Mat3<double>::Identity())
                               .cwiseAbs()
                               .maxCoeff());
      for (std::size_t b = 0; b < poses.size(); ++b) {
        max_rel = std::max(max_rel, (relative_pose(jit[a], jit[b]).matrix() -
                                     relative_pose(poses[a], poses[b]).matrix())
                                        .cwiseAbs()
                                        .maxCoeff());
        max_rel = std::max(max_rel, ((rnd[a] * rnd[b].inverse()).matrix() -
                                     (poses[a] * poses[b].inverse()).matrix())
                                        .cwiseAbs()
                                        .maxCoeff());
      }
    }

    // Eq. 1 reduces to the classical ray at t=0, R=I.
    const auto ray = compute_ray(k, Pose<double>{}, u, v);
    const V3 classical = k.matrix().inverse() * V3(u, v, 1);
    max_ray = std::max(max_ray, (ray.direction - classical).norm() + ray.origin.norm());
  }
  char buf[160];
  std::snprintf(buf, sizeof buf,
                " (px %.2e, depth %.2e, rel-pose %.2e, ortho %.2e, ray %.2e)", max_px,
                max_depth, max_rel, max_ortho, max_ray);
  detail += buf;
  return max_px < 1e-8 && max_rel < 1e-9 && max_ortho < 1e-9 && max_ray < 1e-10;
}

// ---------------------------------------------------------------------------
// Criterion 3: embedding contract.
// ---------------------------------------------------------------------------

bool criterion_embeddings(std::string& detail) {
  Camera<double> cam;
  cam.width = cam.height = 2;
  for (int ko = 0; ko <= 16; ++ko)
    for (int kr = 0; kr <= 16; ++kr) {
      EmbeddingConfig cfg;
      cfg.k_origin = ko;
      cfg.k_ray = kr;
      if (camera_embedding_width(cfg) != 6 * (ko + kr + 2)) return false;
      const auto grid = camera_embedding_grid(cam, 2, 2, cfg);
      if (grid.dim(1) != 6 * (ko + kr + 2)) {
        detail += " width mismatch at ko=" + std::to_string(ko);
        return false;
      }
    }

  // Sparse decode equals gathered dense decode.
  Rng rng(77);
  ModelConfig mc;
  mc.latent_slots = 8;
  mc.latent_dim = 16;
  mc.blocks = 1;
  mc.heads = 2;
  mc.head_dim = 8;
  mc.mlp_ratio = 1;
  mc.image.stage_channels = {2, 2, 2};
  mc.embedding.k_origin = 2;
  mc.embedding.k_ray = 2;
  Model<double> model(mc, rng);
  Td tokens({24, mc.token_width()},
            mvtest::random_values(static_cast<std::size_t>(24 * mc.token_width()), rng));
  const auto latent = model.encode(tokens);
  Camera<double> qcam;
  qcam.width = qcam.height = 8;
  qcam.intrinsics = {8, 8, 3.5, 3.5};
  const auto dense =
      model.decode_depth(latent, assemble_decoder_queries(qcam, 8, 8, mc.embedding));
  std::vector<std::int64_t> subset{0, 9, 23, 41, 63};
  const auto sparse = model.decode_depth(
      latent, assemble_decoder_queries(qcam, 8, 8, mc.embedding, &subset));
  double max_diff = 0;
  for (std::size_t i = 0; i < subset.size(); ++i)
    max_diff = std::max(max_diff,
                        std::abs(sparse.values()[i] -
                                 dense.values()[static_cast<std::size_t>(subset[i])]));
  char buf[64];
  std::snprintf(buf, sizeof buf, " (sweep 0..16 ok, sparse-vs-dense %.2e)", max_diff);
  detail += buf;
  return max_diff < 1e-12;
}

// ---------------------------------------------------------------------------
// Criterion 4: virtual ground-truth oracle.
// ---------------------------------------------------------------------------

FrameRecord plane_frame(int w, int h, double z) {
  FrameRecord f;
  f.camera.width = w;
  f.camera.height = h;
  f.camera.intrinsics = {double(w), double(w), w / 2.0, h / 2.0};
  f.rgb.assign(static_cast<std::size_t>(w) * h * 3, 0.5);
  f.depth.assign(static_cast<std::size_t>(w) * h, z);
  return f;
}

bool criterion_virtual_gt(std::string& detail) {
  // Identity viewpoint: the virtual depth reproduces the source depth.
  const auto src = plane_frame(16, 12, 2.5);
  const auto identity = render_virtual_gt({src}, src.camera);
  double max_id = 0;
  if (identity.pixels.size() != src.depth.size()) return false;
  for (std::size_t i = 0; i < identity.pixels.size(); ++i)
    max_id = std::max(max_id, std::abs(identity.depth[i] -
                                       src.depth[static_cast<std::size_t>(identity.pixels[i])]));

  // Two constructed planes at z=1 and z=2: z-buffer keeps the analytic
  // nearest surface, depth 1 everywhere both project.
  const auto near_f = plane_frame(16, 12, 1.0);
  const auto far_f = plane_frame(16, 12, 2.0);
  const auto vf = render_virtual_gt({far_f, near_f}, near_f.camera);
  double max_two = 0;
  for (std::size_t i = 0; i < vf.pixels.size(); ++i)
    max_two = std::max(max_two, std::abs(vf.depth[i] - 1.0));

  char buf[64];
  std::snprintf(buf, sizeof buf, " (identity %.2e, two-plane %.2e)", max_id, max_two);
  detail += buf;
  return max_id < 1e-8 && max_two < 1e-6;
}

// ---------------------------------------------------------------------------
// Criteria 5-8: trained experiments.
// ---------------------------------------------------------------------------

bool criterion_overfit(std::string& detail) {
  auto& run = overfit_run();
  const DepthMetrics m = run.pipe->eval_depth("overfit", "train");
  char buf[128];
  std::snprintf(buf, sizeof buf, " (AbsRel %.4f, d1 %.4f, train %.0fs)", m.abs_rel,
                m.delta1, run.seconds);
  detail += buf;
  return m.abs_rel < 0.05 && m.delta1 > 0.95 && run.seconds < 1800.0;
}

bool criterion_auxiliary_task(std::string& detail) {
  const DepthMetrics with_rgb = overfit_run().pipe->eval_depth("overfit", "train");
  const DepthMetrics depth_only = depth_only_run().pipe->eval_depth("overfit", "train");
  char buf[128];
  std::snprintf(buf, sizeof buf, " (AbsRel lambda_s=1: %.4f, lambda_s=0: %.4f)",
                with_rgb.abs_rel, depth_only.abs_rel);
  detail += buf;
  return with_rgb.abs_rel <= 1.05 * depth_only.abs_rel;
}

bool criterion_augmentation(std::string& detail) {
  const double rmse_on = heldout_novel_view_rmse(*aug_on_run().pipe);
  const double rmse_off = heldout_novel_view_rmse(*aug_off_run().pipe);
  std::ofstream out(g_work / "augmentation_ablation.csv");
  out << "variant,heldout_rmse\nvirtual_cameras,"
      << rmse_on << "\nno_virtual_cameras," << rmse_off << "\n";
  char buf[128];
  std::snprintf(buf, sizeof buf, " (held-out RMSE with %.4f vs without %.4f)", rmse_on,
                rmse_off);
  detail += buf;
  return rmse_on <= 1.05 * rmse_off;
}

bool criterion_query_vs_projection(std::string& detail) {
  std::vector<CurvePoint> points;
  heldout_novel_view_rmse(*aug_on_run().pipe, &points);
  const std::string path = (g_work / "curves_interpolate.csv").string();
  write_curves_csv(path, "interpolate", points);

  int query_n = 0, proj_n = 0;
  double min_query_cov = 1.0, max_proj_cov = 0.0;
  for (const auto& p : points) {
    if (p.mode == "query") {
      ++query_n;
      min_query_cov = std::min(min_query_cov, p.coverage);
    } else {
      ++proj_n;
      max_proj_cov = std::max(max_proj_cov, p.coverage);
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof buf,
                " (%d+%d offsets, query coverage %.3f, projection max coverage %.3f)",
                query_n, proj_n, min_query_cov, max_proj_cov);
  detail += buf;
  return query_n == 9 && proj_n == 9 && min_query_cov == 1.0 && max_proj_cov < 1.0 &&
         fs::exists(path);
}

// ---------------------------------------------------------------------------
// Criterion 9: determinism and persistence.
// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool criterion_determinism(std::string& detail) {
  DatasetGenConfig gen;
  gen.seed = 9;
  gen.train_scenes = 1;
  gen.test_scenes = 1;
  gen.scene.width = 32;
  gen.scene.height = 24;
  gen.scene.frames = 24;
  Dataset ds = generate_dataset(gen);
  ds.context_radius = 1;

  RunConfig cfg;
  cfg.mode = "stereo";
  cfg.steps = 40;
  cfg.eval_every = 20;
  cfg.eval_samples = 2;
  cfg.model.latent_slots = 16;
  cfg.model.latent_dim = 32;
  cfg.model.blocks = 1;
  cfg.model.heads = 2;
  cfg.model.head_dim = 16;
  cfg.model.mlp_ratio = 1;
  cfg.model.image.stage_channels = {4, 4, 4};
  cfg.model.embedding.k_origin = 2;
  cfg.model.embedding.k_ray = 2;
  cfg.query_pixels = 64;

  {
    Pipeline<double> a(cfg, &ds);
    a.train((g_work / "det_a").string());
  }
  {
    Pipeline<double> b(cfg, &ds);
    b.train((g_work / "det_b").string());
  }
  const bool csv_identical =
      slurp(g_work / "det_a" / "metrics.csv") == slurp(g_work / "det_b" / "metrics.csv") &&
      slurp(g_work / "det_a" / "train_log.csv") == slurp(g_work / "det_b" / "train_log.csv");

  // Checkpoint roundtrip reproduces eval bit-identically.
  Pipeline<double> trained(cfg, &ds);
  for (int i = 0; i < 10; ++i) (void)trained.train_step();
  save_checkpoint((g_work / "det_ck.bin").string(), cfg, trained.model().store);
  const DepthMetrics ma = trained.eval_depth("stereo", "test");
  const auto ck = load_checkpoint((g_work / "det_ck.bin").string());
  Pipeline<double> restored(ck.config, &ds);
  restored.restore(ck);
  const DepthMetrics mb = restored.eval_depth("stereo", "test");
  const bool ckpt_identical = ma.abs_rel == mb.abs_rel && ma.sq_rel == mb.sq_rel &&
                              ma.rmse == mb.rmse && ma.delta1 == mb.delta1 &&
                              ma.delta2 == mb.delta2 && ma.delta3 == mb.delta3;

  // Dataset save/load is lossless.
  save_dataset(ds, (g_work / "det_ds").string());
  const Dataset back = load_dataset((g_work / "det_ds").string());
  bool ds_lossless = back.scenes.size() == ds.scenes.size();
  for (std::size_t s = 0; ds_lossless && s < ds.scenes.size(); ++s) {
    const auto& x = ds.scenes[s];
    const auto& y = back.scenes[s];
    ds_lossless = x.name == y.name && x.split == y.split && x.frames.size() == y.frames.size();
    for (std::size_t i = 0; ds_lossless && i < x.frames.size(); ++i)
      ds_lossless = x.frames[i].rgb == y.frames[i].rgb &&
                    x.frames[i].depth == y.frames[i].depth &&
                    x.frames[i].camera.pose.matrix() == y.frames[i].camera.pose.matrix();
  }

  detail += std::string(" (csv ") + (csv_identical ? "ok" : "DIFFERS") + ", checkpoint " +
            (ckpt_identical ? "ok" : "DIFFERS") + ", dataset " +
            (ds_lossless ? "ok" : "LOSSY") + ")";
  return csv_identical && ckpt_identical && ds_lossless;
}

}  // namespace

int main(int argc, char** argv) {
  g_work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "mvdepth_acceptance";
  fs::create_directories(g_work);
  std::cout << "acceptance work dir: " << g_work << "\n";

  const std::vector<Criterion> criteria = {
      {1, "gradient integrity (ops + end-to-end finite differences)", criterion_gradients},
      {2, "geometry invariants (1000-case property suites)", criterion_geometry},
      {3, "embedding contract (width formula, sparse==dense decode)", criterion_embeddings},
      {4, "virtual GT oracle (z-buffer vs analytic nearest surface)", criterion_virtual_gt},
      {5, "overfit experiment (AbsRel < 0.05, d1 > 0.95)", criterion_overfit},
      {6, "auxiliary-task direction (lambda_s=1 vs lambda_s=0)", criterion_auxiliary_task},
      {7, "augmentation ablation (virtual cameras on vs off)", criterion_augmentation},
      {8, "query vs projection (coverage + RMSE curves to CSV)",
       criterion_query_vs_projection},
      {9, "determinism & persistence (csv, checkpoint, dataset)", criterion_determinism},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    std::string detail;
    bool ok = false;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail += std::string(" exception: ") + e.what();
    }
    if (!ok) ++failures;
    std::printf("[%s] criterion %d: %s%s\n", ok ? "PASS" : "FAIL", c.id, c.label.c_str(),
                detail.c_str());
    std::fflush(stdout);
  }
  if (failures) std::printf("%d criterion(s) failed\n", failures);
  else std::printf("all %zu criteria passed\n", criteria.size());
  return failures;
}
