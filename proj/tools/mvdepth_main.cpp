// mvdepth command line: dataset generation, training, evaluation and
// arbitrary-viewpoint querying.
//
// Exit codes: 0 ok, 1 usage, 2 data/config error, 3 numeric failure.
#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "mvdepth/checkpoint.hpp"
#include "mvdepth/config.hpp"
#include "mvdepth/scenedata.hpp"
#include "mvdepth/trainer.hpp"

namespace fs = std::filesystem;
using namespace mvdepth;

namespace {

int cmd_generate(const std::string& config_path, const std::string& out_dir) {
  const GenerateConfig cfg = GenerateConfig::from_file(config_path);
  Dataset ds = generate_dataset(cfg.gen);
  ds.stride = cfg.stride;
  ds.context_radius = cfg.context_radius;
  save_dataset(ds, out_dir);

  std::int64_t frames = 0;
  for (const auto& s : ds.scenes) frames += static_cast<std::int64_t>(s.frames.size());
  std::cout << "wrote " << ds.scenes.size() << " scenes (" << frames << " frames, "
            << cfg.gen.train_scenes << " train / " << cfg.gen.test_scenes << " test) to "
            << out_dir << "\n";
  for (const auto& s : ds.scenes)
    std::cout << "  " << s.name << "  split=" << s.split << "  frames=" << s.frames.size()
              << "\n";
  return 0;
}

template <typename S>
int run_train(const RunConfig& cfg, const std::string& out_dir) {
  const Dataset ds = load_dataset(cfg.dataset);
  Pipeline<S> pipe(cfg, &ds);
  pipe.train(out_dir, &std::cout);
  std::cout << "checkpoint: " << (fs::path(out_dir) / "checkpoint.bin").string() << "\n";
  std::cout << "metrics:    " << (fs::path(out_dir) / "metrics.csv").string() << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              const std::string& out_dir) {
  RunConfig cfg = RunConfig::from_file(config_path);
  if (seed) cfg.seed = *seed;
  if (cfg.dataset.empty()) throw ConfigError("config has no data.dataset path");
  if (cfg.precision == "f32") return run_train<float>(cfg, out_dir);
  return run_train<double>(cfg, out_dir);
}

template <typename S>
int run_eval(const RunConfig& cfg, const LoadedCheckpoint& ck, const std::string& dataset_dir,
             const std::string& protocol, const std::string& out_dir) {
  const Dataset ds = load_dataset(dataset_dir);
  Pipeline<S> pipe(cfg, &ds);
  pipe.restore(ck);
  fs::create_directories(out_dir);

  if (protocol == "interpolate" || protocol == "extrapolate") {
    const auto points = pipe.eval_novel_view(protocol == "extrapolate");
    const std::string path =
        (fs::path(out_dir) / ("curves_" + protocol + ".csv")).string();
    write_curves_csv(path, protocol, points);
    std::cout << "protocol,mode,offset,rmse,coverage\n";
    for (const auto& p : points)
      std::cout << protocol << "," << p.mode << "," << p.offset << "," << p.rmse << ","
                << p.coverage << "\n";
    std::cout << "wrote " << path << "\n";
    return 0;
  }

  const std::string split = ds.split_indices("test").empty() ? "train" : "test";
  const DepthMetrics m = pipe.eval_depth(protocol, split);
  const std::string path = (fs::path(out_dir) / ("eval_" + protocol + ".csv")).string();
  MetricsCsv csv(path);
  csv.row(split, 0, m);
  std::cout << "split,step,AbsRel,SqRel,RMSE,d1,d2,d3\n";
  char buf[192];
  std::snprintf(buf, sizeof buf, "%s,0,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n", split.c_str(),
                m.abs_rel, m.sq_rel, m.rmse, m.delta1, m.delta2, m.delta3);
  std::cout << buf << "wrote " << path << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& dataset_dir,
             const std::string& protocol, const std::string& out_dir,
             const std::string& config_override) {
  const LoadedCheckpoint ck = load_checkpoint(checkpoint);
  RunConfig cfg = ck.config;
  if (!config_override.empty()) {
    const RunConfig user = RunConfig::from_file(config_override);
    if (user.model_digest() != ck.digest)
      throw DataError("config digest mismatch: " + config_override +
                      " describes a different architecture than " + checkpoint);
    cfg = user;
  }
  if (cfg.precision == "f32") return run_eval<float>(cfg, ck, dataset_dir, protocol, out_dir);
  return run_eval<double>(cfg, ck, dataset_dir, protocol, out_dir);
}

template <typename S>
int run_query(const RunConfig& cfg, const LoadedCheckpoint& ck, const Dataset& ds,
              const std::vector<FrameRecord>& frames, const Camera<double>& target,
              const std::string& out_prefix) {
  Pipeline<S> pipe(cfg, &ds);
  pipe.restore(ck);
  const auto latent = pipe.encode_frames(frames);
  const auto est = pipe.query_view(latent, target);

  FrameRecord out;
  out.camera = target;
  out.depth = est.depth;
  out.rgb = est.rgb;
  io::write_depth(out_prefix + ".depth", out);
  io::write_ppm(out_prefix + ".ppm", out);
  std::cout << "wrote " << out_prefix << ".depth and " << out_prefix << ".ppm\n";
  return 0;
}

int cmd_query(const std::string& checkpoint, const std::string& dataset_dir,
              const std::string& scene_name, const std::string& frames_arg,
              const std::string& pose_path, const std::string& out_prefix) {
  const LoadedCheckpoint ck = load_checkpoint(checkpoint);
  const Dataset ds = load_dataset(dataset_dir);

  const Scene* scene = nullptr;
  for (const auto& s : ds.scenes)
    if (s.name == scene_name) scene = &s;
  if (!scene) throw DataError("dataset has no scene named " + scene_name);

  std::vector<FrameRecord> frames;
  std::stringstream ss(frames_arg);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const int idx = std::stoi(tok);
    if (idx < 0 || idx >= static_cast<int>(scene->frames.size()))
      throw DataError("frame index " + tok + " out of range for scene " + scene_name);
    frames.push_back(scene->frames[static_cast<std::size_t>(idx)]);
  }
  if (frames.empty()) throw DataError("no frames selected to encode");

  Camera<double> target = frames[0].camera;  // intrinsics and resolution
  target.pose = io::read_pose(pose_path);
  if (!target.pose.orthonormal(1e-6))
    throw DataError("pose file " + pose_path + " is not a rigid transform");

  if (ck.config.precision == "f32")
    return run_query<float>(ck.config, ck, ds, frames, target, out_prefix);
  return run_query<double>(ck.config, ck, ds, frames, target, out_prefix);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"query-based multi-view depth estimation on synthetic posed RGB-D scenes"};
  app.require_subcommand(1);

  std::string config_path, out_path, checkpoint, dataset_dir, protocol, scene, frames_arg,
      pose_path;
  std::optional<std::uint64_t> seed;

  auto* generate = app.add_subcommand("generate", "render a synthetic dataset to disk");
  generate->add_option("--config", config_path, "dataset spec file")->required();
  generate->add_option("--out", out_path, "output dataset directory")->required();

  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", config_path, "run configuration file")->required();
  train->add_option("--seed", seed, "override train.seed");
  train->add_option("--out", out_path, "output run directory")->default_val("run");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--dataset", dataset_dir, "dataset directory")->required();
  eval->add_option("--protocol", protocol,
                   "stereo | video | zero-shot | interpolate | extrapolate")
      ->required();
  eval->add_option("--out", out_path, "output directory")->default_val("eval");
  eval->add_option("--config", config_path, "optional config; must match the checkpoint");

  auto* query = app.add_subcommand("query", "decode depth+rgb at an arbitrary pose");
  query->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  query->add_option("--dataset", dataset_dir, "dataset directory")->required();
  query->add_option("--scene", scene, "scene name to encode from")->required();
  query->add_option("--frames", frames_arg, "comma-separated frame indices to encode")
      ->required();
  query->add_option("--pose", pose_path, "16-float pose file (world-to-camera)")->required();
  query->add_option("--out", out_path, "output file prefix")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*generate) return cmd_generate(config_path, out_path);
    if (*train) return cmd_train(config_path, seed, out_path);
    if (*eval) return cmd_eval(checkpoint, dataset_dir, protocol, out_path, config_path);
    if (*query)
      return cmd_query(checkpoint, dataset_dir, scene, frames_arg, pose_path, out_path);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
