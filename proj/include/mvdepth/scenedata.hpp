// Synthetic posed RGB-D scenes and their on-disk form.
//
// Scenes are closed rooms populated with textured axis-aligned boxes and
// planes, rendered by raycasting each pixel against every surface quad; the
// nearest hit provides z-depth and albedo (no lighting, so colors are
// view-consistent). Cameras move along an arc or line trajectory looking at
// the scene content.
//
// Disk format, bit-exact:
//   <scene>/intrinsics.txt   9 ASCII floats, K row-major
//   <scene>/NNNNNN.ppm       binary P6, maxval 255
//   <scene>/NNNNNN.depth     magic "DFD1", u32 H, u32 W, f32 z-depths (LE)
//   <scene>/NNNNNN.pose      16 ASCII floats row-major, world-to-camera
//   manifest.json            scene list with splits and context parameters
#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mvdepth/frame.hpp"
#include "mvdepth/geometry.hpp"
#include "mvdepth/random.hpp"

namespace mvdepth {

// ---------------------------------------------------------------------------
// Scene geometry.
// ---------------------------------------------------------------------------

struct TextureSpec {
  enum class Kind { Solid, Checker, Gradient };
  Kind kind = Kind::Solid;
  Vec3<double> color_a{0.5, 0.5, 0.5};
  Vec3<double> color_b{0.5, 0.5, 0.5};
  double cell = 0.5;  // checker cell size in meters
};

// Axis-aligned rectangle: plane normal along `axis` at `offset`, bounded in
// the two remaining axes. Double-sided.
struct Quad {
  int axis = 2;
  double offset = 0;
  double u0 = 0, u1 = 1, v0 = 0, v1 = 1;
  TextureSpec tex;

  int u_axis() const { return axis == 0 ? 1 : 0; }
  int v_axis() const { return axis == 2 ? 1 : 2; }
};

using SceneGeometry = std::vector<Quad>;

inline Vec3<double> texture_color(const TextureSpec& t, double u, double v) {
  switch (t.kind) {
    case TextureSpec::Kind::Solid:
      return t.color_a;
    case TextureSpec::Kind::Checker: {
      const auto iu = static_cast<std::int64_t>(std::floor(u / t.cell));
      const auto iv = static_cast<std::int64_t>(std::floor(v / t.cell));
      return ((iu + iv) & 1) ? t.color_b : t.color_a;
    }
    case TextureSpec::Kind::Gradient: {
      const double s = u - std::floor(u);
      return t.color_a + s * (t.color_b - t.color_a);
    }
  }
  return t.color_a;
}

struct RayHit {
  double depth = 0;  // z-depth along the camera axis
  Vec3<double> color{0, 0, 0};
};

// Intersect one quad with the ray c + t*dir; dir is scaled so t equals
// z-depth in the camera frame.
inline bool hit_quad(const Quad& q, const Vec3<double>& c, const Vec3<double>& dir,
                     double& t, Vec3<double>& color) {
  const double dz = dir[q.axis];
  if (std::abs(dz) < 1e-12) return false;
  const double tt = (q.offset - c[q.axis]) / dz;
  if (tt <= 1e-9) return false;
  const Vec3<double> p = c + tt * dir;
  const double pu = p[q.u_axis()], pv = p[q.v_axis()];
  if (pu < q.u0 || pu > q.u1 || pv < q.v0 || pv > q.v1) return false;
  t = tt;
  color = texture_color(q.tex, pu - q.u0, pv - q.v0);
  return true;
}

// Quantize to the 8-bit grid used by the PPM files, so in-memory frames
// round-trip bit-exactly through disk.
inline double quantize8(double c) {
  const double k = std::lround(std::clamp(c, 0.0, 1.0) * 255.0);
  return k / 255.0;
}

// Nearest hit along the pixel ray; depth 0 when nothing is hit.
inline RayHit raycast(const SceneGeometry& scene, const Camera<double>& cam, double u,
                      double v) {
  // K^-1 [u v 1] has unit camera-z, so the ray parameter is z-depth.
  const Vec3<double> center = cam.pose.center();
  const Vec3<double> dir = cam.pose.rotation.transpose() *
                           (cam.intrinsics.matrix().inverse() * Vec3<double>(u, v, 1.0));
  RayHit best;
  for (const Quad& q : scene) {
    double t;
    Vec3<double> c;
    if (hit_quad(q, center, dir, t, c) && (best.depth == 0 || t < best.depth)) {
      best.depth = t;
      best.color = c;
    }
  }
  return best;
}

inline FrameRecord render_frame(const SceneGeometry& scene, const Camera<double>& cam,
                                int index = 0) {
  FrameRecord f;
  f.index = index;
  f.camera = cam;
  const int w = cam.width, h = cam.height;
  f.rgb.assign(static_cast<std::size_t>(w) * h * 3, 0.0);
  f.depth.assign(static_cast<std::size_t>(w) * h, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const RayHit hit = raycast(scene, cam, x, y);
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      f.depth[i] = static_cast<double>(static_cast<float>(hit.depth));  // f32 grid, as stored
      f.rgb[3 * i + 0] = quantize8(hit.color.x());
      f.rgb[3 * i + 1] = quantize8(hit.color.y());
      f.rgb[3 * i + 2] = quantize8(hit.color.z());
    }
  return f;
}

// ---------------------------------------------------------------------------
// Procedural scene + trajectory generation.
// ---------------------------------------------------------------------------

struct SceneSpec {
  std::uint64_t seed = 1;
  int width = 64, height = 48;
  int frames = 60;
  Vec3<double> room{6.0, 4.0, 8.0};
  int boxes = 3;
  int planes = 2;
  double fov_deg = 60.0;
  std::string trajectory = "arc";  // arc | line
  double traj_jitter = 0.05;       // m, per-frame positional jitter
  double arc_span_deg = 70.0;
  double min_frustum_fraction = 0.9;

  void validate() const {
    if (width < 8 || height < 8 || width % 4 || height % 4)
      throw DataError("scene spec: image extents must be >= 8 and divisible by 4");
    if (frames < 2) throw DataError("scene spec: need at least 2 frames");
    if (boxes < 0 || planes < 0) throw DataError("scene spec: negative surface count");
    if (trajectory != "arc" && trajectory != "line")
      throw DataError("scene spec: unknown trajectory " + trajectory);
  }
};

inline TextureSpec random_texture(Rng& rng) {
  TextureSpec t;
  const double pick = rng.uniform();
  auto color = [&] {
    return Vec3<double>(quantize8(rng.uniform(0.1, 0.95)), quantize8(rng.uniform(0.1, 0.95)),
                        quantize8(rng.uniform(0.1, 0.95)));
  };
  t.color_a = color();
  t.color_b = color();
  t.cell = rng.uniform(0.3, 0.9);
  t.kind = pick < 0.45   ? TextureSpec::Kind::Checker
           : pick < 0.75 ? TextureSpec::Kind::Gradient
                         : TextureSpec::Kind::Solid;
  return t;
}

inline void add_box(SceneGeometry& g, const Vec3<double>& lo, const Vec3<double>& hi,
                    const TextureSpec& tex) {
  for (int axis = 0; axis < 3; ++axis) {
    const int ua = axis == 0 ? 1 : 0;
    const int va = axis == 2 ? 1 : 2;
    for (double off : {lo[axis], hi[axis]}) {
      Quad q;
      q.axis = axis;
      q.offset = off;
      q.u0 = lo[ua];
      q.u1 = hi[ua];
      q.v0 = lo[va];
      q.v1 = hi[va];
      q.tex = tex;
      g.push_back(q);
    }
  }
}

inline SceneGeometry generate_scene_geometry(const SceneSpec& spec, Rng& rng) {
  SceneGeometry g;
  add_box(g, Vec3<double>::Zero(), spec.room, random_texture(rng));  // room walls
  // Content lives in the far half of the room; cameras move in the near half.
  for (int b = 0; b < spec.boxes; ++b) {
    const Vec3<double> size(rng.uniform(0.4, 1.4), rng.uniform(0.4, 1.4),
                            rng.uniform(0.4, 1.4));
    const Vec3<double> lo(rng.uniform(0.3, spec.room.x() - 0.3 - size.x()),
                          rng.uniform(0.3, spec.room.y() - 0.3 - size.y()),
                          rng.uniform(spec.room.z() * 0.55, spec.room.z() - 0.3 - size.z()));
    add_box(g, lo, lo + size, random_texture(rng));
  }
  for (int p = 0; p < spec.planes; ++p) {
    Quad q;
    q.axis = static_cast<int>(rng.uniform_int(3));
    const int ua = q.axis == 0 ? 1 : 0;
    const int va = q.axis == 2 ? 1 : 2;
    const double zlo = spec.room.z() * 0.5;
    Vec3<double> anchor(rng.uniform(0.3, spec.room.x() - 1.5),
                        rng.uniform(0.3, spec.room.y() - 1.2),
                        rng.uniform(zlo, spec.room.z() - 1.5));
    q.offset = anchor[q.axis];
    q.u0 = anchor[ua];
    q.u1 = q.u0 + rng.uniform(0.8, 2.0);
    q.v0 = anchor[va];
    q.v1 = q.v0 + rng.uniform(0.8, 2.0);
    q.tex = random_texture(rng);
    g.push_back(q);
  }
  return g;
}

inline Intrinsics<double> intrinsics_for(const SceneSpec& spec) {
  const double fx =
      0.5 * spec.width / std::tan(0.5 * spec.fov_deg * std::numbers::pi / 180.0);
  return {fx, fx, (spec.width - 1) / 2.0, (spec.height - 1) / 2.0};
}

inline std::vector<Camera<double>> generate_trajectory(const SceneSpec& spec, Rng& rng) {
  const Vec3<double> target(spec.room.x() / 2, spec.room.y() / 2, spec.room.z() * 0.72);
  const Vec3<double> base(spec.room.x() / 2, spec.room.y() / 2, spec.room.z() * 0.18);
  const double radius = (target - base).norm();
  const double span = spec.arc_span_deg * std::numbers::pi / 180.0;
  std::vector<Camera<double>> cams;
  cams.reserve(static_cast<std::size_t>(spec.frames));
  for (int i = 0; i < spec.frames; ++i) {
    const double s = spec.frames == 1 ? 0.5 : static_cast<double>(i) / (spec.frames - 1);
    Vec3<double> pos;
    if (spec.trajectory == "arc") {
      const double theta = (s - 0.5) * span;
      pos = target + radius * Vec3<double>(std::sin(theta), 0.0, -std::cos(theta));
    } else {
      pos = base + Vec3<double>((s - 0.5) * spec.room.x() * 0.5, 0.0, s * 0.8);
    }
    pos += Vec3<double>(rng.normal(spec.traj_jitter), rng.normal(spec.traj_jitter),
                        rng.normal(spec.traj_jitter));
    // Keep strictly inside the room.
    for (int a = 0; a < 3; ++a) pos[a] = std::clamp(pos[a], 0.25, spec.room[a] - 0.25);
    const Vec3<double> look =
        target + Vec3<double>(rng.normal(spec.traj_jitter), rng.normal(spec.traj_jitter),
                              rng.normal(spec.traj_jitter));
    Camera<double> cam;
    cam.width = spec.width;
    cam.height = spec.height;
    cam.intrinsics = intrinsics_for(spec);
    cam.pose = lookat_pose(pos, look);
    cams.push_back(cam);
  }
  return cams;
}

inline std::vector<FrameRecord> generate_scene(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Rng geo_rng = rng.substream("geometry");
  Rng traj_rng = rng.substream("trajectory");
  const SceneGeometry geometry = generate_scene_geometry(spec, geo_rng);
  const auto cams = generate_trajectory(spec, traj_rng);

  // The scene content must stay in view for most of the trajectory.
  const Vec3<double> target(spec.room.x() / 2, spec.room.y() / 2, spec.room.z() * 0.72);
  int visible = 0;
  for (const auto& cam : cams) {
    const auto px = project(cam.intrinsics, cam.pose, target);
    if (px && px->u >= 0 && px->u < cam.width && px->v >= 0 && px->v < cam.height) ++visible;
  }
  if (visible < spec.min_frustum_fraction * static_cast<double>(cams.size()))
    throw DataError("degenerate trajectory: scene center out of frustum");

  std::vector<FrameRecord> frames;
  frames.reserve(cams.size());
  for (std::size_t i = 0; i < cams.size(); ++i)
    frames.push_back(render_frame(geometry, cams[i], static_cast<int>(i)));
  return frames;
}

// ---------------------------------------------------------------------------
// Dataset container and manifest.
// ---------------------------------------------------------------------------

struct Scene {
  std::string name;
  std::string split;  // train | test
  std::vector<FrameRecord> frames;
};

struct Dataset {
  std::vector<Scene> scenes;
  int stride = 3;
  int context_radius = 3;

  std::vector<int> split_indices(const std::string& split) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < scenes.size(); ++i)
      if (scenes[i].split == split) out.push_back(static_cast<int>(i));
    return out;
  }
};

struct DatasetGenConfig {
  std::uint64_t seed = 1;
  int train_scenes = 8;
  int test_scenes = 2;
  SceneSpec scene;  // per-scene template; per-scene seeds derive from `seed`
};

inline Dataset generate_dataset(const DatasetGenConfig& cfg) {
  Dataset ds;
  Rng rng(cfg.seed);
  const int total = cfg.train_scenes + cfg.test_scenes;
  for (int i = 0; i < total; ++i) {
    SceneSpec spec = cfg.scene;
    spec.seed = rng.substream(static_cast<std::uint64_t>(i)).next_u64();
    Scene s;
    char name[32];
    std::snprintf(name, sizeof name, "scene_%04d", i);
    s.name = name;
    s.split = i < cfg.train_scenes ? "train" : "test";
    s.frames = generate_scene(spec);
    ds.scenes.push_back(std::move(s));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// File formats.
// ---------------------------------------------------------------------------

namespace io {

inline void write_ppm(const std::string& path, const FrameRecord& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << "P6\n" << f.camera.width << " " << f.camera.height << "\n255\n";
  std::vector<unsigned char> bytes(f.rgb.size());
  for (std::size_t i = 0; i < f.rgb.size(); ++i)
    bytes[i] = static_cast<unsigned char>(
        std::lround(std::clamp(f.rgb[i], 0.0, 1.0) * 255.0));
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

inline void read_ppm(const std::string& path, FrameRecord& f) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || maxval != 255 || w <= 0 || h <= 0)
    throw DataError("malformed ppm header in " + path);
  in.get();  // single whitespace after maxval
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw DataError("truncated ppm file " + path);
  f.rgb.resize(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) f.rgb[i] = bytes[i] / 255.0;
  f.camera.width = w;
  f.camera.height = h;
}

inline constexpr char kDepthMagic[4] = {'D', 'F', 'D', '1'};

inline void write_depth(const std::string& path, const FrameRecord& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out.write(kDepthMagic, 4);
  const std::uint32_t h = static_cast<std::uint32_t>(f.camera.height);
  const std::uint32_t w = static_cast<std::uint32_t>(f.camera.width);
  out.write(reinterpret_cast<const char*>(&h), 4);
  out.write(reinterpret_cast<const char*>(&w), 4);
  std::vector<float> d(f.depth.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<float>(f.depth[i]);
  out.write(reinterpret_cast<const char*>(d.data()),
            static_cast<std::streamsize>(d.size() * sizeof(float)));
}

inline void read_depth(const std::string& path, FrameRecord& f) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kDepthMagic, 4) != 0)
    throw DataError("bad depth magic in " + path);
  std::uint32_t h = 0, w = 0;
  in.read(reinterpret_cast<char*>(&h), 4);
  in.read(reinterpret_cast<char*>(&w), 4);
  if (!in || h == 0 || w == 0) throw DataError("bad depth header in " + path);
  std::vector<float> d(static_cast<std::size_t>(h) * w);
  in.read(reinterpret_cast<char*>(d.data()),
          static_cast<std::streamsize>(d.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(d.size() * sizeof(float)))
    throw DataError("truncated depth file " + path);
  f.depth.assign(d.begin(), d.end());
  f.camera.height = static_cast<int>(h);
  f.camera.width = static_cast<int>(w);
}

inline void write_pose(const std::string& path, const Pose<double>& pose) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  const Mat4<double> m = pose.matrix();
  char buf[64];
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
      out << buf << (c == 3 ? "\n" : " ");
    }
  }
}

inline Pose<double> read_pose(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  Mat4<double> m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      if (!(in >> m(r, c))) throw DataError("truncated pose file " + path);
  return Pose<double>::from_matrix(m);
}

inline void write_intrinsics(const std::string& path, const Intrinsics<double>& k) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  const Mat3<double> m = k.matrix();
  char buf[64];
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
      out << buf << (c == 2 ? "\n" : " ");
    }
  }
}

inline Intrinsics<double> read_intrinsics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  Mat3<double> m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      if (!(in >> m(r, c))) throw DataError("truncated intrinsics file " + path);
  return {m(0, 0), m(1, 1), m(0, 2), m(1, 2)};
}

inline std::string frame_stem(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06d", index);
  return buf;
}

}  // namespace io

inline void save_dataset(const Dataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "mvdepth-dataset";
  manifest["version"] = 1;
  manifest["stride"] = ds.stride;
  manifest["context_radius"] = ds.context_radius;
  manifest["scenes"] = nlohmann::json::array();
  for (const Scene& s : ds.scenes) {
    const fs::path sdir = fs::path(dir) / s.name;
    fs::create_directories(sdir);
    if (!s.frames.empty())
      io::write_intrinsics((sdir / "intrinsics.txt").string(), s.frames[0].camera.intrinsics);
    for (const FrameRecord& f : s.frames) {
      const std::string stem = (sdir / io::frame_stem(f.index)).string();
      io::write_ppm(stem + ".ppm", f);
      io::write_depth(stem + ".depth", f);
      io::write_pose(stem + ".pose", f.camera.pose);
    }
    manifest["scenes"].push_back(
        {{"name", s.name}, {"split", s.split}, {"frames", s.frames.size()}});
  }
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw DataError("cannot write manifest in " + dir);
  out << manifest.dump(2) << "\n";
}

inline Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path mpath = fs::path(dir) / "manifest.json";
  std::ifstream in(mpath);
  if (!in) throw DataError("cannot read manifest " + mpath.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed manifest " + mpath.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "mvdepth-dataset")
    throw DataError("not a dataset manifest: " + mpath.string());

  Dataset ds;
  ds.stride = manifest.value("stride", 3);
  ds.context_radius = manifest.value("context_radius", 3);
  std::vector<std::string> seen;
  for (const auto& js : manifest.at("scenes")) {
    Scene s;
    s.name = js.at("name").get<std::string>();
    s.split = js.at("split").get<std::string>();
    for (const auto& other : seen)
      if (other == s.name)
        throw DataError("manifest lists scene " + s.name + " more than once");
    seen.push_back(s.name);
    if (s.split != "train" && s.split != "test")
      throw DataError("scene " + s.name + " has unknown split " + s.split);

    const fs::path sdir = fs::path(dir) / s.name;
    const auto n = js.at("frames").get<int>();
    const Intrinsics<double> k = io::read_intrinsics((sdir / "intrinsics.txt").string());
    for (int i = 0; i < n; ++i) {
      FrameRecord f;
      f.index = i;
      const std::string stem = (sdir / io::frame_stem(i)).string();
      io::read_ppm(stem + ".ppm", f);
      io::read_depth(stem + ".depth", f);
      f.camera.intrinsics = k;
      f.camera.pose = io::read_pose(stem + ".pose");
      f.validate();
      s.frames.push_back(std::move(f));
    }
    ds.scenes.push_back(std::move(s));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Batch sampling.
// ---------------------------------------------------------------------------

enum class BatchMode { Stereo, Video, Overfit };

inline BatchMode parse_batch_mode(const std::string& s) {
  if (s == "stereo") return BatchMode::Stereo;
  if (s == "video") return BatchMode::Video;
  if (s == "overfit") return BatchMode::Overfit;
  throw DataError("unknown batch mode " + s);
}

struct BatchSample {
  int scene = 0;
  std::vector<int> encoded;     // frames fed to the encoder
  std::vector<int> supervised;  // frames that receive loss terms
};

// Evenly spaced frame indices used by the overfit fixture.
inline std::vector<int> overfit_views(int frame_count, int views) {
  std::vector<int> out;
  for (int i = 0; i < views; ++i)
    out.push_back(static_cast<int>(
        std::lround(static_cast<double>(i) * (frame_count - 1) / std::max(1, views - 1))));
  return out;
}

inline BatchSample sample_batch(const Dataset& ds, const std::string& split, BatchMode mode,
                                Rng& rng, int overfit_view_count = 4) {
  const auto scenes = ds.split_indices(split);
  if (scenes.empty()) throw DataError("no scenes in split " + split);
  BatchSample b;
  b.scene = scenes[static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(scenes.size())))];
  const int n = static_cast<int>(ds.scenes[static_cast<std::size_t>(b.scene)].frames.size());
  const int stride = ds.stride;

  switch (mode) {
    case BatchMode::Stereo: {
      if (n < stride + 1) throw DataError("scene too short for stereo sampling");
      const int t = static_cast<int>(rng.uniform_int(n - stride));
      b.encoded = {t, t + stride};
      b.supervised = b.encoded;
      break;
    }
    case BatchMode::Video: {
      const int radius = ds.context_radius;
      const int reach = radius * stride;
      if (n < 2 * reach + 1) throw DataError("scene too short for video context");
      const int t = reach + static_cast<int>(rng.uniform_int(n - 2 * reach));
      for (int i = -radius; i <= radius; ++i) b.encoded.push_back(t + i * stride);
      b.supervised = {t};
      break;
    }
    case BatchMode::Overfit: {
      b.scene = scenes[0];
      const int len = static_cast<int>(ds.scenes[static_cast<std::size_t>(b.scene)].frames.size());
      b.encoded = overfit_views(len, overfit_view_count);
      b.supervised = b.encoded;
      break;
    }
  }
  return b;
}

// Deterministic enumeration for the novel-viewpoint protocols: interpolation
// encodes {t-5, t+5} and queries {t-4..t+4}; extrapolation encodes
// {t-5..t-1} and queries {t..t+8}.
struct ProtocolSample {
  int scene = 0;
  int t = 0;
  std::vector<int> encoded;
  std::vector<int> queries;
};

inline std::vector<ProtocolSample> enumerate_protocol(const Dataset& ds,
                                                      const std::string& split,
                                                      bool extrapolate, int step = 7) {
  std::vector<ProtocolSample> out;
  for (int scene : ds.split_indices(split)) {
    const int n = static_cast<int>(ds.scenes[static_cast<std::size_t>(scene)].frames.size());
    const int lo = 5;
    const int hi = extrapolate ? n - 9 : n - 6;
    for (int t = lo; t <= hi; t += step) {
      ProtocolSample s;
      s.scene = scene;
      s.t = t;
      if (extrapolate) {
        for (int i = t - 5; i <= t - 1; ++i) s.encoded.push_back(i);
        for (int i = t; i <= t + 8; ++i) s.queries.push_back(i);
      } else {
        s.encoded = {t - 5, t + 5};
        for (int i = t - 4; i <= t + 4; ++i) s.queries.push_back(i);
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace mvdepth
