// Geometric 3D augmentations: canonical jittering, canonical randomization,
// and virtual-camera supervision rendered by z-buffered point projection.
// Both canonical augmentations preserve all pairwise relative poses; they
// only move the frame the embeddings are expressed in.
#pragma once

#include <cstdint>
#include <vector>

#include "mvdepth/frame.hpp"
#include "mvdepth/geometry.hpp"
#include "mvdepth/random.hpp"

namespace mvdepth {

struct AugmentConfig {
  bool canonical_jitter = true;
  bool canonical_randomization = true;
  int virtual_cameras = 1;       // virtual supervision views per sample
  double sigma_virtual = 0.25;   // m, translation noise of the virtual camera
  double sigma_center = 0.25;    // m, perturbation of the look-at target
  double sigma_translation = 1.0;  // m, canonical jitter
  double sigma_rotation = 0.1;     // rad, canonical jitter
  int splat_radius = 0;  // Chebyshev pixel radius when splatting points
};

// Left-multiply every pose by one sampled rigid perturbation of the
// canonical frame: T_i' = T_0' T_i with T_0' = [R(eps_r) | eps_t].
template <typename S>
std::vector<Pose<S>> canonical_jitter(const std::vector<Pose<S>>& poses, S sigma_t,
                                      S sigma_r, Rng& rng) {
  Pose<S> t0;
  t0.translation =
      Vec3<S>(static_cast<S>(rng.normal(sigma_t)), static_cast<S>(rng.normal(sigma_t)),
              static_cast<S>(rng.normal(sigma_t)));
  const S rx = static_cast<S>(rng.normal(sigma_r));
  const S ry = static_cast<S>(rng.normal(sigma_r));
  const S rz = static_cast<S>(rng.normal(sigma_r));
  t0.rotation = euler_to_rotation(rx, ry, rz);
  std::vector<Pose<S>> out;
  out.reserve(poses.size());
  for (const auto& p : poses) out.push_back(t0 * p);
  return out;
}

// Re-express all poses relative to a uniformly chosen camera o:
// T_i' = T_i T_o^{-1}, so camera o becomes the identity.
template <typename S>
std::vector<Pose<S>> canonical_randomize(const std::vector<Pose<S>>& poses, Rng& rng) {
  if (poses.empty()) throw std::invalid_argument("canonical_randomize: no poses");
  const auto o = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(poses.size())));
  const Pose<S> inv = poses[o].inverse();
  std::vector<Pose<S>> out;
  out.reserve(poses.size());
  for (const auto& p : poses) out.push_back(p * inv);
  return out;
}

// Virtual camera: translation noise around a source camera's center, looking
// at the (perturbed) centroid of that camera's unprojected cloud. Intrinsics
// and resolution are copied from the source.
inline Camera<double> sample_virtual_camera(const std::vector<FrameRecord>& frames,
                                            double sigma_v, double sigma_c, Rng& rng) {
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < frames.size(); ++i)
    if (frames[i].valid_depth_count() > 0) candidates.push_back(i);
  if (candidates.empty())
    throw DataError("sample_virtual_camera: no frame has valid depth");
  const auto& src =
      frames[candidates[static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(candidates.size())))]];

  const Vec3<double> eps_v(rng.normal(sigma_v), rng.normal(sigma_v), rng.normal(sigma_v));
  const Vec3<double> eps_c(rng.normal(sigma_c), rng.normal(sigma_c), rng.normal(sigma_c));
  const Vec3<double> position = src.camera.pose.center() + eps_v;
  const Vec3<double> target = unproject_frame(src).centroid() + eps_c;

  Camera<double> cam = src.camera;
  cam.pose = lookat_pose(position, target);
  return cam;
}

// Sparse ground truth for a virtual viewpoint. Pixels are row-major indices;
// listing order is row-major and deterministic.
struct VirtualFrame {
  Camera<double> camera;
  std::vector<std::int64_t> pixels;
  std::vector<double> depth;
  std::vector<Vec3<double>> rgb;

  bool empty() const { return pixels.empty(); }
};

// Project the combined pointcloud of all frames into the virtual camera and
// keep the nearest depth per covered pixel. A point lands on the nearest
// pixel center plus a (2r+1)^2 neighborhood for splat radius r.
inline VirtualFrame render_virtual_gt(const std::vector<FrameRecord>& frames,
                                      const Camera<double>& vcam, int splat_radius = 0) {
  const int w = vcam.width, h = vcam.height;
  std::vector<double> zbuf(static_cast<std::size_t>(w) * h, 0.0);
  std::vector<Vec3<double>> color(static_cast<std::size_t>(w) * h);

  for (std::size_t fi = 0; fi < frames.size(); ++fi) {
    const PointCloud<double> pc = unproject_frame(frames[fi], static_cast<int>(fi));
    for (std::size_t p = 0; p < pc.size(); ++p) {
      const auto px = project(vcam.intrinsics, vcam.pose, pc.xyz[p]);
      if (!px) continue;  // behind the virtual camera
      const auto cu = static_cast<std::int64_t>(std::lround(px->u));
      const auto cv = static_cast<std::int64_t>(std::lround(px->v));
      for (std::int64_t dy = -splat_radius; dy <= splat_radius; ++dy)
        for (std::int64_t dx = -splat_radius; dx <= splat_radius; ++dx) {
          const std::int64_t x = cu + dx, y = cv + dy;
          if (x < 0 || x >= w || y < 0 || y >= h) continue;
          const std::size_t i = static_cast<std::size_t>(y * w + x);
          if (zbuf[i] == 0.0 || px->z < zbuf[i]) {
            zbuf[i] = px->z;
            color[i] = pc.rgb[p];
          }
        }
    }
  }

  VirtualFrame out;
  out.camera = vcam;
  for (std::size_t i = 0; i < zbuf.size(); ++i) {
    if (zbuf[i] == 0.0) continue;
    out.pixels.push_back(static_cast<std::int64_t>(i));
    out.depth.push_back(zbuf[i]);
    out.rgb.push_back(color[i]);
  }
  return out;
}

}  // namespace mvdepth
