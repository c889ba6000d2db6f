// Posed RGB-D frames, the unit of encoding and supervision. Pixel data is
// stored row-major; depth is z-depth in meters with 0 marking invalid pixels
// that every consumer must mask.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mvdepth/geometry.hpp"

namespace mvdepth {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FrameRecord {
  int index = 0;
  Camera<double> camera;
  std::vector<double> rgb;    // H*W*3 in [0,1]
  std::vector<double> depth;  // H*W z-depth, 0 = invalid

  std::int64_t pixel_count() const {
    return static_cast<std::int64_t>(camera.width) * camera.height;
  }

  bool depth_valid(std::int64_t pixel) const {
    return depth[static_cast<std::size_t>(pixel)] > 0.0;
  }

  std::int64_t valid_depth_count() const {
    std::int64_t n = 0;
    for (double d : depth) n += d > 0.0;
    return n;
  }

  void validate() const {
    if (static_cast<std::int64_t>(depth.size()) != pixel_count() ||
        static_cast<std::int64_t>(rgb.size()) != 3 * pixel_count())
      throw DataError("frame buffers do not match camera resolution");
    for (double d : depth)
      if (!(d >= 0.0) || !std::isfinite(d)) throw DataError("frame depth must be >= 0");
    if (!camera.pose.orthonormal(1e-6)) throw DataError("frame pose is not orthonormal");
    if (!camera.intrinsics.valid()) throw DataError("frame intrinsics invalid");
  }
};

// Unproject every valid pixel into the canonical frame, colors attached.
inline PointCloud<double> unproject_frame(const FrameRecord& f, int source_index = 0) {
  PointCloud<double> pc;
  const int w = f.camera.width, h = f.camera.height;
  pc.xyz.reserve(static_cast<std::size_t>(f.valid_depth_count()));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::int64_t i = static_cast<std::int64_t>(y) * w + x;
      const double d = f.depth[static_cast<std::size_t>(i)];
      if (!(d > 0.0)) continue;
      pc.xyz.push_back(unproject(f.camera.intrinsics, f.camera.pose, double(x), double(y), d));
      pc.rgb.push_back(Vec3<double>(f.rgb[3 * i], f.rgb[3 * i + 1], f.rgb[3 * i + 2]));
      pc.source.push_back(source_index);
    }
  return pc;
}

}  // namespace mvdepth
