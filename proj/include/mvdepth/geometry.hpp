// Pinhole cameras, SE(3) poses and rays.
//
// Conventions, used everywhere and tested in test_geometry.cpp:
//  - Poses are world-to-camera: T maps canonical-frame points into the
//    camera frame, x_cam = R x + t. The canonical frame is the frame of the
//    reference camera T_0.
//  - Depth maps store z-depth (distance along the camera z axis), not ray
//    length.
//  - Euler angles compose intrinsically X then Y then Z: R = Rx Ry Rz.
//  - Viewing rays follow the global parameterization o = -R t,
//    r = (K R)^{-1} [u, v, 1]^T + t; a flag selects the relative variant
//    that drops the + t term. Directions are not normalized.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

namespace mvdepth {

template <typename S>
using Vec3 = Eigen::Matrix<S, 3, 1>;
template <typename S>
using Mat3 = Eigen::Matrix<S, 3, 3>;
template <typename S>
using Mat4 = Eigen::Matrix<S, 4, 4>;

template <typename S>
struct Intrinsics {
  S fx{1}, fy{1}, cx{0}, cy{0};

  Mat3<S> matrix() const {
    Mat3<S> k = Mat3<S>::Identity();
    k(0, 0) = fx;
    k(1, 1) = fy;
    k(0, 2) = cx;
    k(1, 2) = cy;
    return k;
  }

  // Intrinsics for an image downscaled by `factor` (e.g. 4 -> quarter res).
  Intrinsics scaled_down(S factor) const {
    return {fx / factor, fy / factor, cx / factor, cy / factor};
  }

  bool valid() const { return fx > S(0) && fy > S(0); }
};

template <typename S>
struct Pose {
  Mat3<S> rotation = Mat3<S>::Identity();
  Vec3<S> translation = Vec3<S>::Zero();

  static Pose identity() { return {}; }

  static Pose from_matrix(const Mat4<S>& m) {
    Pose p;
    p.rotation = m.template block<3, 3>(0, 0);
    p.translation = m.template block<3, 1>(0, 3);
    return p;
  }

  Mat4<S> matrix() const {
    Mat4<S> m = Mat4<S>::Identity();
    m.template block<3, 3>(0, 0) = rotation;
    m.template block<3, 1>(0, 3) = translation;
    return m;
  }

  Vec3<S> apply(const Vec3<S>& x) const { return rotation * x + translation; }

  Pose inverse() const {
    Pose p;
    p.rotation = rotation.transpose();
    p.translation = -(rotation.transpose() * translation);
    return p;
  }

  Pose operator*(const Pose& o) const {
    Pose p;
    p.rotation = rotation * o.rotation;
    p.translation = rotation * o.translation + translation;
    return p;
  }

  // Camera center expressed in the canonical frame.
  Vec3<S> center() const { return -(rotation.transpose() * translation); }

  bool orthonormal(S tol = S(1e-9)) const {
    const Mat3<S> e = rotation.transpose() * rotation - Mat3<S>::Identity();
    return e.cwiseAbs().maxCoeff() <= tol &&
           std::abs(rotation.determinant() - S(1)) <= tol;
  }
};

template <typename S>
struct Camera {
  Intrinsics<S> intrinsics;
  Pose<S> pose;
  int width = 0, height = 0;

  Camera scaled_down(S factor) const {
    Camera c = *this;
    c.intrinsics = intrinsics.scaled_down(factor);
    c.width = static_cast<int>(width / factor);
    c.height = static_cast<int>(height / factor);
    return c;
  }
};

template <typename S>
struct Ray {
  Vec3<S> origin;
  Vec3<S> direction;  // not normalized
};

template <typename S>
struct PointCloud {
  std::vector<Vec3<S>> xyz;
  std::vector<Vec3<S>> rgb;
  std::vector<int> source;  // index of the camera each point came from

  std::size_t size() const { return xyz.size(); }

  Vec3<S> centroid() const {
    Vec3<S> c = Vec3<S>::Zero();
    for (const auto& p : xyz) c += p;
    return xyz.empty() ? c : Vec3<S>(c / static_cast<S>(xyz.size()));
  }
};

// Viewing ray of a pixel. The additive translation term on the direction is
// the global-ray parameterization; pass global=false for the classical
// relative ray through the pixel.
template <typename S>
Ray<S> compute_ray(const Intrinsics<S>& k, const Pose<S>& pose, S u, S v,
                   bool global = true) {
  const Mat3<S> kr = k.matrix() * pose.rotation;
  Vec3<S> dir = kr.inverse() * Vec3<S>(u, v, S(1));
  if (global) dir += pose.translation;
  return {-(pose.rotation * pose.translation), dir};
}

// Pixel + z-depth -> point in the canonical frame.
template <typename S>
Vec3<S> unproject(const Intrinsics<S>& k, const Pose<S>& pose, S u, S v, S depth) {
  if (!(depth > S(0))) throw std::invalid_argument("unproject requires positive depth");
  const Vec3<S> cam((u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth);
  return pose.inverse().apply(cam);
}

template <typename S>
struct PixelDepth {
  S u, v, z;
};

// Canonical-frame point -> pixel and z-depth, or nothing when the point lies
// behind the camera.
template <typename S>
std::optional<PixelDepth<S>> project(const Intrinsics<S>& k, const Pose<S>& pose,
                                     const Vec3<S>& xyz) {
  const Vec3<S> cam = pose.apply(xyz);
  if (!(cam.z() > S(0))) return std::nullopt;
  return PixelDepth<S>{k.fx * cam.x() / cam.z() + k.cx, k.fy * cam.y() / cam.z() + k.cy,
                       cam.z()};
}

// World-to-camera pose positioned at `position` with the camera z axis toward
// `target`. Falls back to the world -z up axis when the view direction is
// parallel to `up`.
template <typename S>
Pose<S> lookat_pose(const Vec3<S>& position, const Vec3<S>& target,
                    const Vec3<S>& up = Vec3<S>(0, -1, 0)) {
  Vec3<S> forward = target - position;
  const S norm = forward.norm();
  if (!(norm > S(0))) throw std::invalid_argument("lookat: position equals target");
  forward /= norm;
  Vec3<S> right = forward.cross(up);
  if (right.norm() < S(1e-9)) right = forward.cross(Vec3<S>(0, 0, -1));
  right.normalize();
  const Vec3<S> down = forward.cross(right);
  Mat3<S> cam_to_world;
  cam_to_world.col(0) = right;
  cam_to_world.col(1) = down;
  cam_to_world.col(2) = forward;
  Pose<S> p;
  p.rotation = cam_to_world.transpose();
  p.translation = -(p.rotation * position);
  return p;
}

template <typename S>
Pose<S> relative_pose(const Pose<S>& a, const Pose<S>& b) {
  return a.inverse() * b;
}

template <typename S>
Pose<S> invert_pose(const Pose<S>& p) {
  return p.inverse();
}

// Intrinsic X-then-Y-then-Z Euler angles.
template <typename S>
Mat3<S> euler_to_rotation(S rx, S ry, S rz) {
  return (Eigen::AngleAxis<S>(rx, Vec3<S>::UnitX()) *
          Eigen::AngleAxis<S>(ry, Vec3<S>::UnitY()) *
          Eigen::AngleAxis<S>(rz, Vec3<S>::UnitZ()))
      .toRotationMatrix();
}

// Inverse of euler_to_rotation away from gimbal lock (|ry| < pi/2).
template <typename S>
Vec3<S> rotation_to_euler(const Mat3<S>& r) {
  const S ry = std::asin(std::clamp(r(0, 2), S(-1), S(1)));
  const S rx = std::atan2(-r(1, 2), r(2, 2));
  const S rz = std::atan2(-r(0, 1), r(0, 0));
  return {rx, ry, rz};
}

}  // namespace mvdepth
