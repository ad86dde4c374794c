#ifndef MPV_GEOMETRY_HPP_
#define MPV_GEOMETRY_HPP_

// Pinhole projection and plan-view geometry.
//
// Conventions used throughout the library:
//   * plan-view frames have X to the right and Y forward (or north);
//   * yaw is counterclockwise-positive with 0 facing +Y, normalized to [0, 2pi);
//   * the camera sits at the ego reference point, looking along ego heading.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mpv {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

// Maps any finite angle into [0, 2pi).
inline double wrap_two_pi(double angle) {
  double r = std::fmod(angle, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  // fmod of a value just below 0 can round back up to 2pi.
  if (r >= kTwoPi) r = 0.0;
  return r;
}

// Maps any finite angle into [-pi, pi).
inline double wrap_pi(double angle) {
  return wrap_two_pi(angle + kPi) - kPi;
}

// Smallest absolute difference between two angles.
inline double angle_distance(double a, double b) {
  return std::abs(wrap_pi(a - b));
}

// Counterclockwise rotation by `angle`.
inline Vec2 rotate(Vec2 v, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

// Unit vector of heading `yaw` (0 = +Y, counterclockwise-positive).
inline Vec2 heading_vector(double yaw) { return {-std::sin(yaw), std::cos(yaw)}; }

// Yaw of a direction vector, inverse of heading_vector.
inline double yaw_of(Vec2 dir) { return wrap_two_pi(std::atan2(-dir.x, dir.y)); }

enum class ObjectClass { kVehicle, kPedestrian };

inline std::string_view to_string(ObjectClass c) {
  return c == ObjectClass::kVehicle ? "vehicle" : "pedestrian";
}

inline ObjectClass object_class_from_string(std::string_view s) {
  if (s == "vehicle") return ObjectClass::kVehicle;
  if (s == "pedestrian") return ObjectClass::kPedestrian;
  throw std::invalid_argument("unknown object class: " + std::string(s));
}

enum class FrameTag { kCamera, kTravel, kNorthUp, kWorld };

inline std::string_view to_string(FrameTag f) {
  switch (f) {
    case FrameTag::kCamera: return "camera";
    case FrameTag::kTravel: return "travel";
    case FrameTag::kNorthUp: return "north_up";
    case FrameTag::kWorld: return "world";
  }
  return "?";
}

class FrameMismatch : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct CameraIntrinsics {
  double focal_length_px = 0.0;
  double image_width_px = 0.0;
  double image_height_px = 0.0;
  double hfov_deg = 0.0;
  // Height of the optical center above the ground plane; only used to
  // place the vertical extent of projected 2D boxes.
  double mount_height_m = 1.5;
};

struct Detection2D {
  ObjectClass object_class = ObjectClass::kVehicle;
  double u_min = 0.0;
  double v_min = 0.0;
  double u_max = 0.0;
  double v_max = 0.0;
  // Signed offset of the object's projected center from the image centerline.
  double x_center_offset = 0.0;
};

struct Estimate3D {
  double depth_m = 0.0;
  double local_yaw_rad = 0.0;
  double length_m = 0.0;
  double width_m = 0.0;
  double height_m = 0.0;
};

struct PlanPose {
  double x_m = 0.0;
  double y_m = 0.0;
  double yaw_rad = 0.0;
  FrameTag frame = FrameTag::kCamera;

  Vec2 position() const { return {x_m, y_m}; }
};

struct Dimensions {
  double length_m = 0.0;
  double width_m = 0.0;
  double height_m = 0.0;
};

inline double focal_from_fov(double width_px, double hfov_deg) {
  if (!(width_px > 0.0)) throw std::domain_error("focal_from_fov: width must be positive");
  if (!(hfov_deg > 0.0 && hfov_deg < 180.0)) {
    throw std::domain_error("focal_from_fov: hfov must lie in (0, 180) degrees");
  }
  return (width_px / 2.0) / std::tan(hfov_deg * kPi / 360.0);
}

inline CameraIntrinsics make_intrinsics(double width_px, double height_px, double hfov_deg) {
  if (!(height_px > 0.0)) throw std::domain_error("make_intrinsics: height must be positive");
  return {focal_from_fov(width_px, hfov_deg), width_px, height_px, hfov_deg};
}

// Global yaw in the camera frame from the local (ray-relative) yaw.
inline double local_to_global_yaw(double local_yaw_rad, double x_center_offset,
                                  double focal_length_px) {
  if (!(focal_length_px > 0.0)) throw std::domain_error("local_to_global_yaw: focal length must be positive");
  return wrap_two_pi(local_yaw_rad - std::atan(x_center_offset / focal_length_px));
}

inline double global_to_local_yaw(double yaw_rad, double x_center_offset, double focal_length_px) {
  if (!(focal_length_px > 0.0)) throw std::domain_error("global_to_local_yaw: focal length must be positive");
  return wrap_two_pi(yaw_rad + std::atan(x_center_offset / focal_length_px));
}

// Camera-frame plan-view location of an object from depth and image offset.
inline Vec2 plan_location(double depth_m, double x_center_offset, double focal_length_px) {
  if (!(depth_m > 0.0)) throw std::domain_error("plan_location: depth must be positive");
  if (!(focal_length_px > 0.0)) throw std::domain_error("plan_location: focal length must be positive");
  return {depth_m * x_center_offset / focal_length_px, depth_m};
}

// Corners of a yawed length x width rectangle. Unrotated order is
// (+w/2,+l/2), (+w/2,-l/2), (-w/2,-l/2), (-w/2,+l/2).
inline std::array<Vec2, 4> box_corners(const PlanPose& pose, double length_m, double width_m) {
  if (!(length_m > 0.0 && width_m > 0.0)) {
    throw std::domain_error("box_corners: dimensions must be positive");
  }
  const double hw = width_m / 2.0;
  const double hl = length_m / 2.0;
  const std::array<Vec2, 4> local = {Vec2{hw, hl}, Vec2{hw, -hl}, Vec2{-hw, -hl}, Vec2{-hw, hl}};
  const double c = std::cos(pose.yaw_rad);
  const double s = std::sin(pose.yaw_rad);
  std::array<Vec2, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = {pose.x_m + c * local[i].x - s * local[i].y, pose.y_m + s * local[i].x + c * local[i].y};
  }
  return out;
}

// Re-expresses a camera-frame pose in the travel or north-up plan-view frame.
// Both frames keep the ego at the origin; north-up additionally rotates by the
// ego's world yaw so that +Y is world north.
inline PlanPose to_frame(const PlanPose& pose, const PlanPose& ego_world_pose, FrameTag target) {
  if (pose.frame != FrameTag::kCamera) throw FrameMismatch("to_frame: input pose must be in the camera frame");
  if (ego_world_pose.frame != FrameTag::kWorld) throw FrameMismatch("to_frame: ego pose must be in the world frame");
  switch (target) {
    case FrameTag::kTravel:
      return {pose.x_m, pose.y_m, pose.yaw_rad, FrameTag::kTravel};
    case FrameTag::kNorthUp: {
      const Vec2 p = rotate(pose.position(), ego_world_pose.yaw_rad);
      return {p.x, p.y, wrap_two_pi(pose.yaw_rad + ego_world_pose.yaw_rad), FrameTag::kNorthUp};
    }
    default:
      throw FrameMismatch("to_frame: target must be travel or north_up");
  }
}

// Inverse of to_frame.
inline PlanPose from_frame(const PlanPose& pose, const PlanPose& ego_world_pose) {
  if (ego_world_pose.frame != FrameTag::kWorld) throw FrameMismatch("from_frame: ego pose must be in the world frame");
  switch (pose.frame) {
    case FrameTag::kTravel:
      return {pose.x_m, pose.y_m, pose.yaw_rad, FrameTag::kCamera};
    case FrameTag::kNorthUp: {
      const Vec2 p = rotate(pose.position(), -ego_world_pose.yaw_rad);
      return {p.x, p.y, wrap_two_pi(pose.yaw_rad - ego_world_pose.yaw_rad), FrameTag::kCamera};
    }
    default:
      throw FrameMismatch("from_frame: pose must be in the travel or north_up frame");
  }
}

// World pose -> camera-frame pose of the ego's camera.
inline PlanPose world_to_camera(const PlanPose& object_world, const PlanPose& ego_world) {
  const Vec2 rel = rotate(object_world.position() - ego_world.position(), -ego_world.yaw_rad);
  return {rel.x, rel.y, wrap_two_pi(object_world.yaw_rad - ego_world.yaw_rad), FrameTag::kCamera};
}

inline PlanPose camera_to_world(const PlanPose& object_camera, const PlanPose& ego_world) {
  const Vec2 p = ego_world.position() + rotate(object_camera.position(), ego_world.yaw_rad);
  return {p.x, p.y, wrap_two_pi(object_camera.yaw_rad + ego_world.yaw_rad), FrameTag::kWorld};
}

// Relative tolerance for the inclusive horizontal field-of-view boundary.
inline constexpr double kFovEdgeTolerance = 1e-9;

// Axis-aligned image bounds of the 3D box standing on the ground plane at a
// camera-frame pose, clamped to the image.
inline Detection2D detection_from_camera_pose(ObjectClass cls, const PlanPose& cam_pose, const Dimensions& dims,
                                              const CameraIntrinsics& intr) {
  constexpr double kMinDepth = 0.1;
  const auto corners = box_corners(cam_pose, dims.length_m, dims.width_m);
  const double f = intr.focal_length_px;
  const double cu = intr.image_width_px / 2.0;
  const double cv = intr.image_height_px / 2.0;
  Detection2D det;
  det.object_class = cls;
  det.u_min = det.v_min = std::numeric_limits<double>::infinity();
  det.u_max = det.v_max = -std::numeric_limits<double>::infinity();
  for (const Vec2& c : corners) {
    const double depth = std::max(c.y, kMinDepth);
    for (double z : {0.0, dims.height_m}) {
      const double u = cu + f * c.x / depth;
      const double v = cv - f * (z - intr.mount_height_m) / depth;
      det.u_min = std::min(det.u_min, u);
      det.u_max = std::max(det.u_max, u);
      det.v_min = std::min(det.v_min, v);
      det.v_max = std::max(det.v_max, v);
    }
  }
  det.u_min = std::clamp(det.u_min, 0.0, intr.image_width_px);
  det.u_max = std::clamp(det.u_max, 0.0, intr.image_width_px);
  det.v_min = std::clamp(det.v_min, 0.0, intr.image_height_px);
  det.v_max = std::clamp(det.v_max, 0.0, intr.image_height_px);
  det.x_center_offset = f * cam_pose.x_m / cam_pose.y_m;
  return det;
}

struct CameraObservation {
  Detection2D detection;
  Estimate3D estimate;
};

// Ground-truth detector: what an ideal 2D detector and 3D estimator would
// report for one object. Empty when the object center is behind the camera or
// outside the horizontal field of view (the boundary counts as inside).
inline std::optional<CameraObservation> project_to_camera(ObjectClass cls, const PlanPose& object_world_pose,
                                                          const Dimensions& dims, const PlanPose& ego_world_pose,
                                                          const CameraIntrinsics& intr) {
  if (!(dims.length_m > 0.0 && dims.width_m > 0.0 && dims.height_m > 0.0)) {
    throw std::domain_error("project_to_camera: dimensions must be positive");
  }
  const PlanPose cam = world_to_camera(object_world_pose, ego_world_pose);
  if (!(cam.y_m > 0.0)) return std::nullopt;
  const double x = intr.focal_length_px * cam.x_m / cam.y_m;
  if (std::abs(x) > (intr.image_width_px / 2.0) * (1.0 + kFovEdgeTolerance)) return std::nullopt;

  CameraObservation obs;
  obs.detection = detection_from_camera_pose(cls, cam, dims, intr);
  obs.estimate.depth_m = cam.y_m;
  obs.estimate.local_yaw_rad = global_to_local_yaw(cam.yaw_rad, x, intr.focal_length_px);
  obs.estimate.length_m = dims.length_m;
  obs.estimate.width_m = dims.width_m;
  obs.estimate.height_m = dims.height_m;
  return obs;
}

// Camera-frame pose recovered from a detection's image offset and a 3D estimate.
inline PlanPose reproject(const Detection2D& det, const Estimate3D& est, const CameraIntrinsics& intr) {
  const Vec2 p = plan_location(est.depth_m, det.x_center_offset, intr.focal_length_px);
  return {p.x, p.y, local_to_global_yaw(est.local_yaw_rad, det.x_center_offset, intr.focal_length_px),
          FrameTag::kCamera};
}

}  // namespace mpv

#endif  // MPV_GEOMETRY_HPP_
