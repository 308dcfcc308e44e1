#include "disco/camera.hpp"

#include <cmath>
#include <numbers>

#include "disco/error.hpp"

namespace disco {

void validate_camera(const Camera& camera) {
  if (!is_finite(camera.position) || !is_finite(camera.target) || !is_finite(camera.up))
    throw Error(ErrorKind::InvalidArgument, "camera vectors must be finite");
  if (!(camera.fov_y > 0.0 && camera.fov_y < std::numbers::pi))
    throw Error(ErrorKind::InvalidArgument, "fov must lie in (0, pi)");
  if (camera.size < 1) throw Error(ErrorKind::InvalidArgument, "image size must be >= 1");
  if (!(camera.near_epsilon > 0.0))
    throw Error(ErrorKind::InvalidArgument, "near epsilon must be positive");
}

CameraBasis camera_basis(const Camera& camera) {
  validate_camera(camera);
  const Vec3 view = camera.target - camera.position;
  const double view_len = norm(view);
  if (view_len < 1e-12) throw Error(ErrorKind::DegenerateBasis, "camera target equals position");
  const Vec3 forward = view / view_len;
  const Vec3 side = cross(forward, camera.up);
  const double side_len = norm(side);
  if (side_len < 1e-9 * std::max(1.0, norm(camera.up)))
    throw Error(ErrorKind::DegenerateBasis, "up vector parallel to view direction");
  const Vec3 right = side / side_len;
  const Vec3 up = cross(right, forward);
  return {forward, right, up, std::tan(0.5 * camera.fov_y)};
}

Projection project_point(const Camera& camera, const CameraBasis& basis, Vec3 world) {
  const Vec3 d = world - camera.position;
  const double depth = dot(d, basis.forward);
  const double half = 0.5 * camera.size;
  const double x = dot(d, basis.right) / (depth * basis.tan_half_fov);
  const double y = dot(d, basis.up) / (depth * basis.tan_half_fov);
  return {(x + 1.0) * half, (1.0 - y) * half, depth};
}

Camera orbit_camera(const Camera& base, double yaw, double pitch, double radius) {
  Camera out = base;
  const double c = std::cos(pitch);
  out.position = base.target +
                 Vec3{c * std::sin(yaw), std::sin(pitch), -c * std::cos(yaw)} * radius;
  out.up = {0.0, 1.0, 0.0};
  return out;
}

}  // namespace disco
