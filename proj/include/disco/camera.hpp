#pragma once

#include <optional>

#include "disco/math.hpp"

namespace disco {

/// Pinhole camera producing a square S x S image.
///
/// Pixel (u, v) has u growing to the right and v growing downward; pixel
/// centers sit at (u + 0.5, v + 0.5).
struct Camera {
  Vec3 position{0.0, 0.0, -4.0};
  Vec3 target{0.0, 0.0, 0.0};
  Vec3 up{0.0, 1.0, 0.0};
  double fov_y = 0.6;  // vertical field of view, radians
  int size = 64;
  double near_epsilon = 1e-4;
};

/// Orthonormal view frame of a camera.
struct CameraBasis {
  Vec3 forward;
  Vec3 right;
  Vec3 up;
  double tan_half_fov;
};

/// Throws DegenerateBasis when up is parallel to the view direction and
/// InvalidArgument for fov outside (0, pi) or size < 1.
CameraBasis camera_basis(const Camera& camera);
void validate_camera(const Camera& camera);

/// Continuous pixel coordinates and view depth of a world point.
struct Projection {
  double u;
  double v;
  double depth;
};

Projection project_point(const Camera& camera, const CameraBasis& basis, Vec3 world);

/// Orbit pose around the camera target (yaw about +y, pitch above the
/// horizontal plane, radius from target).
Camera orbit_camera(const Camera& base, double yaw, double pitch, double radius);

}  // namespace disco
