#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <random>
#include <variant>
#include <vector>

#include "disco/camera.hpp"
#include "disco/math.hpp"

namespace disco {

/// Half side length of the canonical cube [-0.5, 0.5]^3. With this extent a
/// box's scale equals its world-space side lengths.
inline constexpr double kCanonicalHalfExtent = 0.5;

inline constexpr std::size_t kDefaultMaxBoxes = 8;

/// Oriented box: R(euler) * diag(scale) * p + translation maps the canonical
/// cube onto it.
struct Box3D {
  Vec3 euler;        // radians, applied X then Y then Z (extrinsic)
  Vec3 translation;  // world units
  Vec3 scale{1.0, 1.0, 1.0};

  friend bool operator==(const Box3D&, const Box3D&) = default;
};

/// Throws InvalidArgument unless all nine values are finite and scale > 0.
void validate_box(const Box3D& box);

struct Layout {
  std::vector<Box3D> boxes;
  std::size_t max_boxes = kDefaultMaxBoxes;

  std::size_t size() const { return boxes.size(); }
  bool empty() const { return boxes.empty(); }
  friend bool operator==(const Layout&, const Layout&) = default;
};

void validate_layout(const Layout& layout);

/// R = Rz * Ry * Rx.
Mat3 euler_to_matrix(Vec3 euler);

Vec3 box_to_world(const Box3D& box, Vec3 canonical);
Vec3 world_to_canonical(const Box3D& box, Vec3 world);
/// diag(1/s) * R^T * d, deliberately not renormalised.
Vec3 direction_to_canonical(const Box3D& box, Vec3 direction);

/// Cached forward/inverse transform of one box.
struct BoxTransform {
  Mat3 rotation;
  Vec3 translation;
  Vec3 scale;
  Vec3 inv_scale;

  explicit BoxTransform(const Box3D& box);
  Vec3 to_world(Vec3 canonical) const;
  Vec3 to_canonical(Vec3 world) const;
  Vec3 direction_to_canonical(Vec3 direction) const;
};

std::array<Vec3, 8> box_corners(const Box3D& box);

/// Pixel-space rectangle, continuous coordinates, already clamped to
/// [0, S] x [0, S]. Integer coordinates fall on pixel edges.
struct Rect2D {
  double u0 = 0.0;
  double v0 = 0.0;
  double u1 = 0.0;
  double v1 = 0.0;
  bool degenerate = false;

  double width() const { return u1 - u0; }
  double height() const { return v1 - v0; }
  friend bool operator==(const Rect2D&, const Rect2D&) = default;
};

inline constexpr double kMinPatchExtent = 4.0;

/// Bounding rectangle of the 8 projected corners, clamped to the frame.
/// Throws BehindCamera if any corner depth <= camera.near_epsilon. A rect
/// narrower or shorter than min_extent pixels is returned with degenerate set.
Rect2D project_box_2d(const Box3D& box, const Camera& camera,
                      double min_extent = kMinPatchExtent);

struct Translate {
  std::size_t index;
  Vec3 delta;
};
struct Rotate {
  std::size_t index;
  Vec3 delta;
};
/// Additive change of the side lengths; the result must stay positive.
struct Scale {
  std::size_t index;
  Vec3 delta;
};
struct Remove {
  std::size_t index;
};
/// Appends a copy of box `index` shifted by `offset`.
struct Clone {
  std::size_t index;
  Vec3 offset;
};

using LayoutEdit = std::variant<Translate, Rotate, Scale, Remove, Clone>;

/// Pure: returns the edited copy. Throws IndexOutOfRange / CapacityExceeded,
/// or InvalidArgument if a Scale would make a side non-positive.
Layout apply_edit(const Layout& layout, const LayoutEdit& edit);

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct LayoutPrior {
  int min_count = 1;
  int max_count = 3;
  std::array<Range, 3> translation{Range{-1.0, 1.0}, Range{0.0, 0.0}, Range{-1.0, 1.0}};
  std::array<Range, 3> scale{Range{0.4, 0.8}, Range{0.4, 0.8}, Range{0.4, 0.8}};
  Range yaw{-3.14159265358979, 3.14159265358979};
  bool reject_overlap = true;
  int max_retries = 100;
  std::size_t max_boxes = kDefaultMaxBoxes;
};

/// True when two box centers are at least the sum of their half-diagonals apart.
bool boxes_separated(const Box3D& a, const Box3D& b);

/// Draws count, then per box translation, scale and yaw (rotation about +y)
/// uniformly. Throws SamplingExhausted when overlap rejection fails
/// max_retries times.
Layout sample_layout(std::mt19937_64& rng, const LayoutPrior& prior);

}  // namespace disco
