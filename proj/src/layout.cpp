#include "disco/layout.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "disco/error.hpp"

namespace disco {

void validate_box(const Box3D& box) {
  if (!is_finite(box.euler) || !is_finite(box.translation) || !is_finite(box.scale))
    throw Error(ErrorKind::InvalidArgument, "box parameters must be finite");
  if (!(box.scale.x > 0.0 && box.scale.y > 0.0 && box.scale.z > 0.0))
    throw Error(ErrorKind::InvalidArgument, "box scale must be strictly positive");
}

void validate_layout(const Layout& layout) {
  if (layout.boxes.size() > layout.max_boxes)
    throw Error(ErrorKind::CapacityExceeded, "layout holds " + std::to_string(layout.size()) +
                                                 " boxes, maximum is " +
                                                 std::to_string(layout.max_boxes));
  for (const auto& box : layout.boxes) validate_box(box);
}

Mat3 euler_to_matrix(Vec3 euler) {
  const double cx = std::cos(euler.x), sx = std::sin(euler.x);
  const double cy = std::cos(euler.y), sy = std::sin(euler.y);
  const double cz = std::cos(euler.z), sz = std::sin(euler.z);
  Mat3 rx, ry, rz;
  rx.m = {1, 0, 0, 0, cx, -sx, 0, sx, cx};
  ry.m = {cy, 0, sy, 0, 1, 0, -sy, 0, cy};
  rz.m = {cz, -sz, 0, sz, cz, 0, 0, 0, 1};
  return rz * (ry * rx);
}

BoxTransform::BoxTransform(const Box3D& box)
    : rotation(euler_to_matrix(box.euler)),
      translation(box.translation),
      scale(box.scale),
      inv_scale{1.0 / box.scale.x, 1.0 / box.scale.y, 1.0 / box.scale.z} {}

Vec3 BoxTransform::to_world(Vec3 canonical) const {
  return rotation * hadamard(scale, canonical) + translation;
}

Vec3 BoxTransform::to_canonical(Vec3 world) const {
  return hadamard(inv_scale, rotation.transposed() * (world - translation));
}

Vec3 BoxTransform::direction_to_canonical(Vec3 direction) const {
  return hadamard(inv_scale, rotation.transposed() * direction);
}

Vec3 box_to_world(const Box3D& box, Vec3 canonical) { return BoxTransform(box).to_world(canonical); }

Vec3 world_to_canonical(const Box3D& box, Vec3 world) {
  return BoxTransform(box).to_canonical(world);
}

Vec3 direction_to_canonical(const Box3D& box, Vec3 direction) {
  return BoxTransform(box).direction_to_canonical(direction);
}

std::array<Vec3, 8> box_corners(const Box3D& box) {
  const BoxTransform tf(box);
  std::array<Vec3, 8> corners;
  for (int i = 0; i < 8; ++i) {
    const Vec3 c{(i & 1) ? kCanonicalHalfExtent : -kCanonicalHalfExtent,
                 (i & 2) ? kCanonicalHalfExtent : -kCanonicalHalfExtent,
                 (i & 4) ? kCanonicalHalfExtent : -kCanonicalHalfExtent};
    corners[i] = tf.to_world(c);
  }
  return corners;
}

Rect2D project_box_2d(const Box3D& box, const Camera& camera, double min_extent) {
  const CameraBasis basis = camera_basis(camera);
  double u0 = std::numeric_limits<double>::infinity();
  double v0 = u0;
  double u1 = -u0;
  double v1 = -u0;
  for (const Vec3& corner : box_corners(box)) {
    const Projection p = project_point(camera, basis, corner);
    if (!(p.depth > camera.near_epsilon))
      throw Error(ErrorKind::BehindCamera, "box corner at depth " + std::to_string(p.depth));
    u0 = std::min(u0, p.u);
    v0 = std::min(v0, p.v);
    u1 = std::max(u1, p.u);
    v1 = std::max(v1, p.v);
  }
  const double s = camera.size;
  Rect2D rect{std::clamp(u0, 0.0, s), std::clamp(v0, 0.0, s), std::clamp(u1, 0.0, s),
              std::clamp(v1, 0.0, s), false};
  rect.degenerate = rect.width() < min_extent || rect.height() < min_extent;
  return rect;
}

namespace {

void check_index(const Layout& layout, std::size_t index) {
  if (index >= layout.size())
    throw Error(ErrorKind::IndexOutOfRange, "box index " + std::to_string(index) +
                                                " out of range for layout of " +
                                                std::to_string(layout.size()));
}

}  // namespace

Layout apply_edit(const Layout& layout, const LayoutEdit& edit) {
  Layout out = layout;
  std::visit(
      [&](const auto& e) {
        using E = std::decay_t<decltype(e)>;
        check_index(layout, e.index);
        if constexpr (std::is_same_v<E, Translate>) {
          out.boxes[e.index].translation = out.boxes[e.index].translation + e.delta;
        } else if constexpr (std::is_same_v<E, Rotate>) {
          out.boxes[e.index].euler = out.boxes[e.index].euler + e.delta;
        } else if constexpr (std::is_same_v<E, Scale>) {
          out.boxes[e.index].scale = out.boxes[e.index].scale + e.delta;
        } else if constexpr (std::is_same_v<E, Remove>) {
          out.boxes.erase(out.boxes.begin() + static_cast<std::ptrdiff_t>(e.index));
        } else if constexpr (std::is_same_v<E, Clone>) {
          if (layout.size() + 1 > layout.max_boxes)
            throw Error(ErrorKind::CapacityExceeded,
                        "clone would exceed " + std::to_string(layout.max_boxes) + " boxes");
          Box3D copy = layout.boxes[e.index];
          copy.translation = copy.translation + e.offset;
          out.boxes.push_back(copy);
        }
      },
      edit);
  for (const auto& box : out.boxes) validate_box(box);
  return out;
}

bool boxes_separated(const Box3D& a, const Box3D& b) {
  const double ra = 0.5 * norm(a.scale);
  const double rb = 0.5 * norm(b.scale);
  return norm(a.translation - b.translation) >= ra + rb;
}

namespace {

double draw(std::mt19937_64& rng, Range r) {
  if (r.hi <= r.lo) return r.lo;
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

bool separated(const Layout& layout) {
  for (std::size_t i = 0; i < layout.size(); ++i)
    for (std::size_t j = i + 1; j < layout.size(); ++j)
      if (!boxes_separated(layout.boxes[i], layout.boxes[j])) return false;
  return true;
}

}  // namespace

Layout sample_layout(std::mt19937_64& rng, const LayoutPrior& prior) {
  if (prior.min_count < 0 || prior.max_count < prior.min_count)
    throw Error(ErrorKind::InvalidArgument, "invalid count range");
  if (static_cast<std::size_t>(prior.max_count) > prior.max_boxes)
    throw Error(ErrorKind::CapacityExceeded, "count range exceeds maximum boxes");
  const int attempts = prior.reject_overlap ? prior.max_retries + 1 : 1;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    Layout layout;
    layout.max_boxes = prior.max_boxes;
    const int count =
        std::uniform_int_distribution<int>(prior.min_count, prior.max_count)(rng);
    for (int i = 0; i < count; ++i) {
      Box3D box;
      box.euler = {0.0, draw(rng, prior.yaw), 0.0};
      box.translation = {draw(rng, prior.translation[0]), draw(rng, prior.translation[1]),
                         draw(rng, prior.translation[2])};
      box.scale = {draw(rng, prior.scale[0]), draw(rng, prior.scale[1]),
                   draw(rng, prior.scale[2])};
      validate_box(box);
      layout.boxes.push_back(box);
    }
    if (!prior.reject_overlap || separated(layout)) return layout;
  }
  throw Error(ErrorKind::SamplingExhausted,
              "no separated layout after " + std::to_string(prior.max_retries) + " retries");
}

}  // namespace disco
