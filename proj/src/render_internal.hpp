#pragma once

#include <optional>
#include <span>
#include <vector>

#include "disco/renderer.hpp"

namespace disco::detail {

/// Per-box field evaluators for one scene: neural (pre-modulated per box) or
/// analytic.
class ObjectFieldSet {
 public:
  explicit ObjectFieldSet(const SceneState& scene);
  FieldBatch evaluate(std::size_t box, std::span<const Vec3> canonical) const;
  std::size_t size() const { return transforms_.size(); }
  const BoxTransform& transform(std::size_t box) const { return transforms_[box]; }

 private:
  const SceneState* scene_;
  std::vector<BoxTransform> transforms_;
  std::vector<ModulatedObjectField> neural_;
};

class BackgroundFieldEval {
 public:
  BackgroundFieldEval(const SceneState& scene, const RenderConfig& config);
  FieldBatch evaluate(const Matrix& inputs, std::span<const Vec3> world,
                      std::span<const Vec3> directions) const;

 private:
  const SceneState* scene_;
  std::optional<ModulatedBackgroundField> neural_;
};

/// Shades the background for the given rays into out (rgb only).
void shade_background(const BackgroundFieldEval& field, std::span<const Ray> rays,
                      std::span<const std::size_t> ray_ids, const RenderConfig& config,
                      Image& out);

/// Sorts (stable, ascending depth) and integrates one ray's samples.
RayIntegral sort_and_integrate(std::vector<RaySample>& samples);

/// Pixel indices of the square tiles covering an S x S image.
std::vector<std::vector<std::size_t>> make_tiles(int size, int tile_size);

}  // namespace disco::detail
