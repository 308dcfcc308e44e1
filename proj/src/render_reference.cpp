// Serial renderer without pruning. Kept as the ground truth for the
// pruned pipeline and as the baseline in benchmarks.
#include <cmath>

#include "disco/error.hpp"
#include "render_internal.hpp"

namespace disco {
namespace {

// Where samples of a missed (box, ray) pair are placed before masking. Any
// interval works since the masked samples carry zero opacity.
constexpr Segment kMissSegment{1.0, 2.0};

}  // namespace

RenderComponents render_components_naive(const SceneState& scene, const RenderConfig& config) {
  validate_scene(scene, config);
  const int s = scene.camera.size;
  const int factor = config.ssaa;
  Camera high = scene.camera;
  high.size = s * factor;
  const auto rays = cast_rays(high);
  const int nd = config.samples_per_box;
  const detail::ObjectFieldSet fields(scene);

  std::vector<std::vector<RaySample>> per_ray(rays.size());
  std::vector<Vec3> canonical(rays.size() * nd);
  std::vector<double> depths(rays.size() * nd);
  std::vector<std::uint8_t> hit(rays.size());
  std::vector<double> delta(rays.size());
  for (std::size_t b = 0; b < fields.size(); ++b) {
    for (std::size_t r = 0; r < rays.size(); ++r) {
      const CanonicalRay cr = to_canonical(fields.transform(b), rays[r]);
      const auto seg = ray_aabb_canonical(cr, high.near_epsilon);
      hit[r] = seg.has_value();
      const Segment use = seg.value_or(kMissSegment);
      delta[r] = (use.far - use.near) / nd;
      sample_canonical_into(cr, use, nd, canonical.data() + r * nd, depths.data() + r * nd);
    }
    const FieldBatch fb = fields.evaluate(b, canonical);
    for (std::size_t r = 0; r < rays.size(); ++r)
      for (int k = 0; k < nd; ++k) {
        const std::size_t row = r * nd + k;
        const double sigma = hit[r] ? fb.sigma(row, 0) : 0.0;
        per_ray[r].push_back({depths[row], delta[r],
                              {fb.color(row, 0), fb.color(row, 1), fb.color(row, 2)}, sigma});
      }
  }

  ForegroundBuffers fg{high.size, std::vector<double>(rays.size() * 3, 0.0),
                       std::vector<double>(rays.size(), 1.0)};
  for (std::size_t r = 0; r < rays.size(); ++r) {
    if (per_ray[r].empty()) continue;
    const RayIntegral ri = detail::sort_and_integrate(per_ray[r]);
    fg.rgb[r * 3 + 0] = ri.color.x;
    fg.rgb[r * 3 + 1] = ri.color.y;
    fg.rgb[r * 3 + 2] = ri.color.z;
    fg.transmittance[r] = ri.transmittance;
  }
  if (factor > 1) fg = downsample_foreground(fg, factor);

  RenderComponents out;
  out.foreground = Image::blank(s);
  out.foreground.rgb = std::move(fg.rgb);
  out.transmittance = std::move(fg.transmittance);
  out.background = Image::blank(s);
  const auto bg_rays = cast_rays(scene.camera);
  std::vector<std::size_t> all(bg_rays.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const detail::BackgroundFieldEval field(scene, config);
  detail::shade_background(field, bg_rays, all, config, out.background);
  return out;
}

Image render_scene_naive(const SceneState& scene, const RenderConfig& config) {
  const RenderComponents c = render_components_naive(scene, config);
  return composite(c.foreground, c.transmittance, c.background);
}

}  // namespace disco
