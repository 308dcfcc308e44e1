#include <atomic>
#include <cmath>

#include "disco/error.hpp"
#include "render_internal.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace disco {
namespace {

std::atomic<int> g_threads{0};

int team_size() {
#ifdef _OPENMP
  const int cap = g_threads.load();
  return cap > 0 ? cap : omp_get_max_threads();
#else
  return 1;
#endif
}

Camera resized(const Camera& camera, int size) {
  Camera c = camera;
  c.size = size;
  return c;
}

}  // namespace

void set_render_threads(int threads) { g_threads.store(threads < 0 ? 0 : threads); }
int render_threads() { return team_size(); }

ForegroundBuffers render_foreground(const SceneState& scene, const RenderConfig& config,
                                    int size) {
  const Camera camera = resized(scene.camera, size);
  const auto rays = cast_rays(camera);
  const auto pixels = rays.size();
  ForegroundBuffers out{size, std::vector<double>(pixels * 3, 0.0),
                        std::vector<double>(pixels, 1.0)};
  if (scene.layout.size() == 0) return out;

  const detail::ObjectFieldSet fields(scene);
  const IntersectionMatrix m = build_intersection_matrix(rays, scene.layout, camera.near_epsilon);
  const auto tiles = detail::make_tiles(size, config.tile_size);
  const int nd = config.samples_per_box;
  const auto ntiles = static_cast<std::ptrdiff_t>(tiles.size());

#pragma omp parallel for schedule(dynamic) num_threads(team_size())
  for (std::ptrdiff_t t = 0; t < ntiles; ++t) {
    const auto& tile = tiles[t];
    std::vector<std::vector<RaySample>> per_ray(tile.size());
    std::vector<Vec3> canonical;
    std::vector<double> depths;
    std::vector<std::size_t> owners;
    for (std::size_t b = 0; b < fields.size(); ++b) {
      canonical.clear();
      depths.clear();
      owners.clear();
      for (std::size_t r = 0; r < tile.size(); ++r) {
        const std::size_t ray = tile[r];
        if (!m.hits(b, ray)) continue;
        const std::size_t base = canonical.size();
        canonical.resize(base + nd);
        depths.resize(base + nd);
        sample_canonical_into(to_canonical(fields.transform(b), rays[ray]), m.segment(b, ray),
                              nd, canonical.data() + base, depths.data() + base);
        owners.push_back(r);
      }
      if (owners.empty()) continue;
      const FieldBatch fb = fields.evaluate(b, canonical);
      for (std::size_t o = 0; o < owners.size(); ++o) {
        const Segment seg = m.segment(b, tile[owners[o]]);
        const double delta = (seg.far - seg.near) / nd;
        auto& list = per_ray[owners[o]];
        for (int k = 0; k < nd; ++k) {
          const std::size_t row = o * nd + k;
          list.push_back({depths[row], delta,
                          {fb.color(row, 0), fb.color(row, 1), fb.color(row, 2)},
                          fb.sigma(row, 0)});
        }
      }
    }
    for (std::size_t r = 0; r < tile.size(); ++r) {
      if (per_ray[r].empty()) continue;
      const RayIntegral ri = detail::sort_and_integrate(per_ray[r]);
      const std::size_t p = tile[r];
      out.rgb[p * 3 + 0] = ri.color.x;
      out.rgb[p * 3 + 1] = ri.color.y;
      out.rgb[p * 3 + 2] = ri.color.z;
      out.transmittance[p] = ri.transmittance;
    }
  }
  return out;
}

Image render_background(const SceneState& scene, const RenderConfig& config) {
  const auto rays = cast_rays(scene.camera);
  Image out = Image::blank(scene.camera.size);
  const detail::BackgroundFieldEval field(scene, config);
  const auto tiles = detail::make_tiles(scene.camera.size, config.tile_size);
  const auto ntiles = static_cast<std::ptrdiff_t>(tiles.size());
#pragma omp parallel for schedule(dynamic) num_threads(team_size())
  for (std::ptrdiff_t t = 0; t < ntiles; ++t)
    detail::shade_background(field, rays, tiles[t], config, out);
  return out;
}

RenderComponents render_components(const SceneState& scene, const RenderConfig& config) {
  validate_scene(scene, config);
  const int s = scene.camera.size;
  ForegroundBuffers fg = render_foreground(scene, config, s * config.ssaa);
  if (config.ssaa > 1) fg = downsample_foreground(fg, config.ssaa);
  RenderComponents out;
  out.foreground = Image::blank(s);
  out.foreground.rgb = std::move(fg.rgb);
  out.transmittance = std::move(fg.transmittance);
  out.background = render_background(scene, config);
  return out;
}

Image render_scene(const SceneState& scene, const RenderConfig& config) {
  const RenderComponents c = render_components(scene, config);
  Image img = composite(c.foreground, c.transmittance, c.background);
  for (double v : img.rgb)
    if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, "render produced non-finite pixel");
  return img;
}

Image render_ssaa(const SceneState& scene, RenderConfig config) {
  config.ssaa = 2;
  return render_scene(scene, config);
}

}  // namespace disco
