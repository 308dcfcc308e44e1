#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "disco/error.hpp"
#include "render_internal.hpp"

namespace disco {

CanonicalRay to_canonical(const BoxTransform& box, const Ray& ray) {
  return {box.to_canonical(ray.origin), box.direction_to_canonical(ray.direction)};
}

std::vector<Ray> cast_rays(const Camera& camera) {
  const CameraBasis basis = camera_basis(camera);
  const int s = camera.size;
  std::vector<Ray> rays(static_cast<std::size_t>(s) * s);
  for (int v = 0; v < s; ++v) {
    const double y = (1.0 - 2.0 * (v + 0.5) / s) * basis.tan_half_fov;
    for (int u = 0; u < s; ++u) {
      const double x = (2.0 * (u + 0.5) / s - 1.0) * basis.tan_half_fov;
      const Vec3 dir = basis.forward + basis.right * x + basis.up * y;
      rays[static_cast<std::size_t>(v) * s + u] = {camera.position, normalized(dir)};
    }
  }
  return rays;
}

std::optional<Segment> ray_aabb_canonical(const CanonicalRay& ray, double near_epsilon) {
  double t_min = -std::numeric_limits<double>::infinity();
  double t_max = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 3; ++axis) {
    const double o = ray.origin[axis];
    const double d = ray.direction[axis];
    if (d == 0.0) {
      if (o < -kCanonicalHalfExtent || o > kCanonicalHalfExtent) return std::nullopt;
      continue;
    }
    const double inv = 1.0 / d;
    double t0 = (-kCanonicalHalfExtent - o) * inv;
    double t1 = (kCanonicalHalfExtent - o) * inv;
    if (t0 > t1) std::swap(t0, t1);
    t_min = std::max(t_min, t0);
    t_max = std::min(t_max, t1);
  }
  if (!(t_max > t_min) || !(t_max > near_epsilon)) return std::nullopt;
  return Segment{std::max(t_min, near_epsilon), t_max};
}

bool IntersectionMatrix::row_empty(std::size_t box) const {
  const auto first = hit.begin() + static_cast<std::ptrdiff_t>(box * num_rays);
  return std::none_of(first, first + static_cast<std::ptrdiff_t>(num_rays),
                      [](std::uint8_t h) { return h != 0; });
}

bool IntersectionMatrix::column_empty(std::size_t ray) const {
  for (std::size_t b = 0; b < num_boxes; ++b)
    if (hits(b, ray)) return false;
  return true;
}

IntersectionMatrix build_intersection_matrix(std::span<const Ray> rays, const Layout& layout,
                                             double near_epsilon) {
  IntersectionMatrix m;
  m.num_boxes = layout.size();
  m.num_rays = rays.size();
  m.hit.assign(m.num_boxes * m.num_rays, 0);
  m.near.assign(m.hit.size(), 0.0);
  m.far.assign(m.hit.size(), 0.0);
  for (std::size_t b = 0; b < m.num_boxes; ++b) {
    const BoxTransform tf(layout.boxes[b]);
    const auto n = static_cast<std::ptrdiff_t>(rays.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < n; ++j) {
      const auto seg = ray_aabb_canonical(to_canonical(tf, rays[j]), near_epsilon);
      if (!seg) continue;
      const std::size_t idx = m.index(b, static_cast<std::size_t>(j));
      m.hit[idx] = 1;
      m.near[idx] = seg->near;
      m.far[idx] = seg->far;
    }
  }
  return m;
}

void sample_canonical_into(const CanonicalRay& ray, Segment segment, int samples,
                           Vec3* canonical, double* depths) {
  const double step = (segment.far - segment.near) / samples;
  for (int k = 0; k < samples; ++k) {
    const double d = segment.near + (k + 0.5) * step;
    depths[k] = d;
    canonical[k] = ray.origin + ray.direction * d;
  }
}

ObjectSamples sample_object_points(const Ray& ray, const BoxTransform& box, Segment segment,
                                   int samples) {
  if (samples < 1) throw Error(ErrorKind::InvalidArgument, "need at least one sample");
  if (!(segment.near < segment.far))
    throw Error(ErrorKind::InvalidArgument, "segment near must be below far");
  ObjectSamples out;
  out.canonical.resize(samples);
  out.depths.resize(samples);
  sample_canonical_into(to_canonical(box, ray), segment, samples, out.canonical.data(),
                        out.depths.data());
  out.delta = (segment.far - segment.near) / samples;
  for (double d : out.depths) out.world.push_back(ray.origin + ray.direction * d);
  return out;
}

RayIntegral integrate_ray(std::span<const RaySample> samples) {
  RayIntegral out{{0.0, 0.0, 0.0}, 1.0};
  double prev = -std::numeric_limits<double>::infinity();
  for (const auto& s : samples) {
    if (s.depth < prev)
      throw Error(ErrorKind::UnsortedInput, "sample depths must be non-decreasing");
    prev = s.depth;
    const double alpha = 1.0 - std::exp(-s.sigma * s.delta);
    const double w = out.transmittance * alpha;
    out.color = out.color + s.color * w;
    out.transmittance *= 1.0 - alpha;
  }
  return out;
}

int background_input_dims(const BackgroundMode& mode) {
  return std::holds_alternative<UnboundedBackground>(mode) ? kUnboundedInputDims
                                                           : kBoundedInputDims;
}

void validate_render_config(const RenderConfig& config) {
  if (config.samples_per_box < 2)
    throw Error(ErrorKind::Validation, "samples per box must be >= 2");
  if (config.background_samples < 2)
    throw Error(ErrorKind::Validation, "background samples must be >= 2");
  if (config.ssaa != 1 && config.ssaa != 2) throw Error(ErrorKind::Validation, "ssaa must be 1 or 2");
  if (config.tile_size < 1) throw Error(ErrorKind::Validation, "tile size must be positive");
  if (const auto* b = std::get_if<BoundedBackground>(&config.background)) {
    if (!(b->near >= 0.0 && b->far > b->near))
      throw Error(ErrorKind::Validation, "bounded background needs 0 <= near < far");
  } else {
    const auto& u = std::get<UnboundedBackground>(config.background);
    if (!(u.start_depth > 0.0))
      throw Error(ErrorKind::Validation, "unbounded background start depth must be > 0");
  }
}

std::vector<double> unbounded_inverse_depths(double start_depth, int samples) {
  std::vector<double> inv(static_cast<std::size_t>(samples));
  const double top = 1.0 / start_depth;
  for (int k = 0; k < samples; ++k) inv[k] = top * (1.0 - (k + 0.5) / samples);
  return inv;
}

BackgroundSamples sample_background(const Ray& ray, const RenderConfig& config) {
  const int n = config.background_samples;
  BackgroundSamples out;
  out.depths.resize(n);
  out.deltas.resize(n);
  out.world.resize(n);
  if (const auto* b = std::get_if<BoundedBackground>(&config.background)) {
    const double step = (b->far - b->near) / n;
    out.inputs = Matrix(n, kBoundedInputDims);
    for (int k = 0; k < n; ++k) {
      const double d = b->near + (k + 0.5) * step;
      const Vec3 p = ray.origin + ray.direction * d;
      out.depths[k] = d;
      out.deltas[k] = step;
      out.world[k] = p;
      out.inputs(k, 0) = p.x;
      out.inputs(k, 1) = p.y;
      out.inputs(k, 2) = p.z;
    }
    return out;
  }
  const double start = std::get<UnboundedBackground>(config.background).start_depth;
  const auto inv = unbounded_inverse_depths(start, n);
  const double top = 1.0 / start;
  out.inputs = Matrix(n, kUnboundedInputDims);
  for (int k = 0; k < n; ++k) {
    const double d = 1.0 / inv[k];
    const double inv_near = top * (1.0 - static_cast<double>(k) / n);
    const double inv_far = top * (1.0 - static_cast<double>(k + 1) / n);
    const double delta = inv_far > 0.0 ? 1.0 / inv_far - 1.0 / inv_near : kFarDelta;
    const Vec3 p = ray.origin + ray.direction * d;
    const auto sp = inverse_sphere(p);
    out.depths[k] = d;
    out.deltas[k] = std::min(delta, kFarDelta);
    out.world[k] = p;
    out.inputs(k, 0) = sp.direction.x;
    out.inputs(k, 1) = sp.direction.y;
    out.inputs(k, 2) = sp.direction.z;
    out.inputs(k, 3) = sp.inv_r;
  }
  return out;
}

void validate_scene(const SceneState& scene, const RenderConfig& config) {
  validate_render_config(config);
  validate_layout(scene.layout);
  camera_basis(scene.camera);  // also rejects a degenerate view
  const std::size_t n = scene.layout.size();
  if (!scene.analytic_objects.empty()) {
    if (scene.analytic_objects.size() != n)
      throw Error(ErrorKind::Validation, "analytic object count " +
                                             std::to_string(scene.analytic_objects.size()) +
                                             " does not match " + std::to_string(n) + " boxes");
    for (const auto& spec : scene.analytic_objects) validate_analytic(spec);
  } else if (n > 0) {
    if (!scene.object_model) throw Error(ErrorKind::Validation, "scene has no object model");
    if (scene.latents.objects.size() != n) {
      const std::size_t first_bad = std::min(scene.latents.objects.size(), n);
      throw Error(ErrorKind::Validation,
                  "latent count " + std::to_string(scene.latents.objects.size()) +
                      " does not match layout size " + std::to_string(n) + " (box " +
                      std::to_string(first_bad) + ")");
    }
    const auto dims = static_cast<std::size_t>(scene.object_model->config().latent_dim);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& l = scene.latents.objects[i];
      if (l.z.size() != dims || (l.donor && l.donor->size() != dims))
        throw Error(ErrorKind::ShapeMismatch, "latent of box " + std::to_string(i) +
                                                  " has wrong dimension");
      if (l.donor && (l.split < 0 || l.split > scene.object_model->config().depth))
        throw Error(ErrorKind::IndexOutOfRange, "style split of box " + std::to_string(i));
    }
  }
  if (scene.analytic_background) {
    validate_analytic(*scene.analytic_background);
  } else {
    if (!scene.background_model) throw Error(ErrorKind::Validation, "scene has no background");
    if (scene.background_model->config().input_dims != background_input_dims(config.background))
      throw Error(ErrorKind::ShapeMismatch, "background model input does not match mode");
    if (scene.latents.background.size() !=
        static_cast<std::size_t>(scene.background_model->config().latent_dim))
      throw Error(ErrorKind::ShapeMismatch, "background latent has wrong dimension");
  }
}

Image Image::blank(int size, double value) {
  Image img;
  img.size = size;
  img.rgb.assign(static_cast<std::size_t>(size) * size * 3, value);
  return img;
}

Vec3 Image::pixel(int u, int v) const {
  const std::size_t i = (static_cast<std::size_t>(v) * size + u) * 3;
  return {rgb[i], rgb[i + 1], rgb[i + 2]};
}

void Image::set_pixel(int u, int v, Vec3 c) {
  const std::size_t i = (static_cast<std::size_t>(v) * size + u) * 3;
  rgb[i] = c.x;
  rgb[i + 1] = c.y;
  rgb[i + 2] = c.z;
}

Image composite(const Image& foreground, std::span<const double> transmittance,
                const Image& background) {
  const std::size_t pixels = static_cast<std::size_t>(foreground.size) * foreground.size;
  if (foreground.size != background.size || transmittance.size() != pixels ||
      foreground.rgb.size() != pixels * 3 || background.rgb.size() != pixels * 3)
    throw Error(ErrorKind::DimensionMismatch, "composite inputs differ in size");
  Image out = Image::blank(foreground.size);
  out.alpha.resize(pixels);
  for (std::size_t p = 0; p < pixels; ++p) {
    const double t = transmittance[p];
    for (int c = 0; c < 3; ++c) {
      const std::size_t i = p * 3 + c;
      out.rgb[i] = std::clamp(foreground.rgb[i] + t * background.rgb[i], 0.0, 1.0);
    }
    out.alpha[p] = std::clamp(1.0 - t, 0.0, 1.0);
  }
  return out;
}

ForegroundBuffers downsample_foreground(const ForegroundBuffers& high, int factor) {
  if (factor < 1 || high.size % factor != 0)
    throw Error(ErrorKind::DimensionMismatch, "foreground size not divisible by factor");
  ForegroundBuffers low;
  low.size = high.size / factor;
  const auto s = static_cast<std::size_t>(low.size);
  low.rgb.assign(s * s * 3, 0.0);
  low.transmittance.assign(s * s, 0.0);
  const double norm = 1.0 / (factor * factor);
  for (std::size_t v = 0; v < s; ++v)
    for (std::size_t u = 0; u < s; ++u) {
      double acc[4] = {0, 0, 0, 0};
      for (int dv = 0; dv < factor; ++dv)
        for (int du = 0; du < factor; ++du) {
          const std::size_t hp = (v * factor + dv) * high.size + (u * factor + du);
          for (int c = 0; c < 3; ++c) acc[c] += high.rgb[hp * 3 + c];
          acc[3] += high.transmittance[hp];
        }
      const std::size_t lp = v * s + u;
      for (int c = 0; c < 3; ++c) low.rgb[lp * 3 + c] = acc[c] * norm;
      low.transmittance[lp] = acc[3] * norm;
    }
  return low;
}

namespace detail {

ObjectFieldSet::ObjectFieldSet(const SceneState& scene) : scene_(&scene) {
  for (std::size_t b = 0; b < scene.layout.size(); ++b) {
    const Box3D& box = scene.layout.boxes[b];
    transforms_.emplace_back(box);
    if (scene.analytic_objects.empty()) {
      const auto styles = object_layer_styles(scene.object_model->config(),
                                              scene.latents.objects[b], box.translation,
                                              box.scale);
      neural_.emplace_back(*scene.object_model, styles);
    }
  }
}

FieldBatch ObjectFieldSet::evaluate(std::size_t box, std::span<const Vec3> canonical) const {
  if (!neural_.empty()) return neural_[box].evaluate(canonical);
  FieldBatch out{Matrix(canonical.size(), 3), Matrix(canonical.size(), 1)};
  for (std::size_t i = 0; i < canonical.size(); ++i) {
    const auto s = eval_analytic_field(scene_->analytic_objects[box], canonical[i]);
    out.color(i, 0) = s.color.x;
    out.color(i, 1) = s.color.y;
    out.color(i, 2) = s.color.z;
    out.sigma(i, 0) = s.sigma;
  }
  return out;
}

BackgroundFieldEval::BackgroundFieldEval(const SceneState& scene, const RenderConfig&)
    : scene_(&scene) {
  if (!scene.analytic_background) neural_.emplace(*scene.background_model, scene.latents.background);
}

FieldBatch BackgroundFieldEval::evaluate(const Matrix& inputs, std::span<const Vec3> world,
                                         std::span<const Vec3> directions) const {
  if (neural_) return neural_->evaluate(inputs, directions);
  FieldBatch out{Matrix(world.size(), 3), Matrix(world.size(), 1)};
  for (std::size_t i = 0; i < world.size(); ++i) {
    const auto s = eval_analytic_field(*scene_->analytic_background, world[i]);
    out.color(i, 0) = s.color.x;
    out.color(i, 1) = s.color.y;
    out.color(i, 2) = s.color.z;
    out.sigma(i, 0) = s.sigma;
  }
  return out;
}

void shade_background(const BackgroundFieldEval& field, std::span<const Ray> rays,
                      std::span<const std::size_t> ray_ids, const RenderConfig& config,
                      Image& out) {
  const auto n = static_cast<std::size_t>(config.background_samples);
  const std::size_t dims = background_input_dims(config.background);
  Matrix inputs(ray_ids.size() * n, dims);
  std::vector<Vec3> world(ray_ids.size() * n);
  std::vector<Vec3> dirs(ray_ids.size() * n);
  std::vector<BackgroundSamples> per_ray;
  per_ray.reserve(ray_ids.size());
  for (std::size_t r = 0; r < ray_ids.size(); ++r) {
    const Ray& ray = rays[ray_ids[r]];
    per_ray.push_back(sample_background(ray, config));
    const auto& bs = per_ray.back();
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t row = r * n + k;
      for (std::size_t c = 0; c < dims; ++c) inputs(row, c) = bs.inputs(k, c);
      world[row] = bs.world[k];
      dirs[row] = ray.direction;
    }
  }
  const FieldBatch fb = field.evaluate(inputs, world, dirs);
  std::vector<RaySample> samples(n);
  for (std::size_t r = 0; r < ray_ids.size(); ++r) {
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t row = r * n + k;
      samples[k] = {per_ray[r].depths[k], per_ray[r].deltas[k],
                    {fb.color(row, 0), fb.color(row, 1), fb.color(row, 2)}, fb.sigma(row, 0)};
    }
    const RayIntegral ri = integrate_ray(samples);
    const std::size_t p = ray_ids[r];
    out.rgb[p * 3 + 0] = ri.color.x;
    out.rgb[p * 3 + 1] = ri.color.y;
    out.rgb[p * 3 + 2] = ri.color.z;
  }
}

RayIntegral sort_and_integrate(std::vector<RaySample>& samples) {
  std::stable_sort(samples.begin(), samples.end(),
                   [](const RaySample& a, const RaySample& b) { return a.depth < b.depth; });
  return integrate_ray(samples);
}

std::vector<std::vector<std::size_t>> make_tiles(int size, int tile_size) {
  std::vector<std::vector<std::size_t>> tiles;
  for (int v0 = 0; v0 < size; v0 += tile_size)
    for (int u0 = 0; u0 < size; u0 += tile_size) {
      std::vector<std::size_t> tile;
      for (int v = v0; v < std::min(size, v0 + tile_size); ++v)
        for (int u = u0; u < std::min(size, u0 + tile_size); ++u)
          tile.push_back(static_cast<std::size_t>(v) * size + u);
      tiles.push_back(std::move(tile));
    }
  return tiles;
}

}  // namespace detail
}  // namespace disco
