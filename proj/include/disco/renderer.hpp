#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "disco/camera.hpp"
#include "disco/fields.hpp"
#include "disco/layout.hpp"

namespace disco {

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit length
};

/// A world ray expressed in a box's canonical frame. The direction is the
/// world direction mapped by diag(1/s) R^T and is NOT renormalised, so the
/// ray parameter t is the world-space depth along the original unit ray.
struct CanonicalRay {
  Vec3 origin;
  Vec3 direction;
};

CanonicalRay to_canonical(const BoxTransform& box, const Ray& ray);

/// One ray per pixel center, row-major (index = v * S + u).
/// Throws DegenerateBasis when up is parallel to the view direction.
std::vector<Ray> cast_rays(const Camera& camera);

struct Segment {
  double near = 0.0;
  double far = 0.0;
};

inline constexpr double kDefaultNearEpsilon = 1e-4;

/// Slab test against [-0.5, 0.5]^3. Depths are parameters of the canonical
/// ray, i.e. world depths (see CanonicalRay). Returns nullopt on a miss or
/// when the segment lies entirely behind the origin; near is clamped to
/// near_epsilon when the origin is inside the box.
std::optional<Segment> ray_aabb_canonical(const CanonicalRay& ray,
                                          double near_epsilon = kDefaultNearEpsilon);

/// Hit flags and segment depths for every (box, ray) pair, box-major.
struct IntersectionMatrix {
  std::size_t num_boxes = 0;
  std::size_t num_rays = 0;
  std::vector<std::uint8_t> hit;
  std::vector<double> near;  // valid where hit
  std::vector<double> far;

  std::size_t index(std::size_t box, std::size_t ray) const { return box * num_rays + ray; }
  bool hits(std::size_t box, std::size_t ray) const { return hit[index(box, ray)] != 0; }
  Segment segment(std::size_t box, std::size_t ray) const {
    return {near[index(box, ray)], far[index(box, ray)]};
  }
  bool row_empty(std::size_t box) const;
  bool column_empty(std::size_t ray) const;
};

IntersectionMatrix build_intersection_matrix(std::span<const Ray> rays, const Layout& layout,
                                             double near_epsilon = kDefaultNearEpsilon);

struct ObjectSamples {
  std::vector<Vec3> world;
  std::vector<Vec3> canonical;
  std::vector<double> depths;
  double delta = 0.0;
};

/// d_k = near + (k + 0.5) (far - near) / N_d with a uniform delta for every
/// sample. Throws InvalidArgument unless near < far and N_d >= 1.
ObjectSamples sample_object_points(const Ray& ray, const BoxTransform& box, Segment segment,
                                   int samples);

/// Writes the same sample positions without allocating; used by the renderers.
void sample_canonical_into(const CanonicalRay& ray, Segment segment, int samples,
                           Vec3* canonical, double* depths);

struct RaySample {
  double depth = 0.0;
  double delta = 0.0;
  Vec3 color;
  double sigma = 0.0;
};

struct RayIntegral {
  Vec3 color;
  double transmittance = 1.0;
};

/// Front-to-back compositing of depth-sorted samples. Throws UnsortedInput
/// if depths decrease.
RayIntegral integrate_ray(std::span<const RaySample> samples);

struct BoundedBackground {
  double near = 0.5;
  double far = 4.0;
};

struct UnboundedBackground {
  double start_depth = 2.0;  // R
};

using BackgroundMode = std::variant<BoundedBackground, UnboundedBackground>;

inline constexpr int kBoundedInputDims = 3;
inline constexpr int kUnboundedInputDims = 4;
int background_input_dims(const BackgroundMode& mode);

struct RenderConfig {
  int samples_per_box = 16;     // N_d
  int background_samples = 16;  // N_bg
  BackgroundMode background = BoundedBackground{};
  int ssaa = 1;
  int tile_size = 16;
};

void validate_render_config(const RenderConfig& config);

/// The final inverse-depth bin of the unbounded background reaches infinite
/// depth; its delta is capped at this value.
inline constexpr double kFarDelta = 1e10;

struct BackgroundSamples {
  std::vector<double> depths;
  std::vector<double> deltas;
  std::vector<Vec3> world;
  /// Model inputs, one row per sample: world point (bounded) or
  /// (x/r, y/r, z/r, 1/r) (unbounded).
  Matrix inputs;
};

BackgroundSamples sample_background(const Ray& ray, const RenderConfig& config);

/// Inverse depths used by the unbounded mode: bin midpoints of [1/R, 0).
std::vector<double> unbounded_inverse_depths(double start_depth, int samples);

struct SceneState {
  Layout layout;
  LatentSet latents;
  std::shared_ptr<const ObjectFieldModel> object_model;
  std::shared_ptr<const BackgroundFieldModel> background_model;
  /// When non-empty (one per box) these replace the neural object field.
  std::vector<AnalyticFieldSpec> analytic_objects;
  std::optional<AnalyticFieldSpec> analytic_background;
  Camera camera;
};

/// Throws Validation / ShapeMismatch on inconsistent scenes.
void validate_scene(const SceneState& scene, const RenderConfig& config);

/// Square image with RGB in [0, 1] and an optional alpha plane.
struct Image {
  int size = 0;
  std::vector<double> rgb;    // size * size * 3, row-major
  std::vector<double> alpha;  // size * size or empty

  static Image blank(int size, double value = 0.0);
  Vec3 pixel(int u, int v) const;
  void set_pixel(int u, int v, Vec3 c);
  friend bool operator==(const Image&, const Image&) = default;
};

struct RenderComponents {
  Image foreground;                   // F
  std::vector<double> transmittance;  // T, size * size
  Image background;                   // N
};

/// I = F + T * N per pixel and channel, clamped to [0, 1]; alpha = 1 - T.
/// Throws DimensionMismatch.
Image composite(const Image& foreground, std::span<const double> transmittance,
                const Image& background);

/// Pruned, tile-parallel pipeline. Honors config.ssaa (1 or 2).
RenderComponents render_components(const SceneState& scene, const RenderConfig& config);
Image render_scene(const SceneState& scene, const RenderConfig& config);
/// render_scene with ssaa forced to 2.
Image render_ssaa(const SceneState& scene, RenderConfig config);

/// Serial reference without intersection pruning: every object field is
/// evaluated at N_d samples for every (box, ray) pair and misses are masked
/// to zero density. Produces the same image as render_scene.
RenderComponents render_components_naive(const SceneState& scene, const RenderConfig& config);
Image render_scene_naive(const SceneState& scene, const RenderConfig& config);

/// Object-only renders at an arbitrary resolution (used for SSAA and its
/// reference). Returns F (size^2 x 3) and T (size^2).
struct ForegroundBuffers {
  int size = 0;
  std::vector<double> rgb;
  std::vector<double> transmittance;
};
ForegroundBuffers render_foreground(const SceneState& scene, const RenderConfig& config,
                                    int size);
Image render_background(const SceneState& scene, const RenderConfig& config);
/// Box-filters a foreground rendered at factor * S down to S.
ForegroundBuffers downsample_foreground(const ForegroundBuffers& high, int factor);

/// Caps the OpenMP team used by render_scene (0 restores the default).
void set_render_threads(int threads);
int render_threads();

}  // namespace disco
