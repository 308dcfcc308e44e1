#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

#include "disco/renderer.hpp"

namespace disco::testing {

inline Camera front_camera(int size, double distance = 4.0) {
  Camera c;
  c.position = {0.0, 0.0, -distance};
  c.target = {0.0, 0.0, 0.0};
  c.size = size;
  return c;
}

inline Camera elevated_camera(int size) {
  Camera c;
  c.position = {0.0, 2.0, -5.0};
  c.target = {0.0, 0.0, 0.0};
  c.fov_y = 0.8;
  c.size = size;
  return c;
}

inline Vec3 palette(std::size_t i) {
  static const Vec3 colors[] = {{0.9, 0.2, 0.2}, {0.2, 0.8, 0.3}, {0.2, 0.3, 0.9},
                                {0.9, 0.8, 0.1}, {0.7, 0.2, 0.8}, {0.1, 0.8, 0.8}};
  return colors[i % 6];
}

/// Coloured constant boxes over a height gradient.
inline SceneState analytic_scene(const Layout& layout, const Camera& camera) {
  SceneState s;
  s.layout = layout;
  s.camera = camera;
  for (std::size_t i = 0; i < layout.size(); ++i)
    s.analytic_objects.push_back(ConstantBox{10.0, palette(i)});
  s.analytic_background = GradientBackground{};
  return s;
}

inline ObjectFieldConfig small_object_config() { return {3, 16, 8, 4}; }
inline BackgroundFieldConfig small_background_config(int input_dims = 3) {
  return {2, 16, 8, 3, input_dims};
}

inline SceneState neural_scene(const Layout& layout, const Camera& camera, std::uint64_t seed,
                               ObjectFieldConfig oc = small_object_config(),
                               BackgroundFieldConfig bc = small_background_config()) {
  SceneState s;
  s.layout = layout;
  s.camera = camera;
  s.object_model = std::make_shared<ObjectFieldModel>(ObjectFieldModel::random(oc, seed));
  s.background_model =
      std::make_shared<BackgroundFieldModel>(BackgroundFieldModel::random(bc, seed + 1));
  for (std::size_t i = 0; i < layout.size(); ++i)
    s.latents.objects.push_back({sample_latent(seed * 31 + i, oc.latent_dim), {}, 0});
  s.latents.background = sample_latent(seed * 17 + 5, bc.latent_dim);
  return s;
}

inline Box3D cube(Vec3 t, double side = 1.0, Vec3 euler = {}) {
  return {euler, t, {side, side, side}};
}

inline double max_abs_diff(const Image& a, const Image& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) m = std::max(m, std::abs(a.rgb[i] - b.rgb[i]));
  return m;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

}  // namespace disco::testing
