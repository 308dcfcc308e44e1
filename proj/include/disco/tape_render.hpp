#pragma once

#include <optional>
#include <span>
#include <vector>

#include "disco/autodiff.hpp"
#include "disco/renderer.hpp"

namespace disco {

/// Tape leaves for a model's layers, in model storage order.
struct LayerVars {
  std::vector<ad::Var> weight;
  std::vector<ad::Var> bias;

  bool empty() const { return weight.empty(); }
};

LayerVars bind_layers(ad::Tape& tape, std::span<const DenseLayer> layers);
/// Pulls the gradients of bound layers out of a backward() result.
std::vector<DenseLayer> layer_gradients(const LayerVars& vars, const std::vector<Matrix>& grads);

struct FieldVars {
  ad::Var color;  // n x 3
  ad::Var sigma;  // n x 1
};

/// Object field on the tape. styles holds one 1 x style_dim var per layer.
FieldVars object_field_tape(ad::Tape& tape, const ObjectFieldConfig& config,
                            const LayerVars& layers, std::span<const ad::Var> styles,
                            std::span<const Vec3> canonical_points);

/// concat(z, gamma(t), gamma(s)) with z on the tape.
ad::Var object_style_tape(ad::Tape& tape, ad::Var z, Vec3 translation, Vec3 scale);

FieldVars background_field_tape(ad::Tape& tape, const BackgroundFieldConfig& config,
                                const LayerVars& layers, ad::Var z_bg, const Matrix& inputs,
                                std::span<const Vec3> directions);

/// Everything in a scene that gradients can flow into. Geometry, camera and
/// analytic fields stay constant.
struct TapeScene {
  const SceneState* scene = nullptr;
  LayerVars object;
  LayerVars background;
  std::vector<ad::Var> z;  // 1 x latent_dim each
  std::vector<std::optional<ad::Var>> donor;
  std::optional<ad::Var> z_background;
};

/// Binds every model weight and latent of the scene as tape leaves.
TapeScene bind_scene(ad::Tape& tape, const SceneState& scene);

struct TapeImage {
  int size = 0;
  ad::Var rgb;            // S^2 x 3, row-major pixels
  ad::Var foreground;     // S^2 x 3
  ad::Var transmittance;  // S^2 x 1
  ad::Var background;     // S^2 x 3
};

/// Differentiable counterpart of render_scene (same sample placement, same
/// depth order). Transmittance is formed as exp(-cumsum(sigma delta)), so
/// values agree with the plain renderer to rounding; the final [0, 1] clamp
/// is omitted because F + T N never leaves that range.
TapeImage render_scene_tape(ad::Tape& tape, const TapeScene& scene, const RenderConfig& config);

/// Box-filter weights mapping a (factor S)^2 image to S^2 pixels.
ad::SparseRows box_filter_weights(int low_size, int factor);

}  // namespace disco
