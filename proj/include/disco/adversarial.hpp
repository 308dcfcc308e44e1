#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "disco/autodiff.hpp"
#include "disco/renderer.hpp"
#include "disco/tape_render.hpp"

namespace disco {

// ---------------------------------------------------------------------------
// Object patches

struct Patch {
  std::size_t box = 0;
  Rect2D rect;
  Image image;  // P x P
};

using PatchSet = std::vector<Patch>;

/// Bilinear resampling of the rect onto a P x P grid. Patch pixel centers map
/// to evenly spaced points inside the rect; samples are clamped at the image
/// border. Row j of the result is a weighted sum of source pixels.
ad::SparseRows patch_weights(const Rect2D& rect, int image_size, int patch_size);

/// Crops every box that projects in front of the camera to a non-degenerate
/// rect; other boxes are skipped.
PatchSet extract_patches(const Image& image, const Layout& layout, const Camera& camera,
                         int patch_size);

/// Rects (and their box indices) that extract_patches would use.
std::vector<std::pair<std::size_t, Rect2D>> patch_rects(const Layout& layout,
                                                        const Camera& camera);

// ---------------------------------------------------------------------------
// Losses

struct LossWeights {
  double lambda_obj = 1.0;   // object discriminator weight
  double lambda_r1_scene = 1.0;
  double lambda_r1_obj = 1.0;
};

/// mean f(-ds_fake) + lambda_obj * mean f(-dobj_fake); an empty patch set
/// adds nothing. Throws NonFinite on NaN logits.
double generator_loss(std::span<const double> ds_fake, std::span<const double> dobj_fake,
                      const LossWeights& w);

struct DiscriminatorLossTerms {
  double scene_real = 0.0;  // mean f(-D_s(I_r))
  double scene_fake = 0.0;  // mean f(D_s(I_f))
  double obj_real = 0.0;
  double obj_fake = 0.0;
  double r1_scene = 0.0;  // mean |grad|^2
  double r1_obj = 0.0;
  double total = 0.0;
};

/// grad_s / grad_obj hold one input-gradient vector per real sample.
DiscriminatorLossTerms discriminator_loss(std::span<const double> ds_real,
                                          std::span<const double> ds_fake,
                                          std::span<const double> dobj_real,
                                          std::span<const double> dobj_fake,
                                          std::span<const std::vector<double>> grad_s,
                                          std::span<const std::vector<double>> grad_obj,
                                          const LossWeights& w);

/// Tape versions. Logit vars are n x 1; pass nullopt for an empty set.
/// Penalty vars are per-sample squared gradient norms (n x 1).
ad::Var generator_loss_tape(ad::Tape& tape, ad::Var ds_fake, std::optional<ad::Var> dobj_fake,
                            const LossWeights& w);
ad::Var discriminator_loss_tape(ad::Tape& tape, ad::Var ds_real, ad::Var ds_fake,
                                std::optional<ad::Var> dobj_real,
                                std::optional<ad::Var> dobj_fake, ad::Var r1_scene,
                                std::optional<ad::Var> r1_obj, const LossWeights& w);

// ---------------------------------------------------------------------------
// Discriminator

/// Dense SiLU network: input -> hidden x depth -> 1 logit.
struct Discriminator {
  std::vector<DenseLayer> layers;

  static Discriminator random(std::size_t input_dim, std::uint64_t seed, int hidden = 128,
                              int depth = 3);
  static Discriminator zeros(std::size_t input_dim, int hidden = 128, int depth = 3);
  std::size_t input_dim() const { return layers.front().in_dim(); }

  /// inputs: n x input_dim, returns n logits.
  std::vector<double> logits(const Matrix& inputs) const;
  /// Gradient of each logit with respect to its own input row.
  Matrix input_gradients(const Matrix& inputs) const;
};

struct DiscriminatorTape {
  ad::Var logits;                // n x 1
  std::vector<ad::Var> pre;      // pre-activations of the hidden layers
};

DiscriminatorTape discriminator_tape(const LayerVars& layers, ad::Var inputs);
/// d logit_i / d input_i on the tape (n x input_dim), differentiable with
/// respect to the weights for the R1 penalty.
ad::Var discriminator_input_gradient_tape(const LayerVars& layers, const DiscriminatorTape& fwd);
/// Per-row squared norm (n x 1).
ad::Var row_squared_norm(ad::Var a);

/// Flattens an image (or patch) into one discriminator input row.
std::vector<double> flatten(const Image& image);
Matrix stack_rows(std::span<const std::vector<double>> rows);

// ---------------------------------------------------------------------------
// Optimisation

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::uint64_t step = 0;
};

/// One Adam update in place. params and grads must line up. With
/// round_to_float the updated values are rounded to float so they survive
/// the 32-bit weights file unchanged.
void adam_step(std::span<Matrix*> params, std::span<const Matrix> grads, AdamState& state,
               const AdamConfig& cfg, bool round_to_float);

/// Parameter pointers of a layer list (weight, bias, weight, bias, ...).
std::vector<Matrix*> layer_params(std::span<DenseLayer> layers);
/// Gradient list in layer_params order.
std::vector<Matrix> flatten_layer_grads(std::span<const DenseLayer> grads);

double global_norm(std::span<const Matrix> grads);

}  // namespace disco
