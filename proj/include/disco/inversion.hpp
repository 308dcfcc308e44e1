#pragma once

#include <cstdint>
#include <vector>

#include "disco/adversarial.hpp"

namespace disco {

struct InversionConfig {
  int steps = 300;
  AdamConfig optimizer{0.05, 0.9, 0.999, 1e-8};
  /// Stop once the loss drops to this value.
  double target_loss = 0.0;
};

struct InversionResult {
  LatentSet latents;          // best latents seen
  std::vector<double> curve;  // best-so-far loss, one entry per evaluation
  double best_loss = 0.0;
  int steps_taken = 0;
};

/// Photometric MSE (mean over pixels and channels).
double image_mse(const Image& a, const Image& b);

/// Gradient descent on the latents of `initial` (layout, models and camera
/// fixed) so that render_scene matches the target. Returns immediately when
/// the initial latents already reproduce the target exactly.
InversionResult invert_latents(const Image& target, const SceneState& initial,
                               const RenderConfig& config, const InversionConfig& inv);

}  // namespace disco
