#include "disco/inversion.hpp"

#include <cmath>

#include "disco/error.hpp"

namespace disco {

double image_mse(const Image& a, const Image& b) {
  if (a.size != b.size || a.rgb.size() != b.rgb.size())
    throw Error(ErrorKind::DimensionMismatch, "images differ in size");
  double s = 0.0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) {
    const double d = a.rgb[i] - b.rgb[i];
    s += d * d;
  }
  return s / static_cast<double>(a.rgb.size());
}

namespace {

std::vector<Matrix> latent_params(const LatentSet& l) {
  std::vector<Matrix> out;
  for (const auto& o : l.objects) {
    out.push_back(Matrix::row_vector(o.z));
    if (o.donor) out.push_back(Matrix::row_vector(*o.donor));
  }
  out.push_back(Matrix::row_vector(l.background));
  return out;
}

void store_latents(LatentSet& l, const std::vector<Matrix>& params) {
  std::size_t k = 0;
  for (auto& o : l.objects) {
    o.z.assign(params[k].values().begin(), params[k].values().end());
    ++k;
    if (o.donor) {
      o.donor->assign(params[k].values().begin(), params[k].values().end());
      ++k;
    }
  }
  l.background.assign(params[k].values().begin(), params[k].values().end());
}

}  // namespace

InversionResult invert_latents(const Image& target, const SceneState& initial,
                               const RenderConfig& config, const InversionConfig& inv) {
  if (target.size != initial.camera.size)
    throw Error(ErrorKind::DimensionMismatch, "target size differs from the camera");
  if (!initial.analytic_objects.empty() || initial.analytic_background)
    throw Error(ErrorKind::Validation, "inversion needs neural fields");
  validate_scene(initial, config);

  SceneState scene = initial;
  InversionResult result;
  result.latents = scene.latents;
  result.best_loss = image_mse(render_scene(scene, config), target);
  result.curve.push_back(result.best_loss);
  if (!std::isfinite(result.best_loss)) throw Error(ErrorKind::NonFinite, "initial loss");

  std::vector<Matrix> params = latent_params(scene.latents);
  AdamState state;
  const Matrix target_rgb(target.rgb.size() / 3, 3, target.rgb);
  for (int step = 0; step < inv.steps && result.best_loss > inv.target_loss; ++step) {
    ad::Tape tape;
    TapeScene ts = bind_scene(tape, scene);
    const TapeImage img = render_scene_tape(tape, ts, config);
    const ad::Var loss =
        ad::mean_all(ad::square(ad::sub(img.rgb, tape.constant(target_rgb))));
    const auto grads = tape.backward(loss);
    std::vector<Matrix> g;
    for (std::size_t i = 0; i < ts.z.size(); ++i) {
      g.push_back(grads[ts.z[i].id]);
      if (ts.donor[i]) g.push_back(grads[ts.donor[i]->id]);
    }
    g.push_back(grads[ts.z_background->id]);
    std::vector<Matrix*> ptrs;
    for (auto& p : params) ptrs.push_back(&p);
    adam_step(ptrs, g, state, inv.optimizer, false);
    store_latents(scene.latents, params);
    result.steps_taken = step + 1;

    const double l = image_mse(render_scene(scene, config), target);
    if (!std::isfinite(l)) throw Error(ErrorKind::NonFinite, "inversion loss");
    if (l < result.best_loss) {
      result.best_loss = l;
      result.latents = scene.latents;
    }
    result.curve.push_back(result.best_loss);
  }
  return result;
}

}  // namespace disco
