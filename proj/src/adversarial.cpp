#include "disco/adversarial.hpp"

#include <cmath>
#include <random>

#include "disco/activations.hpp"
#include "disco/error.hpp"

namespace disco {

using ad::Tape;
using ad::Var;

ad::SparseRows patch_weights(const Rect2D& rect, int image_size, int patch_size) {
  if (patch_size < 1) throw Error(ErrorKind::InvalidArgument, "patch size must be positive");
  const auto s = static_cast<std::size_t>(image_size);
  const auto p = static_cast<std::size_t>(patch_size);
  const double sx = rect.width() / patch_size;
  const double sy = rect.height() / patch_size;
  auto taps = [&](double x) {
    const double fl = std::floor(x);
    const double f = x - fl;
    auto clamp = [&](double i) {
      return static_cast<std::size_t>(std::clamp(i, 0.0, static_cast<double>(image_size - 1)));
    };
    return std::array<std::pair<std::size_t, double>, 2>{{{clamp(fl), 1.0 - f},
                                                          {clamp(fl + 1.0), f}}};
  };
  ad::SparseRows w;
  w.source_rows = s * s;
  w.rows.resize(p * p);
  for (std::size_t j = 0; j < p; ++j) {
    const auto ty = taps(rect.v0 + (j + 0.5) * sy - 0.5);
    for (std::size_t i = 0; i < p; ++i) {
      const auto tx = taps(rect.u0 + (i + 0.5) * sx - 0.5);
      auto& row = w.rows[j * p + i];
      for (const auto& [yv, wy] : ty)
        for (const auto& [xu, wx] : tx) {
          const double wt = wy * wx;
          if (wt == 0.0) continue;
          const std::size_t src = yv * s + xu;
          auto it = std::find_if(row.begin(), row.end(), [&](const auto& e) { return e.first == src; });
          if (it != row.end())
            it->second += wt;
          else
            row.push_back({src, wt});
        }
    }
  }
  return w;
}

std::vector<std::pair<std::size_t, Rect2D>> patch_rects(const Layout& layout,
                                                        const Camera& camera) {
  std::vector<std::pair<std::size_t, Rect2D>> out;
  for (std::size_t b = 0; b < layout.size(); ++b) {
    Rect2D rect;
    try {
      rect = project_box_2d(layout.boxes[b], camera);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::BehindCamera) continue;
      throw;
    }
    if (!rect.degenerate) out.push_back({b, rect});
  }
  return out;
}

PatchSet extract_patches(const Image& image, const Layout& layout, const Camera& camera,
                         int patch_size) {
  if (image.size != camera.size)
    throw Error(ErrorKind::DimensionMismatch, "image was not rendered with this camera");
  PatchSet out;
  for (const auto& [box, rect] : patch_rects(layout, camera)) {
    const auto w = patch_weights(rect, image.size, patch_size);
    Patch patch{box, rect, Image::blank(patch_size)};
    for (std::size_t j = 0; j < w.rows.size(); ++j)
      for (int c = 0; c < 3; ++c) {
        double v = 0.0;
        for (const auto& [src, wt] : w.rows[j]) v += wt * image.rgb[src * 3 + c];
        patch.image.rgb[j * 3 + c] = v;
      }
    out.push_back(std::move(patch));
  }
  return out;
}

namespace {

void check_finite(std::span<const double> xs, const char* what) {
  for (double x : xs)
    if (!std::isfinite(x)) throw Error(ErrorKind::NonFinite, std::string(what) + " is not finite");
}

template <class F>
double mean_of(std::span<const double> xs, F f) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += f(x);
  return s / static_cast<double>(xs.size());
}

double mean_sq_norm(std::span<const std::vector<double>> grads) {
  if (grads.empty()) return 0.0;
  double s = 0.0;
  for (const auto& g : grads) {
    check_finite(g, "gradient");
    double n = 0.0;
    for (double v : g) n += v * v;
    s += n;
  }
  return s / static_cast<double>(grads.size());
}

}  // namespace

double generator_loss(std::span<const double> ds_fake, std::span<const double> dobj_fake,
                      const LossWeights& w) {
  if (ds_fake.empty()) throw Error(ErrorKind::InvalidArgument, "need at least one scene logit");
  check_finite(ds_fake, "scene logit");
  check_finite(dobj_fake, "object logit");
  const double scene = mean_of(ds_fake, [](double x) { return softplus(-x); });
  if (dobj_fake.empty() || w.lambda_obj == 0.0) return scene;
  return scene + w.lambda_obj * mean_of(dobj_fake, [](double x) { return softplus(-x); });
}

DiscriminatorLossTerms discriminator_loss(std::span<const double> ds_real,
                                          std::span<const double> ds_fake,
                                          std::span<const double> dobj_real,
                                          std::span<const double> dobj_fake,
                                          std::span<const std::vector<double>> grad_s,
                                          std::span<const std::vector<double>> grad_obj,
                                          const LossWeights& w) {
  for (auto xs : {ds_real, ds_fake, dobj_real, dobj_fake}) check_finite(xs, "logit");
  DiscriminatorLossTerms t;
  t.scene_real = mean_of(ds_real, [](double x) { return softplus(-x); });
  t.scene_fake = mean_of(ds_fake, [](double x) { return softplus(x); });
  t.obj_real = mean_of(dobj_real, [](double x) { return softplus(-x); });
  t.obj_fake = mean_of(dobj_fake, [](double x) { return softplus(x); });
  t.r1_scene = mean_sq_norm(grad_s);
  t.r1_obj = mean_sq_norm(grad_obj);
  t.total = (t.scene_real + t.scene_fake) + w.lambda_obj * (t.obj_real + t.obj_fake) +
            w.lambda_r1_scene * t.r1_scene + w.lambda_r1_obj * t.r1_obj;
  return t;
}

Var generator_loss_tape(Tape&, Var ds_fake, std::optional<Var> dobj_fake, const LossWeights& w) {
  Var loss = ad::mean_all(ad::softplus(ad::neg(ds_fake)));
  if (dobj_fake && w.lambda_obj != 0.0)
    loss = ad::add(loss, ad::scale(ad::mean_all(ad::softplus(ad::neg(*dobj_fake))), w.lambda_obj));
  return loss;
}

Var discriminator_loss_tape(Tape&, Var ds_real, Var ds_fake, std::optional<Var> dobj_real,
                            std::optional<Var> dobj_fake, Var r1_scene, std::optional<Var> r1_obj,
                            const LossWeights& w) {
  Var loss = ad::add(ad::mean_all(ad::softplus(ad::neg(ds_real))),
                     ad::mean_all(ad::softplus(ds_fake)));
  std::optional<Var> obj;
  if (dobj_real) obj = ad::mean_all(ad::softplus(ad::neg(*dobj_real)));
  if (dobj_fake) {
    const Var f = ad::mean_all(ad::softplus(*dobj_fake));
    obj = obj ? ad::add(*obj, f) : f;
  }
  if (obj) loss = ad::add(loss, ad::scale(*obj, w.lambda_obj));
  loss = ad::add(loss, ad::scale(ad::mean_all(r1_scene), w.lambda_r1_scene));
  if (r1_obj) loss = ad::add(loss, ad::scale(ad::mean_all(*r1_obj), w.lambda_r1_obj));
  return loss;
}

Discriminator Discriminator::random(std::size_t input_dim, std::uint64_t seed, int hidden,
                                    int depth) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  Discriminator d;
  std::size_t in = input_dim;
  for (int l = 0; l <= depth; ++l) {
    const std::size_t out = l == depth ? 1 : static_cast<std::size_t>(hidden);
    DenseLayer layer{Matrix(out, in), Matrix(1, out)};
    const float gain = 1.0f / std::sqrt(static_cast<float>(in));
    for (auto& v : layer.weight.values()) v = static_cast<double>(normal(rng) * gain);
    d.layers.push_back(std::move(layer));
    in = out;
  }
  return d;
}

Discriminator Discriminator::zeros(std::size_t input_dim, int hidden, int depth) {
  Discriminator d;
  std::size_t in = input_dim;
  for (int l = 0; l <= depth; ++l) {
    const std::size_t out = l == depth ? 1 : static_cast<std::size_t>(hidden);
    d.layers.push_back({Matrix(out, in), Matrix(1, out)});
    in = out;
  }
  return d;
}

std::vector<double> Discriminator::logits(const Matrix& inputs) const {
  Matrix h = inputs;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    h = linear_forward(h, layers[l].weight, layers[l].bias);
    for (auto& v : h.values()) v = silu(v);
  }
  const Matrix out = linear_forward(h, layers.back().weight, layers.back().bias);
  return {out.values().begin(), out.values().end()};
}

Matrix Discriminator::input_gradients(const Matrix& inputs) const {
  std::vector<Matrix> pre;
  Matrix h = inputs;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    pre.push_back(linear_forward(h, layers[l].weight, layers[l].bias));
    h = pre.back();
    for (auto& v : h.values()) v = silu(v);
  }
  Matrix g = matmul(Matrix(inputs.rows(), 1, 1.0), layers.back().weight);
  for (std::size_t l = pre.size(); l-- > 0;) {
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= silu_grad(pre[l][i]);
    g = matmul(g, layers[l].weight);
  }
  return g;
}

DiscriminatorTape discriminator_tape(const LayerVars& layers, Var inputs) {
  DiscriminatorTape out;
  Var h = inputs;
  const std::size_t n = layers.weight.size();
  for (std::size_t l = 0; l + 1 < n; ++l) {
    out.pre.push_back(ad::linear(h, layers.weight[l], layers.bias[l]));
    h = ad::silu(out.pre.back());
  }
  out.logits = ad::linear(h, layers.weight[n - 1], layers.bias[n - 1]);
  return out;
}

Var discriminator_input_gradient_tape(const LayerVars& layers, const DiscriminatorTape& fwd) {
  Tape& tape = *fwd.logits.tape;
  const std::size_t n = fwd.logits.rows();
  Var g = ad::matmul(tape.constant(Matrix(n, 1, 1.0)), layers.weight.back());
  for (std::size_t l = fwd.pre.size(); l-- > 0;) {
    const Var a = fwd.pre[l];
    const Var s = ad::sigmoid(a);
    const Var ds = ad::add(s, ad::mul(a, ad::mul(s, ad::add_scalar(ad::neg(s), 1.0))));
    g = ad::matmul(ad::mul(g, ds), layers.weight[l]);
  }
  return g;
}

Var row_squared_norm(Var a) { return ad::sum_rows(ad::square(a)); }

std::vector<double> flatten(const Image& image) { return image.rgb; }

Matrix stack_rows(std::span<const std::vector<double>> rows) {
  if (rows.empty()) return Matrix();
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != m.cols()) throw Error(ErrorKind::ShapeMismatch, "ragged rows");
    std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
  }
  return m;
}

void adam_step(std::span<Matrix*> params, std::span<const Matrix> grads, AdamState& state,
               const AdamConfig& cfg, bool round_to_float) {
  if (params.size() != grads.size())
    throw Error(ErrorKind::ShapeMismatch, "parameter and gradient counts differ");
  if (state.m.empty()) {
    for (const Matrix* p : params) {
      state.m.emplace_back(p->rows(), p->cols());
      state.v.emplace_back(p->rows(), p->cols());
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& p = *params[k];
    const Matrix& g = grads[k];
    if (!p.same_shape(g)) throw Error(ErrorKind::ShapeMismatch, "gradient shape mismatch");
    Matrix& m = state.m[k];
    Matrix& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!std::isfinite(g[i])) throw Error(ErrorKind::NonFinite, "non-finite gradient");
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double step = cfg.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
      p[i] -= step;
      if (round_to_float) p[i] = static_cast<double>(static_cast<float>(p[i]));
    }
  }
}

std::vector<Matrix*> layer_params(std::span<DenseLayer> layers) {
  std::vector<Matrix*> out;
  for (auto& l : layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<Matrix> flatten_layer_grads(std::span<const DenseLayer> grads) {
  std::vector<Matrix> out;
  for (const auto& g : grads) {
    out.push_back(g.weight);
    out.push_back(g.bias);
  }
  return out;
}

double global_norm(std::span<const Matrix> grads) {
  double s = 0.0;
  for (const auto& g : grads)
    for (double v : g.values()) s += v * v;
  return std::sqrt(s);
}

}  // namespace disco
