#include "disco/fields.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "disco/activations.hpp"
#include "disco/error.hpp"
#include "disco/layout.hpp"

namespace disco {

void positional_encode_into(std::span<const double> x, int num_frequencies, double* out) {
  for (double v : x) {
    double freq = std::numbers::pi;
    for (int k = 0; k < num_frequencies; ++k) {
      *out++ = std::sin(freq * v);
      *out++ = std::cos(freq * v);
      freq *= 2.0;
    }
  }
}

std::vector<double> positional_encode(std::span<const double> x, const FourierConfig& cfg) {
  if (cfg.num_frequencies < 1)
    throw Error(ErrorKind::InvalidArgument, "Fourier encoding needs at least one frequency");
  std::vector<double> out(static_cast<std::size_t>(cfg.output_dims(static_cast<int>(x.size()))));
  positional_encode_into(x, cfg.num_frequencies, out.data());
  return out;
}

LatentCode sample_latent(std::uint64_t seed, int dims) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  LatentCode z(static_cast<std::size_t>(dims));
  for (auto& v : z) v = normal(rng);
  return z;
}

namespace {

// Weights are stored as float-representable doubles so the 32-bit weights
// file round-trips exactly.
double as_float(double v) { return static_cast<double>(static_cast<float>(v)); }

DenseLayer make_layer(std::size_t in, std::size_t out) {
  return {Matrix(out, in), Matrix(1, out)};
}

DenseLayer random_layer(std::mt19937_64& rng, std::size_t in, std::size_t out, double gain,
                        double bias) {
  DenseLayer layer = make_layer(in, out);
  std::normal_distribution<double> normal(0.0, gain);
  for (auto& w : layer.weight.values()) w = as_float(normal(rng));
  for (auto& b : layer.bias.values()) b = as_float(bias);
  return layer;
}

std::vector<DenseLayer> build_layers(std::mt19937_64* rng, int depth, int hidden,
                                     int first_in, int style_dim, int color_in) {
  std::vector<DenseLayer> layers;
  const double affine_gain = 1.0 / std::sqrt(static_cast<double>(style_dim));
  for (int l = 0; l < depth; ++l) {
    const std::size_t in = l == 0 ? first_in : hidden;
    if (rng) {
      layers.push_back(random_layer(*rng, style_dim, in, affine_gain, 1.0));
      layers.push_back(random_layer(*rng, in, hidden, 1.0, 0.0));
    } else {
      layers.push_back(make_layer(style_dim, in));
      layers.push_back(make_layer(in, hidden));
    }
  }
  const double head_gain = 1.0 / std::sqrt(static_cast<double>(hidden));
  if (rng) {
    layers.push_back(random_layer(*rng, hidden, 1, head_gain, 0.5));
    layers.push_back(random_layer(*rng, color_in, 3, 2.0 * head_gain, 0.0));
  } else {
    layers.push_back(make_layer(hidden, 1));
    layers.push_back(make_layer(color_in, 3));
  }
  return layers;
}

void check_layer(const DenseLayer& layer, std::size_t in, std::size_t out, const char* what) {
  if (layer.weight.rows() != out || layer.weight.cols() != in || layer.bias.rows() != 1 ||
      layer.bias.cols() != out)
    throw Error(ErrorKind::ShapeMismatch, std::string("layer '") + what + "' expected " +
                                              std::to_string(out) + "x" + std::to_string(in));
}

void check_stack(std::span<const DenseLayer> layers, int depth, int hidden, int first_in,
                 int style_dim, int color_in) {
  if (layers.size() != static_cast<std::size_t>(2 * depth + 2))
    throw Error(ErrorKind::ShapeMismatch, "unexpected layer count");
  for (int l = 0; l < depth; ++l) {
    const std::size_t in = l == 0 ? first_in : hidden;
    check_layer(layers[2 * l], style_dim, in, "affine");
    check_layer(layers[2 * l + 1], in, hidden, "fc");
  }
  check_layer(layers[2 * depth], hidden, 1, "density");
  check_layer(layers[2 * depth + 1], color_in, 3, "color");
}

int object_first_in(const ObjectFieldConfig& c) { return 2 * c.pos_frequencies * 3; }
int background_first_in(const BackgroundFieldConfig& c) {
  return 2 * c.pos_frequencies * c.input_dims;
}
int background_color_in(const BackgroundFieldConfig& c) {
  return c.hidden + 2 * kViewFrequencies * 3;
}

void check_config(int depth, int hidden, int latent_dim, int freqs) {
  if (depth < 1 || hidden < 1 || latent_dim < 1 || freqs < 1)
    throw Error(ErrorKind::InvalidArgument, "model dimensions must be positive");
}

}  // namespace

ObjectFieldModel::ObjectFieldModel(ObjectFieldConfig config, std::vector<DenseLayer> layers)
    : config_(config), layers_(std::move(layers)) {
  check_config(config_.depth, config_.hidden, config_.latent_dim, config_.pos_frequencies);
  check_stack(layers_, config_.depth, config_.hidden, object_first_in(config_),
              config_.style_dim(), config_.hidden);
}

ObjectFieldModel ObjectFieldModel::random(const ObjectFieldConfig& config, std::uint64_t seed) {
  check_config(config.depth, config.hidden, config.latent_dim, config.pos_frequencies);
  std::mt19937_64 rng(seed);
  return {config, build_layers(&rng, config.depth, config.hidden, object_first_in(config),
                               config.style_dim(), config.hidden)};
}

ObjectFieldModel ObjectFieldModel::zeros(const ObjectFieldConfig& config) {
  check_config(config.depth, config.hidden, config.latent_dim, config.pos_frequencies);
  return {config, build_layers(nullptr, config.depth, config.hidden, object_first_in(config),
                               config.style_dim(), config.hidden)};
}

ObjectFieldModel ObjectFieldModel::from_layers(std::vector<DenseLayer> layers) {
  if (layers.size() < 4 || layers.size() % 2 != 0)
    throw Error(ErrorKind::ShapeMismatch, "object model needs 2*depth+2 layers");
  ObjectFieldConfig config;
  config.depth = static_cast<int>(layers.size() / 2 - 1);
  config.hidden = static_cast<int>(layers[1].out_dim());
  const auto first_in = layers[1].in_dim();
  if (first_in % 6 != 0) throw Error(ErrorKind::ShapeMismatch, "object input width");
  config.pos_frequencies = static_cast<int>(first_in / 6);
  const int cond = 2 * 2 * kConditionFrequencies * 3;
  config.latent_dim = static_cast<int>(layers[0].in_dim()) - cond;
  if (config.latent_dim < 1) throw Error(ErrorKind::ShapeMismatch, "object style width");
  if (layers.back().in_dim() != static_cast<std::size_t>(config.hidden))
    throw Error(ErrorKind::ShapeMismatch, "object color head width");
  return {config, std::move(layers)};
}

BackgroundFieldModel::BackgroundFieldModel(BackgroundFieldConfig config,
                                           std::vector<DenseLayer> layers)
    : config_(config), layers_(std::move(layers)) {
  check_config(config_.depth, config_.hidden, config_.latent_dim, config_.pos_frequencies);
  if (config_.input_dims != 3 && config_.input_dims != 4)
    throw Error(ErrorKind::InvalidArgument, "background input must be 3 or 4 dimensional");
  check_stack(layers_, config_.depth, config_.hidden, background_first_in(config_),
              config_.latent_dim, background_color_in(config_));
}

BackgroundFieldModel BackgroundFieldModel::random(const BackgroundFieldConfig& config,
                                                  std::uint64_t seed) {
  check_config(config.depth, config.hidden, config.latent_dim, config.pos_frequencies);
  std::mt19937_64 rng(seed);
  return {config, build_layers(&rng, config.depth, config.hidden, background_first_in(config),
                               config.latent_dim, background_color_in(config))};
}

BackgroundFieldModel BackgroundFieldModel::zeros(const BackgroundFieldConfig& config) {
  check_config(config.depth, config.hidden, config.latent_dim, config.pos_frequencies);
  return {config, build_layers(nullptr, config.depth, config.hidden, background_first_in(config),
                               config.latent_dim, background_color_in(config))};
}

BackgroundFieldModel BackgroundFieldModel::from_layers(std::vector<DenseLayer> layers,
                                                       int input_dims) {
  if (layers.size() < 4 || layers.size() % 2 != 0)
    throw Error(ErrorKind::ShapeMismatch, "background model needs 2*depth+2 layers");
  if (input_dims != 3 && input_dims != 4)
    throw Error(ErrorKind::InvalidArgument, "background input must be 3 or 4 dimensional");
  BackgroundFieldConfig config;
  config.input_dims = input_dims;
  config.depth = static_cast<int>(layers.size() / 2 - 1);
  config.hidden = static_cast<int>(layers[1].out_dim());
  const auto first_in = layers[1].in_dim();
  if (first_in % (2 * input_dims) != 0)
    throw Error(ErrorKind::ShapeMismatch, "background input width does not match mode");
  config.pos_frequencies = static_cast<int>(first_in / (2 * input_dims));
  config.latent_dim = static_cast<int>(layers[0].in_dim());
  return {config, std::move(layers)};
}

Matrix modulate_weights(const DenseLayer& fc, const DenseLayer& affine,
                        std::span<const double> style) {
  if (style.size() != affine.in_dim())
    throw Error(ErrorKind::ShapeMismatch, "style vector has " + std::to_string(style.size()) +
                                              " entries, expected " +
                                              std::to_string(affine.in_dim()));
  const std::size_t in = fc.in_dim();
  std::vector<double> mod(in);
  for (std::size_t i = 0; i < in; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < style.size(); ++j) s += affine.weight(i, j) * style[j];
    mod[i] = s + affine.bias[i];
  }
  Matrix w(fc.out_dim(), in);
  for (std::size_t o = 0; o < fc.out_dim(); ++o) {
    double sq = 0.0;
    for (std::size_t i = 0; i < in; ++i) {
      const double v = fc.weight(o, i) * mod[i];
      w(o, i) = v;
      sq += v * v;
    }
    const double d = 1.0 / std::sqrt(sq + kDemodulationEpsilon);
    for (std::size_t i = 0; i < in; ++i) w(o, i) *= d;
  }
  return w;
}

std::vector<double> object_style(std::span<const double> z, Vec3 translation, Vec3 scale) {
  std::vector<double> style(z.begin(), z.end());
  const std::size_t enc = 2 * kConditionFrequencies * 3;
  style.resize(z.size() + 2 * enc);
  const double t[3] = {translation.x, translation.y, translation.z};
  const double s[3] = {scale.x, scale.y, scale.z};
  positional_encode_into(t, kConditionFrequencies, style.data() + z.size());
  positional_encode_into(s, kConditionFrequencies, style.data() + z.size() + enc);
  return style;
}

namespace {

void check_latent(std::span<const double> z, int dims) {
  if (z.size() != static_cast<std::size_t>(dims))
    throw Error(ErrorKind::ShapeMismatch, "latent has " + std::to_string(z.size()) +
                                              " entries, model expects " + std::to_string(dims));
}

void apply_silu(Matrix& m) {
  for (auto& v : m.values()) v = silu(v);
}

}  // namespace

std::vector<std::vector<double>> object_layer_styles(const ObjectFieldConfig& config,
                                                     const ObjectLatent& latent,
                                                     Vec3 translation, Vec3 scale) {
  check_latent(latent.z, config.latent_dim);
  const auto primary = object_style(latent.z, translation, scale);
  std::vector<std::vector<double>> styles(static_cast<std::size_t>(config.depth), primary);
  if (latent.donor) {
    check_latent(*latent.donor, config.latent_dim);
    if (latent.split < 0 || latent.split > config.depth)
      throw Error(ErrorKind::IndexOutOfRange, "style split layer out of range");
    const auto donor = object_style(*latent.donor, translation, scale);
    for (int l = latent.split; l < config.depth; ++l) styles[l] = donor;
  }
  return styles;
}

ModulatedObjectField::ModulatedObjectField(const ObjectFieldModel& model,
                                           std::span<const std::vector<double>> layer_styles)
    : model_(&model) {
  const int depth = model.config().depth;
  if (layer_styles.size() != static_cast<std::size_t>(depth))
    throw Error(ErrorKind::ShapeMismatch, "need one style per modulated layer");
  weights_.reserve(depth);
  for (int l = 0; l < depth; ++l)
    weights_.push_back(modulate_weights(model.fc(l), model.affine(l), layer_styles[l]));
}

FieldBatch ModulatedObjectField::evaluate(std::span<const Vec3> canonical_points) const {
  const auto& cfg = model_->config();
  const int freqs = cfg.pos_frequencies;
  Matrix h(canonical_points.size(), static_cast<std::size_t>(6 * freqs));
  for (std::size_t r = 0; r < canonical_points.size(); ++r) {
    const Vec3 p = canonical_points[r];
    const double xyz[3] = {p.x, p.y, p.z};
    positional_encode_into(xyz, freqs, h.row(r).data());
  }
  for (int l = 0; l < cfg.depth; ++l) {
    h = linear_forward(h, weights_[l], model_->fc(l).bias);
    apply_silu(h);
  }
  FieldBatch out{linear_forward(h, model_->color_head().weight, model_->color_head().bias),
                 linear_forward(h, model_->density_head().weight, model_->density_head().bias)};
  for (auto& v : out.color.values()) v = sigmoid(v);
  for (auto& v : out.sigma.values()) v = softplus(v);
  return out;
}

ModulatedBackgroundField::ModulatedBackgroundField(const BackgroundFieldModel& model,
                                                   std::span<const double> z_bg)
    : model_(&model) {
  check_latent(z_bg, model.config().latent_dim);
  for (int l = 0; l < model.config().depth; ++l)
    weights_.push_back(modulate_weights(model.fc(l), model.affine(l), z_bg));
}

FieldBatch ModulatedBackgroundField::evaluate(const Matrix& inputs,
                                              std::span<const Vec3> directions) const {
  const auto& cfg = model_->config();
  if (inputs.cols() != static_cast<std::size_t>(cfg.input_dims) ||
      inputs.rows() != directions.size())
    throw Error(ErrorKind::ShapeMismatch, "background inputs do not match model");
  const std::size_t n = inputs.rows();
  Matrix h(n, static_cast<std::size_t>(2 * cfg.pos_frequencies * cfg.input_dims));
  for (std::size_t r = 0; r < n; ++r)
    positional_encode_into(inputs.row(r), cfg.pos_frequencies, h.row(r).data());
  for (int l = 0; l < cfg.depth; ++l) {
    h = linear_forward(h, weights_[l], model_->fc(l).bias);
    apply_silu(h);
  }
  const std::size_t view_dims = 2 * kViewFrequencies * 3;
  Matrix hv(n, h.cols() + view_dims);
  for (std::size_t r = 0; r < n; ++r) {
    auto src = h.row(r);
    auto dst = hv.row(r);
    std::copy(src.begin(), src.end(), dst.begin());
    const Vec3 v = directions[r];
    const double vd[3] = {v.x, v.y, v.z};
    positional_encode_into(vd, kViewFrequencies, dst.data() + h.cols());
  }
  FieldBatch out{linear_forward(hv, model_->color_head().weight, model_->color_head().bias),
                 linear_forward(h, model_->density_head().weight, model_->density_head().bias)};
  for (auto& v : out.color.values()) v = sigmoid(v);
  for (auto& v : out.sigma.values()) v = softplus(v);
  return out;
}

namespace {

FieldSample first_sample(const FieldBatch& b) {
  return {{b.color(0, 0), b.color(0, 1), b.color(0, 2)}, b.sigma(0, 0)};
}

}  // namespace

FieldSample eval_object_field(const ObjectFieldModel& model, Vec3 x_canonical,
                              std::span<const double> z, Vec3 translation, Vec3 scale) {
  check_latent(z, model.config().latent_dim);
  const auto style = object_style(z, translation, scale);
  const std::vector<std::vector<double>> styles(static_cast<std::size_t>(model.config().depth),
                                                style);
  const ModulatedObjectField field(model, styles);
  return first_sample(field.evaluate(std::span<const Vec3>(&x_canonical, 1)));
}

FieldSample eval_object_field_mixed(const ObjectFieldModel& model, Vec3 x_canonical,
                                    std::span<const LatentCode> layer_latents,
                                    Vec3 translation, Vec3 scale) {
  if (layer_latents.size() != static_cast<std::size_t>(model.config().depth))
    throw Error(ErrorKind::ShapeMismatch, "need one latent per modulated layer");
  std::vector<std::vector<double>> styles;
  for (const auto& z : layer_latents) {
    check_latent(z, model.config().latent_dim);
    styles.push_back(object_style(z, translation, scale));
  }
  const ModulatedObjectField field(model, styles);
  return first_sample(field.evaluate(std::span<const Vec3>(&x_canonical, 1)));
}

FieldSample eval_background_field(const BackgroundFieldModel& model, std::span<const double> x,
                                  Vec3 view, std::span<const double> z_bg) {
  if (std::abs(norm(view) - 1.0) > 1e-6)
    throw Error(ErrorKind::InvalidArgument, "view direction must be unit length");
  const ModulatedBackgroundField field(model, z_bg);
  return first_sample(field.evaluate(Matrix::row_vector(x), std::span<const Vec3>(&view, 1)));
}

std::vector<LatentCode> style_mix(const LatentCode& z_a, const LatentCode& z_b, int split,
                                  int depth) {
  if (split < 0 || split > depth)
    throw Error(ErrorKind::IndexOutOfRange, "split layer " + std::to_string(split) +
                                                " outside [0, " + std::to_string(depth) + "]");
  if (z_a.size() != z_b.size()) throw Error(ErrorKind::ShapeMismatch, "latent sizes differ");
  std::vector<LatentCode> out;
  out.reserve(depth);
  for (int l = 0; l < depth; ++l) out.push_back(l < split ? z_a : z_b);
  return out;
}

InverseSpherePoint inverse_sphere(Vec3 x) {
  const double r = norm(x);
  if (!(r >= 1e-8)) throw Error(ErrorKind::OriginSingular, "point too close to the origin");
  return {x / r, 1.0 / r};
}

void validate_analytic(const AnalyticFieldSpec& spec) {
  auto check_rgb = [](Vec3 c) {
    for (int i = 0; i < 3; ++i)
      if (!(c[i] >= 0.0 && c[i] <= 1.0))
        throw Error(ErrorKind::InvalidArgument, "analytic colour outside [0, 1]");
  };
  std::visit(
      [&](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, GradientBackground>) {
          check_rgb(s.rgb_low);
          check_rgb(s.rgb_high);
          if (!(s.sigma >= 0.0)) throw Error(ErrorKind::InvalidArgument, "negative density");
        } else {
          check_rgb(s.rgb);
          if (!(s.sigma >= 0.0)) throw Error(ErrorKind::InvalidArgument, "negative density");
        }
        if constexpr (std::is_same_v<S, SoftSphere>) {
          if (!(s.radius > 0.0)) throw Error(ErrorKind::InvalidArgument, "radius must be > 0");
        }
      },
      spec);
}

FieldSample eval_analytic_field(const AnalyticFieldSpec& spec, Vec3 x) {
  return std::visit(
      [&](const auto& s) -> FieldSample {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, ConstantBox>) {
          const bool inside = std::abs(x.x) <= kCanonicalHalfExtent && std::abs(x.y) <= kCanonicalHalfExtent &&
                              std::abs(x.z) <= kCanonicalHalfExtent;
          return {s.rgb, inside ? s.sigma : 0.0};
        } else if constexpr (std::is_same_v<S, SoftSphere>) {
          const double f = std::max(0.0, 1.0 - norm(x) / s.radius);
          return {s.rgb, s.sigma * std::pow(f, s.falloff)};
        } else {
          const double span = s.y_high - s.y_low;
          const double t = span != 0.0 ? std::clamp((x.y - s.y_low) / span, 0.0, 1.0) : 0.5;
          return {s.rgb_low * (1.0 - t) + s.rgb_high * t, s.sigma};
        }
      },
      spec);
}

}  // namespace disco
