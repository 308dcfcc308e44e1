#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "disco/math.hpp"
#include "disco/matrix.hpp"

namespace disco {

// ---------------------------------------------------------------------------
// Fourier features

struct FourierConfig {
  int num_frequencies = 10;
  /// Output width for `inputs` scalars.
  int output_dims(int inputs) const { return 2 * num_frequencies * inputs; }
};

/// Encoding of box translation/scale and of view directions. Fixed by the
/// weights file format (v1).
inline constexpr int kConditionFrequencies = 4;
inline constexpr int kViewFrequencies = 4;

/// For every input scalar x, appends sin(2^k pi x), cos(2^k pi x) for k < L.
std::vector<double> positional_encode(std::span<const double> x, const FourierConfig& cfg);
void positional_encode_into(std::span<const double> x, int num_frequencies, double* out);

// ---------------------------------------------------------------------------
// Latents

using LatentCode = std::vector<double>;

/// Per-object latent with optional style mixing: layers below `split` use
/// `z`, layers from `split` on use `donor`.
struct ObjectLatent {
  LatentCode z;
  std::optional<LatentCode> donor;
  int split = 0;

  friend bool operator==(const ObjectLatent&, const ObjectLatent&) = default;
};

struct LatentSet {
  std::vector<ObjectLatent> objects;
  LatentCode background;

  friend bool operator==(const LatentSet&, const LatentSet&) = default;
};

LatentCode sample_latent(std::uint64_t seed, int dims);

// ---------------------------------------------------------------------------
// Modulated-MLP models

struct DenseLayer {
  Matrix weight;  // out x in
  Matrix bias;    // 1 x out

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }
};

struct ObjectFieldConfig {
  int depth = 8;
  int hidden = 256;
  int latent_dim = 64;
  int pos_frequencies = 10;

  int style_dim() const { return latent_dim + 2 * 2 * kConditionFrequencies * 3; }
  friend bool operator==(const ObjectFieldConfig&, const ObjectFieldConfig&) = default;
};

struct BackgroundFieldConfig {
  int depth = 4;
  int hidden = 128;
  int latent_dim = 64;
  int pos_frequencies = 10;
  /// 3 for a raw world point (bounded), 4 for (x/r, 1/r) (unbounded).
  int input_dims = 3;

  friend bool operator==(const BackgroundFieldConfig&, const BackgroundFieldConfig&) = default;
};

/// Layer storage order shared by both models (and the weights file):
///   for each modulated layer l: affine_l (style -> in_l), fc_l (in_l -> hidden)
///   density head (hidden -> 1), color head (hidden [+ view features] -> 3)
class ObjectFieldModel {
 public:
  ObjectFieldModel() = default;
  ObjectFieldModel(ObjectFieldConfig config, std::vector<DenseLayer> layers);

  static ObjectFieldModel random(const ObjectFieldConfig& config, std::uint64_t seed);
  static ObjectFieldModel zeros(const ObjectFieldConfig& config);
  /// Infers the configuration from layer shapes. Throws ShapeMismatch.
  static ObjectFieldModel from_layers(std::vector<DenseLayer> layers);

  const ObjectFieldConfig& config() const { return config_; }
  std::span<const DenseLayer> layers() const { return layers_; }
  std::span<DenseLayer> layers() { return layers_; }

  const DenseLayer& affine(int l) const { return layers_[2 * l]; }
  const DenseLayer& fc(int l) const { return layers_[2 * l + 1]; }
  const DenseLayer& density_head() const { return layers_[2 * config_.depth]; }
  const DenseLayer& color_head() const { return layers_[2 * config_.depth + 1]; }

 private:
  ObjectFieldConfig config_;
  std::vector<DenseLayer> layers_;
};

class BackgroundFieldModel {
 public:
  BackgroundFieldModel() = default;
  BackgroundFieldModel(BackgroundFieldConfig config, std::vector<DenseLayer> layers);

  static BackgroundFieldModel random(const BackgroundFieldConfig& config, std::uint64_t seed);
  static BackgroundFieldModel zeros(const BackgroundFieldConfig& config);
  static BackgroundFieldModel from_layers(std::vector<DenseLayer> layers, int input_dims);

  const BackgroundFieldConfig& config() const { return config_; }
  std::span<const DenseLayer> layers() const { return layers_; }
  std::span<DenseLayer> layers() { return layers_; }

  const DenseLayer& affine(int l) const { return layers_[2 * l]; }
  const DenseLayer& fc(int l) const { return layers_[2 * l + 1]; }
  const DenseLayer& density_head() const { return layers_[2 * config_.depth]; }
  const DenseLayer& color_head() const { return layers_[2 * config_.depth + 1]; }

 private:
  BackgroundFieldConfig config_;
  std::vector<DenseLayer> layers_;
};

/// Batched field output.
struct FieldBatch {
  Matrix color;  // n x 3, in [0, 1]
  Matrix sigma;  // n x 1, >= 0
};

struct FieldSample {
  Vec3 color;
  double sigma = 0.0;
};

inline constexpr double kDemodulationEpsilon = 1e-8;

/// Modulates and demodulates one layer's weights by a style vector:
/// W'[o, i] = W[o, i] * (A s + a)[i], then each row scaled to unit norm.
Matrix modulate_weights(const DenseLayer& fc, const DenseLayer& affine,
                        std::span<const double> style);

/// concat(z, gamma(t), gamma(s)).
std::vector<double> object_style(std::span<const double> z, Vec3 translation, Vec3 scale);

/// Per-layer style vectors for one object (style mixing aware).
std::vector<std::vector<double>> object_layer_styles(const ObjectFieldConfig& config,
                                                     const ObjectLatent& latent,
                                                     Vec3 translation, Vec3 scale);

/// Object field with weights pre-modulated for one object; evaluating many
/// samples of the same box reuses the modulation.
class ModulatedObjectField {
 public:
  ModulatedObjectField(const ObjectFieldModel& model,
                       std::span<const std::vector<double>> layer_styles);
  FieldBatch evaluate(std::span<const Vec3> canonical_points) const;

 private:
  const ObjectFieldModel* model_;
  std::vector<Matrix> weights_;
};

class ModulatedBackgroundField {
 public:
  ModulatedBackgroundField(const BackgroundFieldModel& model, std::span<const double> z_bg);
  /// inputs: n x input_dims raw coordinates; directions: n unit vectors.
  FieldBatch evaluate(const Matrix& inputs, std::span<const Vec3> directions) const;

 private:
  const BackgroundFieldModel* model_;
  std::vector<Matrix> weights_;
};

/// Single-sample object evaluation. Throws ShapeMismatch if z has the wrong
/// dimension.
FieldSample eval_object_field(const ObjectFieldModel& model, Vec3 x_canonical,
                              std::span<const double> z, Vec3 translation, Vec3 scale);

/// Evaluation with explicit per-layer latents (see style_mix).
FieldSample eval_object_field_mixed(const ObjectFieldModel& model, Vec3 x_canonical,
                                    std::span<const LatentCode> layer_latents,
                                    Vec3 translation, Vec3 scale);

/// x is a raw 3-vector (bounded) or the 4-vector (x/r, 1/r) (unbounded);
/// view must be unit length within 1e-6.
FieldSample eval_background_field(const BackgroundFieldModel& model, std::span<const double> x,
                                  Vec3 view, std::span<const double> z_bg);

/// Layers [0, split) take z_a, layers [split, depth) take z_b.
/// Throws IndexOutOfRange unless 0 <= split <= depth.
std::vector<LatentCode> style_mix(const LatentCode& z_a, const LatentCode& z_b, int split,
                                  int depth = 8);

struct InverseSpherePoint {
  Vec3 direction;  // x / r
  double inv_r;    // 1 / r
};

/// Throws OriginSingular for r < 1e-8.
InverseSpherePoint inverse_sphere(Vec3 x);

// ---------------------------------------------------------------------------
// Analytic fields (test oracles and the procedural dataset)

struct ConstantBox {
  double sigma = 10.0;
  Vec3 rgb{1.0, 1.0, 1.0};
};

struct SoftSphere {
  double radius = 0.5;
  double sigma = 10.0;
  Vec3 rgb{1.0, 1.0, 1.0};
  double falloff = 1.0;
};

/// Colour blends from rgb_low at y_low to rgb_high at y_high (world height).
struct GradientBackground {
  Vec3 rgb_low{0.2, 0.2, 0.2};
  Vec3 rgb_high{0.8, 0.8, 0.8};
  double y_low = -1.0;
  double y_high = 1.0;
  double sigma = 2.0;
};

using AnalyticFieldSpec = std::variant<ConstantBox, SoftSphere, GradientBackground>;

void validate_analytic(const AnalyticFieldSpec& spec);
FieldSample eval_analytic_field(const AnalyticFieldSpec& spec, Vec3 x);

}  // namespace disco
