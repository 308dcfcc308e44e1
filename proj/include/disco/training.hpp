#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "disco/adversarial.hpp"

namespace disco {

struct TrainConfig {
  int image_size = 32;
  int samples_per_box = 8;
  int background_samples = 8;
  int batch_size = 2;
  AdamConfig g_optimizer{2e-3, 0.0, 0.99, 1e-8};
  AdamConfig d_optimizer{2e-3, 0.0, 0.99, 1e-8};
  int steps = 500;
  std::uint64_t seed = 0;
  LossWeights weights;
  int patch_size = 0;   // 0 -> image_size / 2
  int disc_size = 32;   // scene discriminator input resolution
  int disc_hidden = 128;
  int disc_depth = 3;
  ObjectFieldConfig object{8, 32, 32, 6};
  BackgroundFieldConfig background{4, 32, 32, 4, 3};
  LayoutPrior prior;
  double camera_pitch = 0.4;
  double camera_radius = 5.0;
  BackgroundMode background_mode = BoundedBackground{1.0, 8.0};

  int effective_patch_size() const { return patch_size > 0 ? patch_size : image_size / 2; }
  Camera camera() const;
  RenderConfig render_config() const;
};

/// Throws Validation on inconsistent settings.
void validate_train_config(const TrainConfig& cfg);

/// Reads the JSON training config used by the CLI. Every key is optional;
/// unknown keys are rejected with Validation, malformed text with Parse.
TrainConfig parse_train_config(std::string_view text);

/// Box colours of the procedural dataset; box i gets palette[i % size].
const std::vector<Vec3>& real_palette();

struct RealSample {
  Image image;
  Layout layout;
};

/// Coloured ConstantBox objects over a GradientBackground, rendered with the
/// same renderer and camera as the generator.
std::vector<RealSample> synth_real_dataset(std::mt19937_64& rng, std::size_t n,
                                           const TrainConfig& cfg);
/// The analytic scene behind a real sample (deterministic in the layout).
SceneState real_scene(const Layout& layout, const TrainConfig& cfg);

struct FakeSample {
  SceneState scene;
  Image image;
  PatchSet patches;
};

struct RealBatchItem {
  RealSample sample;
  PatchSet patches;
};

struct StepReport {
  int step = 0;
  double loss_g = 0.0;
  DiscriminatorLossTerms loss_d;
  double grad_norm_g = 0.0;
  double grad_norm_d = 0.0;
  double mean_logit_real = 0.0;
  double mean_logit_fake = 0.0;
  double fake_variance = 0.0;
};

std::string metrics_header();
std::string metrics_row(const StepReport& r);

/// Alternating discriminator/generator training. Single writer: the trainer
/// owns all weights and optimiser state.
class Trainer {
 public:
  explicit Trainer(TrainConfig cfg);

  std::vector<FakeSample> sample_fake_batch();
  std::vector<RealBatchItem> sample_real_batch();

  /// One discriminator update on L_D with the generator frozen.
  DiscriminatorLossTerms discriminator_step(const std::vector<FakeSample>& fake,
                                            const std::vector<RealBatchItem>& real,
                                            StepReport* report = nullptr);
  /// One generator update on L_G; returns L_G before the update.
  double generator_step(const std::vector<FakeSample>& fake, StepReport* report = nullptr);
  /// L_G of the current generator on the scenes of a batch (re-rendered).
  double generator_loss_on(const std::vector<FakeSample>& fake) const;

  /// sample batches, D step, G step.
  StepReport step();

  const TrainConfig& config() const { return cfg_; }
  const ObjectFieldModel& object_model() const { return *object_; }
  const BackgroundFieldModel& background_model() const { return *background_; }
  const Discriminator& scene_discriminator() const { return d_scene_; }
  const Discriminator& object_discriminator() const { return d_obj_; }
  int steps_done() const { return steps_; }

  void save_checkpoint(const std::filesystem::path& path) const;
  static Trainer load_checkpoint(const std::filesystem::path& path, TrainConfig cfg);

 private:
  Matrix scene_inputs(const std::vector<const Image*>& images) const;

  TrainConfig cfg_;
  std::shared_ptr<ObjectFieldModel> object_;
  std::shared_ptr<BackgroundFieldModel> background_;
  Discriminator d_scene_;
  Discriminator d_obj_;
  AdamState opt_object_, opt_background_, opt_scene_, opt_obj_;
  std::mt19937_64 fake_rng_;
  std::mt19937_64 real_rng_;
  int steps_ = 0;
};

}  // namespace disco
