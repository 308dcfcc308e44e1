#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "disco/error.hpp"
#include "disco/inversion.hpp"
#include "disco/model_io.hpp"
#include "disco/training.hpp"
#include "support.hpp"

using namespace disco;

namespace {

TrainConfig tiny_config(std::uint64_t seed = 3) {
  TrainConfig c;
  c.image_size = 8;
  c.disc_size = 8;
  c.patch_size = 4;
  c.samples_per_box = 4;
  c.background_samples = 4;
  c.batch_size = 1;
  c.disc_hidden = 8;
  c.disc_depth = 2;
  c.object = {2, 8, 4, 2};
  c.background = {1, 8, 4, 2, 3};
  c.prior.max_count = 2;
  c.seed = seed;
  return c;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("disco_test_" + name);
}

}  // namespace

TEST(TrainConfigFile, ParsesKnownKeys) {
  const auto c = parse_train_config(R"({"image_size": 16, "disc_size": 16, "steps": 7,
      "g_optimizer": {"lr": 0.01}, "lambda_obj": 0.5,
      "object": {"depth": 2, "hidden": 8, "latent_dim": 4, "pos_frequencies": 2},
      "prior": {"max_count": 2, "scale": [[0.3, 0.5], [0.3, 0.5], [0.3, 0.5]]},
      "background_mode": {"mode": "unbounded", "start_depth": 4.0}})");
  EXPECT_EQ(c.image_size, 16);
  EXPECT_EQ(c.steps, 7);
  EXPECT_EQ(c.g_optimizer.lr, 0.01);
  EXPECT_EQ(c.g_optimizer.beta2, 0.99);
  EXPECT_EQ(c.weights.lambda_obj, 0.5);
  EXPECT_EQ(c.object.hidden, 8);
  EXPECT_EQ(c.prior.scale[1].hi, 0.5);
  EXPECT_EQ(c.background.input_dims, 4);
}

TEST(TrainConfigFile, RejectsUnknownAndMalformed) {
  try {
    parse_train_config(R"({"imag_size": 16})");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Validation);
  }
  try {
    parse_train_config("{\"steps\": ");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Parse);
  }
  EXPECT_THROW(parse_train_config(R"({"image_size": 30, "disc_size": 16})"), Error);
}

TEST(Dataset, PaletteByBoxIndex) {
  const TrainConfig cfg = tiny_config();
  std::mt19937_64 rng(1);
  const auto data = synth_real_dataset(rng, 4, cfg);
  ASSERT_EQ(data.size(), 4u);
  for (const auto& s : data) {
    EXPECT_EQ(s.image.size, cfg.image_size);
    for (double v : s.image.rgb) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    const SceneState scene = real_scene(s.layout, cfg);
    for (std::size_t i = 0; i < s.layout.size(); ++i)
      EXPECT_EQ(std::get<ConstantBox>(scene.analytic_objects[i]).rgb,
                real_palette()[i % real_palette().size()]);
    EXPECT_EQ(render_scene(scene, cfg.render_config()), s.image);
  }
}

TEST(Trainer, SameSeedSameMetrics) {
  Trainer a(tiny_config()), b(tiny_config());
  for (int i = 0; i < 2; ++i) {
    const auto ra = a.step(), rb = b.step();
    EXPECT_EQ(metrics_row(ra), metrics_row(rb));
    EXPECT_TRUE(std::isfinite(ra.loss_g));
    EXPECT_TRUE(std::isfinite(ra.loss_d.total));
  }
  Trainer c(tiny_config(4));
  c.step();
  EXPECT_NE(metrics_row(c.step()), metrics_row(a.step()));
}

TEST(Trainer, CheckpointResumesExactly) {
  const auto path = temp_path("ckpt.dsck");
  Trainer a(tiny_config());
  a.step();
  a.save_checkpoint(path);
  const auto expected = metrics_row(a.step());
  Trainer b = Trainer::load_checkpoint(path, tiny_config());
  EXPECT_EQ(b.steps_done(), 1);
  EXPECT_EQ(metrics_row(b.step()), expected);

  auto bytes = read_file(path);
  bytes[bytes.size() / 3] ^= 0x01;
  write_file(path, bytes);
  try {
    Trainer::load_checkpoint(path, tiny_config());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ChecksumMismatch);
  }
  std::filesystem::remove(path);
}

TEST(Trainer, DiscriminatorStepLowersItsLoss) {
  TrainConfig cfg = tiny_config();
  cfg.d_optimizer.lr = 1e-3;
  Trainer t(cfg);
  const auto fake = t.sample_fake_batch();
  const auto real = t.sample_real_batch();
  const double before = t.discriminator_step(fake, real).total;
  const double after = t.discriminator_step(fake, real).total;
  EXPECT_LT(after, before);
}

TEST(Inversion, MseOracle) {
  Image a = Image::blank(2, 0.0), b = Image::blank(2, 0.0);
  b.rgb[0] = 1.0;
  b.rgb[5] = -2.0;
  EXPECT_DOUBLE_EQ(image_mse(a, b), 5.0 / 12.0);
}

TEST(Inversion, ExactTargetTakesNoSteps) {
  Layout l;
  l.boxes = {disco::testing::cube({}, 1.2)};
  const SceneState s = disco::testing::neural_scene(l, disco::testing::front_camera(8), 2);
  RenderConfig cfg;
  cfg.samples_per_box = 4;
  cfg.background_samples = 4;
  cfg.background = BoundedBackground{1.0, 8.0};
  const auto r = invert_latents(render_scene(s, cfg), s, cfg, InversionConfig{});
  EXPECT_EQ(r.steps_taken, 0);
  EXPECT_EQ(r.best_loss, 0.0);
  EXPECT_EQ(r.latents, s.latents);
}

TEST(Inversion, LossCurveDecreases) {
  Layout l;
  l.boxes = {disco::testing::cube({}, 1.4)};
  const SceneState s = disco::testing::neural_scene(l, disco::testing::front_camera(8), 2);
  SceneState target_scene = s;
  target_scene.latents.objects[0].z = sample_latent(99, 8);
  target_scene.latents.background = sample_latent(98, 8);
  RenderConfig cfg;
  cfg.samples_per_box = 4;
  cfg.background_samples = 4;
  cfg.background = BoundedBackground{1.0, 8.0};
  InversionConfig inv;
  inv.steps = 25;
  const auto r = invert_latents(render_scene(target_scene, cfg), s, cfg, inv);
  EXPECT_EQ(r.steps_taken, 25);
  ASSERT_EQ(r.curve.size(), 26u);
  for (std::size_t i = 1; i < r.curve.size(); ++i) EXPECT_LE(r.curve[i], r.curve[i - 1]);
  EXPECT_LT(r.best_loss, 0.5 * r.curve.front());
  // The reported latents reproduce the reported loss.
  SceneState best = s;
  best.latents = r.latents;
  EXPECT_DOUBLE_EQ(image_mse(render_scene(best, cfg), render_scene(target_scene, cfg)), r.best_loss);
}
