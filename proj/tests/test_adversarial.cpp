#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "disco/adversarial.hpp"
#include "disco/error.hpp"
#include "support.hpp"

using namespace disco;
namespace ad = disco::ad;

namespace {

double ref_softplus(double x) { return std::log(1.0 + std::exp(x)); }

Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c) {
  std::normal_distribution<double> n;
  Matrix m(r, c);
  for (auto& v : m.values()) v = n(rng);
  return m;
}

std::vector<std::vector<double>> rows_of(const Matrix& m) {
  std::vector<std::vector<double>> out;
  for (std::size_t r = 0; r < m.rows(); ++r) out.emplace_back(m.row(r).begin(), m.row(r).end());
  return out;
}

// L_D on a toy pair of discriminators, built on a tape. Returns the loss var
// and the bound weights of both networks.
struct ToyLoss {
  ad::Var loss;
  LayerVars scene, obj;
};

ToyLoss toy_discriminator_loss(ad::Tape& tape, const Discriminator& ds, const Discriminator& dobj,
                               const Matrix& xs_real, const Matrix& xs_fake,
                               const Matrix& xo_real, const Matrix& xo_fake,
                               const LossWeights& w) {
  ToyLoss t{{}, bind_layers(tape, ds.layers), bind_layers(tape, dobj.layers)};
  const auto s_real = discriminator_tape(t.scene, tape.constant(xs_real));
  const auto s_fake = discriminator_tape(t.scene, tape.constant(xs_fake));
  const auto o_real = discriminator_tape(t.obj, tape.constant(xo_real));
  const auto o_fake = discriminator_tape(t.obj, tape.constant(xo_fake));
  const auto r1s = row_squared_norm(discriminator_input_gradient_tape(t.scene, s_real));
  const auto r1o = row_squared_norm(discriminator_input_gradient_tape(t.obj, o_real));
  t.loss = discriminator_loss_tape(tape, s_real.logits, s_fake.logits, o_real.logits,
                                   o_fake.logits, r1s, r1o, w);
  return t;
}

}  // namespace

TEST(Losses, ZeroLogitsGiveLogTwoMultiples) {
  const std::vector<double> z2 = {0.0, 0.0}, z3 = {0.0, 0.0, 0.0};
  const std::vector<std::vector<double>> g(2, std::vector<double>(5, 0.0));
  EXPECT_EQ(generator_loss(z2, z3, LossWeights{}), 2.0 * std::log(2.0));
  EXPECT_EQ(discriminator_loss(z2, z2, z3, z3, g, g, LossWeights{}).total, 4.0 * std::log(2.0));
}

TEST(Losses, MatchSoftplusFormulas) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 2.0);
  std::vector<double> sr(3), sf(3), orl(5), of(4);
  for (auto* v : {&sr, &sf, &orl, &of})
    for (double& x : *v) x = n(rng);
  const LossWeights w{0.7, 0.3, 0.2};
  auto mean = [](const std::vector<double>& xs, double sign) {
    double s = 0.0;
    for (double x : xs) s += ref_softplus(sign * x);
    return s / xs.size();
  };
  EXPECT_NEAR(generator_loss(sf, of, w), mean(sf, -1) + 0.7 * mean(of, -1), 1e-12);
  const std::vector<std::vector<double>> gs = {{1.0, 2.0}, {0.0, 3.0}, {1.0, 1.0}};
  const std::vector<std::vector<double>> go = {{2.0}};
  const auto t = discriminator_loss(sr, sf, orl, of, gs, go, w);
  EXPECT_NEAR(t.r1_scene, (5.0 + 9.0 + 2.0) / 3.0, 1e-15);
  EXPECT_NEAR(t.r1_obj, 4.0, 1e-15);
  EXPECT_NEAR(t.total,
              mean(sr, -1) + mean(sf, 1) + 0.7 * (mean(orl, -1) + mean(of, 1)) +
                  0.3 * t.r1_scene + 0.2 * 4.0,
              1e-12);
}

TEST(Losses, ObjectTermDropsOut) {
  const std::vector<double> s = {0.3, -1.0}, o = {2.0, -4.0};
  const double scene_only = generator_loss(s, {}, LossWeights{});
  EXPECT_EQ(generator_loss(s, o, LossWeights{0.0, 1.0, 1.0}), scene_only);
  EXPECT_GT(generator_loss(s, o, LossWeights{}), scene_only);
}

TEST(Losses, NanIsRejected) {
  const std::vector<double> bad = {0.0, std::nan("")};
  try {
    generator_loss(bad, {}, LossWeights{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFinite);
  }
}

TEST(Losses, TapeMatchesPlain) {
  std::mt19937_64 rng(5);
  const auto ds = Discriminator::random(6, 1, 5, 2);
  const auto dobj = Discriminator::random(4, 2, 5, 2);
  const Matrix xr = random_matrix(rng, 3, 6), xf = random_matrix(rng, 2, 6);
  const Matrix orr = random_matrix(rng, 4, 4), of = random_matrix(rng, 1, 4);
  const LossWeights w{0.5, 2.0, 3.0};
  ad::Tape tape;
  const auto toy = toy_discriminator_loss(tape, ds, dobj, xr, xf, orr, of, w);
  const auto plain = discriminator_loss(ds.logits(xr), ds.logits(xf), dobj.logits(orr),
                                        dobj.logits(of), rows_of(ds.input_gradients(xr)),
                                        rows_of(dobj.input_gradients(orr)), w);
  EXPECT_NEAR(toy.loss.value()[0], plain.total, 1e-12);

  ad::Tape gt;
  const auto lg = generator_loss_tape(gt, gt.leaf(Matrix(2, 1, {0.4, -0.2})),
                                      gt.leaf(Matrix(1, 1, {1.5})), w);
  EXPECT_NEAR(lg.value()[0], generator_loss(std::vector{0.4, -0.2}, std::vector{1.5}, w), 1e-15);
}

TEST(Discriminator, InputGradientMatchesFiniteDifference) {
  std::mt19937_64 rng(6);
  const auto d = Discriminator::random(7, 3, 6, 3);
  Matrix x = random_matrix(rng, 2, 7);
  const Matrix g = d.input_gradients(x);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t i = 0; i < 7; ++i) {
      Matrix p = x, m = x;
      p(r, i) += 1e-6;
      m(r, i) -= 1e-6;
      const double fd = (d.logits(p)[r] - d.logits(m)[r]) / 2e-6;
      EXPECT_NEAR(g(r, i), fd, 1e-7);
    }
}

TEST(Discriminator, R1PenaltyWeightGradientsMatchFiniteDifference) {
  std::mt19937_64 rng(7);
  auto ds = Discriminator::random(5, 4, 4, 2);
  auto dobj = Discriminator::random(3, 5, 4, 2);
  const Matrix xr = random_matrix(rng, 2, 5), xf = random_matrix(rng, 2, 5);
  const Matrix orr = random_matrix(rng, 2, 3), of = random_matrix(rng, 1, 3);
  const LossWeights w;
  ad::Tape tape;
  const auto toy = toy_discriminator_loss(tape, ds, dobj, xr, xf, orr, of, w);
  const auto grads = tape.backward(toy.loss);
  const auto gs = layer_gradients(toy.scene, grads);
  const auto go = layer_gradients(toy.obj, grads);
  auto loss_at = [&](const Discriminator& a, const Discriminator& b) {
    ad::Tape t;
    return toy_discriminator_loss(t, a, b, xr, xf, orr, of, w).loss.value()[0];
  };
  const double h = 1e-6;
  for (std::size_t l = 0; l < ds.layers.size(); ++l)
    for (std::size_t i = 0; i < ds.layers[l].weight.size(); ++i) {
      auto p = ds, m = ds;
      p.layers[l].weight[i] += h;
      m.layers[l].weight[i] -= h;
      const double fd = (loss_at(p, dobj) - loss_at(m, dobj)) / (2 * h);
      EXPECT_LE(disco::testing::rel_err(gs[l].weight[i], fd), 1e-5) << l << ":" << i;
    }
  for (std::size_t l = 0; l < dobj.layers.size(); ++l)
    for (std::size_t i = 0; i < dobj.layers[l].bias.size(); ++i) {
      auto p = dobj, m = dobj;
      p.layers[l].bias[i] += h;
      m.layers[l].bias[i] -= h;
      const double fd = (loss_at(ds, p) - loss_at(ds, m)) / (2 * h);
      EXPECT_LE(disco::testing::rel_err(go[l].bias[i], fd), 1e-5) << l << ":" << i;
    }
}

TEST(Patches, AlignedRectIsExactCrop) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u;
  Image img = Image::blank(16);
  for (double& v : img.rgb) v = u(rng);
  const Rect2D rect{4.0, 6.0, 12.0, 14.0, false};
  const auto w = patch_weights(rect, 16, 8);
  for (int j = 0; j < 8; ++j)
    for (int i = 0; i < 8; ++i) {
      const auto& row = w.rows[j * 8 + i];
      ASSERT_EQ(row.size(), 1u);
      EXPECT_EQ(row[0].first, static_cast<std::size_t>((6 + j) * 16 + 4 + i));
      EXPECT_EQ(row[0].second, 1.0);
    }
}

TEST(Patches, WeightsArePartitionOfUnity) {
  const Rect2D rect{0.3, 2.7, 9.9, 15.9, false};
  const auto w = patch_weights(rect, 16, 5);
  for (const auto& row : w.rows) {
    double s = 0.0;
    for (const auto& e : row) {
      s += e.second;
      EXPECT_LT(e.first, 256u);
    }
    EXPECT_NEAR(s, 1.0, 1e-14);
  }
}

TEST(Patches, SkipsBoxesBehindOrOffscreen) {
  Layout l;
  l.boxes = {disco::testing::cube({0, 0, 0}), disco::testing::cube({0, 0, -6}),
             disco::testing::cube({50, 0, 0})};
  const Camera cam = disco::testing::front_camera(32);
  const auto rects = patch_rects(l, cam);
  ASSERT_EQ(rects.size(), 1u);
  EXPECT_EQ(rects[0].first, 0u);
  const auto patches = extract_patches(Image::blank(32, 0.25), l, cam, 8);
  ASSERT_EQ(patches.size(), 1u);
  for (double v : patches[0].image.rgb) EXPECT_NEAR(v, 0.25, 1e-15);
}

TEST(Adam, FirstStepMatchesClosedForm) {
  Matrix p(1, 3, {1.0, -2.0, 0.5});
  const Matrix g(1, 3, {0.2, -4.0, 0.0});
  std::vector<Matrix*> params = {&p};
  AdamState st;
  const AdamConfig cfg{0.1, 0.0, 0.99, 1e-8};
  adam_step(params, std::vector{g}, st, cfg, false);
  // With beta1 = 0 and bias correction, the first step is lr * g / (|g| + eps).
  EXPECT_NEAR(p[0], 1.0 - 0.1 * 0.2 / (0.2 + 1e-8), 1e-15);
  EXPECT_NEAR(p[1], -2.0 + 0.1 * 4.0 / (4.0 + 1e-8), 1e-15);
  EXPECT_EQ(p[2], 0.5);
  EXPECT_EQ(st.step, 1u);

  Matrix q(1, 1, {1.0});
  std::vector<Matrix*> qp = {&q};
  AdamState s2;
  adam_step(qp, std::vector{Matrix(1, 1, {0.3})}, s2, {1e-3, 0.0, 0.99, 1e-8}, true);
  EXPECT_EQ(q[0], static_cast<double>(static_cast<float>(q[0])));
  EXPECT_THROW(adam_step(qp, std::vector{Matrix(1, 1, {NAN})}, s2, cfg, false), Error);
}

TEST(Adam, GlobalNorm) {
  const std::vector<Matrix> g = {Matrix(1, 2, {3.0, 0.0}), Matrix(1, 1, {4.0})};
  EXPECT_DOUBLE_EQ(global_norm(g), 5.0);
}
