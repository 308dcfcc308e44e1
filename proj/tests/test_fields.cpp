#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "disco/error.hpp"
#include "disco/fields.hpp"
#include "disco/model_io.hpp"
#include "support.hpp"

using namespace disco;

namespace {

// Reference activations written out independently of the library.
double ref_sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }
double ref_softplus(double t) { return std::log(1.0 + std::exp(t)); }
double ref_silu(double t) { return t / (1.0 + std::exp(-t)); }

std::vector<double> ref_encode(const std::vector<double>& x, int freqs) {
  std::vector<double> out;
  for (double v : x)
    for (int k = 0; k < freqs; ++k) {
      out.push_back(std::sin(std::pow(2.0, k) * std::numbers::pi * v));
      out.push_back(std::cos(std::pow(2.0, k) * std::numbers::pi * v));
    }
  return out;
}

std::vector<double> ref_dense(const DenseLayer& l, const std::vector<double>& x) {
  std::vector<double> y(l.out_dim());
  for (std::size_t o = 0; o < l.out_dim(); ++o) {
    double s = l.bias[o];
    for (std::size_t i = 0; i < l.in_dim(); ++i) s += l.weight(o, i) * x[i];
    y[o] = s;
  }
  return y;
}

// Straight-line object field: modulate, demodulate, SiLU MLP, heads.
FieldSample ref_object(const ObjectFieldModel& m, Vec3 x, const std::vector<double>& z, Vec3 t,
                       Vec3 s) {
  const auto& c = m.config();
  std::vector<double> style = z;
  for (auto part : {ref_encode({t.x, t.y, t.z}, kConditionFrequencies),
                    ref_encode({s.x, s.y, s.z}, kConditionFrequencies)})
    style.insert(style.end(), part.begin(), part.end());
  std::vector<double> h = ref_encode({x.x, x.y, x.z}, c.pos_frequencies);
  for (int l = 0; l < c.depth; ++l) {
    const std::vector<double> mod = ref_dense(m.affine(l), style);
    DenseLayer w = m.fc(l);
    for (std::size_t o = 0; o < w.out_dim(); ++o) {
      double norm2 = 0.0;
      for (std::size_t i = 0; i < w.in_dim(); ++i) {
        w.weight(o, i) *= mod[i];
        norm2 += w.weight(o, i) * w.weight(o, i);
      }
      for (std::size_t i = 0; i < w.in_dim(); ++i) w.weight(o, i) /= std::sqrt(norm2 + 1e-8);
    }
    h = ref_dense(w, h);
    for (double& v : h) v = ref_silu(v);
  }
  const auto rgb = ref_dense(m.color_head(), h);
  const auto sig = ref_dense(m.density_head(), h);
  return {{ref_sigmoid(rgb[0]), ref_sigmoid(rgb[1]), ref_sigmoid(rgb[2])}, ref_softplus(sig[0])};
}

ErrorKind kind_of(const auto& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::InvalidArgument;
}

}  // namespace

TEST(Fourier, MatchesSinCosOracle) {
  const std::vector<double> x = {0.3, -1.2, 0.05};
  const auto got = positional_encode(x, FourierConfig{5});
  const auto want = ref_encode(x, 5);
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  EXPECT_EQ(FourierConfig{5}.output_dims(3), 30);
}

TEST(Latent, SeededAndStandardNormal) {
  EXPECT_EQ(sample_latent(7, 16), sample_latent(7, 16));
  EXPECT_NE(sample_latent(7, 16), sample_latent(8, 16));
  const auto z = sample_latent(1, 20000);
  double mean = 0.0, var = 0.0;
  for (double v : z) mean += v / z.size();
  for (double v : z) var += (v - mean) * (v - mean) / z.size();
  EXPECT_NEAR(mean, 0.0, 0.03);
  EXPECT_NEAR(var, 1.0, 0.05);
}

TEST(Modulation, RowsAreUnitNormAndMatchHandComputation) {
  DenseLayer fc{Matrix(2, 2, {1.0, 2.0, -3.0, 0.5}), Matrix(1, 2)};
  DenseLayer affine{Matrix(2, 1, {2.0, -1.0}), Matrix(1, 2, {0.5, 1.0})};
  const std::vector<double> style = {1.0};
  const Matrix w = modulate_weights(fc, affine, style);
  // mod = (2.5, 0); row 0 -> (2.5, 0) / 2.5.
  EXPECT_NEAR(w(0, 0), 2.5 / std::sqrt(6.25 + 1e-8), 1e-15);
  EXPECT_EQ(w(0, 1), 0.0);
  EXPECT_NEAR(w(1, 0), -1.0, 1e-8);

  std::mt19937_64 rng(3);
  const auto m = ObjectFieldModel::random(disco::testing::small_object_config(), 9);
  const auto st = object_style(sample_latent(2, m.config().latent_dim), {0.1, 0, 0}, {1, 1, 1});
  const Matrix w2 = modulate_weights(m.fc(1), m.affine(1), st);
  for (std::size_t o = 0; o < w2.rows(); ++o) {
    double n2 = 0.0;
    for (std::size_t i = 0; i < w2.cols(); ++i) n2 += w2(o, i) * w2(o, i);
    EXPECT_NEAR(n2, 1.0, 1e-6);
  }
  EXPECT_EQ(kind_of([&] { modulate_weights(m.fc(0), m.affine(0), std::vector<double>(3)); }),
            ErrorKind::ShapeMismatch);
}

TEST(ObjectField, MatchesReferenceForward) {
  const auto m = ObjectFieldModel::random({4, 24, 12, 5}, 11);
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec3 x{u(rng), u(rng), u(rng)};
    const Vec3 t{u(rng), u(rng), u(rng)};
    const Vec3 s{1.0 + u(rng), 1.0 + u(rng), 1.0 + u(rng)};
    const auto z = sample_latent(trial, 12);
    const FieldSample got = eval_object_field(m, x, z, t, s);
    const FieldSample want = ref_object(m, x, z, t, s);
    EXPECT_NEAR(got.sigma, want.sigma, 1e-10);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(got.color[c], want.color[c], 1e-10);
  }
}

TEST(ObjectField, OutputRanges) {
  const auto m = ObjectFieldModel::random(disco::testing::small_object_config(), 3);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    const auto f = eval_object_field(m, {u(rng), u(rng), u(rng)}, sample_latent(trial, 8),
                                     {u(rng), 0, u(rng)}, {1, 1, 1});
    EXPECT_GE(f.sigma, 0.0);
    for (int c = 0; c < 3; ++c) {
      EXPECT_GE(f.color[c], 0.0);
      EXPECT_LE(f.color[c], 1.0);
    }
  }
}

TEST(ObjectField, BatchMatchesSingleBitwise) {
  const auto m = ObjectFieldModel::random(disco::testing::small_object_config(), 5);
  const ObjectLatent lat{sample_latent(1, 8), {}, 0};
  const auto styles = object_layer_styles(m.config(), lat, {0.2, 0, 0.1}, {0.7, 0.6, 0.5});
  const ModulatedObjectField field(m, styles);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<Vec3> pts(37);
  for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
  const FieldBatch all = field.evaluate(pts);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const FieldBatch one = field.evaluate(std::span<const Vec3>(&pts[i], 1));
    EXPECT_EQ(one.sigma(0, 0), all.sigma(i, 0));
    for (int c = 0; c < 3; ++c) EXPECT_EQ(one.color(0, c), all.color(i, c));
  }
}

TEST(Matmul, RowsIndependentOfBatch) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n;
  Matrix x(19, 33), w(7, 33), b(1, 7);
  for (auto& v : x.values()) v = n(rng);
  for (auto& v : w.values()) v = n(rng);
  for (auto& v : b.values()) v = n(rng);
  const Matrix all = linear_forward(x, w, b);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const Matrix one = linear_forward(Matrix::row_vector(x.row(r)), w, b);
    for (std::size_t c = 0; c < 7; ++c) EXPECT_EQ(one(0, c), all(r, c));
  }
  const Matrix p = matmul(x, w.transposed());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < 7; ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < 33; ++k) s += x(r, k) * w(c, k);
      EXPECT_NEAR(p(r, c), s, 1e-12);
    }
}

TEST(StyleMix, SplitSelectsLayers) {
  const auto a = sample_latent(1, 4), b = sample_latent(2, 4);
  const auto all_b = style_mix(a, b, 0, 3);
  const auto all_a = style_mix(a, b, 3, 3);
  for (int l = 0; l < 3; ++l) {
    EXPECT_EQ(all_b[l], b);
    EXPECT_EQ(all_a[l], a);
  }
  const auto mid = style_mix(a, b, 2, 3);
  EXPECT_EQ(mid[1], a);
  EXPECT_EQ(mid[2], b);
  EXPECT_EQ(kind_of([&] { style_mix(a, b, 4, 3); }), ErrorKind::IndexOutOfRange);
  EXPECT_EQ(kind_of([&] { style_mix(a, b, -1, 3); }), ErrorKind::IndexOutOfRange);
}

TEST(StyleMix, UniformMixEqualsPlainEvaluation) {
  const auto m = ObjectFieldModel::random(disco::testing::small_object_config(), 2);
  const auto z = sample_latent(4, 8);
  const Vec3 x{0.1, -0.2, 0.3}, t{0.5, 0, 0}, s{1, 1, 1};
  const auto plain = eval_object_field(m, x, z, t, s);
  const auto mixed = eval_object_field_mixed(m, x, style_mix(z, z, 1, 3), t, s);
  EXPECT_EQ(plain.sigma, mixed.sigma);
  EXPECT_EQ(plain.color, mixed.color);
  // A donor changes the output once it drives at least one layer.
  const auto donor = eval_object_field_mixed(m, x, style_mix(z, sample_latent(5, 8), 1, 3), t, s);
  EXPECT_NE(plain.sigma, donor.sigma);
}

TEST(ObjectField, WrongLatentSize) {
  const auto m = ObjectFieldModel::random(disco::testing::small_object_config(), 2);
  EXPECT_EQ(kind_of([&] { eval_object_field(m, {}, sample_latent(1, 5), {}, {1, 1, 1}); }),
            ErrorKind::ShapeMismatch);
}

TEST(BackgroundField, InputModes) {
  const auto bounded = BackgroundFieldModel::random(disco::testing::small_background_config(3), 1);
  const auto unbounded =
      BackgroundFieldModel::random(disco::testing::small_background_config(4), 1);
  const auto z = sample_latent(3, 8);
  const std::vector<double> x3 = {1, 2, 3}, x4 = {0.6, 0.0, 0.8, 0.2};
  const auto f = eval_background_field(bounded, x3, {0, 0, 1}, z);
  EXPECT_GE(f.sigma, 0.0);
  EXPECT_NO_THROW(eval_background_field(unbounded, x4, {0, 0, 1}, z));
  EXPECT_EQ(kind_of([&] { eval_background_field(bounded, x4, {0, 0, 1}, z); }),
            ErrorKind::ShapeMismatch);
  EXPECT_EQ(kind_of([&] { eval_background_field(bounded, x3, {0, 0, 2}, z); }),
            ErrorKind::InvalidArgument);
}

TEST(InverseSphere, DirectionAndInverseRadius) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec3 x{u(rng), u(rng), u(rng)};
    const auto p = inverse_sphere(x);
    EXPECT_NEAR(norm(p.direction), 1.0, 1e-14);
    EXPECT_NEAR(p.inv_r * norm(x), 1.0, 1e-14);
    EXPECT_NEAR(norm(p.direction / p.inv_r - x), 0.0, 1e-9);
  }
  EXPECT_EQ(kind_of([] { inverse_sphere({0, 0, 1e-10}); }), ErrorKind::OriginSingular);
}

TEST(Analytic, ClosedForms) {
  const ConstantBox box{3.0, {0.1, 0.2, 0.3}};
  EXPECT_EQ(eval_analytic_field(box, {0.4, -0.4, 0.0}).sigma, 3.0);
  EXPECT_EQ(eval_analytic_field(box, {0.6, 0.0, 0.0}).sigma, 0.0);
  const SoftSphere sphere{0.5, 8.0, {1, 1, 1}, 2.0};
  EXPECT_NEAR(eval_analytic_field(sphere, {0.25, 0, 0}).sigma, 8.0 * 0.25, 1e-12);
  EXPECT_EQ(eval_analytic_field(sphere, {0.6, 0, 0}).sigma, 0.0);
  const GradientBackground g{{0, 0, 0}, {1, 1, 1}, -1.0, 1.0, 2.0};
  EXPECT_NEAR(eval_analytic_field(g, {0, 0.5, 0}).color.x, 0.75, 1e-15);
  EXPECT_EQ(eval_analytic_field(g, {0, 7.0, 0}).color.y, 1.0);
  EXPECT_EQ(kind_of([] { validate_analytic(ConstantBox{-1.0, {}}); }), ErrorKind::InvalidArgument);
  EXPECT_EQ(kind_of([] { validate_analytic(ConstantBox{1.0, {2, 0, 0}}); }),
            ErrorKind::InvalidArgument);
}

TEST(ModelFile, RoundTripIsExact) {
  const auto m = ObjectFieldModel::random(disco::testing::small_object_config(), 21);
  const auto bytes = encode_layers(m.layers());
  const auto back = ObjectFieldModel::from_layers(decode_layers(bytes));
  EXPECT_EQ(back.config(), m.config());
  for (std::size_t i = 0; i < m.layers().size(); ++i) {
    EXPECT_EQ(back.layers()[i].weight, m.layers()[i].weight);
    EXPECT_EQ(back.layers()[i].bias, m.layers()[i].bias);
  }
  const auto bg = BackgroundFieldModel::random(disco::testing::small_background_config(4), 2);
  const auto path = std::filesystem::temp_directory_path() / "disco_bg_model.dscw";
  save_model(bg, path);
  const auto bg2 = load_background_model(path, 4);
  EXPECT_EQ(bg2.config(), bg.config());
  std::filesystem::remove(path);
}

TEST(ModelFile, CorruptionIsDetected) {
  const auto m = ObjectFieldModel::random(disco::testing::small_object_config(), 21);
  auto bytes = encode_layers(m.layers());
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  EXPECT_EQ(kind_of([&] { decode_layers(flipped); }), ErrorKind::ChecksumMismatch);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 9);
  EXPECT_EQ(kind_of([&] { decode_layers(truncated); }), ErrorKind::ChecksumMismatch);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_EQ(kind_of([&] { decode_layers(magic); }), ErrorKind::BadMagic);
}
