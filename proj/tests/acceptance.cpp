// Acceptance checks. Each criterion prints one line:
//   criterion N: PASS|FAIL  <measured values>
// and the process exits non-zero if any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "disco/image_io.hpp"
#include "disco/inversion.hpp"
#include "disco/model_io.hpp"
#include "disco/scene_io.hpp"
#include "disco/service.hpp"
#include "disco/tape_render.hpp"
#include "disco/training.hpp"
#include "httplib.h"

using namespace disco;

namespace {

const std::filesystem::path kSourceDir = DISCO_SOURCE_DIR;

// Pinned tolerances.
constexpr int kOraclePairs = 10000;
constexpr int kOracleSteps = 512;
constexpr double kOracleRange = 12.0;
constexpr double kOpacityTol = 1e-3;
constexpr double kHalvingLo = 1.8, kHalvingHi = 2.2;  // error ratio 2 +- 10%
constexpr double kEquivalenceTol = 1e-6;
constexpr double kMinSpeedup = 1.5;
constexpr int kBenchRuns = 20;
constexpr double kGradRelTol = 1e-3;
constexpr double kGradFloor = 1e-6;  // below this both values count as zero
constexpr int kTrainSteps = 500;
constexpr double kMinFakeVariance = 1e-4;
constexpr double kInversionMse = 1e-3;
constexpr int kInversionSteps = 300;
constexpr int kRoundTripDocs = 100;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ObjectFieldConfig small_object() { return {3, 16, 8, 4}; }
BackgroundFieldConfig small_background() { return {2, 16, 8, 3, 3}; }

SceneState neural_scene(const Layout& layout, const Camera& cam, std::uint64_t seed,
                        ObjectFieldConfig oc = small_object(),
                        BackgroundFieldConfig bc = small_background()) {
  SceneState s;
  s.layout = layout;
  s.camera = cam;
  s.object_model = std::make_shared<ObjectFieldModel>(ObjectFieldModel::random(oc, seed));
  s.background_model =
      std::make_shared<BackgroundFieldModel>(BackgroundFieldModel::random(bc, seed + 1));
  for (std::size_t i = 0; i < layout.size(); ++i)
    s.latents.objects.push_back({sample_latent(seed * 31 + i, oc.latent_dim), {}, 0});
  s.latents.background = sample_latent(seed * 17 + 5, bc.latent_dim);
  return s;
}

Camera look_at(Vec3 position, int size, double fov = 0.8) {
  Camera c;
  c.position = position;
  c.target = {0, 0, 0};
  c.fov_y = fov;
  c.size = size;
  return c;
}

double rel_err(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b)});
  if (scale < kGradFloor) return 0.0;
  return std::abs(a - b) / scale;
}

double max_abs_diff(const Image& a, const Image& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) m = std::max(m, std::abs(a.rgb[i] - b.rgb[i]));
  return m;
}

// ---------------------------------------------------------------------------

Outcome criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double h = kOracleRange / kOracleSteps;
  int hits = 0, bad = 0, grazing = 0;
  for (int n = 0; n < kOraclePairs; ++n) {
    const Box3D box{{u(rng), u(rng), u(rng)},
                    {u(rng), u(rng), u(rng)},
                    {0.3 + 0.7 * std::abs(u(rng)), 0.3 + 0.7 * std::abs(u(rng)),
                     0.3 + 0.7 * std::abs(u(rng))}};
    Vec3 origin{u(rng), u(rng), u(rng)};
    origin = normalized(origin) * 5.0;
    const Vec3 aim = box.translation + Vec3{u(rng), u(rng), u(rng)} * 0.8;
    const Ray ray{origin, normalized(aim - origin)};
    const BoxTransform tf(box);
    const auto seg = ray_aabb_canonical(to_canonical(tf, ray), 0.0);

    // Brute force: occupancy at step midpoints.
    int first = -1, last = -1;
    for (int k = 0; k < kOracleSteps; ++k) {
      const Vec3 c = tf.to_canonical(ray.origin + ray.direction * ((k + 0.5) * h));
      if (std::abs(c.x) <= 0.5 && std::abs(c.y) <= 0.5 && std::abs(c.z) <= 0.5) {
        if (first < 0) first = k;
        last = k;
      }
    }
    if (first < 0) {
      // A hit thinner than one step can fall between oracle samples.
      if (seg && seg->far - seg->near >= h) ++bad;
      if (seg) ++grazing;
      continue;
    }
    ++hits;
    if (!seg || std::abs(seg->near - first * h) > h || std::abs(seg->far - (last + 1) * h) > h) ++bad;
  }
  const double secs = seconds_since(t0);
  return {bad == 0 && secs < 10.0 && hits > kOraclePairs / 4,
          "pairs=" + std::to_string(kOraclePairs) + " hits=" + std::to_string(hits) +
              " grazing=" + std::to_string(grazing) + " disagreements=" + std::to_string(bad) +
              " time_s=" + fmt("%.2f", secs)};
}

Outcome criterion_2() {
  // A unit cube seen face-on: every central ray crosses exactly 1.0 of it.
  SceneState s;
  s.layout.boxes = {{{0, 0, 0}, {0, 0, 0}, {1, 1, 1}}};
  s.camera = look_at({0, 0, -4}, 1, 0.1);
  s.analytic_objects = {ConstantBox{2.0, {1, 1, 1}}};
  s.analytic_background = GradientBackground{};
  const double exact = 1.0 - std::exp(-2.0);
  auto error_at = [&](int nd) {
    RenderConfig cfg;
    cfg.samples_per_box = nd;
    cfg.background = BoundedBackground{5.0, 6.0};
    const Image img = render_scene(s, cfg);
    return std::abs(img.alpha[0] - exact);
  };
  const double e32 = error_at(32), e64 = error_at(64), e128 = error_at(128), e256 = error_at(256);
  const double r1 = e32 / e64, r2 = e64 / e128;
  const bool accurate = e256 <= kOpacityTol;
  auto halves = [](double r) { return std::isfinite(r) && r >= kHalvingLo && r <= kHalvingHi; };
  return {accurate && halves(r1) && halves(r2),
          "err256=" + fmt("%.3g", e256) + " err32=" + fmt("%.3g", e32) + " err64=" +
              fmt("%.3g", e64) + " err128=" + fmt("%.3g", e128) + " ratio32/64=" +
              fmt("%.3g", r1) + " ratio64/128=" + fmt("%.3g", r2) +
              " (midpoint sampling of a constant density is exact; see notes)"};
}

Outcome criterion_3() {
  std::mt19937_64 rng(303);
  LayoutPrior prior;
  prior.min_count = 1;
  prior.max_count = 6;
  prior.translation = {Range{-2.0, 2.0}, Range{-0.5, 0.5}, Range{-2.0, 2.0}};
  prior.reject_overlap = false;
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Layout layout = sample_layout(rng, prior);
    const SceneState s = neural_scene(layout, look_at({0, 3, -7}, 64, 0.7), 400 + i);
    RenderConfig cfg;
    cfg.samples_per_box = 8;
    cfg.background_samples = 8;
    cfg.background = BoundedBackground{1.0, 12.0};
    worst = std::max(worst, max_abs_diff(render_scene(s, cfg), render_scene_naive(s, cfg)));
  }
  return {worst <= kEquivalenceTol, "scenes=20 max_abs_diff=" + fmt("%.3g", worst)};
}

Outcome criterion_4() {
  const auto doc = load_scene(kSourceDir / "scenes/bench_sparse.json");
  auto median_of = [&](auto&& fn) {
    fn();
    std::vector<double> t;
    for (int i = 0; i < kBenchRuns; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      fn();
      t.push_back(seconds_since(t0));
    }
    std::sort(t.begin(), t.end());
    return 0.5 * (t[kBenchRuns / 2 - 1] + t[kBenchRuns / 2]);
  };
  const double pruned = median_of([&] { render_scene(doc.state, doc.render); });
  const double naive = median_of([&] { render_scene_naive(doc.state, doc.render); });
  const double speedup = naive / pruned;
  return {speedup >= kMinSpeedup, "pruned_median_s=" + fmt("%.4f", pruned) +
                                      " naive_median_s=" + fmt("%.4f", naive) +
                                      " speedup=" + fmt("%.2f", speedup)};
}

Outcome criterion_5() {
  RenderConfig cfg;
  cfg.samples_per_box = 8;
  cfg.background_samples = 8;
  cfg.background = BoundedBackground{1.0, 10.0};
  const Camera cam = look_at({0, 0, -6}, 48, 0.7);
  std::string detail;
  bool ok = true;

  // Off-screen removal.
  {
    Layout l;
    l.boxes = {{{0, 0.3, 0}, {-0.8, 0, 0}, {0.8, 0.8, 0.8}}, {{}, {60, 0, 0}, {1, 1, 1}},
               {{0, -0.2, 0}, {0.9, 0.2, 1}, {0.7, 0.9, 0.7}}};
    const SceneState with = neural_scene(l, cam, 51);
    SceneState without = with;
    without.layout = apply_edit(with.layout, Remove{1});
    without.latents.objects.erase(without.latents.objects.begin() + 1);
    const bool same = render_scene(with, cfg) == render_scene(without, cfg);
    ok &= same;
    detail += std::string("offscreen_removal_identical=") + (same ? "yes" : "no");
  }
  // Translation locality: rays hit by neither placement keep their exact value.
  {
    Layout l;
    l.boxes = {{{}, {-1.2, 0, 0}, {0.7, 0.7, 0.7}}, {{0, 0.5, 0}, {1.2, 0, 0.5}, {0.8, 0.8, 0.8}}};
    const SceneState a = neural_scene(l, cam, 52);
    SceneState b = a;
    b.layout = apply_edit(a.layout, Translate{0, {0, 0.6, 0}});
    const Image ia = render_scene(a, cfg), ib = render_scene(b, cfg);
    const auto rays = cast_rays(cam);
    const auto ma = build_intersection_matrix(rays, a.layout, cam.near_epsilon);
    const auto mb = build_intersection_matrix(rays, b.layout, cam.near_epsilon);
    std::size_t untouched = 0, changed = 0, moved = 0;
    for (std::size_t r = 0; r < rays.size(); ++r) {
      const bool touched = ma.hits(0, r) || mb.hits(0, r);
      bool equal = true;
      for (int c = 0; c < 3; ++c) equal &= ia.rgb[3 * r + c] == ib.rgb[3 * r + c];
      if (!touched) {
        ++untouched;
        if (!equal) ++changed;
      } else if (!equal) {
        ++moved;
      }
    }
    ok &= changed == 0 && moved > 0;
    detail += " untouched_rays=" + std::to_string(untouched) + " untouched_changed=" +
              std::to_string(changed) + " touched_changed=" + std::to_string(moved);
  }
  // Occlusion swap: two boxes on the optical axis, swap their depths.
  {
    Layout l;
    l.boxes = {{{}, {0, 0, -1}, {1, 1, 0.5}}, {{}, {0, 0, 1}, {1, 1, 0.5}}};
    SceneState s;
    s.layout = l;
    s.camera = cam;
    s.analytic_objects = {ConstantBox{30.0, {1, 0, 0}}, ConstantBox{30.0, {0, 0, 1}}};
    s.analytic_background = GradientBackground{};
    SceneState swapped = s;
    std::swap(swapped.layout.boxes[0].translation, swapped.layout.boxes[1].translation);
    const int c = cam.size / 2;
    const Vec3 p0 = render_scene(s, cfg).pixel(c, c), p1 = render_scene(swapped, cfg).pixel(c, c);
    const bool flipped = p0.x > p0.z && p1.z > p1.x;
    ok &= flipped;
    detail += std::string(" occlusion_flip=") + (flipped ? "yes" : "no");
  }
  return {ok, detail};
}

Outcome criterion_6() {
  constexpr int S = 32;
  SceneState s;
  s.layout.boxes = {{{0.35, 0.6, 0.25}, {0, 0, 0}, {1.4, 1.0, 1.2}}};
  s.camera = look_at({0, 0.5, -4}, S, 0.7);
  s.analytic_objects = {ConstantBox{40.0, {0.95, 0.3, 0.1}}};
  s.analytic_background = GradientBackground{};
  RenderConfig cfg;
  cfg.samples_per_box = 16;
  cfg.background_samples = 8;
  cfg.background = BoundedBackground{1.0, 10.0};

  // Reference: foreground at 4S box-filtered to S over the same background.
  const auto ref_fg = downsample_foreground(render_foreground(s, cfg, 4 * S), 4);
  const Image bg = render_background(s, cfg);
  Image ref_f = Image::blank(S);
  ref_f.rgb = ref_fg.rgb;
  const Image ref = composite(ref_f, ref_fg.transmittance, bg);

  RenderConfig c1 = cfg, c2 = cfg;
  c1.ssaa = 1;
  c2.ssaa = 2;
  const Image i1 = render_scene(s, c1), i2 = render_scene(s, c2);
  double m1 = 0, m2 = 0;
  int band = 0;
  for (int p = 0; p < S * S; ++p) {
    const double coverage = 1.0 - ref_fg.transmittance[p];
    if (coverage < 0.02 || coverage > 0.98) continue;
    ++band;
    for (int c = 0; c < 3; ++c) {
      m1 += std::pow(i1.rgb[3 * p + c] - ref.rgb[3 * p + c], 2);
      m2 += std::pow(i2.rgb[3 * p + c] - ref.rgb[3 * p + c], 2);
    }
  }
  m1 /= 3.0 * std::max(band, 1);
  m2 /= 3.0 * std::max(band, 1);

  SceneState empty = s;
  empty.layout.boxes.clear();
  empty.analytic_objects.clear();
  const bool empty_same = render_scene(empty, c1) == render_scene(empty, c2);
  return {band > 0 && m2 < m1 && empty_same,
          "edge_pixels=" + std::to_string(band) + " mse_ssaa1=" + fmt("%.3g", m1) +
              " mse_ssaa2=" + fmt("%.3g", m2) + " empty_identical=" + (empty_same ? "yes" : "no")};
}

// Central differences over every entry of every parameter block.
struct GradStats {
  std::size_t checked = 0;
  double worst = 0.0;
};

void compare(GradStats& st, double tape, double fd) {
  ++st.checked;
  st.worst = std::max(st.worst, rel_err(tape, fd));
}

Outcome criterion_7() {
  constexpr double h = 1e-5;
  std::mt19937_64 rng(707);
  std::uniform_real_distribution<double> u(-1.0, 1.0);

  // (a) object field weights.
  GradStats a;
  {
    auto model = ObjectFieldModel::random(small_object(), 71);
    const auto z = sample_latent(72, 8);
    const Vec3 t{0.3, -0.1, 0.2}, s{0.9, 0.7, 1.1};
    const std::vector<Vec3> pts = {{0.1, 0.2, -0.3}, {-0.4, 0.05, 0.25}, {0.3, -0.3, 0.0}};
    std::vector<double> wc(pts.size() * 3), ws(pts.size());
    for (double& v : wc) v = u(rng);
    for (double& v : ws) v = u(rng);
    auto plain = [&](const ObjectFieldModel& m) {
      double l = 0.0;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto f = eval_object_field(m, pts[i], z, t, s);
        l += ws[i] * f.sigma;
        for (int c = 0; c < 3; ++c) l += wc[3 * i + c] * f.color[c];
      }
      return l;
    };
    ad::Tape tape;
    const LayerVars layers = bind_layers(tape, model.layers());
    const auto style = object_style_tape(tape, tape.constant(Matrix::row_vector(z)), t, s);
    const std::vector<ad::Var> styles(model.config().depth, style);
    const FieldVars f = object_field_tape(tape, model.config(), layers, styles, pts);
    const auto loss = ad::add(
        ad::sum_all(ad::mul(f.color, tape.constant(Matrix(pts.size(), 3, wc)))),
        ad::sum_all(ad::mul(f.sigma, tape.constant(Matrix(pts.size(), 1, ws)))));
    const auto grads = layer_gradients(layers, tape.backward(loss));
    for (std::size_t l = 0; l < model.layers().size(); ++l)
      for (Matrix DenseLayer::*param : {&DenseLayer::weight, &DenseLayer::bias})
        for (std::size_t i = 0; i < (model.layers()[l].*param).size(); ++i) {
          const double v = (model.layers()[l].*param)[i];
          (model.layers()[l].*param)[i] = v + h;
          const double lp = plain(model);
          (model.layers()[l].*param)[i] = v - h;
          const double lm = plain(model);
          (model.layers()[l].*param)[i] = v;
          compare(a, (grads[l].*param)[i], (lp - lm) / (2 * h));
        }
  }

  // (b) one rendered pixel at 16x16, N_d = 4.
  GradStats b;
  {
    Layout layout;
    layout.boxes = {{{0, 0.4, 0}, {0, 0, 0}, {1.2, 1.2, 1.2}}};
    const SceneState base = neural_scene(layout, look_at({0, 0.5, -4}, 16, 0.8), 73);
    RenderConfig cfg;
    cfg.samples_per_box = 4;
    cfg.background_samples = 4;
    cfg.background = BoundedBackground{1.0, 8.0};
    const std::size_t pixel = 8 * 16 + 7;
    const Vec3 wpix{0.7, -0.4, 0.5};
    auto pixel_value = [&](const SceneState& s) {
      const Image img = render_scene(s, cfg);
      return wpix.x * img.rgb[3 * pixel] + wpix.y * img.rgb[3 * pixel + 1] +
             wpix.z * img.rgb[3 * pixel + 2];
    };
    ad::Tape tape;
    const TapeScene ts = bind_scene(tape, base);
    const TapeImage img = render_scene_tape(tape, ts, cfg);
    const auto out = ad::sum_all(ad::mul(ad::slice_rows(img.rgb, pixel, 1),
                                         tape.constant(Matrix(1, 3, {wpix.x, wpix.y, wpix.z}))));
    const auto g = tape.backward(out);
    const auto gobj = layer_gradients(ts.object, g);
    const auto gbg = layer_gradients(ts.background, g);

    auto obj = std::make_shared<ObjectFieldModel>(*base.object_model);
    auto bgm = std::make_shared<BackgroundFieldModel>(*base.background_model);
    SceneState s = base;
    s.object_model = obj;
    s.background_model = bgm;
    auto sweep = [&](std::span<DenseLayer> layers, const std::vector<DenseLayer>& grads) {
      for (std::size_t l = 0; l < layers.size(); ++l)
        for (Matrix DenseLayer::*param : {&DenseLayer::weight, &DenseLayer::bias})
          for (std::size_t i = 0; i < (layers[l].*param).size(); ++i) {
            const double v = (layers[l].*param)[i];
            (layers[l].*param)[i] = v + h;
            const double lp = pixel_value(s);
            (layers[l].*param)[i] = v - h;
            const double lm = pixel_value(s);
            (layers[l].*param)[i] = v;
            compare(b, (grads[l].*param)[i], (lp - lm) / (2 * h));
          }
    };
    sweep(obj->layers(), gobj);
    sweep(bgm->layers(), gbg);
    auto sweep_vec = [&](std::vector<double>& v, const Matrix& grad) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double x = v[i];
        v[i] = x + h;
        const double lp = pixel_value(s);
        v[i] = x - h;
        const double lm = pixel_value(s);
        v[i] = x;
        compare(b, grad[i], (lp - lm) / (2 * h));
      }
    };
    sweep_vec(s.latents.objects[0].z, g[ts.z[0].id]);
    sweep_vec(s.latents.background, g[ts.z_background->id]);
  }

  // (c) L_D with both R1 penalties on a toy discriminator pair.
  GradStats c;
  {
    auto random_matrix = [&](std::size_t r, std::size_t cols) {
      Matrix m(r, cols);
      for (auto& v : m.values()) v = u(rng);
      return m;
    };
    auto ds = Discriminator::random(6, 74, 5, 3);
    auto dobj = Discriminator::random(4, 75, 5, 3);
    const Matrix xr = random_matrix(3, 6), xf = random_matrix(3, 6);
    const Matrix orr = random_matrix(2, 4), of = random_matrix(2, 4);
    const LossWeights w{1.0, 1.0, 1.0};
    auto build = [&](ad::Tape& tape, const Discriminator& a, const Discriminator& bb,
                     LayerVars* la, LayerVars* lb) {
      const LayerVars sa = bind_layers(tape, a.layers), sb = bind_layers(tape, bb.layers);
      const auto s_real = discriminator_tape(sa, tape.constant(xr));
      const auto s_fake = discriminator_tape(sa, tape.constant(xf));
      const auto o_real = discriminator_tape(sb, tape.constant(orr));
      const auto o_fake = discriminator_tape(sb, tape.constant(of));
      const auto r1s = row_squared_norm(discriminator_input_gradient_tape(sa, s_real));
      const auto r1o = row_squared_norm(discriminator_input_gradient_tape(sb, o_real));
      if (la) *la = sa;
      if (lb) *lb = sb;
      return discriminator_loss_tape(tape, s_real.logits, s_fake.logits, o_real.logits,
                                     o_fake.logits, r1s, r1o, w);
    };
    auto value = [&] {
      ad::Tape t;
      return build(t, ds, dobj, nullptr, nullptr).value()[0];
    };
    ad::Tape tape;
    LayerVars la, lb;
    const auto loss = build(tape, ds, dobj, &la, &lb);
    const auto g = tape.backward(loss);
    const auto ga = layer_gradients(la, g), gb = layer_gradients(lb, g);
    for (auto [d, grads] : {std::pair{&ds, &ga}, std::pair{&dobj, &gb}})
      for (std::size_t l = 0; l < d->layers.size(); ++l)
        for (Matrix DenseLayer::*param : {&DenseLayer::weight, &DenseLayer::bias})
          for (std::size_t i = 0; i < (d->layers[l].*param).size(); ++i) {
            const double v = (d->layers[l].*param)[i];
            (d->layers[l].*param)[i] = v + h;
            const double lp = value();
            (d->layers[l].*param)[i] = v - h;
            const double lm = value();
            (d->layers[l].*param)[i] = v;
            compare(c, ((*grads)[l].*param)[i], (lp - lm) / (2 * h));
          }
  }

  const bool ok = a.worst <= kGradRelTol && b.worst <= kGradRelTol && c.worst <= kGradRelTol;
  return {ok, "field_params=" + std::to_string(a.checked) + " max_rel=" + fmt("%.2g", a.worst) +
                  " pixel_params=" + std::to_string(b.checked) + " max_rel=" +
                  fmt("%.2g", b.worst) + " disc_params=" + std::to_string(c.checked) +
                  " max_rel=" + fmt("%.2g", c.worst)};
}

Outcome criterion_8() {
  const std::vector<double> s(4, 0.0), o(6, 0.0);
  const std::vector<std::vector<double>> gs(4, std::vector<double>(12, 0.0));
  const std::vector<std::vector<double>> go(6, std::vector<double>(5, 0.0));
  const LossWeights w{1.0, 1.0, 1.0};
  const double lg = generator_loss(s, o, w);
  const double ld = discriminator_loss(s, s, o, o, gs, go, w).total;
  const bool ok = lg == 2.0 * std::log(2.0) && ld == 4.0 * std::log(2.0);
  return {ok, "L_G=" + fmt("%.17g", lg) + " L_D=" + fmt("%.17g", ld) +
                  " 2ln2=" + fmt("%.17g", 2.0 * std::log(2.0)) +
                  " 4ln2=" + fmt("%.17g", 4.0 * std::log(2.0))};
}

Outcome criterion_9() {
  const auto t0 = std::chrono::steady_clock::now();
  TrainConfig cfg;
  cfg.image_size = 32;
  cfg.disc_size = 32;
  cfg.steps = kTrainSteps;
  cfg.seed = 9;
  Trainer trainer(cfg);
  bool finite = true;
  StepReport last;
  for (int i = 0; i < kTrainSteps; ++i) {
    last = trainer.step();
    const auto& d = last.loss_d;
    for (double v : {last.loss_g, d.total, d.scene_real, d.scene_fake, d.obj_real, d.obj_fake,
                     d.r1_scene, d.r1_obj})
      finite &= std::isfinite(v);
  }
  // Fresh batches after training.
  double real_logit = 0, fake_logit = 0, variance = 0;
  int n = 0;
  for (int rep = 0; rep < 4; ++rep) {
    const auto fake = trainer.sample_fake_batch();
    const auto real = trainer.sample_real_batch();
    for (std::size_t i = 0; i < fake.size(); ++i) {
      const auto fr = flatten(fake[i].image), rr = flatten(real[i].sample.image);
      fake_logit += trainer.scene_discriminator().logits(Matrix::row_vector(fr))[0];
      real_logit += trainer.scene_discriminator().logits(Matrix::row_vector(rr))[0];
      double mean = 0;
      for (double v : fake[i].image.rgb) mean += v;
      mean /= fake[i].image.rgb.size();
      double var = 0;
      for (double v : fake[i].image.rgb) var += (v - mean) * (v - mean);
      variance += var / fake[i].image.rgb.size();
      ++n;
    }
  }
  const double gap = (real_logit - fake_logit) / n;
  variance /= n;
  const double secs = seconds_since(t0);
  return {finite && gap > 0.0 && variance > kMinFakeVariance && secs < 1800.0,
          "steps=" + std::to_string(kTrainSteps) + " finite=" + (finite ? "yes" : "no") +
              " logit_gap=" + fmt("%.4g", gap) + " fake_pixel_variance=" + fmt("%.4g", variance) +
              " final_L_G=" + fmt("%.4g", last.loss_g) + " final_L_D=" +
              fmt("%.4g", last.loss_d.total) + " time_s=" + fmt("%.1f", secs)};
}

Outcome criterion_10() {
  Layout layout;
  layout.boxes = {{{0, 0.5, 0}, {0, 0, 0}, {1.3, 1.3, 1.3}}};
  const SceneState start = neural_scene(layout, look_at({0, 1, -4}, 16, 0.8), 81);
  SceneState target_scene = start;
  target_scene.latents.objects[0].z = sample_latent(9001, 8);
  target_scene.latents.background = sample_latent(9002, 8);
  RenderConfig cfg;
  cfg.samples_per_box = 8;
  cfg.background_samples = 8;
  cfg.background = BoundedBackground{1.0, 8.0};
  const Image target = render_scene(target_scene, cfg);
  InversionConfig inv;
  inv.steps = kInversionSteps;
  inv.target_loss = 0.0;
  const auto r = invert_latents(target, start, cfg, inv);
  const double initial = r.curve.front();
  int reached = -1;
  for (std::size_t i = 0; i < r.curve.size(); ++i)
    if (r.curve[i] < kInversionMse) {
      reached = static_cast<int>(i);
      break;
    }
  return {r.best_loss < kInversionMse && initial > kInversionMse,
          "initial_mse=" + fmt("%.3g", initial) + " final_mse=" + fmt("%.3g", r.best_loss) +
              " steps=" + std::to_string(r.steps_taken) +
              " first_step_below=" + std::to_string(reached)};
}

SceneDocument random_document(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> count(0, 5);
  SceneDocument doc;
  SceneState& s = doc.state;
  s.camera = look_at({3 * u(rng), 1 + std::abs(u(rng)), -6}, 8 + count(rng), 0.6 + 0.2 * std::abs(u(rng)));
  const int n = count(rng);
  for (int i = 0; i < n; ++i)
    s.layout.boxes.push_back({{u(rng), u(rng), u(rng)},
                              {2 * u(rng), 0.5 * u(rng), 2 * u(rng)},
                              {0.3 + 0.4 * std::abs(u(rng)), 0.5, 0.4 + 0.1 * u(rng)}});
  doc.render.samples_per_box = 2 + count(rng);
  doc.render.background_samples = 2 + count(rng);
  doc.render.ssaa = 1 + static_cast<int>(rng() & 1);
  doc.render.tile_size = 4 + count(rng);
  if (rng() & 1)
    doc.render.background = UnboundedBackground{2.0 + std::abs(u(rng))};
  else
    doc.render.background = BoundedBackground{0.5 * std::abs(u(rng)), 10.0 + u(rng)};
  if (rng() % 3 == 0) {
    doc.object_ref = AnalyticRef{};
    doc.background_ref = AnalyticRef{};
    for (int i = 0; i < n; ++i) {
      if (rng() & 1)
        s.analytic_objects.push_back(ConstantBox{3.0 + u(rng), {0.4, 0.5 + 0.4 * u(rng), 0.2}});
      else
        s.analytic_objects.push_back(SoftSphere{0.45, 6.0 + u(rng), {0.2, 0.3, 0.9}, 0.05});
    }
    s.analytic_background = GradientBackground{{0.1, 0.2, 0.3 + 0.1 * u(rng)}, {0.8, 0.8, 0.9}, -1.0, 2.0, 2.0};
  } else {
    doc.object_ref = ObjectModelInit{rng() % 1000, {2, 8, 4, 2}};
    doc.background_ref = BackgroundModelInit{rng() % 1000, 1, 8, 4, 2};
    for (int i = 0; i < n; ++i) {
      ObjectLatent l{sample_latent(rng(), 4), {}, 0};
      if (rng() & 1) {
        l.donor = sample_latent(rng(), 4);
        l.split = static_cast<int>(rng() % 3);
      }
      s.latents.objects.push_back(l);
    }
    s.latents.background = sample_latent(rng(), 4);
  }
  resolve_models(doc, ".");
  return doc;
}

Outcome criterion_11() {
  const auto dir = std::filesystem::temp_directory_path() / "disco_acceptance_11";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);

  std::mt19937_64 rng(1111);
  int identical = 0;
  for (int i = 0; i < kRoundTripDocs; ++i) {
    const SceneDocument doc = random_document(rng);
    const auto path = dir / ("doc" + std::to_string(i) + ".json");
    save_scene(doc, path);
    const auto first = read_file(path);
    save_scene(load_scene(path), path);
    if (read_file(path) == first) ++identical;
    std::filesystem::remove(path);
  }

  // API vs CLI on the shipped scenes and a few of the random documents.
  std::vector<std::string> ids = {"demo", "sparse"};
  std::filesystem::copy_file(kSourceDir / "scenes/demo.json", dir / "demo.json");
  std::filesystem::copy_file(kSourceDir / "scenes/bench_sparse.json", dir / "sparse.json");
  for (int i = 0; i < 3; ++i) {
    ids.push_back("random" + std::to_string(i));
    save_scene(random_document(rng), dir / (ids.back() + ".json"));
  }
  int matching = 0;
  {
    Service service(ServiceOptions{dir, std::nullopt, 8});
    const int port = service.bind("127.0.0.1", 0);
    std::thread server([&] { service.listen(); });
    httplib::Client client("127.0.0.1", port);
    for (int i = 0; i < 100 && !client.Get("/scenes"); ++i)
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    for (const auto& id : ids) {
      const auto res = client.Get("/scenes/" + id + "/render?ssaa=2&size=40");
      const auto out = dir / (id + ".png");
      const std::string cmd = std::string(DISCO_CLI) + " render --scene " +
                              (dir / (id + ".json")).string() + " --out " + out.string() +
                              " --ssaa 2 --size 40 > /dev/null 2>&1";
      if (!res || res->status != 200 || std::system(cmd.c_str()) != 0) continue;
      const auto cli = read_file(out);
      if (std::string(cli.begin(), cli.end()) == res->body) ++matching;
    }
    service.stop();
    server.join();
  }
  std::filesystem::remove_all(dir);
  const int n_api = static_cast<int>(ids.size());
  return {identical == kRoundTripDocs && matching == n_api,
          "roundtrip_identical=" + std::to_string(identical) + "/" + std::to_string(kRoundTripDocs) +
              " api_cli_identical=" + std::to_string(matching) + "/" + std::to_string(n_api)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  int only = 0;
  app.add_option("--criterion", only, "run a single criterion (1-11)")->check(CLI::Range(1, 11));
  CLI11_PARSE(app, argc, argv);

  const std::map<int, std::function<Outcome()>> criteria = {
      {1, criterion_1}, {2, criterion_2}, {3, criterion_3}, {4, criterion_4},
      {5, criterion_5}, {6, criterion_6}, {7, criterion_7}, {8, criterion_8},
      {9, criterion_9}, {10, criterion_10}, {11, criterion_11}};
  bool all = true;
  for (const auto& [n, fn] : criteria) {
    if (only != 0 && n != only) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail
              << std::endl;
    all &= o.pass;
  }
  return all ? 0 : 1;
}
