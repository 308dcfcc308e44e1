#include "disco/tape_render.hpp"

#include <algorithm>
#include <numeric>

#include "disco/error.hpp"

namespace disco {

using ad::Tape;
using ad::Var;

LayerVars bind_layers(Tape& tape, std::span<const DenseLayer> layers) {
  LayerVars vars;
  for (const auto& l : layers) {
    vars.weight.push_back(tape.leaf(l.weight));
    vars.bias.push_back(tape.leaf(l.bias));
  }
  return vars;
}

std::vector<DenseLayer> layer_gradients(const LayerVars& vars, const std::vector<Matrix>& grads) {
  std::vector<DenseLayer> out;
  for (std::size_t i = 0; i < vars.weight.size(); ++i)
    out.push_back({grads[vars.weight[i].id], grads[vars.bias[i].id]});
  return out;
}

namespace {

Var modulated_weight(const LayerVars& layers, std::size_t affine, std::size_t fc, Var style) {
  const Var m = ad::linear(style, layers.weight[affine], layers.bias[affine]);
  const Var w = ad::mul_row(layers.weight[fc], m);
  const Var inv_norm =
      ad::pow_scalar(ad::add_scalar(ad::sum_rows(ad::square(w)), kDemodulationEpsilon), -0.5);
  return ad::mul_col(w, inv_norm);
}

Matrix encode_rows(const Matrix& inputs, int freqs) {
  Matrix h(inputs.rows(), 2 * static_cast<std::size_t>(freqs) * inputs.cols());
  for (std::size_t r = 0; r < inputs.rows(); ++r)
    positional_encode_into(inputs.row(r), freqs, h.row(r).data());
  return h;
}

Matrix points_matrix(std::span<const Vec3> pts) {
  Matrix m(pts.size(), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    m(i, 0) = pts[i].x;
    m(i, 1) = pts[i].y;
    m(i, 2) = pts[i].z;
  }
  return m;
}

FieldVars constant_field(Tape& tape, const FieldBatch& fb) {
  return {tape.constant(fb.color), tape.constant(fb.sigma)};
}

/// Samples of many rays, concatenated ray by ray.
struct RaySegments {
  std::vector<std::size_t> pixels;   // pixel of each segment
  std::vector<std::size_t> offsets;  // segments + 1
};

struct Integrated {
  Var color;          // segments x 3
  Var transmittance;  // segments x 1
};

/// color (n x 3), sigma (n x 1), deltas constant; samples already grouped by
/// ray in depth order.
Integrated integrate_segments(Tape& tape, Var color, Var sigma, const Matrix& deltas,
                              const std::vector<std::size_t>& offsets) {
  const Var tau = ad::mul(sigma, tape.constant(deltas));
  const Var trans = ad::exp(ad::neg(ad::segment_exclusive_cumsum(tau, offsets)));
  const Var alpha = ad::add_scalar(ad::neg(ad::exp(ad::neg(tau))), 1.0);
  const Var weight = ad::mul(trans, alpha);
  return {ad::segment_sum(ad::mul_col(color, weight), offsets),
          ad::exp(ad::neg(ad::segment_sum(tau, offsets)))};
}

ad::SparseRows scatter_weights(std::size_t pixels, const std::vector<std::size_t>& seg_pixels) {
  ad::SparseRows w;
  w.source_rows = seg_pixels.size();
  w.rows.resize(pixels);
  for (std::size_t s = 0; s < seg_pixels.size(); ++s) w.rows[seg_pixels[s]].push_back({s, 1.0});
  return w;
}

struct ForegroundVars {
  Var rgb;
  Var transmittance;
};

ForegroundVars foreground_tape(Tape& tape, const TapeScene& ts, const RenderConfig& config,
                               int size) {
  const SceneState& scene = *ts.scene;
  Camera camera = scene.camera;
  camera.size = size;
  const auto rays = cast_rays(camera);
  const std::size_t pixels = rays.size();
  const auto nd = static_cast<std::size_t>(config.samples_per_box);
  const IntersectionMatrix m = build_intersection_matrix(rays, scene.layout, camera.near_epsilon);

  struct SampleRef {
    double depth;
    std::size_t row;  // row in the concatenated per-box batches
  };
  std::vector<std::vector<SampleRef>> per_ray(pixels);
  std::vector<Var> colors, sigmas;
  std::vector<double> delta_of_row;
  std::size_t row0 = 0;
  for (std::size_t b = 0; b < scene.layout.size(); ++b) {
    const Box3D& box = scene.layout.boxes[b];
    const BoxTransform tf(box);
    std::vector<Vec3> canonical;
    std::vector<double> depths;
    for (std::size_t r = 0; r < pixels; ++r) {
      if (!m.hits(b, r)) continue;
      const Segment seg = m.segment(b, r);
      const std::size_t base = canonical.size();
      canonical.resize(base + nd);
      depths.resize(base + nd);
      sample_canonical_into(to_canonical(tf, rays[r]), seg, static_cast<int>(nd),
                            canonical.data() + base, depths.data() + base);
      const double delta = (seg.far - seg.near) / static_cast<double>(nd);
      for (std::size_t k = 0; k < nd; ++k) {
        per_ray[r].push_back({depths[base + k], row0 + base + k});
        delta_of_row.push_back(delta);
      }
    }
    if (canonical.empty()) continue;
    FieldVars fv;
    if (!scene.analytic_objects.empty()) {
      FieldBatch fb{Matrix(canonical.size(), 3), Matrix(canonical.size(), 1)};
      for (std::size_t i = 0; i < canonical.size(); ++i) {
        const auto s = eval_analytic_field(scene.analytic_objects[b], canonical[i]);
        fb.color(i, 0) = s.color.x;
        fb.color(i, 1) = s.color.y;
        fb.color(i, 2) = s.color.z;
        fb.sigma(i, 0) = s.sigma;
      }
      fv = constant_field(tape, fb);
    } else {
      const auto& cfg = scene.object_model->config();
      const Var primary = object_style_tape(tape, ts.z[b], box.translation, box.scale);
      std::vector<Var> styles(static_cast<std::size_t>(cfg.depth), primary);
      if (ts.donor[b]) {
        const Var donor = object_style_tape(tape, *ts.donor[b], box.translation, box.scale);
        for (int l = scene.latents.objects[b].split; l < cfg.depth; ++l) styles[l] = donor;
      }
      fv = object_field_tape(tape, cfg, ts.object, styles, canonical);
    }
    colors.push_back(fv.color);
    sigmas.push_back(fv.sigma);
    row0 += canonical.size();
  }

  if (colors.empty())
    return {tape.constant(Matrix(pixels, 3)), tape.constant(Matrix(pixels, 1, 1.0))};

  RaySegments segs;
  segs.offsets.push_back(0);
  std::vector<std::size_t> order;
  for (std::size_t r = 0; r < pixels; ++r) {
    auto& list = per_ray[r];
    if (list.empty()) continue;
    std::stable_sort(list.begin(), list.end(),
                     [](const SampleRef& a, const SampleRef& b) { return a.depth < b.depth; });
    for (const auto& s : list) order.push_back(s.row);
    segs.pixels.push_back(r);
    segs.offsets.push_back(order.size());
  }
  Matrix deltas(order.size(), 1);
  for (std::size_t i = 0; i < order.size(); ++i) deltas[i] = delta_of_row[order[i]];

  const Var color = ad::gather_rows(ad::concat_rows(colors), order);
  const Var sigma = ad::gather_rows(ad::concat_rows(sigmas), order);
  const Integrated in = integrate_segments(tape, color, sigma, deltas, segs.offsets);
  const auto scatter = scatter_weights(pixels, segs.pixels);
  const Var rgb = ad::sparse_rows(in.color, scatter);
  const Var opacity = ad::sparse_rows(ad::add_scalar(ad::neg(in.transmittance), 1.0), scatter);
  return {rgb, ad::add_scalar(ad::neg(opacity), 1.0)};
}

Var background_tape(Tape& tape, const TapeScene& ts, const RenderConfig& config) {
  const SceneState& scene = *ts.scene;
  const auto rays = cast_rays(scene.camera);
  const auto n = static_cast<std::size_t>(config.background_samples);
  const std::size_t dims = background_input_dims(config.background);
  Matrix inputs(rays.size() * n, dims);
  Matrix deltas(rays.size() * n, 1);
  std::vector<Vec3> world(rays.size() * n), dirs(rays.size() * n);
  std::vector<std::size_t> offsets{0};
  for (std::size_t r = 0; r < rays.size(); ++r) {
    const auto bs = sample_background(rays[r], config);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t row = r * n + k;
      for (std::size_t c = 0; c < dims; ++c) inputs(row, c) = bs.inputs(k, c);
      deltas[row] = bs.deltas[k];
      world[row] = bs.world[k];
      dirs[row] = rays[r].direction;
    }
    offsets.push_back((r + 1) * n);
  }
  FieldVars fv;
  if (scene.analytic_background) {
    FieldBatch fb{Matrix(world.size(), 3), Matrix(world.size(), 1)};
    for (std::size_t i = 0; i < world.size(); ++i) {
      const auto s = eval_analytic_field(*scene.analytic_background, world[i]);
      fb.color(i, 0) = s.color.x;
      fb.color(i, 1) = s.color.y;
      fb.color(i, 2) = s.color.z;
      fb.sigma(i, 0) = s.sigma;
    }
    fv = constant_field(tape, fb);
  } else {
    fv = background_field_tape(tape, scene.background_model->config(), ts.background,
                               *ts.z_background, inputs, dirs);
  }
  return integrate_segments(tape, fv.color, fv.sigma, deltas, offsets).color;
}

}  // namespace

Var object_style_tape(Tape& tape, Var z, Vec3 translation, Vec3 scale) {
  const std::vector<double> zero(z.cols(), 0.0);
  const auto full = object_style(zero, translation, scale);
  const std::vector<double> cond(full.begin() + static_cast<std::ptrdiff_t>(z.cols()), full.end());
  const Var parts[] = {z, tape.constant(Matrix::row_vector(cond))};
  return ad::concat_cols(parts);
}

FieldVars object_field_tape(Tape& tape, const ObjectFieldConfig& config, const LayerVars& layers,
                            std::span<const Var> styles, std::span<const Vec3> canonical_points) {
  if (styles.size() != static_cast<std::size_t>(config.depth))
    throw Error(ErrorKind::ShapeMismatch, "need one style per modulated layer");
  Var h = tape.constant(encode_rows(points_matrix(canonical_points), config.pos_frequencies));
  for (int l = 0; l < config.depth; ++l) {
    const auto a = static_cast<std::size_t>(2 * l);
    const Var w = modulated_weight(layers, a, a + 1, styles[l]);
    h = ad::silu(ad::linear(h, w, layers.bias[a + 1]));
  }
  const auto d = static_cast<std::size_t>(2 * config.depth);
  return {ad::sigmoid(ad::linear(h, layers.weight[d + 1], layers.bias[d + 1])),
          ad::softplus(ad::linear(h, layers.weight[d], layers.bias[d]))};
}

FieldVars background_field_tape(Tape& tape, const BackgroundFieldConfig& config,
                                const LayerVars& layers, Var z_bg, const Matrix& inputs,
                                std::span<const Vec3> directions) {
  Var h = tape.constant(encode_rows(inputs, config.pos_frequencies));
  for (int l = 0; l < config.depth; ++l) {
    const auto a = static_cast<std::size_t>(2 * l);
    const Var w = modulated_weight(layers, a, a + 1, z_bg);
    h = ad::silu(ad::linear(h, w, layers.bias[a + 1]));
  }
  const Var view = tape.constant(encode_rows(points_matrix(directions), kViewFrequencies));
  const Var parts[] = {h, view};
  const auto d = static_cast<std::size_t>(2 * config.depth);
  return {ad::sigmoid(ad::linear(ad::concat_cols(parts), layers.weight[d + 1], layers.bias[d + 1])),
          ad::softplus(ad::linear(h, layers.weight[d], layers.bias[d]))};
}

TapeScene bind_scene(Tape& tape, const SceneState& scene) {
  TapeScene ts;
  ts.scene = &scene;
  if (scene.analytic_objects.empty() && scene.object_model) {
    ts.object = bind_layers(tape, scene.object_model->layers());
    for (const auto& l : scene.latents.objects) {
      ts.z.push_back(tape.leaf(Matrix::row_vector(l.z)));
      ts.donor.push_back(l.donor ? std::optional<Var>(tape.leaf(Matrix::row_vector(*l.donor)))
                                 : std::nullopt);
    }
  }
  if (!scene.analytic_background && scene.background_model) {
    ts.background = bind_layers(tape, scene.background_model->layers());
    ts.z_background = tape.leaf(Matrix::row_vector(scene.latents.background));
  }
  return ts;
}

ad::SparseRows box_filter_weights(int low_size, int factor) {
  const auto s = static_cast<std::size_t>(low_size);
  const std::size_t hs = s * factor;
  ad::SparseRows w;
  w.source_rows = hs * hs;
  w.rows.resize(s * s);
  const double k = 1.0 / (factor * factor);
  for (std::size_t v = 0; v < s; ++v)
    for (std::size_t u = 0; u < s; ++u)
      for (int dv = 0; dv < factor; ++dv)
        for (int du = 0; du < factor; ++du)
          w.rows[v * s + u].push_back({(v * factor + dv) * hs + (u * factor + du), k});
  return w;
}

TapeImage render_scene_tape(Tape& tape, const TapeScene& ts, const RenderConfig& config) {
  if (ts.scene == nullptr) throw Error(ErrorKind::InvalidArgument, "unbound tape scene");
  validate_scene(*ts.scene, config);
  const int s = ts.scene->camera.size;
  ForegroundVars fg = foreground_tape(tape, ts, config, s * config.ssaa);
  if (config.ssaa > 1) {
    const auto w = box_filter_weights(s, config.ssaa);
    fg.rgb = ad::sparse_rows(fg.rgb, w);
    fg.transmittance = ad::sparse_rows(fg.transmittance, w);
  }
  const Var bg = background_tape(tape, ts, config);
  TapeImage out;
  out.size = s;
  out.foreground = fg.rgb;
  out.transmittance = fg.transmittance;
  out.background = bg;
  out.rgb = ad::add(fg.rgb, ad::mul_col(bg, fg.transmittance));
  return out;
}

}  // namespace disco
