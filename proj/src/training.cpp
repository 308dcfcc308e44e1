#include "disco/training.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "disco/error.hpp"
#include "disco/model_io.hpp"

namespace disco {

using ad::Tape;
using ad::Var;

Camera TrainConfig::camera() const {
  Camera base;
  base.size = image_size;
  return orbit_camera(base, 0.0, camera_pitch, camera_radius);
}

RenderConfig TrainConfig::render_config() const {
  RenderConfig rc;
  rc.samples_per_box = samples_per_box;
  rc.background_samples = background_samples;
  rc.background = background_mode;
  return rc;
}

void validate_train_config(const TrainConfig& cfg) {
  if (cfg.image_size < 4 || cfg.batch_size < 1 || cfg.steps < 0 || cfg.disc_size < 1 ||
      cfg.disc_hidden < 1 || cfg.disc_depth < 1)
    throw Error(ErrorKind::Validation, "train config sizes must be positive");
  if (cfg.image_size % cfg.disc_size != 0)
    throw Error(ErrorKind::Validation, "image size must be a multiple of the discriminator size");
  if (cfg.effective_patch_size() < 1) throw Error(ErrorKind::Validation, "patch size too small");
  if (cfg.weights.lambda_obj < 0 || cfg.weights.lambda_r1_scene < 0 || cfg.weights.lambda_r1_obj < 0)
    throw Error(ErrorKind::Validation, "loss weights must be non-negative");
  if (cfg.background.input_dims != background_input_dims(cfg.background_mode))
    throw Error(ErrorKind::Validation, "background model input does not match background mode");
  validate_render_config(cfg.render_config());
}

const std::vector<Vec3>& real_palette() {
  static const std::vector<Vec3> palette{{0.85, 0.20, 0.20}, {0.20, 0.70, 0.30},
                                         {0.20, 0.35, 0.85}, {0.90, 0.80, 0.20},
                                         {0.70, 0.30, 0.80}, {0.20, 0.80, 0.80}};
  return palette;
}

SceneState real_scene(const Layout& layout, const TrainConfig& cfg) {
  SceneState s;
  s.layout = layout;
  s.camera = cfg.camera();
  const auto& palette = real_palette();
  for (std::size_t i = 0; i < layout.size(); ++i)
    s.analytic_objects.push_back(ConstantBox{10.0, palette[i % palette.size()]});
  s.analytic_background = GradientBackground{};
  return s;
}

std::vector<RealSample> synth_real_dataset(std::mt19937_64& rng, std::size_t n,
                                           const TrainConfig& cfg) {
  std::vector<RealSample> out;
  const RenderConfig rc = cfg.render_config();
  for (std::size_t i = 0; i < n; ++i) {
    Layout layout = sample_layout(rng, cfg.prior);
    Image image = render_scene(real_scene(layout, cfg), rc);
    out.push_back({std::move(image), std::move(layout)});
  }
  return out;
}

std::string metrics_header() {
  return "step,loss_g,loss_d,d_scene_real,d_scene_fake,d_obj_real,d_obj_fake,r1_scene,r1_obj,"
         "grad_norm_g,grad_norm_d,mean_logit_real,mean_logit_fake,fake_variance";
}

std::string metrics_row(const StepReport& r) {
  std::ostringstream os;
  os.precision(9);
  os << r.step << ',' << r.loss_g << ',' << r.loss_d.total << ',' << r.loss_d.scene_real << ','
     << r.loss_d.scene_fake << ',' << r.loss_d.obj_real << ',' << r.loss_d.obj_fake << ','
     << r.loss_d.r1_scene << ',' << r.loss_d.r1_obj << ',' << r.grad_norm_g << ','
     << r.grad_norm_d << ',' << r.mean_logit_real << ',' << r.mean_logit_fake << ','
     << r.fake_variance;
  return os.str();
}

namespace {

std::vector<double> apply_rows(const ad::SparseRows& w, const std::vector<double>& rgb) {
  std::vector<double> out(w.rows.size() * 3, 0.0);
  for (std::size_t j = 0; j < w.rows.size(); ++j)
    for (const auto& [src, wt] : w.rows[j])
      for (int c = 0; c < 3; ++c) out[j * 3 + c] += wt * rgb[src * 3 + c];
  return out;
}

double mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double variance(const std::vector<double>& xs) {
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

std::vector<double> column(const Matrix& m) { return {m.values().begin(), m.values().end()}; }

}  // namespace

Trainer::Trainer(TrainConfig cfg) : cfg_(std::move(cfg)) {
  validate_train_config(cfg_);
  std::mt19937_64 init(cfg_.seed);
  object_ = std::make_shared<ObjectFieldModel>(ObjectFieldModel::random(cfg_.object, init()));
  background_ =
      std::make_shared<BackgroundFieldModel>(BackgroundFieldModel::random(cfg_.background, init()));
  const auto d = static_cast<std::size_t>(cfg_.disc_size);
  const auto p = static_cast<std::size_t>(cfg_.effective_patch_size());
  d_scene_ = Discriminator::random(d * d * 3, init(), cfg_.disc_hidden, cfg_.disc_depth);
  d_obj_ = Discriminator::random(p * p * 3, init(), cfg_.disc_hidden, cfg_.disc_depth);
  fake_rng_.seed(init());
  real_rng_.seed(init());
}

std::vector<FakeSample> Trainer::sample_fake_batch() {
  std::vector<FakeSample> out;
  const RenderConfig rc = cfg_.render_config();
  for (int b = 0; b < cfg_.batch_size; ++b) {
    FakeSample f;
    f.scene.layout = sample_layout(fake_rng_, cfg_.prior);
    for (std::size_t i = 0; i < f.scene.layout.size(); ++i)
      f.scene.latents.objects.push_back({sample_latent(fake_rng_(), cfg_.object.latent_dim), {}, 0});
    f.scene.latents.background = sample_latent(fake_rng_(), cfg_.background.latent_dim);
    f.scene.object_model = object_;
    f.scene.background_model = background_;
    f.scene.camera = cfg_.camera();
    f.image = render_scene(f.scene, rc);
    f.patches = extract_patches(f.image, f.scene.layout, f.scene.camera,
                                cfg_.effective_patch_size());
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<RealBatchItem> Trainer::sample_real_batch() {
  std::vector<RealBatchItem> out;
  for (auto& s : synth_real_dataset(real_rng_, static_cast<std::size_t>(cfg_.batch_size), cfg_)) {
    PatchSet patches =
        extract_patches(s.image, s.layout, cfg_.camera(), cfg_.effective_patch_size());
    out.push_back({std::move(s), std::move(patches)});
  }
  return out;
}

Matrix Trainer::scene_inputs(const std::vector<const Image*>& images) const {
  const int factor = cfg_.image_size / cfg_.disc_size;
  std::vector<std::vector<double>> rows;
  for (const Image* img : images)
    rows.push_back(factor == 1 ? img->rgb
                               : apply_rows(box_filter_weights(cfg_.disc_size, factor), img->rgb));
  return stack_rows(rows);
}

DiscriminatorLossTerms Trainer::discriminator_step(const std::vector<FakeSample>& fake,
                                                   const std::vector<RealBatchItem>& real,
                                                   StepReport* report) {
  std::vector<const Image*> real_imgs, fake_imgs;
  std::vector<std::vector<double>> real_patches, fake_patches;
  for (const auto& r : real) {
    real_imgs.push_back(&r.sample.image);
    for (const auto& p : r.patches) real_patches.push_back(flatten(p.image));
  }
  for (const auto& f : fake) {
    fake_imgs.push_back(&f.image);
    for (const auto& p : f.patches) fake_patches.push_back(flatten(p.image));
  }

  Tape tape;
  const LayerVars ds = bind_layers(tape, d_scene_.layers);
  const LayerVars dobj = bind_layers(tape, d_obj_.layers);
  const auto real_fwd = discriminator_tape(ds, tape.constant(scene_inputs(real_imgs)));
  const auto fake_fwd = discriminator_tape(ds, tape.constant(scene_inputs(fake_imgs)));
  const Var r1_scene = row_squared_norm(discriminator_input_gradient_tape(ds, real_fwd));
  std::optional<Var> obj_real, obj_fake, r1_obj;
  if (!real_patches.empty()) {
    const auto fwd = discriminator_tape(dobj, tape.constant(stack_rows(real_patches)));
    obj_real = fwd.logits;
    r1_obj = row_squared_norm(discriminator_input_gradient_tape(dobj, fwd));
  }
  if (!fake_patches.empty())
    obj_fake = discriminator_tape(dobj, tape.constant(stack_rows(fake_patches))).logits;
  const Var loss = discriminator_loss_tape(tape, real_fwd.logits, fake_fwd.logits, obj_real,
                                           obj_fake, r1_scene, r1_obj, cfg_.weights);

  // Term breakdown from the same forward values.
  std::vector<std::vector<double>> dummy;
  DiscriminatorLossTerms terms = discriminator_loss(
      column(real_fwd.logits.value()), column(fake_fwd.logits.value()),
      obj_real ? column(obj_real->value()) : std::vector<double>{},
      obj_fake ? column(obj_fake->value()) : std::vector<double>{}, dummy, dummy, cfg_.weights);
  terms.r1_scene = mean(column(r1_scene.value()));
  terms.r1_obj = r1_obj ? mean(column(r1_obj->value())) : 0.0;
  terms.total = loss.value()[0];
  if (!std::isfinite(terms.total)) throw Error(ErrorKind::NonFinite, "discriminator loss");

  const auto grads = tape.backward(loss);
  auto gs = flatten_layer_grads(layer_gradients(ds, grads));
  auto go = flatten_layer_grads(layer_gradients(dobj, grads));
  auto ps = layer_params(d_scene_.layers);
  auto po = layer_params(d_obj_.layers);
  adam_step(ps, gs, opt_scene_, cfg_.d_optimizer, true);
  adam_step(po, go, opt_obj_, cfg_.d_optimizer, true);

  if (report) {
    report->loss_d = terms;
    report->grad_norm_d = std::hypot(global_norm(gs), global_norm(go));
    report->mean_logit_real = mean(column(real_fwd.logits.value()));
    report->mean_logit_fake = mean(column(fake_fwd.logits.value()));
  }
  return terms;
}

double Trainer::generator_step(const std::vector<FakeSample>& fake, StepReport* report) {
  Tape tape;
  const LayerVars obj = bind_layers(tape, object_->layers());
  const LayerVars bg = bind_layers(tape, background_->layers());
  const LayerVars ds = bind_layers(tape, d_scene_.layers);
  const LayerVars dobj = bind_layers(tape, d_obj_.layers);
  const RenderConfig rc = cfg_.render_config();
  const int s = cfg_.image_size;
  const int factor = s / cfg_.disc_size;
  const int p = cfg_.effective_patch_size();

  std::vector<Var> scene_rows, patch_rows;
  for (const auto& f : fake) {
    TapeScene ts;
    ts.scene = &f.scene;
    ts.object = obj;
    ts.background = bg;
    for (const auto& l : f.scene.latents.objects) {
      ts.z.push_back(tape.constant(Matrix::row_vector(l.z)));
      ts.donor.push_back(std::nullopt);
    }
    ts.z_background = tape.constant(Matrix::row_vector(f.scene.latents.background));
    const TapeImage img = render_scene_tape(tape, ts, rc);
    Var scene_rgb = img.rgb;
    if (factor > 1) scene_rgb = ad::sparse_rows(scene_rgb, box_filter_weights(cfg_.disc_size, factor));
    scene_rows.push_back(ad::reshape(scene_rgb, 1, scene_rgb.value().size()));
    for (const auto& patch : f.patches) {
      const Var crop = ad::sparse_rows(img.rgb, patch_weights(patch.rect, s, p));
      patch_rows.push_back(ad::reshape(crop, 1, crop.value().size()));
    }
  }
  const Var ds_fake = discriminator_tape(ds, ad::concat_rows(scene_rows)).logits;
  std::optional<Var> dobj_fake;
  if (!patch_rows.empty()) dobj_fake = discriminator_tape(dobj, ad::concat_rows(patch_rows)).logits;
  const Var loss = generator_loss_tape(tape, ds_fake, dobj_fake, cfg_.weights);
  const double value = loss.value()[0];
  if (!std::isfinite(value)) throw Error(ErrorKind::NonFinite, "generator loss");

  const auto grads = tape.backward(loss);
  auto go = flatten_layer_grads(layer_gradients(obj, grads));
  auto gb = flatten_layer_grads(layer_gradients(bg, grads));
  auto po = layer_params(object_->layers());
  auto pb = layer_params(background_->layers());
  adam_step(po, go, opt_object_, cfg_.g_optimizer, true);
  adam_step(pb, gb, opt_background_, cfg_.g_optimizer, true);
  if (report) {
    report->loss_g = value;
    report->grad_norm_g = std::hypot(global_norm(go), global_norm(gb));
  }
  return value;
}

double Trainer::generator_loss_on(const std::vector<FakeSample>& fake) const {
  const RenderConfig rc = cfg_.render_config();
  std::vector<Image> images;
  std::vector<std::vector<double>> patches;
  for (const auto& f : fake) {
    images.push_back(render_scene(f.scene, rc));
    for (const auto& p : extract_patches(images.back(), f.scene.layout, f.scene.camera,
                                         cfg_.effective_patch_size()))
      patches.push_back(flatten(p.image));
  }
  std::vector<const Image*> ptrs;
  for (const auto& i : images) ptrs.push_back(&i);
  const auto ds = d_scene_.logits(scene_inputs(ptrs));
  const auto dobj = patches.empty() ? std::vector<double>{} : d_obj_.logits(stack_rows(patches));
  return generator_loss(ds, dobj, cfg_.weights);
}

StepReport Trainer::step() {
  StepReport report;
  const auto fake = sample_fake_batch();
  const auto real = sample_real_batch();
  discriminator_step(fake, real, &report);
  generator_step(fake, &report);
  report.step = ++steps_;
  report.fake_variance = variance(fake.front().image.rgb);
  return report;
}

// Checkpoint: "DSCK" | u32 version | u32 steps | 4 x (u32 len, DSCW blob) |
// 4 x adam state | u32 len, rng text | u32 CRC32 of everything before.
namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void put_f64(ByteWriter& w, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  w.u32(static_cast<std::uint32_t>(bits));
  w.u32(static_cast<std::uint32_t>(bits >> 32));
}

double get_f64(ByteReader& r) {
  const std::uint64_t lo = r.u32();
  const std::uint64_t hi = r.u32();
  const std::uint64_t bits = lo | (hi << 32);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

void put_blob(ByteWriter& w, std::span<const std::uint8_t> bytes) {
  w.u32(static_cast<std::uint32_t>(bytes.size()));
  w.raw(bytes);
}

std::vector<std::uint8_t> get_blob(ByteReader& r) {
  const auto n = r.u32();
  const auto s = r.raw(n);
  return {s.begin(), s.end()};
}

void put_adam(ByteWriter& w, const AdamState& s) {
  w.u32(static_cast<std::uint32_t>(s.step));
  w.u32(static_cast<std::uint32_t>(s.m.size()));
  for (std::size_t k = 0; k < s.m.size(); ++k) {
    w.u32(static_cast<std::uint32_t>(s.m[k].rows()));
    w.u32(static_cast<std::uint32_t>(s.m[k].cols()));
    for (double v : s.m[k].values()) put_f64(w, v);
    for (double v : s.v[k].values()) put_f64(w, v);
  }
}

AdamState get_adam(ByteReader& r) {
  AdamState s;
  s.step = r.u32();
  const auto n = r.u32();
  for (std::uint32_t k = 0; k < n; ++k) {
    const auto rows = r.u32();
    const auto cols = r.u32();
    Matrix m(rows, cols), v(rows, cols);
    for (auto& x : m.values()) x = get_f64(r);
    for (auto& x : v.values()) x = get_f64(r);
    s.m.push_back(std::move(m));
    s.v.push_back(std::move(v));
  }
  return s;
}

}  // namespace

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  ByteWriter w;
  w.raw({reinterpret_cast<const std::uint8_t*>("DSCK"), 4});
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(steps_));
  put_blob(w, encode_layers(object_->layers()));
  put_blob(w, encode_layers(background_->layers()));
  put_blob(w, encode_layers(d_scene_.layers));
  put_blob(w, encode_layers(d_obj_.layers));
  for (const auto* s : {&opt_object_, &opt_background_, &opt_scene_, &opt_obj_}) put_adam(w, *s);
  std::ostringstream rng;
  rng << fake_rng_ << ' ' << real_rng_;
  const std::string text = rng.str();
  put_blob(w, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
  w.u32(crc32_of(w.bytes()));
  write_file(path, w.bytes());
}

Trainer Trainer::load_checkpoint(const std::filesystem::path& path, TrainConfig cfg) {
  const auto bytes = read_file(path);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "DSCK", 4) != 0)
    throw Error(ErrorKind::BadMagic, "not a checkpoint");
  const std::span<const std::uint8_t> all(bytes);
  ByteReader crc_reader(all.subspan(bytes.size() - 4));
  if (crc_reader.u32() != crc32_of(all.first(bytes.size() - 4)))
    throw Error(ErrorKind::ChecksumMismatch, "checkpoint checksum mismatch");
  ByteReader r(all.first(bytes.size() - 4));
  r.raw(4);
  if (r.u32() != kCheckpointVersion)
    throw Error(ErrorKind::VersionMismatch, "unsupported checkpoint version");
  Trainer t(std::move(cfg));
  t.steps_ = static_cast<int>(r.u32());
  *t.object_ = ObjectFieldModel::from_layers(decode_layers(get_blob(r)));
  *t.background_ = BackgroundFieldModel::from_layers(decode_layers(get_blob(r)),
                                                     t.cfg_.background.input_dims);
  t.d_scene_.layers = decode_layers(get_blob(r));
  t.d_obj_.layers = decode_layers(get_blob(r));
  t.opt_object_ = get_adam(r);
  t.opt_background_ = get_adam(r);
  t.opt_scene_ = get_adam(r);
  t.opt_obj_ = get_adam(r);
  const auto text = get_blob(r);
  std::istringstream rng(std::string(text.begin(), text.end()));
  rng >> t.fake_rng_ >> t.real_rng_;
  if (!(t.object_->config() == t.cfg_.object))
    throw Error(ErrorKind::ShapeMismatch, "checkpoint object model does not match config");
  return t;
}

}  // namespace disco
