// disco: command line front end (render, bench, train, invert, serve).

#include <algorithm>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "disco/image_io.hpp"
#include "disco/inversion.hpp"
#include "disco/model_io.hpp"
#include "disco/scene_io.hpp"
#include "disco/service.hpp"
#include "disco/training.hpp"

using namespace disco;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kAssertFailed = 1, kUsage = 2, kIo = 3, kNonFinite = 4 };

int exit_code(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::Io:
    case ErrorKind::BadMagic:
    case ErrorKind::ChecksumMismatch:
      return kIo;
    case ErrorKind::NonFinite:
      return kNonFinite;
    default:
      return kUsage;
  }
}

std::array<double, 3> parse_orbit(const std::string& s) {
  std::array<double, 3> out{};
  std::stringstream in(s);
  std::string item;
  std::size_t n = 0;
  while (std::getline(in, item, ',')) {
    if (n == 3) break;
    std::size_t pos = 0;
    try {
      out[n] = std::stod(item, &pos);
    } catch (...) {
      pos = 0;
    }
    if (pos == 0 || pos != item.size()) break;
    ++n;
  }
  if (n != 3 || in.rdbuf()->in_avail() > 0)
    throw Error(ErrorKind::Validation, "--camera expects yaw,pitch,radius");
  return out;
}

fs::path sibling(const fs::path& out, const std::string& suffix) {
  fs::path p = out;
  p.replace_filename(out.stem().string() + suffix + out.extension().string());
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw Error(ErrorKind::Io, "cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  const auto bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <class F>
std::vector<double> time_runs(int iters, F&& f) {
  f();  // warm-up
  std::vector<double> t;
  for (int i = 0; i < iters; ++i) {
    const auto a = std::chrono::steady_clock::now();
    f();
    t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - a).count());
  }
  return t;
}

/// Replaces every latent with a fresh draw; used to make self-inversion targets.
void resample_latents(SceneState& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& o : s.latents.objects) {
    o.z = sample_latent(rng(), static_cast<int>(o.z.size()));
    o.donor.reset();
    o.split = 0;
  }
  s.latents.background = sample_latent(rng(), static_cast<int>(s.latents.background.size()));
}

struct RenderArgs {
  std::string scene, out, camera;
  std::optional<int> ssaa, size;
  bool components = false;
};

int cmd_render(const RenderArgs& a) {
  const SceneDocument doc = load_scene(a.scene);
  RenderRequest req{a.ssaa, a.size, std::nullopt};
  if (!a.camera.empty()) req.orbit = parse_orbit(a.camera);
  const fs::path out = a.out;
  if (!a.components) {
    write_image(out, render_document(doc, req));
    return kOk;
  }
  const RenderComponents c = render_document_components(doc, req);
  write_image(out, composite(c.foreground, c.transmittance, c.background));
  write_image(sibling(out, "_fg"), c.foreground);
  write_image(sibling(out, "_T"), transmittance_image(c.foreground.size, c.transmittance));
  write_image(sibling(out, "_bg"), c.background);
  return kOk;
}

struct BenchArgs {
  std::string scene;
  int iters = 20;
  bool assert_speedup = false;
  double min_speedup = 1.5;
};

int cmd_bench(const BenchArgs& a) {
  if (a.iters < 1) throw Error(ErrorKind::Validation, "--iters must be >= 1");
  const SceneDocument doc = load_scene(a.scene);
  const auto [state, cfg] = prepare_render(doc, {});
  const auto pruned = time_runs(a.iters, [&] { (void)render_scene(state, cfg); });
  const auto naive = time_runs(a.iters, [&] { (void)render_scene_naive(state, cfg); });
  const double mp = median(pruned), mn = median(naive);
  const double ratio = mn / mp;
  std::cout << "variant,iters,median_s,min_s,max_s,speedup\n";
  std::cout.precision(6);
  std::cout << "pruned," << a.iters << ',' << mp << ',' << *std::min_element(pruned.begin(), pruned.end())
            << ',' << *std::max_element(pruned.begin(), pruned.end()) << ',' << ratio << '\n';
  std::cout << "naive," << a.iters << ',' << mn << ',' << *std::min_element(naive.begin(), naive.end())
            << ',' << *std::max_element(naive.begin(), naive.end()) << ",1\n";
  if (a.assert_speedup && !(ratio >= a.min_speedup)) {
    std::cerr << "speedup " << ratio << " below " << a.min_speedup << '\n';
    return kAssertFailed;
  }
  return kOk;
}

struct TrainArgs {
  std::string config, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
};

int cmd_train(const TrainArgs& a) {
  if (!fs::exists(a.config)) throw Error(ErrorKind::Validation, "config not found: " + a.config);
  TrainConfig cfg = parse_train_config(read_text(a.config));
  if (a.seed) cfg.seed = *a.seed;
  if (a.steps) cfg.steps = *a.steps;
  validate_train_config(cfg);
  const fs::path dir = a.out_dir;
  fs::create_directories(dir);

  Trainer trainer(cfg);
  std::ofstream log(dir / "metrics.csv", std::ios::binary);
  if (!log) throw Error(ErrorKind::Io, "cannot write " + (dir / "metrics.csv").string());
  log << metrics_header() << '\n';
  StepReport last;
  for (int i = 0; i < cfg.steps; ++i) {
    last = trainer.step();
    log << metrics_row(last) << '\n';
    log.flush();
  }
  trainer.save_checkpoint(dir / "checkpoint.dsck");
  save_model(trainer.object_model(), dir / "object.dscw");
  save_model(trainer.background_model(), dir / "background.dscw");

  // A sample scene wired to the trained weights.
  SceneDocument doc;
  std::mt19937_64 rng(cfg.seed ^ 0x5ce9e5ull);
  doc.state.layout = sample_layout(rng, cfg.prior);
  for (std::size_t i = 0; i < doc.state.layout.size(); ++i)
    doc.state.latents.objects.push_back({sample_latent(rng(), cfg.object.latent_dim), {}, 0});
  doc.state.latents.background = sample_latent(rng(), cfg.background.latent_dim);
  doc.state.camera = cfg.camera();
  doc.render = cfg.render_config();
  doc.object_ref = ModelPath{"object.dscw"};
  doc.background_ref = ModelPath{"background.dscw"};
  resolve_models(doc, dir);
  save_scene(doc, dir / "scene.json");

  std::cout << "steps," << trainer.steps_done() << "\nloss_g," << last.loss_g << "\nloss_d,"
            << last.loss_d.total << '\n';
  return kOk;
}

struct InvertArgs {
  std::string scene, target, out, curve;
  std::uint64_t target_seed = 1;
  std::optional<std::uint64_t> seed;
  std::optional<int> size;
  int steps = 300;
  double lr = 0.05;
};

int cmd_invert(const InvertArgs& a) {
  const SceneDocument doc = load_scene(a.scene);
  auto [state, cfg] = prepare_render(doc, {std::nullopt, a.size, std::nullopt});
  if (std::holds_alternative<AnalyticRef>(doc.object_ref) ||
      std::holds_alternative<AnalyticRef>(doc.background_ref))
    throw Error(ErrorKind::Validation, "inversion needs neural object and background models");
  if (a.seed) resample_latents(state, *a.seed);

  Image target;
  if (a.target.empty()) {
    SceneState t = state;
    resample_latents(t, a.target_seed);
    target = render_scene(t, cfg);
  } else {
    target = read_image(a.target);
    if (target.size != state.camera.size)
      throw Error(ErrorKind::Validation, "target is " + std::to_string(target.size) +
                                             " px, scene renders at " + std::to_string(state.camera.size));
    target.alpha.clear();
  }

  InversionConfig inv;
  inv.steps = a.steps;
  inv.optimizer.lr = a.lr;
  const double initial = image_mse(render_scene(state, cfg), target);
  const InversionResult r = invert_latents(target, state, cfg, inv);

  if (!a.curve.empty()) {
    std::ostringstream os;
    os.precision(9);
    os << "step,best_mse\n";
    for (std::size_t i = 0; i < r.curve.size(); ++i) os << i << ',' << r.curve[i] << '\n';
    write_text(a.curve, os.str());
  }
  if (!a.out.empty()) {
    SceneDocument out = doc;
    out.state.latents = r.latents;
    save_scene(out, a.out);
  }
  std::cout.precision(9);
  std::cout << "initial_mse,final_mse,steps\n" << initial << ',' << r.best_loss << ',' << r.steps_taken << '\n';
  return kOk;
}

struct ServeArgs {
  std::string host = "127.0.0.1", scene_dir, ui_dir;
  int port = 8080;
};

Service* g_service = nullptr;

int cmd_serve(const ServeArgs& a) {
  ServiceOptions o;
  o.scene_dir = fs::path(a.scene_dir);
  if (!a.ui_dir.empty()) o.ui_dir = fs::path(a.ui_dir);
  Service service(o);
  const int port = service.bind(a.host, a.port);
  g_service = &service;
  std::signal(SIGINT, [](int) { if (g_service) g_service->stop(); });
  std::signal(SIGTERM, [](int) { if (g_service) g_service->stop(); });
  std::cout << "listening on http://" << a.host << ':' << port << " (" << service.store().ids().size()
            << " scenes)" << std::endl;
  service.listen();
  g_service = nullptr;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* t = std::getenv("DISCO_THREADS")) set_render_threads(std::atoi(t));

  CLI::App app{"disco: compositional scene renderer and editor backend"};
  app.require_subcommand(1);

  RenderArgs ra;
  auto* render = app.add_subcommand("render", "render a scene file to an image");
  render->add_option("--scene", ra.scene, "scene JSON")->required();
  render->add_option("--out", ra.out, "output image (.png, .ppm or .dscf)")->required();
  render->add_option("--ssaa", ra.ssaa, "supersampling factor (1 or 2)");
  render->add_option("--size", ra.size, "output size override");
  render->add_flag("--components", ra.components, "also write _fg, _T and _bg images");
  render->add_option("--camera", ra.camera, "orbit override: yaw,pitch,radius");

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "time pruned against naive rendering");
  bench->add_option("--scene", ba.scene, "scene JSON")->required();
  bench->add_option("--iters", ba.iters, "timed runs per renderer");
  bench->add_flag("--assert", ba.assert_speedup, "fail unless the speedup reaches --min-speedup");
  bench->add_option("--min-speedup", ba.min_speedup, "threshold for --assert");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "adversarial training on the procedural dataset");
  train->add_option("--config", ta.config, "training config JSON")->required();
  train->add_option("--seed", ta.seed, "overrides the config seed");
  train->add_option("--steps", ta.steps, "overrides the config step count");
  train->add_option("--out-dir", ta.out_dir, "output directory")->required();

  InvertArgs ia;
  auto* invert = app.add_subcommand("invert", "recover latents for a target image");
  invert->add_option("--scene", ia.scene, "scene JSON (layout, models, camera)")->required();
  invert->add_option("--target", ia.target, "target image; omitted = self-generated target");
  invert->add_option("--target-seed", ia.target_seed, "latent seed of the self-generated target");
  invert->add_option("--seed", ia.seed, "resample the starting latents from this seed");
  invert->add_option("--size", ia.size, "render size override");
  invert->add_option("--steps", ia.steps, "optimisation steps");
  invert->add_option("--lr", ia.lr, "Adam learning rate");
  invert->add_option("--out", ia.out, "scene JSON with the recovered latents");
  invert->add_option("--curve", ia.curve, "CSV of the loss curve");

  ServeArgs sa;
  auto* serve = app.add_subcommand("serve", "HTTP scene editing service");
  serve->add_option("--port", sa.port, "port (0 picks a free one)");
  serve->add_option("--host", sa.host, "bind address");
  serve->add_option("--scene-dir", sa.scene_dir, "scene storage directory")->required();
  serve->add_option("--ui-dir", sa.ui_dir, "static UI bundle served at /ui");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (*render) return cmd_render(ra);
    if (*bench) return cmd_bench(ba);
    if (*train) return cmd_train(ta);
    if (*invert) return cmd_invert(ia);
    if (*serve) return cmd_serve(sa);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  }
  return kUsage;
}
