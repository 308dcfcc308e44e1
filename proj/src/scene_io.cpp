#include "disco/scene_io.hpp"

#include <algorithm>
#include <set>

#include "disco/model_io.hpp"
#include "json.hpp"

namespace disco {

using nlohmann::json;

ParseError::ParseError(std::size_t line, std::size_t column, const std::string& what)
    : Error(ErrorKind::Parse,
            "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what),
      line_(line),
      column_(column) {}

namespace {

// ---------------------------------------------------------------------------
// Writing

json vec3(Vec3 v) { return json::array({v.x, v.y, v.z}); }

json vector_json(const std::vector<double>& v) { return json(v); }

json analytic_json(const AnalyticFieldSpec& spec) {
  return std::visit(
      [](const auto& s) -> json {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, ConstantBox>) {
          return {{"type", "constant_box"}, {"sigma", s.sigma}, {"rgb", vec3(s.rgb)}};
        } else if constexpr (std::is_same_v<S, SoftSphere>) {
          return {{"type", "soft_sphere"}, {"radius", s.radius}, {"sigma", s.sigma},
                  {"rgb", vec3(s.rgb)},    {"falloff", s.falloff}};
        } else {
          return {{"type", "gradient"},      {"rgb_low", vec3(s.rgb_low)},
                  {"rgb_high", vec3(s.rgb_high)}, {"y_low", s.y_low},
                  {"y_high", s.y_high},      {"sigma", s.sigma}};
        }
      },
      spec);
}

json camera_json(const Camera& c) {
  return {{"position", vec3(c.position)}, {"target", vec3(c.target)},
          {"up", vec3(c.up)},             {"fov_y", c.fov_y},
          {"size", c.size},               {"near_epsilon", c.near_epsilon}};
}

json render_json(const RenderConfig& r) {
  json bg;
  if (const auto* b = std::get_if<BoundedBackground>(&r.background))
    bg = {{"mode", "bounded"}, {"near", b->near}, {"far", b->far}};
  else
    bg = {{"mode", "unbounded"},
          {"start_depth", std::get<UnboundedBackground>(r.background).start_depth}};
  return {{"samples_per_box", r.samples_per_box},
          {"background_samples", r.background_samples},
          {"background", bg},
          {"ssaa", r.ssaa},
          {"tile_size", r.tile_size}};
}

json object_ref_json(const ObjectModelRef& ref, const SceneState& state) {
  if (const auto* p = std::get_if<ModelPath>(&ref)) return {{"path", p->path}};
  if (const auto* i = std::get_if<ObjectModelInit>(&ref))
    return {{"init",
             {{"seed", i->seed},
              {"depth", i->config.depth},
              {"hidden", i->config.hidden},
              {"latent_dim", i->config.latent_dim},
              {"pos_frequencies", i->config.pos_frequencies}}}};
  json specs = json::array();
  for (const auto& s : state.analytic_objects) specs.push_back(analytic_json(s));
  return {{"analytic", specs}};
}

json background_ref_json(const BackgroundModelRef& ref, const SceneState& state) {
  if (const auto* p = std::get_if<ModelPath>(&ref)) return {{"path", p->path}};
  if (const auto* i = std::get_if<BackgroundModelInit>(&ref))
    return {{"init",
             {{"seed", i->seed},
              {"depth", i->depth},
              {"hidden", i->hidden},
              {"latent_dim", i->latent_dim},
              {"pos_frequencies", i->pos_frequencies}}}};
  return {{"analytic", state.analytic_background ? analytic_json(*state.analytic_background)
                                                 : json(nullptr)}};
}

json document_json(const SceneDocument& doc) {
  const SceneState& s = doc.state;
  json boxes = json::array();
  for (const auto& b : s.layout.boxes)
    boxes.push_back({{"euler", vec3(b.euler)}, {"t", vec3(b.translation)}, {"s", vec3(b.scale)}});
  json objects = json::array();
  for (const auto& l : s.latents.objects) {
    json o = {{"z", vector_json(l.z)}};
    if (l.donor) {
      o["donor"] = vector_json(*l.donor);
      o["split"] = l.split;
    }
    objects.push_back(o);
  }
  return {{"version", kSceneVersion},
          {"camera", camera_json(s.camera)},
          {"layout", {{"boxes", boxes}, {"max_boxes", s.layout.max_boxes}}},
          {"latents", {{"objects", objects}, {"background", {{"z", vector_json(s.latents.background)}}}}},
          {"models",
           {{"object", object_ref_json(doc.object_ref, s)},
            {"background", background_ref_json(doc.background_ref, s)}}},
          {"render", render_json(doc.render)}};
}

// ---------------------------------------------------------------------------
// Reading

[[noreturn]] void invalid(const std::string& where, const std::string& what) {
  throw Error(ErrorKind::Validation, where + ": " + what);
}

const json& member(const json& obj, const char* key, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) invalid(where, std::string("missing field '") + key + "'");
  return *it;
}

void check_object(const json& obj, std::initializer_list<const char*> allowed,
                  const std::string& where) {
  if (!obj.is_object()) invalid(where, "expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw Error(ErrorKind::VersionMismatch, where + ": unknown field '" + key +
                                                  "' for scene format v" +
                                                  std::to_string(kSceneVersion));
  }
}

double number(const json& j, const std::string& where) {
  if (!j.is_number()) invalid(where, "expected a number");
  return j.get<double>();
}

int integer(const json& j, const std::string& where) {
  if (!j.is_number_integer()) invalid(where, "expected an integer");
  return j.get<int>();
}

std::uint64_t unsigned_integer(const json& j, const std::string& where) {
  if (!j.is_number_unsigned()) invalid(where, "expected a non-negative integer");
  return j.get<std::uint64_t>();
}

Vec3 read_vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) invalid(where, "expected an array of 3 numbers");
  return {number(j[0], where), number(j[1], where), number(j[2], where)};
}

std::vector<double> read_vector(const json& j, const std::string& where) {
  if (!j.is_array()) invalid(where, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(number(j[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

AnalyticFieldSpec read_analytic(const json& j, const std::string& where) {
  if (!j.is_object()) invalid(where, "expected an analytic field object");
  const json& type = member(j, "type", where);
  if (!type.is_string()) invalid(where + ".type", "expected a string");
  const std::string t = type.get<std::string>();
  AnalyticFieldSpec spec;
  if (t == "constant_box") {
    check_object(j, {"type", "sigma", "rgb"}, where);
    spec = ConstantBox{number(member(j, "sigma", where), where + ".sigma"),
                       read_vec3(member(j, "rgb", where), where + ".rgb")};
  } else if (t == "soft_sphere") {
    check_object(j, {"type", "radius", "sigma", "rgb", "falloff"}, where);
    spec = SoftSphere{number(member(j, "radius", where), where + ".radius"),
                      number(member(j, "sigma", where), where + ".sigma"),
                      read_vec3(member(j, "rgb", where), where + ".rgb"),
                      number(member(j, "falloff", where), where + ".falloff")};
  } else if (t == "gradient") {
    check_object(j, {"type", "rgb_low", "rgb_high", "y_low", "y_high", "sigma"}, where);
    spec = GradientBackground{read_vec3(member(j, "rgb_low", where), where + ".rgb_low"),
                              read_vec3(member(j, "rgb_high", where), where + ".rgb_high"),
                              number(member(j, "y_low", where), where + ".y_low"),
                              number(member(j, "y_high", where), where + ".y_high"),
                              number(member(j, "sigma", where), where + ".sigma")};
  } else {
    invalid(where + ".type", "unknown analytic field '" + t + "'");
  }
  try {
    validate_analytic(spec);
  } catch (const Error& e) {
    invalid(where, e.what());
  }
  return spec;
}

Camera read_camera(const json& j) {
  const std::string w = "camera";
  check_object(j, {"position", "target", "up", "fov_y", "size", "near_epsilon"}, w);
  Camera c;
  c.position = read_vec3(member(j, "position", w), w + ".position");
  c.target = read_vec3(member(j, "target", w), w + ".target");
  c.up = read_vec3(member(j, "up", w), w + ".up");
  c.fov_y = number(member(j, "fov_y", w), w + ".fov_y");
  c.size = integer(member(j, "size", w), w + ".size");
  if (j.contains("near_epsilon")) c.near_epsilon = number(j["near_epsilon"], w + ".near_epsilon");
  try {
    validate_camera(c);
  } catch (const Error& e) {
    invalid(w, e.what());
  }
  return c;
}

RenderConfig read_render(const json& j) {
  const std::string w = "render";
  check_object(j, {"samples_per_box", "background_samples", "background", "ssaa", "tile_size"}, w);
  RenderConfig r;
  if (j.contains("samples_per_box"))
    r.samples_per_box = integer(j["samples_per_box"], w + ".samples_per_box");
  if (j.contains("background_samples"))
    r.background_samples = integer(j["background_samples"], w + ".background_samples");
  if (j.contains("ssaa")) r.ssaa = integer(j["ssaa"], w + ".ssaa");
  if (j.contains("tile_size")) r.tile_size = integer(j["tile_size"], w + ".tile_size");
  if (j.contains("background")) {
    const json& b = j["background"];
    const std::string wb = w + ".background";
    if (!b.is_object()) invalid(wb, "expected an object");
    const json& mode = member(b, "mode", wb);
    if (mode == "bounded") {
      check_object(b, {"mode", "near", "far"}, wb);
      r.background = BoundedBackground{number(member(b, "near", wb), wb + ".near"),
                                       number(member(b, "far", wb), wb + ".far")};
    } else if (mode == "unbounded") {
      check_object(b, {"mode", "start_depth"}, wb);
      r.background = UnboundedBackground{number(member(b, "start_depth", wb), wb + ".start_depth")};
    } else {
      invalid(wb + ".mode", "expected 'bounded' or 'unbounded'");
    }
  }
  try {
    validate_render_config(r);
  } catch (const Error& e) {
    invalid(w, e.what());
  }
  return r;
}

Layout read_layout(const json& j) {
  const std::string w = "layout";
  check_object(j, {"boxes", "max_boxes"}, w);
  Layout layout;
  if (j.contains("max_boxes")) {
    const int m = integer(j["max_boxes"], w + ".max_boxes");
    if (m < 0) invalid(w + ".max_boxes", "must be non-negative");
    layout.max_boxes = static_cast<std::size_t>(m);
  }
  const json& boxes = member(j, "boxes", w);
  if (!boxes.is_array()) invalid(w + ".boxes", "expected an array");
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const std::string wb = w + ".boxes[" + std::to_string(i) + "]";
    check_object(boxes[i], {"euler", "t", "s"}, wb);
    Box3D b;
    b.euler = read_vec3(member(boxes[i], "euler", wb), wb + ".euler");
    b.translation = read_vec3(member(boxes[i], "t", wb), wb + ".t");
    b.scale = read_vec3(member(boxes[i], "s", wb), wb + ".s");
    try {
      validate_box(b);
    } catch (const Error& e) {
      invalid(wb, e.what());
    }
    layout.boxes.push_back(b);
  }
  try {
    validate_layout(layout);
  } catch (const Error& e) {
    invalid(w, e.what());
  }
  return layout;
}

void read_models(const json& j, SceneDocument& doc) {
  const std::string w = "models";
  check_object(j, {"object", "background"}, w);
  {
    const std::string wo = w + ".object";
    const json& o = member(j, "object", w);
    check_object(o, {"path", "init", "analytic"}, wo);
    if (o.size() != 1) invalid(wo, "expected exactly one of path, init, analytic");
    if (o.contains("path")) {
      if (!o["path"].is_string()) invalid(wo + ".path", "expected a string");
      doc.object_ref = ModelPath{o["path"].get<std::string>()};
    } else if (o.contains("init")) {
      const json& i = o["init"];
      const std::string wi = wo + ".init";
      check_object(i, {"seed", "depth", "hidden", "latent_dim", "pos_frequencies"}, wi);
      ObjectModelInit init;
      init.seed = unsigned_integer(member(i, "seed", wi), wi + ".seed");
      if (i.contains("depth")) init.config.depth = integer(i["depth"], wi + ".depth");
      if (i.contains("hidden")) init.config.hidden = integer(i["hidden"], wi + ".hidden");
      if (i.contains("latent_dim")) init.config.latent_dim = integer(i["latent_dim"], wi + ".latent_dim");
      if (i.contains("pos_frequencies"))
        init.config.pos_frequencies = integer(i["pos_frequencies"], wi + ".pos_frequencies");
      if (init.config.depth < 1 || init.config.hidden < 1 || init.config.latent_dim < 1 ||
          init.config.pos_frequencies < 1)
        invalid(wi, "model sizes must be positive");
      doc.object_ref = init;
    } else {
      const json& a = o["analytic"];
      if (!a.is_array()) invalid(wo + ".analytic", "expected an array (one spec per box)");
      doc.object_ref = AnalyticRef{};
      for (std::size_t i = 0; i < a.size(); ++i)
        doc.state.analytic_objects.push_back(
            read_analytic(a[i], wo + ".analytic[" + std::to_string(i) + "]"));
    }
  }
  {
    const std::string wb = w + ".background";
    const json& b = member(j, "background", w);
    check_object(b, {"path", "init", "analytic"}, wb);
    if (b.size() != 1) invalid(wb, "expected exactly one of path, init, analytic");
    if (b.contains("path")) {
      if (!b["path"].is_string()) invalid(wb + ".path", "expected a string");
      doc.background_ref = ModelPath{b["path"].get<std::string>()};
    } else if (b.contains("init")) {
      const json& i = b["init"];
      const std::string wi = wb + ".init";
      check_object(i, {"seed", "depth", "hidden", "latent_dim", "pos_frequencies"}, wi);
      BackgroundModelInit init;
      init.seed = unsigned_integer(member(i, "seed", wi), wi + ".seed");
      if (i.contains("depth")) init.depth = integer(i["depth"], wi + ".depth");
      if (i.contains("hidden")) init.hidden = integer(i["hidden"], wi + ".hidden");
      if (i.contains("latent_dim")) init.latent_dim = integer(i["latent_dim"], wi + ".latent_dim");
      if (i.contains("pos_frequencies"))
        init.pos_frequencies = integer(i["pos_frequencies"], wi + ".pos_frequencies");
      if (init.depth < 1 || init.hidden < 1 || init.latent_dim < 1 || init.pos_frequencies < 1)
        invalid(wi, "model sizes must be positive");
      doc.background_ref = init;
    } else {
      doc.background_ref = AnalyticRef{};
      doc.state.analytic_background = read_analytic(b["analytic"], wb + ".analytic");
    }
  }
}

ObjectLatent read_object_latent(const json& j, const std::string& w, int dims) {
  check_object(j, {"z", "seed", "donor", "donor_seed", "split"}, w);
  ObjectLatent l;
  if (j.contains("z") == j.contains("seed")) invalid(w, "expected exactly one of z, seed");
  l.z = j.contains("z") ? read_vector(j["z"], w + ".z")
                        : sample_latent(unsigned_integer(j["seed"], w + ".seed"), dims);
  if (j.contains("donor") && j.contains("donor_seed"))
    invalid(w, "expected at most one of donor, donor_seed");
  if (j.contains("donor")) l.donor = read_vector(j["donor"], w + ".donor");
  if (j.contains("donor_seed"))
    l.donor = sample_latent(unsigned_integer(j["donor_seed"], w + ".donor_seed"), dims);
  if (j.contains("split")) {
    if (!l.donor) invalid(w + ".split", "split without a donor latent");
    l.split = integer(j["split"], w + ".split");
  } else if (l.donor) {
    invalid(w, "donor latent without a split");
  }
  return l;
}

std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  const std::size_t end = std::min(byte > 0 ? byte - 1 : 0, text.size());
  for (std::size_t i = 0; i < end; ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

std::string dump_scene(const SceneDocument& doc) { return document_json(doc).dump(2) + "\n"; }

void resolve_models(SceneDocument& doc, const std::filesystem::path& base_dir) {
  auto locate = [&](const std::string& p) {
    std::filesystem::path path(p);
    if (path.is_relative()) path = base_dir / path;
    if (!std::filesystem::exists(path))
      throw Error(ErrorKind::DanglingModelRef, "model file '" + p + "' not found");
    return path;
  };
  SceneState& s = doc.state;
  if (const auto* p = std::get_if<ModelPath>(&doc.object_ref))
    s.object_model = std::make_shared<ObjectFieldModel>(load_object_model(locate(p->path)));
  else if (const auto* i = std::get_if<ObjectModelInit>(&doc.object_ref))
    s.object_model = std::make_shared<ObjectFieldModel>(ObjectFieldModel::random(i->config, i->seed));
  else
    s.object_model.reset();

  const int dims = background_input_dims(doc.render.background);
  if (const auto* p = std::get_if<ModelPath>(&doc.background_ref)) {
    s.background_model =
        std::make_shared<BackgroundFieldModel>(load_background_model(locate(p->path), dims));
  } else if (const auto* i = std::get_if<BackgroundModelInit>(&doc.background_ref)) {
    BackgroundFieldConfig cfg{i->depth, i->hidden, i->latent_dim, i->pos_frequencies, dims};
    s.background_model =
        std::make_shared<BackgroundFieldModel>(BackgroundFieldModel::random(cfg, i->seed));
  } else {
    s.background_model.reset();
  }
}

SceneDocument parse_scene(std::string_view text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_column(text, e.byte);
    throw ParseError(line, col, e.what());
  }
  check_object(j, {"version", "camera", "layout", "latents", "models", "render"}, "scene");
  const json& version = member(j, "version", "scene");
  if (!version.is_number_integer() || version.get<int>() != kSceneVersion)
    throw Error(ErrorKind::VersionMismatch, "unsupported scene version " + version.dump() +
                                                " (expected " + std::to_string(kSceneVersion) + ")");
  SceneDocument doc;
  doc.state.camera = read_camera(member(j, "camera", "scene"));
  doc.state.layout = read_layout(member(j, "layout", "scene"));
  doc.render = j.contains("render") ? read_render(j["render"]) : RenderConfig{};
  read_models(member(j, "models", "scene"), doc);
  resolve_models(doc, base_dir);

  const json& latents = member(j, "latents", "scene");
  check_object(latents, {"objects", "background"}, "latents");
  const json& objects = member(latents, "objects", "latents");
  if (!objects.is_array()) invalid("latents.objects", "expected an array");
  const int obj_dims = doc.state.object_model ? doc.state.object_model->config().latent_dim : 0;
  for (std::size_t i = 0; i < objects.size(); ++i)
    doc.state.latents.objects.push_back(read_object_latent(
        objects[i], "latents.objects[" + std::to_string(i) + "]", obj_dims));
  if (latents.contains("background")) {
    const json& b = latents["background"];
    check_object(b, {"z", "seed"}, "latents.background");
    if (b.contains("z") == b.contains("seed"))
      invalid("latents.background", "expected exactly one of z, seed");
    const int bg_dims =
        doc.state.background_model ? doc.state.background_model->config().latent_dim : 0;
    doc.state.latents.background =
        b.contains("z") ? read_vector(b["z"], "latents.background.z")
                        : sample_latent(unsigned_integer(b["seed"], "latents.background.seed"),
                                        bg_dims);
  }
  if (std::holds_alternative<AnalyticRef>(doc.object_ref) &&
      doc.state.analytic_objects.size() != doc.state.layout.size())
    invalid("models.object.analytic", "need one analytic spec per box (" +
                                          std::to_string(doc.state.layout.size()) + ")");
  validate_scene(doc.state, doc.render);
  return doc;
}

SceneDocument load_scene(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse_scene(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                     path.parent_path());
}

void save_scene(const SceneDocument& doc, const std::filesystem::path& path) {
  const std::string text = dump_scene(doc);
  write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::uint64_t scene_hash(const SceneDocument& doc) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : dump_scene(doc)) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}


std::pair<SceneState, RenderConfig> prepare_render(const SceneDocument& doc,
                                                   const RenderRequest& request) {
  SceneState state = doc.state;
  RenderConfig config = doc.render;
  if (request.ssaa) {
    if (*request.ssaa != 1 && *request.ssaa != 2)
      throw Error(ErrorKind::Validation, "ssaa must be 1 or 2");
    config.ssaa = *request.ssaa;
  }
  if (request.size) {
    if (*request.size < 1 || *request.size > kMaxServiceRenderSize)
      throw Error(ErrorKind::Validation, "size must be in [1, " +
                                             std::to_string(kMaxServiceRenderSize) + "]");
    state.camera.size = *request.size;
  }
  if (request.orbit) {
    const auto [yaw, pitch, radius] = *request.orbit;
    if (!(radius > 0.0)) throw Error(ErrorKind::Validation, "orbit radius must be positive");
    state.camera = orbit_camera(state.camera, yaw, pitch, radius);
  }
  return {std::move(state), config};
}

Image render_document(const SceneDocument& doc, const RenderRequest& request) {
  const auto [state, config] = prepare_render(doc, request);
  return render_scene(state, config);
}

RenderComponents render_document_components(const SceneDocument& doc,
                                            const RenderRequest& request) {
  const auto [state, config] = prepare_render(doc, request);
  return render_components(state, config);
}

}  // namespace disco
