#include "disco/service.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <list>
#include <sstream>
#include <unordered_map>

#include "disco/image_io.hpp"
#include "disco/model_io.hpp"
#include "httplib.h"
#include "json.hpp"

namespace disco {

using nlohmann::json;

namespace {

struct NotFound : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace

// ---------------------------------------------------------------------------
// SceneStore

SceneStore::SceneStore(std::optional<std::filesystem::path> scene_dir)
    : scene_dir_(std::move(scene_dir)) {
  if (scene_dir_) std::filesystem::create_directories(*scene_dir_);
}

std::filesystem::path SceneStore::base_dir() const {
  return scene_dir_ ? *scene_dir_ : std::filesystem::current_path();
}

std::vector<std::string> SceneStore::load_directory() {
  std::vector<std::string> loaded;
  if (!scene_dir_) return loaded;
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(*scene_dir_))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::unique_lock lock(map_mutex_);
  for (const auto& f : files) {
    auto entry = std::make_shared<Entry>();
    entry->doc = load_scene(f);
    const std::string id = f.stem().string();
    scenes_[id] = std::move(entry);
    loaded.push_back(id);
  }
  return loaded;
}

std::vector<std::string> SceneStore::ids() const {
  std::shared_lock lock(map_mutex_);
  std::vector<std::string> out;
  for (const auto& [id, _] : scenes_) out.push_back(id);
  return out;
}

bool SceneStore::contains(const std::string& id) const {
  std::shared_lock lock(map_mutex_);
  return scenes_.count(id) != 0;
}

std::shared_ptr<SceneStore::Entry> SceneStore::entry(const std::string& id) const {
  std::shared_lock lock(map_mutex_);
  const auto it = scenes_.find(id);
  if (it == scenes_.end()) throw NotFound("unknown scene '" + id + "'");
  return it->second;
}

void SceneStore::persist(const std::string& id, const SceneDocument& doc) const {
  if (scene_dir_) save_scene(doc, *scene_dir_ / (id + ".json"));
}

std::string SceneStore::create(SceneDocument doc) {
  validate_scene(doc.state, doc.render);
  auto e = std::make_shared<Entry>();
  e->doc = std::move(doc);
  std::string id;
  {
    std::unique_lock lock(map_mutex_);
    do {
      id = "scene-" + std::to_string(next_id_++);
    } while (scenes_.count(id) != 0);
    scenes_[id] = e;
  }
  std::lock_guard g(e->mutex);
  persist(id, e->doc);
  return id;
}

SceneDocument SceneStore::snapshot(const std::string& id) const {
  auto e = entry(id);
  std::lock_guard g(e->mutex);
  return e->doc;
}

void SceneStore::replace(const std::string& id, SceneDocument doc) {
  validate_scene(doc.state, doc.render);
  auto e = entry(id);
  std::lock_guard g(e->mutex);
  e->doc = std::move(doc);
  persist(id, e->doc);
}

void SceneStore::mutate(const std::string& id, const std::function<void(SceneDocument&)>& f) {
  auto e = entry(id);
  std::lock_guard g(e->mutex);
  SceneDocument edited = e->doc;
  f(edited);
  validate_scene(edited.state, edited.render);
  e->doc = std::move(edited);
  persist(id, e->doc);
}

// ---------------------------------------------------------------------------
// HTTP layer

namespace {

class PngCache {
 public:
  explicit PngCache(std::size_t capacity) : capacity_(capacity) {}

  std::optional<std::string> get(const std::string& key) {
    std::lock_guard g(mutex_);
    const auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    order_.splice(order_.begin(), order_, it->second);
    return it->second->second;
  }

  void put(const std::string& key, std::string value) {
    std::lock_guard g(mutex_);
    if (capacity_ == 0) return;
    if (const auto it = index_.find(key); it != index_.end()) order_.erase(it->second);
    order_.emplace_front(key, std::move(value));
    index_[key] = order_.begin();
    while (order_.size() > capacity_) {
      index_.erase(order_.back().first);
      order_.pop_back();
    }
  }

 private:
  std::size_t capacity_;
  std::mutex mutex_;
  std::list<std::pair<std::string, std::string>> order_;
  std::unordered_map<std::string, std::list<std::pair<std::string, std::string>>::iterator> index_;
};

int status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::IndexOutOfRange:
      return 404;
    case ErrorKind::CapacityExceeded:
      return 409;
    case ErrorKind::Io:
    case ErrorKind::NonFinite:
      return 500;
    default:
      return 400;
  }
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& kind,
                const std::string& message) {
  send_json(res, {{"error", kind}, {"message", message}}, status);
}

std::string body_text(const std::string& s) { return s.empty() ? "{}" : s; }

Vec3 vec3_of(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() ||
      !j[2].is_number())
    throw Error(ErrorKind::Validation, std::string(what) + " must be an array of 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

std::size_t box_index(const std::string& s, const SceneDocument& doc) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (...) {
    pos = 0;
  }
  if (pos != s.size() || v >= doc.state.layout.size())
    throw Error(ErrorKind::IndexOutOfRange, "no box '" + s + "' in scene");
  return static_cast<std::size_t>(v);
}

int latent_dims(const SceneDocument& doc) {
  if (!doc.state.object_model) throw Error(ErrorKind::Validation, "scene has no object model");
  return doc.state.object_model->config().latent_dim;
}

std::optional<int> int_param(const httplib::Request& req, const char* name) {
  if (!req.has_param(name)) return std::nullopt;
  const std::string v = req.get_param_value(name);
  std::size_t pos = 0;
  int out = 0;
  try {
    out = std::stoi(v, &pos);
  } catch (...) {
    pos = 0;
  }
  if (pos != v.size() || v.empty())
    throw Error(ErrorKind::Validation, std::string("query parameter ") + name + " is not an integer");
  return out;
}

std::optional<double> double_param(const httplib::Request& req, const char* name) {
  if (!req.has_param(name)) return std::nullopt;
  const std::string v = req.get_param_value(name);
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (...) {
    pos = 0;
  }
  if (pos != v.size() || v.empty() || !std::isfinite(out))
    throw Error(ErrorKind::Validation, std::string("query parameter ") + name + " is not a number");
  return out;
}

RenderRequest render_request(const httplib::Request& req) {
  RenderRequest r;
  r.ssaa = int_param(req, "ssaa");
  r.size = int_param(req, "size");
  const auto yaw = double_param(req, "yaw"), pitch = double_param(req, "pitch"),
             radius = double_param(req, "radius");
  if (yaw || pitch || radius) {
    if (!(yaw && pitch && radius))
      throw Error(ErrorKind::Validation, "yaw, pitch and radius go together");
    r.orbit = std::array<double, 3>{*yaw, *pitch, *radius};
  }
  return r;
}

std::string cache_key(const SceneDocument& doc, const RenderRequest& r, const char* kind) {
  std::ostringstream key;
  key.precision(17);
  key << scene_hash(doc) << '/' << kind << '/' << r.ssaa.value_or(0) << '/' << r.size.value_or(0);
  if (r.orbit) key << '/' << (*r.orbit)[0] << ',' << (*r.orbit)[1] << ',' << (*r.orbit)[2];
  return key.str();
}

std::string to_string(const std::vector<std::uint8_t>& bytes) {
  return {reinterpret_cast<const char*>(bytes.data()), bytes.size()};
}

}  // namespace

struct Service::Impl {
  explicit Impl(ServiceOptions o) : options(std::move(o)), store(options.scene_dir),
                                    cache(options.cache_entries) {}

  ServiceOptions options;
  SceneStore store;
  PngCache cache;
  httplib::Server server;

  template <class F>
  void guarded(httplib::Response& res, F&& f) {
    try {
      f();
    } catch (const NotFound& e) {
      send_error(res, 404, "NotFound", e.what());
    } catch (const Error& e) {
      send_error(res, status_for(e.kind()), to_string(e.kind()), e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, "Parse", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "Internal", e.what());
    }
  }

  void routes();
};

void Service::Impl::routes() {
  server.Get("/scenes", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, {{"scenes", store.ids()}}); });
  });

  server.Post("/scenes", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string id = store.create(parse_scene(req.body, store.base_dir()));
      send_json(res, {{"id", id}}, 201);
    });
  });

  server.Get(R"(/scenes/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { res.set_content(dump_scene(store.snapshot(req.matches[1])), "application/json"); });
  });

  server.Put(R"(/scenes/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string id = req.matches[1];
      if (!store.contains(id)) throw NotFound("unknown scene '" + id + "'");
      store.replace(id, parse_scene(req.body, store.base_dir()));
      res.set_content(dump_scene(store.snapshot(id)), "application/json");
    });
  });

  // Insert a new box (fresh latent) or clone an existing one.
  server.Post(R"(/scenes/([^/]+)/boxes)", [this](const httplib::Request& req,
                                                  httplib::Response& res) {
    guarded(res, [&] {
      const json body = json::parse(body_text(req.body));
      std::size_t index = 0;
      store.mutate(req.matches[1], [&](SceneDocument& doc) {
        SceneState& s = doc.state;
        if (body.contains("clone")) {
          if (!body["clone"].is_number_unsigned())
            throw Error(ErrorKind::Validation, "clone must be a box index");
          const std::size_t src = box_index(std::to_string(body["clone"].get<std::size_t>()), doc);
          const Vec3 offset = body.contains("offset") ? vec3_of(body["offset"], "offset") : Vec3{};
          s.layout = apply_edit(s.layout, Clone{src, offset});
          if (src < s.latents.objects.size()) s.latents.objects.push_back(s.latents.objects[src]);
          if (!s.analytic_objects.empty()) s.analytic_objects.push_back(s.analytic_objects[src]);
        } else {
          Box3D box;
          if (body.contains("euler")) box.euler = vec3_of(body["euler"], "euler");
          if (body.contains("t")) box.translation = vec3_of(body["t"], "t");
          if (body.contains("s")) box.scale = vec3_of(body["s"], "s");
          validate_box(box);
          if (s.layout.size() >= s.layout.max_boxes)
            throw Error(ErrorKind::CapacityExceeded, "layout is full");
          s.layout.boxes.push_back(box);
          if (std::holds_alternative<AnalyticRef>(doc.object_ref)) {
            s.analytic_objects.push_back(ConstantBox{});
          } else {
            const std::uint64_t seed = body.contains("seed") ? body["seed"].get<std::uint64_t>()
                                                             : scene_hash(doc);
            s.latents.objects.push_back({sample_latent(seed, latent_dims(doc)), {}, 0});
          }
        }
        index = s.layout.size() - 1;
      });
      send_json(res, {{"index", index}}, 201);
    });
  });

  server.Patch(R"(/scenes/([^/]+)/boxes/([^/]+))", [this](const httplib::Request& req,
                                                          httplib::Response& res) {
    guarded(res, [&] {
      const json body = json::parse(body_text(req.body));
      for (const auto& [key, _] : body.items())
        if (key != "t" && key != "euler" && key != "s" && key != "translate" && key != "rotate" &&
            key != "scale")
          throw Error(ErrorKind::Validation, "unknown box field '" + key + "'");
      store.mutate(req.matches[1], [&](SceneDocument& doc) {
        const std::size_t i = box_index(req.matches[2], doc);
        Layout& layout = doc.state.layout;
        if (body.contains("t")) layout.boxes[i].translation = vec3_of(body["t"], "t");
        if (body.contains("euler")) layout.boxes[i].euler = vec3_of(body["euler"], "euler");
        if (body.contains("s")) layout.boxes[i].scale = vec3_of(body["s"], "s");
        if (body.contains("translate"))
          layout = apply_edit(layout, Translate{i, vec3_of(body["translate"], "translate")});
        if (body.contains("rotate"))
          layout = apply_edit(layout, Rotate{i, vec3_of(body["rotate"], "rotate")});
        if (body.contains("scale"))
          layout = apply_edit(layout, Scale{i, vec3_of(body["scale"], "scale")});
        validate_box(layout.boxes[i]);
      });
      res.set_content(dump_scene(store.snapshot(req.matches[1])), "application/json");
    });
  });

  server.Delete(R"(/scenes/([^/]+)/boxes/([^/]+))", [this](const httplib::Request& req,
                                                           httplib::Response& res) {
    guarded(res, [&] {
      store.mutate(req.matches[1], [&](SceneDocument& doc) {
        SceneState& s = doc.state;
        const std::size_t i = box_index(req.matches[2], doc);
        s.layout = apply_edit(s.layout, Remove{i});
        if (i < s.latents.objects.size())
          s.latents.objects.erase(s.latents.objects.begin() + static_cast<std::ptrdiff_t>(i));
        if (i < s.analytic_objects.size())
          s.analytic_objects.erase(s.analytic_objects.begin() + static_cast<std::ptrdiff_t>(i));
      });
      res.set_content(dump_scene(store.snapshot(req.matches[1])), "application/json");
    });
  });

  server.Post(R"(/scenes/([^/]+)/boxes/([^/]+)/restyle)", [this](const httplib::Request& req,
                                                                 httplib::Response& res) {
    guarded(res, [&] {
      const json body = json::parse(body_text(req.body));
      for (const auto& [key, _] : body.items())
        if (key != "seed" && key != "split_layer" && key != "donor_seed")
          throw Error(ErrorKind::Validation, "unknown restyle field '" + key + "'");
      store.mutate(req.matches[1], [&](SceneDocument& doc) {
        const std::size_t i = box_index(req.matches[2], doc);
        if (std::holds_alternative<AnalyticRef>(doc.object_ref))
          throw Error(ErrorKind::Validation, "analytic objects have no latent to restyle");
        const int dims = latent_dims(doc);
        ObjectLatent& l = doc.state.latents.objects.at(i);
        if (body.contains("split_layer")) {
          if (!body.contains("donor_seed"))
            throw Error(ErrorKind::Validation, "split_layer needs donor_seed");
          const int split = body["split_layer"].get<int>();
          const int depth = doc.state.object_model->config().depth;
          if (split < 0 || split > depth)
            throw Error(ErrorKind::Validation, "split_layer outside [0, " + std::to_string(depth) + "]");
          if (body.contains("seed")) l.z = sample_latent(body["seed"].get<std::uint64_t>(), dims);
          l.donor = sample_latent(body["donor_seed"].get<std::uint64_t>(), dims);
          l.split = split;
        } else if (body.contains("seed")) {
          l.z = sample_latent(body["seed"].get<std::uint64_t>(), dims);
          l.donor.reset();
          l.split = 0;
        } else {
          throw Error(ErrorKind::Validation, "restyle needs seed or split_layer + donor_seed");
        }
      });
      res.set_content(dump_scene(store.snapshot(req.matches[1])), "application/json");
    });
  });

  server.Get(R"(/scenes/([^/]+)/boxes/([^/]+)/corners2d)", [this](const httplib::Request& req,
                                                                   httplib::Response& res) {
    guarded(res, [&] {
      const SceneDocument doc = store.snapshot(req.matches[1]);
      const std::size_t i = box_index(req.matches[2], doc);
      const Camera& cam = doc.state.camera;
      const CameraBasis basis = camera_basis(cam);
      json corners = json::array();
      for (const Vec3& c : box_corners(doc.state.layout.boxes[i])) {
        const Projection p = project_point(cam, basis, c);
        corners.push_back({{"u", p.u}, {"v", p.v}, {"depth", p.depth}});
      }
      json rect = nullptr;
      try {
        const Rect2D r = project_box_2d(doc.state.layout.boxes[i], cam);
        rect = {{"u0", r.u0}, {"v0", r.v0}, {"u1", r.u1}, {"v1", r.v1}, {"degenerate", r.degenerate}};
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::BehindCamera) throw;
      }
      send_json(res, {{"size", cam.size}, {"corners", corners}, {"rect", rect}});
    });
  });

  server.Put(R"(/scenes/([^/]+)/camera)", [this](const httplib::Request& req,
                                                 httplib::Response& res) {
    guarded(res, [&] {
      const json body = json::parse(body_text(req.body));
      store.mutate(req.matches[1], [&](SceneDocument& doc) {
        Camera& c = doc.state.camera;
        for (const auto& [key, value] : body.items()) {
          if (key == "position") c.position = vec3_of(value, "position");
          else if (key == "target") c.target = vec3_of(value, "target");
          else if (key == "up") c.up = vec3_of(value, "up");
          else if (key == "fov_y") c.fov_y = value.get<double>();
          else if (key == "size") c.size = value.get<int>();
          else if (key == "near_epsilon") c.near_epsilon = value.get<double>();
          else if (key == "orbit") {
            const double radius = value.at("radius").get<double>();
            if (!(radius > 0.0)) throw Error(ErrorKind::Validation, "orbit radius must be positive");
            c = orbit_camera(c, value.at("yaw").get<double>(), value.at("pitch").get<double>(), radius);
          } else {
            throw Error(ErrorKind::Validation, "unknown camera field '" + key + "'");
          }
        }
        validate_camera(c);
      });
      res.set_content(dump_scene(store.snapshot(req.matches[1])), "application/json");
    });
  });

  server.Get(R"(/scenes/([^/]+)/render)", [this](const httplib::Request& req,
                                                 httplib::Response& res) {
    guarded(res, [&] {
      const SceneDocument doc = store.snapshot(req.matches[1]);
      const RenderRequest r = render_request(req);
      const std::string key = cache_key(doc, r, "png");
      auto png = cache.get(key);
      if (!png) {
        png = to_string(encode_png(render_document(doc, r)));
        cache.put(key, *png);
      }
      res.set_header("X-Scene-Hash", std::to_string(scene_hash(doc)));
      res.set_content(*png, "image/png");
    });
  });

  server.Get(R"(/scenes/([^/]+)/render/components)", [this](const httplib::Request& req,
                                                            httplib::Response& res) {
    guarded(res, [&] {
      const std::string id = req.matches[1];
      const SceneDocument doc = store.snapshot(id);
      const RenderRequest r = render_request(req);
      if (!req.has_param("part")) {
        std::string query = "?";
        if (r.ssaa) query += "ssaa=" + std::to_string(*r.ssaa) + "&";
        if (r.size) query += "size=" + std::to_string(*r.size) + "&";
        for (const char* p : {"yaw", "pitch", "radius"})
          if (req.has_param(p)) query += std::string(p) + "=" + req.get_param_value(p) + "&";
        json parts;
        for (const char* p : {"foreground", "transmittance", "background"})
          parts[p] = "/scenes/" + id + "/render/components" + query + "part=" + p;
        send_json(res, parts);
        return;
      }
      const std::string part = req.get_param_value("part");
      if (part != "foreground" && part != "transmittance" && part != "background")
        throw Error(ErrorKind::Validation, "part must be foreground, transmittance or background");
      const RenderComponents c = render_document_components(doc, r);
      const Image img = part == "foreground"   ? c.foreground
                        : part == "background" ? c.background
                                               : transmittance_image(c.foreground.size, c.transmittance);
      res.set_content(to_string(encode_png(img)), "image/png");
    });
  });

  server.Get(R"(/scenes/([^/]+)/render/raw)", [this](const httplib::Request& req,
                                                     httplib::Response& res) {
    guarded(res, [&] {
      const SceneDocument doc = store.snapshot(req.matches[1]);
      res.set_content(to_string(encode_raw(render_document(doc, render_request(req)))),
                      "application/octet-stream");
    });
  });

  if (options.ui_dir) server.set_mount_point("/ui", options.ui_dir->string());
}

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {
  impl_->store.load_directory();
  impl_->routes();
}

Service::~Service() { stop(); }

SceneStore& Service::store() { return impl_->store; }

int Service::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  if (!impl_->server.bind_to_port(host, port))
    throw Error(ErrorKind::Io, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void Service::listen() { impl_->server.listen_after_bind(); }

void Service::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace disco
