#include <set>

#include "disco/error.hpp"
#include "disco/training.hpp"
#include "json.hpp"

namespace disco {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorKind::Validation, where + " must be an object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw Error(ErrorKind::Validation, "unknown key '" + where + key + "'");
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_range(const json& j, const char* key, Range& r) {
  if (!j.contains(key)) return;
  const json& a = j.at(key);
  if (!a.is_array() || a.size() != 2) throw Error(ErrorKind::Validation, std::string(key) + " must be [lo, hi]");
  r = {a[0].get<double>(), a[1].get<double>()};
}

void read_ranges(const json& j, const char* key, std::array<Range, 3>& r) {
  if (!j.contains(key)) return;
  const json& a = j.at(key);
  if (!a.is_array() || a.size() != 3) throw Error(ErrorKind::Validation, std::string(key) + " needs 3 ranges");
  for (std::size_t i = 0; i < 3; ++i) {
    if (!a[i].is_array() || a[i].size() != 2)
      throw Error(ErrorKind::Validation, std::string(key) + " entries must be [lo, hi]");
    r[i] = {a[i][0].get<double>(), a[i][1].get<double>()};
  }
}

void read_adam(const json& j, AdamConfig& a) {
  check_keys(j, {"lr", "beta1", "beta2", "eps"}, "optimizer.");
  read(j, "lr", a.lr);
  read(j, "beta1", a.beta1);
  read(j, "beta2", a.beta2);
  read(j, "eps", a.eps);
}

}  // namespace

TrainConfig parse_train_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Parse, e.what());
  }
  TrainConfig c;
  try {
    check_keys(j,
               {"image_size", "samples_per_box", "background_samples", "batch_size", "steps", "seed",
                "g_optimizer", "d_optimizer", "lambda_obj", "lambda_r1_scene", "lambda_r1_obj",
                "patch_size", "disc_size", "disc_hidden", "disc_depth", "object", "background",
                "prior", "camera_pitch", "camera_radius", "background_mode"},
               "");
    read(j, "image_size", c.image_size);
    read(j, "samples_per_box", c.samples_per_box);
    read(j, "background_samples", c.background_samples);
    read(j, "batch_size", c.batch_size);
    read(j, "steps", c.steps);
    read(j, "seed", c.seed);
    if (j.contains("g_optimizer")) read_adam(j["g_optimizer"], c.g_optimizer);
    if (j.contains("d_optimizer")) read_adam(j["d_optimizer"], c.d_optimizer);
    read(j, "lambda_obj", c.weights.lambda_obj);
    read(j, "lambda_r1_scene", c.weights.lambda_r1_scene);
    read(j, "lambda_r1_obj", c.weights.lambda_r1_obj);
    read(j, "patch_size", c.patch_size);
    read(j, "disc_size", c.disc_size);
    read(j, "disc_hidden", c.disc_hidden);
    read(j, "disc_depth", c.disc_depth);
    if (j.contains("object")) {
      const json& o = j["object"];
      check_keys(o, {"depth", "hidden", "latent_dim", "pos_frequencies"}, "object.");
      read(o, "depth", c.object.depth);
      read(o, "hidden", c.object.hidden);
      read(o, "latent_dim", c.object.latent_dim);
      read(o, "pos_frequencies", c.object.pos_frequencies);
    }
    if (j.contains("background")) {
      const json& b = j["background"];
      check_keys(b, {"depth", "hidden", "latent_dim", "pos_frequencies"}, "background.");
      read(b, "depth", c.background.depth);
      read(b, "hidden", c.background.hidden);
      read(b, "latent_dim", c.background.latent_dim);
      read(b, "pos_frequencies", c.background.pos_frequencies);
    }
    if (j.contains("prior")) {
      const json& p = j["prior"];
      check_keys(p, {"min_count", "max_count", "translation", "scale", "yaw", "reject_overlap",
                     "max_retries", "max_boxes"},
                 "prior.");
      read(p, "min_count", c.prior.min_count);
      read(p, "max_count", c.prior.max_count);
      read_ranges(p, "translation", c.prior.translation);
      read_ranges(p, "scale", c.prior.scale);
      read_range(p, "yaw", c.prior.yaw);
      read(p, "reject_overlap", c.prior.reject_overlap);
      read(p, "max_retries", c.prior.max_retries);
      read(p, "max_boxes", c.prior.max_boxes);
    }
    read(j, "camera_pitch", c.camera_pitch);
    read(j, "camera_radius", c.camera_radius);
    if (j.contains("background_mode")) {
      const json& m = j["background_mode"];
      const std::string mode = m.at("mode").get<std::string>();
      if (mode == "bounded") {
        check_keys(m, {"mode", "near", "far"}, "background_mode.");
        BoundedBackground b;
        read(m, "near", b.near);
        read(m, "far", b.far);
        c.background_mode = b;
      } else if (mode == "unbounded") {
        check_keys(m, {"mode", "start_depth"}, "background_mode.");
        UnboundedBackground u;
        read(m, "start_depth", u.start_depth);
        c.background_mode = u;
      } else {
        throw Error(ErrorKind::Validation, "background_mode.mode must be bounded or unbounded");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Validation, e.what());
  }
  c.background.input_dims = background_input_dims(c.background_mode);
  validate_train_config(c);
  return c;
}

}  // namespace disco
