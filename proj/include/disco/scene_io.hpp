#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

#include "disco/error.hpp"
#include "disco/renderer.hpp"

namespace disco {

inline constexpr int kSceneVersion = 1;

struct ModelPath {
  std::string path;  // relative paths resolve against the scene file's directory
  friend bool operator==(const ModelPath&, const ModelPath&) = default;
};

/// Deterministic random initialisation instead of a weights file.
struct ObjectModelInit {
  std::uint64_t seed = 0;
  ObjectFieldConfig config;
  friend bool operator==(const ObjectModelInit&, const ObjectModelInit&) = default;
};

/// input_dims is taken from the render config's background mode.
struct BackgroundModelInit {
  std::uint64_t seed = 0;
  int depth = 4;
  int hidden = 128;
  int latent_dim = 64;
  int pos_frequencies = 10;
  friend bool operator==(const BackgroundModelInit&, const BackgroundModelInit&) = default;
};

/// The analytic specs themselves live in SceneState.
struct AnalyticRef {
  friend bool operator==(const AnalyticRef&, const AnalyticRef&) = default;
};

using ObjectModelRef = std::variant<ModelPath, ObjectModelInit, AnalyticRef>;
using BackgroundModelRef = std::variant<ModelPath, BackgroundModelInit, AnalyticRef>;

struct SceneDocument {
  SceneState state;
  ObjectModelRef object_ref = ObjectModelInit{};
  BackgroundModelRef background_ref = BackgroundModelInit{};
  RenderConfig render;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, std::size_t column, const std::string& what);
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

/// Canonical text: sorted keys, shortest round-trip numbers, two-space
/// indent, trailing newline. A pure function of the document.
std::string dump_scene(const SceneDocument& doc);

/// Parses and resolves model references (relative to base_dir). Throws
/// ParseError, VersionMismatch (wrong version or unknown field),
/// DanglingModelRef, Validation, Io.
SceneDocument parse_scene(std::string_view text, const std::filesystem::path& base_dir);

SceneDocument load_scene(const std::filesystem::path& path);
void save_scene(const SceneDocument& doc, const std::filesystem::path& path);

/// Instantiates the models named by the refs into doc.state.
void resolve_models(SceneDocument& doc, const std::filesystem::path& base_dir);

/// Stable 64-bit hash of the canonical text (FNV-1a).
std::uint64_t scene_hash(const SceneDocument& doc);


/// Overrides applied on top of a document when rendering; shared by the CLI
/// and the HTTP service so both produce identical bytes.
struct RenderRequest {
  std::optional<int> ssaa;
  std::optional<int> size;
  /// yaw, pitch, radius orbit about the camera target.
  std::optional<std::array<double, 3>> orbit;
};

inline constexpr int kMaxServiceRenderSize = 256;

/// Scene state and render config with the request applied. Throws
/// Validation for out-of-range overrides.
std::pair<SceneState, RenderConfig> prepare_render(const SceneDocument& doc,
                                                   const RenderRequest& request);
Image render_document(const SceneDocument& doc, const RenderRequest& request);
RenderComponents render_document_components(const SceneDocument& doc,
                                            const RenderRequest& request);

}  // namespace disco
