#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "disco/scene_io.hpp"

namespace disco {

/// In-memory scene collection with one writer lock per scene. Mutations are
/// persisted to scene_dir (when set) as <id>.json.
class SceneStore {
 public:
  explicit SceneStore(std::optional<std::filesystem::path> scene_dir = std::nullopt);

  /// Loads every *.json in scene_dir; returns the ids loaded.
  std::vector<std::string> load_directory();

  std::vector<std::string> ids() const;
  bool contains(const std::string& id) const;
  std::string create(SceneDocument doc);
  /// Consistent copy (models are shared, immutable).
  SceneDocument snapshot(const std::string& id) const;
  void replace(const std::string& id, SceneDocument doc);
  /// Applies f under the scene's exclusive lock; the edit is committed only
  /// if f returns without throwing and the result validates.
  void mutate(const std::string& id, const std::function<void(SceneDocument&)>& f);

  const std::optional<std::filesystem::path>& scene_dir() const { return scene_dir_; }
  std::filesystem::path base_dir() const;

 private:
  struct Entry {
    mutable std::mutex mutex;
    SceneDocument doc;
  };
  std::shared_ptr<Entry> entry(const std::string& id) const;
  void persist(const std::string& id, const SceneDocument& doc) const;

  std::optional<std::filesystem::path> scene_dir_;
  mutable std::shared_mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> scenes_;
  std::uint64_t next_id_ = 1;
};

struct ServiceOptions {
  std::optional<std::filesystem::path> scene_dir;
  std::optional<std::filesystem::path> ui_dir;
  std::size_t cache_entries = 64;
};

/// HTTP front end for a SceneStore.
class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  SceneStore& store();

  /// Binds to host:port (port 0 picks a free port) and returns the port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind.
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace disco
