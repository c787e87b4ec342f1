#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "m2v/raster.hpp"

namespace m2v::video {

struct ManifestEvent {
  std::int64_t tick = 0;
  /// 1-based number of the frame captured with the event.
  std::size_t frame = 0;
  std::optional<std::size_t> step;
  std::string description;
  friend bool operator==(const ManifestEvent&, const ManifestEvent&) = default;
};

struct Manifest {
  int fps = 10;
  std::size_t frame_count = 0;
  std::vector<std::string> frames;
  std::vector<ManifestEvent> events;
  std::int64_t start_tick = 0;
  std::int64_t stop_tick = 0;
  std::string start_hotkey = "F2";
  std::string stop_hotkey = "F1";

  nlohmann::json to_json() const;
  static Manifest from_json(const nlohmann::json& j);
  friend bool operator==(const Manifest&, const Manifest&) = default;
};

struct Annotation {
  std::optional<std::size_t> step;
  std::string description;
};

/// Writes `<out>/frames/frame_%06d.ppm` and, on stop, `<out>/manifest.json`.
/// With an empty output directory nothing touches the disk; frame digests
/// are kept either way.
class Recorder {
 public:
  explicit Recorder(std::filesystem::path out_dir = {}, int fps = 10);

  void set_hotkeys(std::string start, std::string stop);
  bool recording() const noexcept { return active_; }
  int fps() const noexcept { return manifest_.fps; }
  const std::string& start_hotkey() const noexcept { return manifest_.start_hotkey; }
  const std::string& stop_hotkey() const noexcept { return manifest_.stop_hotkey; }
  const std::filesystem::path& out_dir() const noexcept { return out_dir_; }

  /// Throws AlreadyRecording. Clears frames left by an earlier session.
  void start(std::int64_t tick);
  /// Throws NotRecording or NonMonotonicTick.
  void capture(const Raster& frame, std::int64_t tick, const std::optional<Annotation>& annotation = std::nullopt);
  /// Throws NotRecording or NonMonotonicTick.
  Manifest stop(std::int64_t tick);

  std::size_t frame_count() const noexcept { return manifest_.frames.size(); }
  /// SHA-256 of each captured frame's PPM bytes, in capture order.
  const std::vector<std::string>& frame_digests() const noexcept { return digests_; }

 private:
  std::filesystem::path out_dir_;
  Manifest manifest_;
  bool active_ = false;
  std::int64_t last_tick_ = 0;
  std::vector<std::string> digests_;
};

std::string frame_file_name(std::size_t number);

}  // namespace m2v::video
