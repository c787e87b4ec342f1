#include "m2v/recorder.hpp"

#include <cstdio>
#include <fstream>

#include "m2v/digest.hpp"
#include "m2v/error.hpp"

namespace m2v::video {

using nlohmann::json;

std::string frame_file_name(std::size_t number) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%06zu.ppm", number);
  return buf;
}

json Manifest::to_json() const {
  json events_json = json::array();
  for (const auto& e : events) {
    json ev = {{"tick", e.tick}, {"frame", e.frame}, {"description", e.description}};
    ev["step"] = e.step ? json(*e.step) : json(nullptr);
    events_json.push_back(std::move(ev));
  }
  return {{"fps", fps},
          {"frame_count", frame_count},
          {"frames", frames},
          {"events", std::move(events_json)},
          {"start_tick", start_tick},
          {"stop_tick", stop_tick},
          {"hotkeys", {{"start", start_hotkey}, {"stop", stop_hotkey}}}};
}

Manifest Manifest::from_json(const json& j) {
  try {
    Manifest m;
    m.fps = j.at("fps").get<int>();
    m.frame_count = j.at("frame_count").get<std::size_t>();
    m.frames = j.at("frames").get<std::vector<std::string>>();
    for (const auto& e : j.at("events")) {
      ManifestEvent ev;
      ev.tick = e.at("tick").get<std::int64_t>();
      ev.frame = e.at("frame").get<std::size_t>();
      if (!e.at("step").is_null()) ev.step = e.at("step").get<std::size_t>();
      ev.description = e.at("description").get<std::string>();
      m.events.push_back(std::move(ev));
    }
    m.start_tick = j.at("start_tick").get<std::int64_t>();
    m.stop_tick = j.at("stop_tick").get<std::int64_t>();
    m.start_hotkey = j.at("hotkeys").at("start").get<std::string>();
    m.stop_hotkey = j.at("hotkeys").at("stop").get<std::string>();
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("manifest: ") + e.what());
  }
}

Recorder::Recorder(std::filesystem::path out_dir, int fps) : out_dir_(std::move(out_dir)) {
  if (fps < 1) throw Error(ErrorCode::InvalidArgument, "fps must be at least 1");
  manifest_.fps = fps;
}

void Recorder::set_hotkeys(std::string start, std::string stop) {
  manifest_.start_hotkey = std::move(start);
  manifest_.stop_hotkey = std::move(stop);
}

void Recorder::start(std::int64_t tick) {
  if (active_) throw Error(ErrorCode::AlreadyRecording, "recording started at tick " + std::to_string(manifest_.start_tick));
  manifest_.frames.clear();
  manifest_.events.clear();
  manifest_.frame_count = 0;
  manifest_.start_tick = tick;
  manifest_.stop_tick = tick;
  digests_.clear();
  last_tick_ = tick;
  active_ = true;
  if (out_dir_.empty()) return;
  const auto frames = out_dir_ / "frames";
  std::error_code ec;
  std::filesystem::remove_all(frames, ec);
  std::filesystem::create_directories(frames, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + frames.string() + ": " + ec.message());
}

void Recorder::capture(const Raster& frame, std::int64_t tick, const std::optional<Annotation>& annotation) {
  if (!active_) throw Error(ErrorCode::NotRecording, "capture while idle");
  if (tick < last_tick_) {
    throw Error(ErrorCode::NonMonotonicTick, "tick " + std::to_string(tick) + " after " + std::to_string(last_tick_));
  }
  last_tick_ = tick;
  const std::string name = frame_file_name(manifest_.frames.size() + 1);
  const auto bytes = encode_ppm(frame);
  digests_.push_back(sha256_hex(bytes));
  if (!out_dir_.empty()) {
    const auto path = out_dir_ / "frames" / name;
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  }
  manifest_.frames.push_back(name);
  manifest_.frame_count = manifest_.frames.size();
  if (annotation) manifest_.events.push_back({tick, manifest_.frame_count, annotation->step, annotation->description});
}

Manifest Recorder::stop(std::int64_t tick) {
  if (!active_) throw Error(ErrorCode::NotRecording, "stop while idle");
  if (tick < last_tick_) {
    throw Error(ErrorCode::NonMonotonicTick, "tick " + std::to_string(tick) + " after " + std::to_string(last_tick_));
  }
  active_ = false;
  manifest_.stop_tick = tick;
  if (!out_dir_.empty()) {
    const auto path = out_dir_ / "manifest.json";
    std::ofstream out(path);
    out << manifest_.to_json().dump(2) << '\n';
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  }
  return manifest_;
}

}  // namespace m2v::video
