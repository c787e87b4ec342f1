#include <doctest.h>

#include <fstream>

#include "m2v/error.hpp"
#include "m2v/recorder.hpp"

using namespace m2v;
using namespace m2v::video;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("m2v_recorder_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::IoError;
}

}  // namespace

TEST_CASE("recorder start and stop ticks") {
  Recorder r;
  r.start(0);
  CHECK(r.stop(0).start_tick == 0);
  r.start(7);
  const Manifest m = r.stop(9);
  CHECK(m.start_tick == 7);
  CHECK(m.stop_tick == 9);
  CHECK(m.frame_count == 0);
  CHECK(m.frames.empty());
}

TEST_CASE("recorder state errors") {
  Recorder r;
  CHECK(code_of([&] { r.capture(Raster(4, 4), 0); }) == ErrorCode::NotRecording);
  CHECK(code_of([&] { r.stop(0); }) == ErrorCode::NotRecording);
  r.start(0);
  CHECK(code_of([&] { r.start(1); }) == ErrorCode::AlreadyRecording);
  r.capture(Raster(4, 4), 5);
  CHECK(code_of([&] { r.capture(Raster(4, 4), 4); }) == ErrorCode::NonMonotonicTick);
  r.capture(Raster(4, 4), 5);
  r.stop(6);
  CHECK(code_of([&] { r.stop(7); }) == ErrorCode::NotRecording);
  CHECK(code_of([] { Recorder bad({}, 0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("recorder writes P6 frames and a manifest") {
  const auto dir = scratch("files");
  Recorder r(dir, 10);
  r.set_hotkeys("F2", "F1");
  r.start(0);
  Raster frame(16, 8, {10, 20, 30});
  for (int t = 1; t <= 20; ++t) r.capture(frame, t, t == 1 ? std::optional<Annotation>({3, "click"}) : std::nullopt);
  const Manifest m = r.stop(20);
  CHECK(m.frame_count == 20);
  REQUIRE(m.frames.size() == 20);
  CHECK(m.frames.front() == "frame_000001.ppm");
  CHECK(std::is_sorted(m.frames.begin(), m.frames.end()));
  REQUIRE(m.events.size() == 1);
  CHECK(m.events[0].tick == 1);
  CHECK(m.events[0].frame == 1);
  CHECK(m.events[0].step == 3u);
  for (const auto& name : m.frames) {
    const Raster back = read_ppm(dir / "frames" / name);
    CHECK(back == frame);
  }
  // Identical states still give one file per capture.
  CHECK(r.frame_digests()[0] == r.frame_digests()[1]);

  std::ifstream in(dir / "manifest.json");
  const Manifest loaded = Manifest::from_json(nlohmann::json::parse(in));
  CHECK(loaded == m);
  CHECK(loaded.to_json()["hotkeys"]["start"] == "F2");

  // A new session clears the previous frames.
  r.start(30);
  r.capture(frame, 30);
  r.stop(30);
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir / "frames")) ++files;
  CHECK(files == 1);
  std::filesystem::remove_all(dir);
}
