#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "m2v/raster.hpp"

namespace m2v::sim {

enum class ElementKind { Button, Checkbox, Label, Textbox, Icon, MenuItem };
std::string_view to_string(ElementKind k);

struct ElementState {
  bool enabled = true;
  bool checked = false;
  bool focused = false;
  bool visible = true;
  std::string text;
  friend bool operator==(const ElementState&, const ElementState&) = default;
};

struct Element {
  std::string id;
  ElementKind kind = ElementKind::Button;
  std::string label;
  int x = 0, y = 0, w = 0, h = 0;
  ElementState state;
  std::optional<Raster> icon;

  bool contains(int px, int py) const noexcept { return px >= x && py >= y && px < x + w && py < y + h; }
};

struct Screen {
  std::string id;
  Rgb background{240, 240, 240};
  std::vector<Element> elements;

  /// Index of the element with `id`, or -1.
  int find(std::string_view id) const noexcept;
};

enum class EventKind { Click, RightClick, DoubleClick, TextCommitted, KeyPressed };

using StateValue = std::variant<bool, std::string>;

struct Effect {
  enum class Kind { Goto, SetState, Delay };
  Kind kind = Kind::Goto;
  std::string screen;   // Goto target, or SetState's screen
  std::string element;  // SetState
  std::string field;    // SetState: enabled|checked|focused|visible|text
  StateValue value = false;
  std::int64_t ticks = 0;  // Delay
};

struct Transition {
  std::string screen;
  /// Element id, or "*" for screen-level key bindings.
  std::string element;
  EventKind event = EventKind::Click;
  /// Key name for KeyPressed triggers ("Enter", "Ctrl+S").
  std::string key;
  std::vector<Effect> effects;
};

/// Declared end state of a scenario: a screen plus element field values.
struct Goal {
  std::string screen;
  std::vector<Effect> states;
};

struct Scene {
  int width = 0;
  int height = 0;
  std::string initial;
  std::vector<Screen> screens;
  std::vector<Transition> transitions;
  std::optional<Goal> goal;

  const Screen* screen(std::string_view id) const noexcept;
};

/// Validates against the scenario schema. Throws SchemaError naming the JSON
/// pointer of the offending value. Icon paths resolve against base_dir.
Scene parse_scenario(const nlohmann::json& j, const std::filesystem::path& base_dir);
Scene load_scenario(const std::filesystem::path& path);

struct Event {
  enum class Kind { Click, RightClick, DoubleClick, Key, KeyNamed };
  Kind kind = Kind::Click;
  int x = 0, y = 0;
  std::string key;

  static Event click(int x, int y) { return {Kind::Click, x, y, {}}; }
  static Event right_click(int x, int y) { return {Kind::RightClick, x, y, {}}; }
  static Event double_click(int x, int y) { return {Kind::DoubleClick, x, y, {}}; }
  static Event key_char(char c) { return {Kind::Key, 0, 0, std::string(1, c)}; }
  static Event key_named(std::string name) { return {Kind::KeyNamed, 0, 0, std::move(name)}; }

  std::string describe() const;
  friend bool operator==(const Event&, const Event&) = default;
};

struct LogEntry {
  std::int64_t tick = 0;
  Event event;
  bool handled = false;
  std::string note;
};

/// Evolving state of one scene under a virtual clock. Single owner.
class SimState {
 public:
  explicit SimState(const Scene& scene);

  const Scene& scene() const noexcept { return *scene_; }
  const std::string& current_screen() const noexcept { return current_; }
  std::int64_t clock() const noexcept { return clock_; }
  const std::vector<LogEntry>& event_log() const noexcept { return log_; }
  const ElementState& element_state(std::string_view screen, std::string_view element) const;
  std::size_t pending_count() const noexcept { return pending_.size(); }

  void dispatch(const Event& event);
  /// Moves the clock forward, applying delayed effects in expiry order.
  void advance_clock(std::int64_t ticks);

  bool goal_reached() const;
  /// SHA-256 (hex) over the screen, clock and every element state.
  std::string digest() const;

 private:
  struct Pending {
    std::int64_t due;
    std::uint64_t seq;
    std::vector<Effect> effects;
  };

  std::vector<ElementState>& states_of(std::string_view screen);
  void run_effects(const std::vector<Effect>& effects, std::size_t from);
  bool fire(const std::string& element, EventKind kind, std::string_view key);
  int hit_test(int x, int y) const;
  int focused_textbox() const;

  const Scene* scene_;
  std::string current_;
  std::vector<std::vector<ElementState>> states_;  // parallel to scene().screens
  std::int64_t clock_ = 0;
  std::uint64_t next_seq_ = 0;
  std::vector<Pending> pending_;
  std::vector<LogEntry> log_;
};

SimState dispatch(SimState state, const Event& event);
SimState advance_clock(SimState state, std::int64_t ticks);

/// Re-runs a recorded event log from the initial state, ending at `final_tick`.
SimState replay(const Scene& scene, const std::vector<LogEntry>& log, std::int64_t final_tick);

/// Painter's-algorithm rendering of the current screen with the built-in font.
Raster render(const SimState& state);

}  // namespace m2v::sim
