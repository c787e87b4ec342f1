#include "m2v/sim.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "m2v/digest.hpp"
#include "m2v/error.hpp"
#include "m2v/font.hpp"

namespace m2v::sim {

using nlohmann::json;

std::string_view to_string(ElementKind k) {
  switch (k) {
    case ElementKind::Button: return "button";
    case ElementKind::Checkbox: return "checkbox";
    case ElementKind::Label: return "label";
    case ElementKind::Textbox: return "textbox";
    case ElementKind::Icon: return "icon";
    case ElementKind::MenuItem: return "menu_item";
  }
  return "button";
}

int Screen::find(std::string_view element_id) const noexcept {
  for (std::size_t i = 0; i < elements.size(); ++i)
    if (elements[i].id == element_id) return static_cast<int>(i);
  return -1;
}

const Screen* Scene::screen(std::string_view id) const noexcept {
  for (const auto& s : screens)
    if (s.id == id) return &s;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Scenario loading

namespace {

Error schema(const std::string& pointer, const std::string& msg) {
  return Error(ErrorCode::SchemaError, (pointer.empty() ? std::string("/") : pointer) + ": " + msg);
}

const json& field(const json& obj, const std::string& pointer, const char* key) {
  if (!obj.is_object()) throw schema(pointer, "expected an object");
  if (!obj.contains(key)) throw schema(pointer + "/" + key, "missing required field");
  return obj.at(key);
}

std::string get_string(const json& v, const std::string& pointer) {
  if (!v.is_string()) throw schema(pointer, "expected a string");
  return v.get<std::string>();
}

int get_int(const json& v, const std::string& pointer) {
  if (!v.is_number_integer()) throw schema(pointer, "expected an integer");
  return v.get<int>();
}

bool get_bool(const json& v, const std::string& pointer) {
  if (!v.is_boolean()) throw schema(pointer, "expected a boolean");
  return v.get<bool>();
}

std::vector<int> get_ints(const json& v, const std::string& pointer, std::size_t n) {
  if (!v.is_array() || v.size() != n) throw schema(pointer, "expected an array of " + std::to_string(n) + " integers");
  std::vector<int> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(get_int(v[i], pointer + "/" + std::to_string(i)));
  return out;
}

ElementKind parse_kind(const std::string& s, const std::string& pointer) {
  for (ElementKind k : {ElementKind::Button, ElementKind::Checkbox, ElementKind::Label, ElementKind::Textbox,
                        ElementKind::Icon, ElementKind::MenuItem}) {
    if (to_string(k) == s) return k;
  }
  throw schema(pointer, "unknown element kind '" + s + "'");
}

constexpr std::string_view kBoolFields[] = {"enabled", "checked", "focused", "visible"};

bool is_bool_field(std::string_view f) {
  return std::find(std::begin(kBoolFields), std::end(kBoolFields), f) != std::end(kBoolFields);
}

void apply_field(ElementState& st, const std::string& f, const StateValue& v) {
  if (f == "text") st.text = std::get<std::string>(v);
  else if (f == "enabled") st.enabled = std::get<bool>(v);
  else if (f == "checked") st.checked = std::get<bool>(v);
  else if (f == "focused") st.focused = std::get<bool>(v);
  else if (f == "visible") st.visible = std::get<bool>(v);
}

bool field_equals(const ElementState& st, const std::string& f, const StateValue& v) {
  if (f == "text") return st.text == std::get<std::string>(v);
  if (f == "enabled") return st.enabled == std::get<bool>(v);
  if (f == "checked") return st.checked == std::get<bool>(v);
  if (f == "focused") return st.focused == std::get<bool>(v);
  return st.visible == std::get<bool>(v);
}

ElementState parse_state(const json& j, const std::string& pointer) {
  ElementState st;
  if (!j.is_object()) throw schema(pointer, "expected an object");
  for (const auto& [key, value] : j.items()) {
    const std::string p = pointer + "/" + key;
    if (key == "text") st.text = get_string(value, p);
    else if (is_bool_field(key)) apply_field(st, key, get_bool(value, p));
    else throw schema(p, "unknown state field");
  }
  return st;
}

// Parses a set_state body; `default_screen` applies when it names no screen.
Effect parse_set_state(const json& j, const std::string& pointer, const Scene& scene, const std::string& default_screen) {
  Effect e;
  e.kind = Effect::Kind::SetState;
  e.screen = j.contains("screen") ? get_string(j.at("screen"), pointer + "/screen") : default_screen;
  const Screen* screen = scene.screen(e.screen);
  if (!screen) throw schema(pointer + "/screen", "unknown screen '" + e.screen + "'");
  e.element = get_string(field(j, pointer, "element"), pointer + "/element");
  if (screen->find(e.element) < 0) {
    throw schema(pointer + "/element", "unknown element '" + e.element + "' on screen '" + e.screen + "'");
  }
  e.field = get_string(field(j, pointer, "field"), pointer + "/field");
  const json& value = field(j, pointer, "value");
  if (e.field == "text") e.value = get_string(value, pointer + "/value");
  else if (is_bool_field(e.field)) e.value = get_bool(value, pointer + "/value");
  else throw schema(pointer + "/field", "unknown state field '" + e.field + "'");
  return e;
}

}  // namespace

Scene parse_scenario(const json& j, const std::filesystem::path& base_dir) {
  Scene scene;
  const auto size = get_ints(field(j, "", "screen_size"), "/screen_size", 2);
  scene.width = size[0];
  scene.height = size[1];
  if (scene.width <= 0 || scene.height <= 0) throw schema("/screen_size", "dimensions must be positive");

  const json& screens = field(j, "", "screens");
  if (!screens.is_array() || screens.empty()) throw schema("/screens", "expected a non-empty array");
  for (std::size_t si = 0; si < screens.size(); ++si) {
    const std::string sp = "/screens/" + std::to_string(si);
    Screen screen;
    screen.id = get_string(field(screens[si], sp, "id"), sp + "/id");
    if (scene.screen(screen.id)) throw schema(sp + "/id", "duplicate screen id '" + screen.id + "'");
    if (screens[si].contains("background")) {
      const auto bg = get_ints(screens[si].at("background"), sp + "/background", 3);
      for (int c : bg)
        if (c < 0 || c > 255) throw schema(sp + "/background", "color channels must be 0..255");
      screen.background = {static_cast<std::uint8_t>(bg[0]), static_cast<std::uint8_t>(bg[1]),
                           static_cast<std::uint8_t>(bg[2])};
    }
    const json& elements = screens[si].contains("elements") ? screens[si].at("elements") : json::array();
    if (!elements.is_array()) throw schema(sp + "/elements", "expected an array");
    int focused = 0;
    for (std::size_t ei = 0; ei < elements.size(); ++ei) {
      const std::string ep = sp + "/elements/" + std::to_string(ei);
      Element el;
      el.id = get_string(field(elements[ei], ep, "id"), ep + "/id");
      if (screen.find(el.id) >= 0) throw schema(ep + "/id", "duplicate element id '" + el.id + "'");
      el.kind = parse_kind(get_string(field(elements[ei], ep, "kind"), ep + "/kind"), ep + "/kind");
      if (elements[ei].contains("label")) el.label = get_string(elements[ei].at("label"), ep + "/label");
      const auto rect = get_ints(field(elements[ei], ep, "rect"), ep + "/rect", 4);
      el.x = rect[0];
      el.y = rect[1];
      el.w = rect[2];
      el.h = rect[3];
      if (el.w <= 0 || el.h <= 0 || el.x < 0 || el.y < 0 || el.x + el.w > scene.width || el.y + el.h > scene.height) {
        throw schema(ep + "/rect", "rect must lie within the screen");
      }
      if (elements[ei].contains("state")) el.state = parse_state(elements[ei].at("state"), ep + "/state");
      if (el.state.focused) {
        if (el.kind != ElementKind::Textbox) throw schema(ep + "/state/focused", "only textboxes take focus");
        ++focused;
      }
      if (elements[ei].contains("icon")) {
        const std::string rel = get_string(elements[ei].at("icon"), ep + "/icon");
        const auto path = std::filesystem::path(rel).is_absolute() ? std::filesystem::path(rel) : base_dir / rel;
        try {
          el.icon = load_image(path);
        } catch (const Error& e) {
          throw schema(ep + "/icon", e.what());
        }
        if (el.icon->width() != el.w || el.icon->height() != el.h) {
          throw schema(ep + "/icon", "icon size must equal the rect size");
        }
      }
      screen.elements.push_back(std::move(el));
    }
    if (focused > 1) throw schema(sp + "/elements", "more than one focused textbox");
    scene.screens.push_back(std::move(screen));
  }

  scene.initial = get_string(field(j, "", "initial"), "/initial");
  if (!scene.screen(scene.initial)) throw schema("/initial", "unknown screen '" + scene.initial + "'");

  const json& transitions = j.contains("transitions") ? j.at("transitions") : json::array();
  if (!transitions.is_array()) throw schema("/transitions", "expected an array");
  for (std::size_t ti = 0; ti < transitions.size(); ++ti) {
    const std::string tp = "/transitions/" + std::to_string(ti);
    Transition t;
    const json& on = field(transitions[ti], tp, "on");
    if (!on.is_array() || on.size() != 3) throw schema(tp + "/on", "expected [screen, element, event]");
    t.screen = get_string(on[0], tp + "/on/0");
    t.element = get_string(on[1], tp + "/on/1");
    const std::string event = get_string(on[2], tp + "/on/2");
    const Screen* screen = scene.screen(t.screen);
    if (!screen) throw schema(tp + "/on/0", "unknown screen '" + t.screen + "'");
    if (event == "click") t.event = EventKind::Click;
    else if (event == "right_click") t.event = EventKind::RightClick;
    else if (event == "double_click") t.event = EventKind::DoubleClick;
    else if (event == "text_committed") t.event = EventKind::TextCommitted;
    else if (event.rfind("key:", 0) == 0 && event.size() > 4) {
      t.event = EventKind::KeyPressed;
      t.key = event.substr(4);
    } else {
      throw schema(tp + "/on/2", "unknown event '" + event + "'");
    }
    if (t.event == EventKind::KeyPressed) {
      if (t.element != "*") throw schema(tp + "/on/1", "key bindings use element \"*\"");
    } else if (screen->find(t.element) < 0) {
      throw schema(tp + "/on/1", "unknown element '" + t.element + "' on screen '" + t.screen + "'");
    }
    const json& effects = field(transitions[ti], tp, "effects");
    if (!effects.is_array() || effects.empty()) throw schema(tp + "/effects", "expected a non-empty array");
    for (std::size_t fi = 0; fi < effects.size(); ++fi) {
      const std::string fp = tp + "/effects/" + std::to_string(fi);
      const json& f = effects[fi];
      if (!f.is_object() || f.size() != 1) throw schema(fp, "effect must be one of goto, set_state, delay");
      Effect e;
      if (f.contains("goto")) {
        e.kind = Effect::Kind::Goto;
        e.screen = get_string(f.at("goto"), fp + "/goto");
        if (!scene.screen(e.screen)) throw schema(fp + "/goto", "unknown screen '" + e.screen + "'");
      } else if (f.contains("set_state")) {
        e = parse_set_state(f.at("set_state"), fp + "/set_state", scene, t.screen);
      } else if (f.contains("delay")) {
        e.kind = Effect::Kind::Delay;
        e.ticks = get_int(f.at("delay"), fp + "/delay");
        if (e.ticks < 0) throw schema(fp + "/delay", "delay must be non-negative");
      } else {
        throw schema(fp, "effect must be one of goto, set_state, delay");
      }
      t.effects.push_back(std::move(e));
    }
    scene.transitions.push_back(std::move(t));
  }

  if (j.contains("goal")) {
    const json& g = j.at("goal");
    Goal goal;
    goal.screen = get_string(field(g, "/goal", "screen"), "/goal/screen");
    if (!scene.screen(goal.screen)) throw schema("/goal/screen", "unknown screen '" + goal.screen + "'");
    if (g.contains("states")) {
      for (std::size_t i = 0; i < g.at("states").size(); ++i) {
        goal.states.push_back(parse_set_state(g.at("states")[i], "/goal/states/" + std::to_string(i), scene, goal.screen));
      }
    }
    scene.goal = std::move(goal);
  }
  return scene;
}

Scene load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::SchemaError, path.string() + ": " + e.what());
  }
  return parse_scenario(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// State

std::string Event::describe() const {
  switch (kind) {
    case Kind::Click: return "click(" + std::to_string(x) + "," + std::to_string(y) + ")";
    case Kind::RightClick: return "right_click(" + std::to_string(x) + "," + std::to_string(y) + ")";
    case Kind::DoubleClick: return "double_click(" + std::to_string(x) + "," + std::to_string(y) + ")";
    case Kind::Key: return "key('" + key + "')";
    case Kind::KeyNamed: return "key_named(" + key + ")";
  }
  return "?";
}

SimState::SimState(const Scene& scene) : scene_(&scene), current_(scene.initial) {
  for (const auto& s : scene.screens) {
    std::vector<ElementState> st;
    for (const auto& e : s.elements) st.push_back(e.state);
    states_.push_back(std::move(st));
  }
}

std::vector<ElementState>& SimState::states_of(std::string_view screen) {
  for (std::size_t i = 0; i < scene_->screens.size(); ++i)
    if (scene_->screens[i].id == screen) return states_[i];
  throw Error(ErrorCode::InvalidArgument, "unknown screen '" + std::string(screen) + "'");
}

const ElementState& SimState::element_state(std::string_view screen, std::string_view element) const {
  for (std::size_t i = 0; i < scene_->screens.size(); ++i) {
    if (scene_->screens[i].id != screen) continue;
    const int idx = scene_->screens[i].find(element);
    if (idx < 0) break;
    return states_[i][static_cast<std::size_t>(idx)];
  }
  throw Error(ErrorCode::InvalidArgument, "unknown element '" + std::string(element) + "' on '" + std::string(screen) + "'");
}

void SimState::run_effects(const std::vector<Effect>& effects, std::size_t from) {
  for (std::size_t i = from; i < effects.size(); ++i) {
    const Effect& e = effects[i];
    switch (e.kind) {
      case Effect::Kind::Goto:
        current_ = e.screen;
        break;
      case Effect::Kind::SetState: {
        auto& states = states_of(e.screen);
        const Screen& screen = *scene_->screen(e.screen);
        const auto idx = static_cast<std::size_t>(screen.find(e.element));
        if (e.field == "focused" && std::get<bool>(e.value)) {
          for (auto& s : states) s.focused = false;
        }
        apply_field(states[idx], e.field, e.value);
        break;
      }
      case Effect::Kind::Delay:
        if (e.ticks == 0) break;
        pending_.push_back({clock_ + e.ticks, next_seq_++, std::vector<Effect>(effects.begin() + static_cast<std::ptrdiff_t>(i) + 1, effects.end())});
        return;
    }
  }
}

bool SimState::fire(const std::string& element, EventKind kind, std::string_view key) {
  std::vector<const Transition*> matches;
  for (const auto& t : scene_->transitions) {
    if (t.screen == current_ && t.element == element && t.event == kind && (kind != EventKind::KeyPressed || t.key == key)) {
      matches.push_back(&t);
    }
  }
  for (const Transition* t : matches) run_effects(t->effects, 0);
  return !matches.empty();
}

int SimState::hit_test(int x, int y) const {
  const Screen& screen = *scene_->screen(current_);
  const auto& states = const_cast<SimState*>(this)->states_of(current_);
  for (int i = static_cast<int>(screen.elements.size()) - 1; i >= 0; --i) {
    const auto idx = static_cast<std::size_t>(i);
    if (states[idx].visible && screen.elements[idx].contains(x, y)) return i;
  }
  return -1;
}

int SimState::focused_textbox() const {
  const Screen& screen = *scene_->screen(current_);
  const auto& states = const_cast<SimState*>(this)->states_of(current_);
  for (std::size_t i = 0; i < screen.elements.size(); ++i) {
    if (screen.elements[i].kind == ElementKind::Textbox && states[i].focused && states[i].visible && states[i].enabled) {
      return static_cast<int>(i);
    }
  }
  return -1;
}

void SimState::dispatch(const Event& event) {
  LogEntry entry{clock_, event, false, {}};
  const Screen& screen = *scene_->screen(current_);
  auto& states = states_of(current_);

  if (event.kind == Event::Kind::Click || event.kind == Event::Kind::RightClick || event.kind == Event::Kind::DoubleClick) {
    const int hit = hit_test(event.x, event.y);
    if (hit < 0) {
      entry.note = "background";
    } else {
      const auto idx = static_cast<std::size_t>(hit);
      const Element& el = screen.elements[idx];
      entry.note = el.id;
      if (!states[idx].enabled) {
        entry.note += " (disabled)";
      } else {
        if (event.kind == Event::Kind::Click && el.kind == ElementKind::Checkbox) {
          states[idx].checked = !states[idx].checked;
          entry.handled = true;
        }
        if (event.kind == Event::Kind::Click && el.kind == ElementKind::Textbox) {
          for (auto& s : states) s.focused = false;
          states[idx].focused = true;
          entry.handled = true;
        }
        const EventKind kind = event.kind == Event::Kind::Click       ? EventKind::Click
                               : event.kind == Event::Kind::RightClick ? EventKind::RightClick
                                                                       : EventKind::DoubleClick;
        entry.handled = fire(el.id, kind, {}) || entry.handled;
      }
    }
  } else if (event.kind == Event::Kind::Key) {
    const int box = focused_textbox();
    if (box >= 0) {
      states[static_cast<std::size_t>(box)].text += event.key;
      entry.handled = true;
      entry.note = screen.elements[static_cast<std::size_t>(box)].id;
    } else {
      entry.note = "no focused textbox";
    }
  } else {
    const int box = focused_textbox();
    if (box >= 0 && event.key == "Backspace") {
      auto& text = states[static_cast<std::size_t>(box)].text;
      if (!text.empty()) text.pop_back();
      entry.handled = true;
    }
    if (box >= 0 && event.key == "Enter") {
      entry.note = screen.elements[static_cast<std::size_t>(box)].id;
      entry.handled = fire(screen.elements[static_cast<std::size_t>(box)].id, EventKind::TextCommitted, {});
    }
    entry.handled = fire("*", EventKind::KeyPressed, event.key) || entry.handled;
  }
  if (!entry.handled) spdlog::debug("tick {}: {} had no effect", clock_, event.describe());
  log_.push_back(std::move(entry));
}

void SimState::advance_clock(std::int64_t ticks) {
  if (ticks < 0) throw Error(ErrorCode::InvalidArgument, "cannot move the clock backwards");
  const std::int64_t target = clock_ + ticks;
  for (;;) {
    auto next = std::min_element(pending_.begin(), pending_.end(), [](const Pending& a, const Pending& b) {
      return std::tie(a.due, a.seq) < std::tie(b.due, b.seq);
    });
    if (next == pending_.end() || next->due > target) break;
    Pending p = std::move(*next);
    pending_.erase(next);
    clock_ = p.due;
    run_effects(p.effects, 0);
  }
  clock_ = target;
}

bool SimState::goal_reached() const {
  if (!scene_->goal) return true;
  if (current_ != scene_->goal->screen) return false;
  return std::all_of(scene_->goal->states.begin(), scene_->goal->states.end(), [&](const Effect& e) {
    return field_equals(element_state(e.screen, e.element), e.field, e.value);
  });
}

std::string SimState::digest() const {
  std::ostringstream out;
  out << "screen=" << current_ << "\nclock=" << clock_ << '\n';
  for (std::size_t s = 0; s < scene_->screens.size(); ++s) {
    for (std::size_t e = 0; e < scene_->screens[s].elements.size(); ++e) {
      const ElementState& st = states_[s][e];
      out << scene_->screens[s].id << '/' << scene_->screens[s].elements[e].id << ' ' << st.enabled << st.checked
          << st.focused << st.visible << ' ' << st.text.size() << ':' << st.text << '\n';
    }
  }
  for (const auto& p : pending_) out << "pending " << p.due << ' ' << p.seq << ' ' << p.effects.size() << '\n';
  return sha256_hex(out.str());
}

SimState dispatch(SimState state, const Event& event) {
  state.dispatch(event);
  return state;
}

SimState advance_clock(SimState state, std::int64_t ticks) {
  state.advance_clock(ticks);
  return state;
}

SimState replay(const Scene& scene, const std::vector<LogEntry>& log, std::int64_t final_tick) {
  SimState state(scene);
  for (const auto& entry : log) {
    state.advance_clock(entry.tick - state.clock());
    state.dispatch(entry.event);
  }
  state.advance_clock(final_tick - state.clock());
  return state;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

constexpr Rgb kInk{0, 0, 0};
constexpr Rgb kDisabledInk{150, 150, 150};
constexpr Rgb kBorder{64, 64, 64};
constexpr Rgb kButtonFace{225, 225, 225};
constexpr Rgb kField{255, 255, 255};
constexpr Rgb kMenuFace{250, 250, 250};
constexpr Rgb kPlaceholder{160, 160, 160};
constexpr int kCheckSize = 12;
constexpr int kCheckLabelOffset = 24;

void draw_element(Raster& tile, const Element& el, const ElementState& st) {
  const auto& atlas = GlyphAtlas::builtin();
  const int w = tile.width(), h = tile.height();
  const int text_y = (h - GlyphAtlas::kGlyphHeight) / 2;
  const Rgb ink = st.enabled ? kInk : kDisabledInk;
  switch (el.kind) {
    case ElementKind::Button:
      tile.fill_rect(0, 0, w, h, kButtonFace);
      tile.stroke_rect(0, 0, w, h, kBorder);
      atlas.draw_text(tile, (w - atlas.text_width(el.label)) / 2, text_y, el.label, ink);
      break;
    case ElementKind::Checkbox: {
      const int by = (h - kCheckSize) / 2;
      tile.fill_rect(0, by, kCheckSize, kCheckSize, kField);
      tile.stroke_rect(0, by, kCheckSize, kCheckSize, kBorder);
      if (st.checked) tile.fill_rect(3, by + 3, kCheckSize - 6, kCheckSize - 6, kInk);
      atlas.draw_text(tile, kCheckLabelOffset, text_y, el.label, ink);
      break;
    }
    case ElementKind::Label:
      atlas.draw_text(tile, 0, text_y, el.label, ink);
      break;
    case ElementKind::Textbox: {
      tile.fill_rect(0, 0, w, h, kField);
      tile.stroke_rect(0, 0, w, h, kBorder);
      if (st.text.empty() && !st.focused) {
        atlas.draw_text(tile, 4, text_y, el.label, kPlaceholder);
      } else {
        atlas.draw_text(tile, 4, text_y, st.text, ink);
        if (st.focused) atlas.draw_text(tile, 4 + atlas.text_width(st.text), text_y, "|", kInk);
      }
      break;
    }
    case ElementKind::Icon:
      if (el.icon) {
        tile.blit(*el.icon, 0, 0);
      } else {
        tile.fill_rect(0, 0, w, h, {200, 200, 200});
        tile.stroke_rect(0, 0, w, h, kBorder);
        atlas.draw_text(tile, (w - atlas.text_width(el.label)) / 2, text_y, el.label, ink);
      }
      break;
    case ElementKind::MenuItem:
      tile.fill_rect(0, 0, w, h, kMenuFace);
      atlas.draw_text(tile, 6, text_y, el.label, ink);
      break;
  }
}

}  // namespace

Raster render(const SimState& state) {
  const Scene& scene = state.scene();
  const Screen& screen = *scene.screen(state.current_screen());
  Raster canvas(scene.width, scene.height, screen.background);
  for (const auto& el : screen.elements) {
    const ElementState& st = state.element_state(screen.id, el.id);
    if (!st.visible) continue;
    // Drawing into a tile keeps every element inside its own rect.
    Raster tile = canvas.sub_image(el.x, el.y, el.w, el.h);
    draw_element(tile, el, st);
    canvas.blit(tile, el.x, el.y);
  }
  return canvas;
}

}  // namespace m2v::sim
