#include "m2v/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <fstream>
#include <iterator>

#include "m2v/error.hpp"
#include "m2v/manual.hpp"
#include "m2v/recorder.hpp"
#include "m2v/sim.hpp"

namespace m2v::pipeline {

namespace fs = std::filesystem;

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool is_within(const fs::path& path, const fs::path& dir) {
  const auto rel = path.lexically_relative(dir);
  return !rel.empty() && *rel.begin() != "..";
}

// Makes an image argument relative to `out`, copying files that live elsewhere.
class ImageLocalizer {
 public:
  ImageLocalizer(fs::path source_dir, fs::path out)
      : source_dir_(std::move(source_dir)), out_(fs::weakly_canonical(out)) {}

  std::string operator()(const std::string& arg) {
    fs::path p(arg);
    if (p.is_relative()) p = source_dir_ / p;
    p = fs::weakly_canonical(p);
    if (is_within(p, out_)) return p.lexically_relative(out_).generic_string();
    if (const auto it = copied_.find(p.string()); it != copied_.end()) return it->second;

    ensure_dir(out_ / kElementsDir);
    const std::string bytes = read_bytes(p);
    const std::string stem = p.stem().string(), ext = p.extension().string();
    for (int n = 1;; ++n) {
      const std::string name = n == 1 ? stem + ext : stem + "_" + std::to_string(n) + ext;
      const fs::path dest = out_ / kElementsDir / name;
      if (fs::exists(dest) && read_bytes(dest) != bytes) continue;
      if (!fs::exists(dest)) fs::copy_file(p, dest);
      const std::string rel = std::string(kElementsDir) + "/" + name;
      copied_[p.string()] = rel;
      return rel;
    }
  }

 private:
  fs::path source_dir_;
  fs::path out_;
  std::map<std::string, std::string> copied_;
};

}  // namespace

std::map<std::string, std::string> parse_overrides(const std::vector<std::string>& args) {
  std::map<std::string, std::string> out;
  for (const auto& a : args) {
    const auto eq = a.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(ErrorCode::InvalidArgument, "override must look like name=value, got '" + a + "'");
    }
    out[a.substr(0, eq)] = a.substr(eq + 1);
  }
  return out;
}

std::vector<extract::ActionRecord> extract_stage(const PipelineConfig& config) {
  const manual::ManualDocument doc = manual::load_manual(config.manual);
  const extract::Lexicon lexicon =
      config.lexicon.empty() ? extract::Lexicon::builtin() : extract::Lexicon::load(config.lexicon);
  auto records = extract::extract_actions(doc, lexicon, config.style);
  records = extract::attach_manual_images(std::move(records), doc);

  const vision::GlyphOcr engine(GlyphAtlas::builtin(), vision::kManualTextScales);
  ensure_dir(config.out);
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& r = records[i];
    const extract::KeywordInfo* info = lexicon.keyword(r.keyword);
    if (!r.candidate_image || r.target_path || (info && info->peripheral == extract::Peripheral::Keyboard)) continue;
    const Raster image = load_image(doc.base_dir / *r.candidate_image);
    const auto element = vision::extract_element(image, r.target_object, config.vision, engine);
    if (!element) {
      spdlog::info("record {}: '{}' not found in {}", i, r.target_object, *r.candidate_image);
      continue;
    }
    ensure_dir(config.out / kElementsDir);
    const std::string name = vision::element_file_name(i, r.target_object);
    write_ppm(*element, config.out / kElementsDir / name);
    r.target_path = std::string(kElementsDir) + "/" + name;
  }
  extract::write_actions(records, config.out / kActionsFile);
  return records;
}

script::ActionScript compile_stage(const std::vector<extract::ActionRecord>& records, const fs::path& records_dir,
                                   const PipelineConfig& config) {
  const script::KnowledgeBase kb = config.kb.empty() ? script::KnowledgeBase{} : script::KnowledgeBase::load(config.kb);
  const extract::Lexicon lexicon =
      config.lexicon.empty() ? extract::Lexicon::builtin() : extract::Lexicon::load(config.lexicon);

  script::CompileConfig cc;
  cc.environment = config.environment;
  cc.fps = config.fps;
  cc.wait_seconds = config.wait_seconds;
  cc.wait_for_timeout = config.wait_for_timeout;
  cc.overrides = config.overrides;
  cc.base_dir = records_dir;
  cc.lexicon = &lexicon;
  if (!config.scenario.empty()) {
    const sim::Scene scene = sim::load_scenario(config.scenario);
    cc.screen_width = scene.width;
    cc.screen_height = scene.height;
  }
  script::ActionScript script = script::compile(records, kb, cc);

  ensure_dir(config.out);
  ImageLocalizer localize(records_dir, config.out);
  for (auto& tc : script.test_cases) {
    for (auto& step : tc.steps) {
      if (script::is_image_keyword(step.keyword)) step.args.at(0) = localize(step.args.at(0));
      if (step.wait_for && step.wait_for->kind == script::WaitTarget::Kind::Image) {
        step.wait_for->value = localize(step.wait_for->value);
      }
    }
  }
  script::write_script(script, config.out / kScriptFile);
  return script;
}

emu::RunReport run_stage(const script::ActionScript& script, const fs::path& script_dir, const PipelineConfig& config) {
  const sim::Scene scene = sim::load_scenario(config.scenario);
  if (const auto fps = script.setting("fps"); fps && *fps != std::to_string(config.fps)) {
    spdlog::warn("script was compiled for fps {}, running at {}", *fps, config.fps);
  }
  ensure_dir(config.out);
  video::Recorder recorder(config.out, config.fps);
  emu::EmulatorConfig ec;
  ec.threshold = config.threshold;
  ec.scales = config.scales;
  ec.vision = config.vision;
  ec.fps = config.fps;
  ec.policy = config.policy;
  ec.base_dir = script_dir;
  emu::Emulator emulator(scene, ec, recorder);
  emulator.set_variables(config.overrides);
  const emu::RunReport report = emulator.run(script);

  std::ofstream out(config.out / kReportFile);
  out << report.to_json().dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + (config.out / kReportFile).string());
  return report;
}

emu::RunReport convert(const PipelineConfig& config) {
  const auto records = extract_stage(config);
  const auto script = compile_stage(records, config.out, config);
  return run_stage(script, config.out, config);
}

}  // namespace m2v::pipeline
