// m2v-snapshot: renders a scenario screen, or one element of it, to a PPM.
// Used to author manual screenshots and knowledge-base element images.

#include <CLI11.hpp>

#include <cstdio>

#include "m2v/raster.hpp"
#include "m2v/sim.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Render a scenario screen or element to a PPM."};
  std::filesystem::path scenario, out;
  std::string screen, element;
  double scale = 1.0;
  int pad = 0;
  app.add_option("--scenario", scenario, "Scenario JSON")->required()->check(CLI::ExistingFile);
  app.add_option("--screen", screen, "Screen id (default: the initial screen)");
  app.add_option("--element", element, "Crop to the rectangle of this element id");
  app.add_option("--pad", pad, "Extra pixels around the element crop")->check(CLI::NonNegativeNumber);
  app.add_option("--scale", scale, "Resample the result by this factor")->check(CLI::PositiveNumber);
  app.add_option("--out", out, "Output PPM")->required();
  CLI11_PARSE(app, argc, argv);

  try {
    m2v::sim::Scene scene = m2v::sim::load_scenario(scenario);
    if (!screen.empty()) scene.initial = screen;
    const m2v::sim::Screen* s = scene.screen(scene.initial);
    if (!s) throw std::runtime_error("no screen '" + scene.initial + "'");
    m2v::Raster img = m2v::sim::render(m2v::sim::SimState(scene));
    if (!element.empty()) {
      const int i = s->find(element);
      if (i < 0) throw std::runtime_error("no element '" + element + "' on screen '" + s->id + "'");
      const auto& e = s->elements[static_cast<std::size_t>(i)];
      const int x0 = std::max(0, e.x - pad), y0 = std::max(0, e.y - pad);
      const int x1 = std::min(img.width(), e.x + e.w + pad), y1 = std::min(img.height(), e.y + e.h + pad);
      img = img.sub_image(x0, y0, x1 - x0, y1 - y0);
    }
    if (scale != 1.0) {
      const int w = std::max(1, static_cast<int>(std::lround(img.width() * scale)));
      const int h = std::max(1, static_cast<int>(std::lround(img.height() * scale)));
      img = scale < 1.0 ? m2v::resize_area(img, w, h) : m2v::resize_bilinear(img, w, h);
    }
    m2v::write_ppm(img, out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "m2v-snapshot: %s\n", e.what());
    return 1;
  }
  return 0;
}
