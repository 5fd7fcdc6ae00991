#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace hyperinf::plot {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  // Drawn up to the last finite point, which gets a cross marker.
  bool diverged = false;
};

struct PlotOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_y = false;
  int width = 720;
  int height = 450;
};

// Standalone SVG text. Throws InvalidArgument when no series has a finite point.
std::string render_svg(const std::vector<Series>& series, const PlotOptions& options);
void render_plot(const std::vector<Series>& series, const PlotOptions& options, const std::filesystem::path& path);

}  // namespace hyperinf::plot
