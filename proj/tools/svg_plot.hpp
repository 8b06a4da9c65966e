#pragma once

// Minimal static SVG charts: axes with tick labels, polyline or step series, legend.

#include <string>
#include <vector>

namespace bdm::tools {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool bars = false;  ///< draw as a step/bar outline instead of a polyline
};

struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_y = false;
  std::vector<Series> series;
};

std::string render_svg(const Chart& chart);
void write_svg(const std::string& path, const Chart& chart);

}  // namespace bdm::tools
