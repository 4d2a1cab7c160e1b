#pragma once

#include <string>
#include <utility>
#include <vector>

namespace mbbsim::plot {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

/// Renders a simple multi-series line chart (axes, ticks, legend) as a
/// standalone SVG file.
void write_svg(const std::string& path, const std::string& title, const std::string& x_label,
               const std::string& y_label, const std::vector<Series>& series);

}  // namespace mbbsim::plot
