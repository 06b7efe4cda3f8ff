#pragma once

#include <string>
#include <vector>

namespace mmcse::cli {

struct PlotSeries {
  std::string name;
  std::vector<double> values;
  std::vector<double> errors;  // optional, same length as values
};

// Line chart over categorical x positions, rendered as standalone SVG.
std::string render_line_plot_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                                 const std::vector<std::string>& x_ticks, const std::vector<PlotSeries>& series);

}  // namespace mmcse::cli
