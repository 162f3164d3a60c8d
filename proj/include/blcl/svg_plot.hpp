#pragma once

#include <string>
#include <vector>

namespace blcl::io {

struct PlotSeries {
  std::string label;
  std::string color;
  std::vector<double> values;  // x = 1..n
};

// Minimal SVG line chart. The raw series values are embedded in a <metadata>
// JSON block so downstream tools can read the plotted numbers back exactly.
std::string render_line_plot(const std::string& title,
                             const std::string& x_label,
                             const std::vector<PlotSeries>& series,
                             int width = 640, int height = 400);

// Extracts the embedded series values from an SVG written by render_line_plot.
std::vector<PlotSeries> parse_plot_metadata(const std::string& svg_text);

}  // namespace blcl::io
