#include "blcl/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace blcl::io {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string render_line_plot(const std::string& title, const std::string& x_label,
                             const std::vector<PlotSeries>& series, int width,
                             int height) {
  if (series.empty()) throw std::invalid_argument("render_line_plot: no series");
  std::size_t n = 0;
  double lo = 0.0, hi = 1.0;
  bool first = true;
  for (const auto& s : series) {
    n = std::max(n, s.values.size());
    for (double v : s.values) {
      if (first) {
        lo = hi = v;
        first = false;
      } else {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  if (n == 0) throw std::invalid_argument("render_line_plot: empty series");
  if (hi - lo < 1e-12) {
    hi += 0.5;
    lo -= 0.5;
  }

  const int ml = 60, mr = 20, mt = 40, mb = 45;
  const double pw = width - ml - mr, ph = height - mt - mb;
  auto sx = [&](double i) {
    return ml + (n == 1 ? pw / 2 : (i - 1) / static_cast<double>(n - 1) * pw);
  };
  auto sy = [&](double v) { return mt + (hi - v) / (hi - lo) * ph; };

  nlohmann::json meta;
  for (const auto& s : series) {
    nlohmann::json j;
    j["label"] = s.label;
    j["values"] = s.values;
    meta.push_back(j);
  }

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
      << height << "\">\n";
  svg << "<metadata id=\"series-data\">" << meta.dump() << "</metadata>\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"15\">" << title << "</text>\n";

  // axes
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
      << "\" y2=\"" << mt + ph << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw
      << "\" y2=\"" << mt + ph << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    const double y = sy(v);
    svg << "<line x1=\"" << ml - 4 << "\" y1=\"" << y << "\" x2=\"" << ml
        << "\" y2=\"" << y << "\" stroke=\"black\"/>\n";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    svg << "<text x=\"" << ml - 8 << "\" y=\"" << y + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << buf << "</text>\n";
  }
  svg << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 10
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
      << x_label << "</text>\n";

  int legend_y = mt + 8;
  for (const auto& s : series) {
    svg << "<polyline fill=\"none\" stroke=\"" << s.color
        << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      if (i) svg << ' ';
      svg << fmt(sx(static_cast<double>(i + 1))) << ',' << fmt(sy(s.values[i]));
    }
    svg << "\"/>\n";
    svg << "<rect x=\"" << ml + pw - 130 << "\" y=\"" << legend_y - 9
        << "\" width=\"12\" height=\"12\" fill=\"" << s.color << "\"/>\n";
    svg << "<text x=\"" << ml + pw - 112 << "\" y=\"" << legend_y + 2
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << s.label
        << "</text>\n";
    legend_y += 18;
  }
  svg << "</svg>\n";
  return svg.str();
}

std::vector<PlotSeries> parse_plot_metadata(const std::string& svg_text) {
  const std::string open = "<metadata id=\"series-data\">";
  const auto a = svg_text.find(open);
  const auto b = svg_text.find("</metadata>");
  if (a == std::string::npos || b == std::string::npos || b <= a)
    throw std::invalid_argument("parse_plot_metadata: no metadata block");
  const std::string body = svg_text.substr(a + open.size(), b - a - open.size());
  const auto meta = nlohmann::json::parse(body);
  std::vector<PlotSeries> out;
  for (const auto& j : meta) {
    PlotSeries s;
    s.label = j.at("label").get<std::string>();
    s.values = j.at("values").get<std::vector<double>>();
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace blcl::io
