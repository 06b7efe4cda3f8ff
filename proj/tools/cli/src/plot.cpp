#include "mmcse_cli/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace mmcse::cli {

namespace {

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

}  // namespace

std::string render_line_plot_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                                 const std::vector<std::string>& x_ticks, const std::vector<PlotSeries>& series) {
  constexpr double width = 640, height = 420, left = 70, right = 20, top = 40, bottom = 60;
  const double pw = width - left - right, ph = height - top - bottom;

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      const double e = i < s.errors.size() ? s.errors[i] : 0.0;
      if (!std::isfinite(s.values[i])) continue;
      lo = std::min(lo, s.values[i] - e);
      hi = std::max(hi, s.values[i] + e);
    }
  }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-9) lo -= 0.5, hi += 0.5;
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;

  const std::size_t n = x_ticks.size();
  auto px = [&](std::size_t i) { return left + (n <= 1 ? pw / 2 : pw * static_cast<double>(i) / static_cast<double>(n - 1)); };
  auto py = [&](double v) { return top + ph * (hi - v) / (hi - lo); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
      << "</text>\n";
  svg << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    svg << "<line x1=\"" << left - 4 << "\" x2=\"" << left + pw << "\" y1=\"" << num(py(v)) << "\" y2=\"" << num(py(v))
        << "\" stroke=\"#ddd\"/>\n";
    svg << "<text x=\"" << left - 8 << "\" y=\"" << num(py(v) + 4) << "\" text-anchor=\"end\">" << tick_label(v)
        << "</text>\n";
  }
  for (std::size_t i = 0; i < n; ++i) {
    svg << "<text x=\"" << num(px(i)) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">"
        << escape(x_ticks[i]) << "</text>\n";
  }
  svg << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 15 << "\" text-anchor=\"middle\">" << escape(x_label)
      << "</text>\n";
  svg << "<text transform=\"translate(18," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape(y_label) << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % std::size(kColors)];
    const auto& sr = series[s];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < sr.values.size() && i < n; ++i) svg << num(px(i)) << ',' << num(py(sr.values[i])) << ' ';
    svg << "\"/>\n";
    for (std::size_t i = 0; i < sr.values.size() && i < n; ++i) {
      if (i < sr.errors.size() && sr.errors[i] > 0.0) {
        svg << "<line x1=\"" << num(px(i)) << "\" x2=\"" << num(px(i)) << "\" y1=\"" << num(py(sr.values[i] - sr.errors[i]))
            << "\" y2=\"" << num(py(sr.values[i] + sr.errors[i])) << "\" stroke=\"" << color << "\"/>\n";
      }
      svg << "<circle cx=\"" << num(px(i)) << "\" cy=\"" << num(py(sr.values[i])) << "\" r=\"3.5\" fill=\"" << color
          << "\"/>\n";
    }
    svg << "<text x=\"" << left + 10 << "\" y=\"" << top + 16 + 16 * static_cast<double>(s) << "\" fill=\"" << color
        << "\">" << escape(sr.name) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace mmcse::cli
