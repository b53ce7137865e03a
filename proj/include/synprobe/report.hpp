#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace synprobe {

/// One line of a line chart. `err` is drawn as a shaded band of +-err around
/// the line when it is non-empty.
struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> err;
};

struct ChartText {
  std::string title;
  std::string x_label;
  std::string y_label;
  double y_min = 0.0;
  double y_max = 1.0;
};

/// Line chart over [y_min, y_max]. `x_ticks` labels integer x positions
/// when non-empty.
std::string line_chart_svg(const ChartText& text, const std::vector<Series>& series, std::string_view provenance,
                           const std::vector<std::string>& x_ticks = {});

/// Grouped bar chart: one cluster per category, one bar per series within it.
/// Series use `y` for bar heights and `err` (optional) for error whiskers.
std::string bar_chart_svg(const ChartText& text, const std::vector<std::string>& categories,
                          const std::vector<Series>& series, std::string_view provenance);

/// Escapes &, <, > and quotes for SVG text and attributes.
std::string xml_escape(std::string_view s);

}  // namespace synprobe
