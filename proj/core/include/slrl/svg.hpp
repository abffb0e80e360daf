#pragma once

#include <array>
#include <string>
#include <vector>

namespace slrl::svg {

struct BarSeries {
  std::string name;
  std::vector<double> values;  // one per category; NaN renders as a missing bar
};

/// Grouped vertical bar chart. `y_max <= 0` scales to the data.
std::string bar_chart(const std::string& title, const std::string& y_label, const std::vector<std::string>& categories,
                      const std::vector<BarSeries>& series, double y_max = 0.0);

struct Polyline {
  std::string name;
  std::vector<std::array<double, 2>> points;
};

struct Marker {
  std::string label;
  std::array<double, 2> point;
};

std::string line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                      const std::vector<Polyline>& lines, const std::vector<Marker>& markers);

}  // namespace slrl::svg
