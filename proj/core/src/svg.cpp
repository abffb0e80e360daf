#include "slrl/svg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "slrl/text.hpp"

namespace slrl::svg {

namespace {

constexpr std::array<const char*, 6> kPalette{"#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#b07aa1"};

constexpr double kWidth = 720.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 160.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 80.0;

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

std::string num(double v) { return format_fixed(v, 2); }

void header(std::ostringstream& o, const std::string& title) {
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << num(kWidth / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
    << "</text>\n";
}

void legend(std::ostringstream& o, const std::vector<std::string>& names) {
  const double x = kWidth - kRight + 15;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = kTop + 10 + 20.0 * static_cast<double>(i);
    o << "<rect x=\"" << num(x) << "\" y=\"" << num(y - 10) << "\" width=\"12\" height=\"12\" fill=\""
      << kPalette[i % kPalette.size()] << "\"/>\n";
    o << "<text x=\"" << num(x + 18) << "\" y=\"" << num(y) << "\">" << escape(names[i]) << "</text>\n";
  }
}

}  // namespace

std::string bar_chart(const std::string& title, const std::string& y_label, const std::vector<std::string>& categories,
                      const std::vector<BarSeries>& series, double y_max) {
  double top = y_max;
  if (top <= 0.0) {
    for (const auto& s : series)
      for (double v : s.values)
        if (std::isfinite(v)) top = std::max(top, v);
    if (top <= 0.0) top = 1.0;
    top *= 1.1;
  }
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  const double y0 = kTop + plot_h;

  std::ostringstream o;
  header(o, title);
  o << "<line x1=\"" << kLeft << "\" y1=\"" << num(y0) << "\" x2=\"" << num(kLeft + plot_w) << "\" y2=\"" << num(y0)
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << num(y0)
    << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = top * t / 4.0;
    const double y = y0 - plot_h * t / 4.0;
    o << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\">" << format_fixed(v, 2)
      << "</text>\n";
  }
  o << "<text x=\"16\" y=\"" << num(kTop + plot_h / 2) << "\" transform=\"rotate(-90 16 " << num(kTop + plot_h / 2)
    << ")\" text-anchor=\"middle\">" << escape(y_label) << "</text>\n";

  const double group_w = categories.empty() ? plot_w : plot_w / static_cast<double>(categories.size());
  const double bar_w = series.empty() ? 0.0 : group_w * 0.8 / static_cast<double>(series.size());
  for (std::size_t c = 0; c < categories.size(); ++c) {
    const double gx = kLeft + group_w * static_cast<double>(c);
    for (std::size_t s = 0; s < series.size(); ++s) {
      const double v = c < series[s].values.size() ? series[s].values[c] : std::numeric_limits<double>::quiet_NaN();
      if (!std::isfinite(v)) continue;
      const double h = plot_h * std::clamp(v / top, 0.0, 1.0);
      const double x = gx + group_w * 0.1 + bar_w * static_cast<double>(s);
      o << "<rect class=\"bar\" data-series=\"" << escape(series[s].name) << "\" data-category=\""
        << escape(categories[c]) << "\" data-value=\"" << format_double(v) << "\" x=\"" << num(x) << "\" y=\""
        << num(y0 - h) << "\" width=\"" << num(bar_w) << "\" height=\"" << num(h) << "\" fill=\""
        << kPalette[s % kPalette.size()] << "\"/>\n";
    }
    const double cx = gx + group_w / 2;
    o << "<text x=\"" << num(cx) << "\" y=\"" << num(y0 + 16) << "\" text-anchor=\"end\" transform=\"rotate(-30 "
      << num(cx) << " " << num(y0 + 16) << ")\">" << escape(categories[c]) << "</text>\n";
  }
  std::vector<std::string> names;
  for (const auto& s : series) names.push_back(s.name);
  legend(o, names);
  o << "</svg>\n";
  return o.str();
}

std::string line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                      const std::vector<Polyline>& lines, const std::vector<Marker>& markers) {
  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo, y_lo = x_lo, y_hi = -x_lo;
  auto extend = [&](const std::array<double, 2>& p) {
    x_lo = std::min(x_lo, p[0]);
    x_hi = std::max(x_hi, p[0]);
    y_lo = std::min(y_lo, p[1]);
    y_hi = std::max(y_hi, p[1]);
  };
  for (const auto& l : lines)
    for (const auto& p : l.points) extend(p);
  for (const auto& m : markers) extend(m.point);
  if (!std::isfinite(x_lo)) x_lo = y_lo = 0.0, x_hi = y_hi = 1.0;
  const double pad_x = std::max(0.05, 0.05 * (x_hi - x_lo));
  const double pad_y = std::max(0.05, 0.05 * (y_hi - y_lo));
  x_lo -= pad_x, x_hi += pad_x, y_lo -= pad_y, y_hi += pad_y;

  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + plot_w * (x - x_lo) / (x_hi - x_lo); };
  auto sy = [&](double y) { return kTop + plot_h * (1.0 - (y - y_lo) / (y_hi - y_lo)); };

  std::ostringstream o;
  header(o, title);
  o << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << num(plot_w) << "\" height=\"" << num(plot_h)
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  o << "<text x=\"" << num(kLeft + plot_w / 2) << "\" y=\"" << num(kTop + plot_h + 30)
    << "\" text-anchor=\"middle\">" << escape(x_label) << " [" << format_fixed(x_lo, 2) << ", "
    << format_fixed(x_hi, 2) << "]</text>\n";
  o << "<text x=\"16\" y=\"" << num(kTop + plot_h / 2) << "\" transform=\"rotate(-90 16 " << num(kTop + plot_h / 2)
    << ")\" text-anchor=\"middle\">" << escape(y_label) << " [" << format_fixed(y_lo, 2) << ", "
    << format_fixed(y_hi, 2) << "]</text>\n";
  for (std::size_t i = 0; i < lines.size(); ++i) {
    o << "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" << kPalette[i % kPalette.size()]
      << "\" data-series=\"" << escape(lines[i].name) << "\" points=\"";
    for (const auto& p : lines[i].points) o << num(sx(p[0])) << ',' << num(sy(p[1])) << ' ';
    o << "\"/>\n";
  }
  for (const auto& m : markers) {
    o << "<circle cx=\"" << num(sx(m.point[0])) << "\" cy=\"" << num(sy(m.point[1]))
      << "\" r=\"5\" fill=\"black\"/>\n";
    o << "<text x=\"" << num(sx(m.point[0]) + 8) << "\" y=\"" << num(sy(m.point[1]) - 6) << "\">" << escape(m.label)
      << "</text>\n";
  }
  std::vector<std::string> names;
  for (const auto& l : lines) names.push_back(l.name);
  legend(o, names);
  o << "</svg>\n";
  return o.str();
}

}  // namespace slrl::svg
