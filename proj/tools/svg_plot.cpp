#include "svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace mbbsim::plot {

namespace {

constexpr int kWidth = 720;
constexpr int kHeight = 360;
constexpr int kMarginLeft = 70;
constexpr int kMarginRight = 130;
constexpr int kMarginTop = 36;
constexpr int kMarginBottom = 46;

const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                               "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void update(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (!(lo <= hi)) {
      lo = 0.0;
      hi = 1.0;
    }
    if (hi - lo < 1e-12) {
      const double mid = 0.5 * (lo + hi);
      const double span = std::max(1e-6, std::abs(mid) * 0.05 + 1e-9);
      lo = mid - span;
      hi = mid + span;
    } else {
      const double span = hi - lo;
      lo -= 0.05 * span;
      hi += 0.05 * span;
    }
  }
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(5);
  os << v;
  return os.str();
}

}  // namespace

void write_svg(const std::string& path, const std::string& title, const std::string& x_label,
               const std::string& y_label, const std::vector<Series>& series) {
  Range xr, yr;
  for (const Series& s : series) {
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      xr.update(x);
      yr.update(y);
    }
  }
  xr.pad();
  yr.pad();

  const double plot_w = kWidth - kMarginLeft - kMarginRight;
  const double plot_h = kHeight - kMarginTop - kMarginBottom;
  auto sx = [&](double x) { return kMarginLeft + (x - xr.lo) / (xr.hi - xr.lo) * plot_w; };
  auto sy = [&](double y) { return kMarginTop + (1.0 - (y - yr.lo) / (yr.hi - yr.lo)) * plot_h; };

  std::ofstream out(path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kWidth << "' height='" << kHeight
      << "' viewBox='0 0 " << kWidth << " " << kHeight << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << kWidth / 2 << "' y='20' text-anchor='middle' font-family='sans-serif' "
      << "font-size='14'>" << title << "</text>\n";

  // Axes and ticks.
  out << "<g stroke='#333' stroke-width='1'>\n";
  out << "<line x1='" << kMarginLeft << "' y1='" << kMarginTop << "' x2='" << kMarginLeft
      << "' y2='" << kMarginTop + plot_h << "'/>\n";
  out << "<line x1='" << kMarginLeft << "' y1='" << kMarginTop + plot_h << "' x2='"
      << kMarginLeft + plot_w << "' y2='" << kMarginTop + plot_h << "'/>\n";
  out << "</g>\n";

  out << "<g font-family='sans-serif' font-size='10' fill='#333'>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = xr.lo + (xr.hi - xr.lo) * i / 5.0;
    const double yv = yr.lo + (yr.hi - yr.lo) * i / 5.0;
    out << "<line x1='" << sx(xv) << "' y1='" << kMarginTop + plot_h << "' x2='" << sx(xv)
        << "' y2='" << kMarginTop + plot_h + 4 << "' stroke='#333'/>\n";
    out << "<text x='" << sx(xv) << "' y='" << kMarginTop + plot_h + 16
        << "' text-anchor='middle'>" << fmt(xv) << "</text>\n";
    out << "<line x1='" << kMarginLeft - 4 << "' y1='" << sy(yv) << "' x2='" << kMarginLeft
        << "' y2='" << sy(yv) << "' stroke='#333'/>\n";
    out << "<text x='" << kMarginLeft - 8 << "' y='" << sy(yv) + 3 << "' text-anchor='end'>"
        << fmt(yv) << "</text>\n";
    out << "<line x1='" << kMarginLeft << "' y1='" << sy(yv) << "' x2='" << kMarginLeft + plot_w
        << "' y2='" << sy(yv) << "' stroke='#eee'/>\n";
  }
  out << "<text x='" << kMarginLeft + plot_w / 2 << "' y='" << kHeight - 8
      << "' text-anchor='middle'>" << x_label << "</text>\n";
  out << "<text x='16' y='" << kMarginTop + plot_h / 2 << "' text-anchor='middle' transform='rotate(-90 16 "
      << kMarginTop + plot_h / 2 << ")'>" << y_label << "</text>\n";
  out << "</g>\n";

  int color_idx = 0;
  int legend_y = kMarginTop + 8;
  for (const Series& s : series) {
    const char* color = kColors[color_idx % 8];
    ++color_idx;
    out << "<polyline fill='none' stroke='" << color << "' stroke-width='1.4' points='";
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      out << fmt(sx(x)) << "," << fmt(sy(y)) << " ";
    }
    out << "'/>\n";
    out << "<line x1='" << kMarginLeft + plot_w + 8 << "' y1='" << legend_y << "' x2='"
        << kMarginLeft + plot_w + 28 << "' y2='" << legend_y << "' stroke='" << color
        << "' stroke-width='2'/>\n";
    out << "<text x='" << kMarginLeft + plot_w + 32 << "' y='" << legend_y + 3
        << "' font-family='sans-serif' font-size='10'>" << s.label << "</text>\n";
    legend_y += 14;
  }
  out << "</svg>\n";
}

}  // namespace mbbsim::plot
