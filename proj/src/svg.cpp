#include "rlns/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace rlns {

namespace {

constexpr int kWidth = 640, kHeight = 400;
constexpr int kLeft = 64, kRight = 24, kTop = 40, kBottom = 48;

const char* kPalette[] = {"#1f6fb2", "#d1495b", "#3a9d5d", "#8a5fbf", "#c98a1c", "#4f4f4f"};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct Scale {
  double lo, hi;
  double map(double v, double pix_lo, double pix_hi) const {
    if (hi == lo) return (pix_lo + pix_hi) / 2.0;
    return pix_lo + (v - lo) / (hi - lo) * (pix_hi - pix_lo);
  }
};

Scale fit_scale(double lo, double hi) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = (hi - lo) * 0.06;
  return Scale{lo - pad, hi + pad};
}

void axes(std::ostringstream& os, const std::string& title, const std::string& x_label, const std::string& y_label,
          const Scale& sx, const Scale& sy) {
  os << "<rect x='0' y='0' width='" << kWidth << "' height='" << kHeight << "' fill='white'/>\n";
  os << "<text x='" << kWidth / 2 << "' y='22' text-anchor='middle' font-size='15' font-family='sans-serif'>"
     << title << "</text>\n";
  os << "<line x1='" << kLeft << "' y1='" << kHeight - kBottom << "' x2='" << kWidth - kRight << "' y2='"
     << kHeight - kBottom << "' stroke='black'/>\n";
  os << "<line x1='" << kLeft << "' y1='" << kTop << "' x2='" << kLeft << "' y2='" << kHeight - kBottom
     << "' stroke='black'/>\n";
  os << "<text x='" << (kLeft + kWidth - kRight) / 2 << "' y='" << kHeight - 12
     << "' text-anchor='middle' font-size='12' font-family='sans-serif'>" << x_label << "</text>\n";
  os << "<text x='16' y='" << (kTop + kHeight - kBottom) / 2
     << "' text-anchor='middle' font-size='12' font-family='sans-serif' transform='rotate(-90 16 "
     << (kTop + kHeight - kBottom) / 2 << ")'>" << y_label << "</text>\n";
  // ticks
  for (int i = 0; i <= 4; ++i) {
    const double fx = sx.lo + (sx.hi - sx.lo) * i / 4.0;
    const double px = kLeft + (kWidth - kLeft - kRight) * i / 4.0;
    os << "<text x='" << fmt(px) << "' y='" << kHeight - kBottom + 16
       << "' text-anchor='middle' font-size='10' font-family='sans-serif'>" << fmt(fx) << "</text>\n";
    const double fy = sy.lo + (sy.hi - sy.lo) * i / 4.0;
    const double py = kHeight - kBottom - (kHeight - kTop - kBottom) * i / 4.0;
    os << "<text x='" << kLeft - 6 << "' y='" << fmt(py + 3)
       << "' text-anchor='end' font-size='10' font-family='sans-serif'>" << fmt(fy) << "</text>\n";
  }
  // zero line when visible
  if (sy.lo < 0.0 && sy.hi > 0.0) {
    const double py = sy.map(0.0, kHeight - kBottom, kTop);
    os << "<line x1='" << kLeft << "' y1='" << fmt(py) << "' x2='" << kWidth - kRight << "' y2='" << fmt(py)
       << "' stroke='#bbbbbb' stroke-dasharray='4 3'/>\n";
  }
}

}  // namespace

std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           std::span<const double> xs, const std::vector<Series>& series) {
  if (series.empty()) throw std::invalid_argument("svg_line_chart: no series");
  double ylo = series[0].ys.empty() ? 0.0 : series[0].ys[0];
  double yhi = ylo;
  for (const auto& s : series) {
    if (s.ys.size() != xs.size()) throw std::invalid_argument("svg_line_chart: series length mismatch");
    for (double v : s.ys) {
      ylo = std::min(ylo, v);
      yhi = std::max(yhi, v);
    }
  }
  double xlo = xs.empty() ? 0.0 : xs[0], xhi = xlo;
  for (double v : xs) {
    xlo = std::min(xlo, v);
    xhi = std::max(xhi, v);
  }
  const Scale sx = fit_scale(xlo, xhi);
  const Scale sy = fit_scale(ylo, yhi);

  std::ostringstream os;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kWidth << "' height='" << kHeight << "'>\n";
  axes(os, title, x_label, y_label, sx, sy);
  for (size_t si = 0; si < series.size(); ++si) {
    const char* color = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
    os << "<polyline fill='none' stroke='" << color << "' stroke-width='2' points='";
    for (size_t i = 0; i < xs.size(); ++i) {
      const double px = sx.map(xs[i], kLeft, kWidth - kRight);
      const double py = sy.map(series[si].ys[i], kHeight - kBottom, kTop);
      if (i) os << " ";
      os << fmt(px) << "," << fmt(py);
    }
    os << "'/>\n";
    for (size_t i = 0; i < xs.size(); ++i) {
      const double px = sx.map(xs[i], kLeft, kWidth - kRight);
      const double py = sy.map(series[si].ys[i], kHeight - kBottom, kTop);
      os << "<circle cx='" << fmt(px) << "' cy='" << fmt(py) << "' r='3' fill='" << color << "'/>\n";
    }
    os << "<text x='" << kWidth - kRight - 4 << "' y='" << kTop + 16 + 16 * static_cast<int>(si)
       << "' text-anchor='end' font-size='12' font-family='sans-serif' fill='" << color << "'>" << series[si].name
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string svg_scatter(const std::string& title, const std::string& x_label, const std::string& y_label,
                        std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("svg_scatter: length mismatch");
  double xlo = xs.empty() ? 0.0 : xs[0], xhi = xlo, ylo = ys.empty() ? 0.0 : ys[0], yhi = ylo;
  for (double v : xs) {
    xlo = std::min(xlo, v);
    xhi = std::max(xhi, v);
  }
  for (double v : ys) {
    ylo = std::min(ylo, v);
    yhi = std::max(yhi, v);
  }
  const Scale sx = fit_scale(xlo, xhi);
  const Scale sy = fit_scale(ylo, yhi);
  std::ostringstream os;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kWidth << "' height='" << kHeight << "'>\n";
  axes(os, title, x_label, y_label, sx, sy);
  for (size_t i = 0; i < xs.size(); ++i) {
    const double px = sx.map(xs[i], kLeft, kWidth - kRight);
    const double py = sy.map(ys[i], kHeight - kBottom, kTop);
    os << "<circle cx='" << fmt(px) << "' cy='" << fmt(py) << "' r='4' fill='#1f6fb2'/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace rlns
