#include "segdepth/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace segdepth::plot {

namespace {

constexpr double kWidth = 640, kHeight = 440, kLeft = 70, kRight = 150, kTop = 40, kBottom = 55;
const char* const kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
                                "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#000000"};

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
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string header(double w, double h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) +
         "\" viewBox=\"0 0 " + num(w) + " " + num(h) + "\" font-family=\"sans-serif\" font-size=\"12\">\n"
         "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

std::string text(double x, double y, const std::string& s, const char* anchor = "middle", int size = 12,
                 double rotate = 0.0) {
  std::ostringstream os;
  os << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" text-anchor=\"" << anchor << "\" font-size=\"" << size
     << "\"";
  if (rotate != 0.0) os << " transform=\"rotate(" << num(rotate) << ' ' << num(x) << ' ' << num(y) << ")\"";
  os << '>' << escape(s) << "</text>\n";
  return os.str();
}

// Viridis-like ramp from dark blue to yellow.
std::string ramp(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const double r = 68 + t * (253 - 68), g = 1 + t * (231 - 1), b = 84 + t * (37 - 84);
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(r), static_cast<int>(g), static_cast<int>(b));
  return buf;
}

struct Axes {
  double x0, x1, y0, y1;
  bool log_x;
  double px(double x) const {
    const double a = log_x ? std::log10(x) : x, lo = log_x ? std::log10(x0) : x0, hi = log_x ? std::log10(x1) : x1;
    return kLeft + (a - lo) / (hi - lo) * (kWidth - kLeft - kRight);
  }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

std::string frame(const Axes& ax, const LineOptions& o) {
  std::ostringstream os;
  os << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kWidth - kLeft - kRight << "\" height=\""
     << kHeight - kTop - kBottom << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double fx = k / 4.0;
    const double xv = ax.log_x ? std::pow(10.0, std::log10(ax.x0) + fx * (std::log10(ax.x1) - std::log10(ax.x0)))
                               : ax.x0 + fx * (ax.x1 - ax.x0);
    const double yv = ax.y0 + fx * (ax.y1 - ax.y0);
    os << text(ax.px(xv), kHeight - kBottom + 16, num(xv));
    os << text(kLeft - 6, ax.py(yv) + 4, num(yv), "end");
  }
  os << text((kLeft + kWidth - kRight) / 2, 24, o.title, "middle", 14);
  os << text((kLeft + kWidth - kRight) / 2, kHeight - 14, o.x_label);
  os << text(18, (kTop + kHeight - kBottom) / 2, o.y_label, "middle", 12, -90);
  return os.str();
}

}  // namespace

std::string lines(const std::vector<Series>& series, const LineOptions& o) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (o.y_lo < o.y_hi) y0 = o.y_lo, y1 = o.y_hi;
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  const Axes ax{x0, x1, y0, y1, o.log_x && x0 > 0};
  std::ostringstream os;
  os << header(kWidth, kHeight) << frame(ax, o);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"";
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
      if (std::isfinite(s.y[i])) os << num(ax.px(s.x[i])) << ',' << num(ax.py(s.y[i])) << ' ';
    os << "\"/>\n";
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
      if (std::isfinite(s.y[i]))
        os << "<circle cx=\"" << num(ax.px(s.x[i])) << "\" cy=\"" << num(ax.py(s.y[i])) << "\" r=\"2.5\" fill=\""
           << color << "\"/>\n";
    const double ly = kTop + 14 + 16.0 * static_cast<double>(k);
    os << "<line x1=\"" << kWidth - kRight + 10 << "\" y1=\"" << ly - 4 << "\" x2=\"" << kWidth - kRight + 30
       << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << text(kWidth - kRight + 36, ly, s.name, "start", 11);
  }
  os << "</svg>\n";
  return os.str();
}

std::string confusion_heatmap(const ConfusionMatrix& m, const std::string& title) {
  const double cell = 32, left = 60, top = 50;
  const double size = cell * m.classes;
  std::ostringstream os;
  os << header(left + size + 30, top + size + 50);
  os << text(left + size / 2, 24, title, "middle", 14);
  for (int a = 0; a < m.classes; ++a) {
    const double row = static_cast<double>(m.row_sum(a));
    for (int b = 0; b < m.classes; ++b) {
      const double f = row > 0 ? static_cast<double>(m.at(a, b)) / row : 0.0;
      os << "<rect x=\"" << left + b * cell << "\" y=\"" << top + a * cell << "\" width=\"" << cell << "\" height=\""
         << cell << "\" fill=\"" << ramp(f) << "\"/>\n";
      if (m.at(a, b) > 0) os << text(left + (b + 0.5) * cell, top + (a + 0.5) * cell + 4, num(f), "middle", 9);
    }
    os << text(left - 8, top + (a + 0.5) * cell + 4, std::to_string(a), "end");
    os << text(left + (a + 0.5) * cell, top + size + 16, std::to_string(a));
  }
  os << text(left + size / 2, top + size + 36, "predicted depth");
  os << text(16, top + size / 2, "true depth", "middle", 12, -90);
  os << "</svg>\n";
  return os.str();
}

std::string reliability_diagram(const CalibrationCurve& curve, const std::string& title) {
  Series s{"model", {}, {}};
  for (const auto& b : curve.bins)
    if (b.count > 0) {
      s.x.push_back(*b.mean_confidence);
      s.y.push_back(*b.accuracy);
    }
  const Series diag{"ideal", {0.0, 1.0}, {0.0, 1.0}};
  LineOptions o;
  o.title = title + " (ECE " + num(curve.ece) + ")";
  o.x_label = "confidence";
  o.y_label = "accuracy";
  o.y_lo = 0.0;
  o.y_hi = 1.0;
  return lines({diag, s}, o);
}

std::string image(const Grid<float>& pixels, const std::string& title, int mark_row, int mark_col) {
  const double scale = std::max(1.0, 256.0 / std::max(1, std::max(pixels.rows(), pixels.cols())));
  const double top = 36;
  float hi = 0.0f;
  for (float v : pixels) hi = std::max(hi, std::abs(v));
  std::ostringstream os;
  os << header(pixels.cols() * scale + 20, pixels.rows() * scale + top + 10);
  os << text((pixels.cols() * scale + 20) / 2, 22, title, "middle", 13);
  for (int r = 0; r < pixels.rows(); ++r)
    for (int c = 0; c < pixels.cols(); ++c) {
      const double t = hi > 0 ? std::abs(pixels(r, c)) / hi : 0.0;
      const int g = static_cast<int>(std::lround(255 * t));
      char fill[8];
      std::snprintf(fill, sizeof fill, "#%02x%02x%02x", g, g, g);
      os << "<rect x=\"" << num(10 + c * scale) << "\" y=\"" << num(top + r * scale) << "\" width=\"" << num(scale)
         << "\" height=\"" << num(scale) << "\" fill=\"" << fill << "\"/>\n";
    }
  if (mark_row >= 0 && mark_col >= 0)
    os << "<circle cx=\"" << num(10 + (mark_col + 0.5) * scale) << "\" cy=\"" << num(top + (mark_row + 0.5) * scale)
       << "\" r=\"" << num(std::max(3.0, 2 * scale)) << "\" fill=\"none\" stroke=\"red\" stroke-width=\"1.5\"/>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace segdepth::plot
