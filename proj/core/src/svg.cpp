#include "ksc/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace ksc::svg {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct Bounds {
  double xmin = std::numeric_limits<double>::max();
  double xmax = -std::numeric_limits<double>::max();
  double ymin = std::numeric_limits<double>::max();
  double ymax = -std::numeric_limits<double>::max();

  void include(double x, double y) {
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }

  void pad() {
    const double dx = xmax - xmin;
    const double dy = ymax - ymin;
    const double px = dx > 0 ? 0.05 * dx : 1.0;
    const double py = dy > 0 ? 0.05 * dy : 1.0;
    xmin -= px;
    xmax += px;
    ymin -= py;
    ymax += py;
  }
};

constexpr int kMargin = 48;

}  // namespace

std::string line_plot(const std::string& title, const std::vector<Series>& series,
                      const std::vector<Disk>& disks, int width, int height,
                      bool equal_axes) {
  Bounds b;
  for (const Series& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) b.include(s.x[i], s.y[i]);
  for (const Disk& d : disks) {
    b.include(d.x - d.radius, d.y - d.radius);
    b.include(d.x + d.radius, d.y + d.radius);
  }
  if (b.xmin > b.xmax) b = Bounds{0, 1, 0, 1};
  b.pad();
  if (equal_axes) {
    const double cx = 0.5 * (b.xmin + b.xmax);
    const double cy = 0.5 * (b.ymin + b.ymax);
    const double half = 0.5 * std::max(b.xmax - b.xmin, b.ymax - b.ymin);
    b = Bounds{cx - half, cx + half, cy - half, cy + half};
  }

  const double sx = (width - 2.0 * kMargin) / (b.xmax - b.xmin);
  const double sy = (height - 2.0 * kMargin) / (b.ymax - b.ymin);
  auto px = [&](double x) { return kMargin + (x - b.xmin) * sx; };
  auto py = [&](double y) { return height - kMargin - (y - b.ymin) * sy; };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
         "\" height=\"" + std::to_string(height) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + std::to_string(width / 2) +
         "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + title + "</text>\n";

  // Axes with min/max tick labels.
  out += "<line x1=\"" + fmt(px(b.xmin)) + "\" y1=\"" + fmt(py(b.ymin)) + "\" x2=\"" +
         fmt(px(b.xmax)) + "\" y2=\"" + fmt(py(b.ymin)) +
         "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  out += "<line x1=\"" + fmt(px(b.xmin)) + "\" y1=\"" + fmt(py(b.ymin)) + "\" x2=\"" +
         fmt(px(b.xmin)) + "\" y2=\"" + fmt(py(b.ymax)) +
         "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  out += "<text x=\"" + fmt(px(b.xmin)) + "\" y=\"" + fmt(py(b.ymin) + 16.0) +
         "\" font-size=\"10\">" + fmt(b.xmin) + "</text>\n";
  out += "<text x=\"" + fmt(px(b.xmax)) + "\" y=\"" + fmt(py(b.ymin) + 16.0) +
         "\" text-anchor=\"end\" font-size=\"10\">" + fmt(b.xmax) + "</text>\n";
  out += "<text x=\"" + fmt(px(b.xmin) - 4.0) + "\" y=\"" + fmt(py(b.ymax)) +
         "\" text-anchor=\"end\" font-size=\"10\">" + fmt(b.ymax) + "</text>\n";
  out += "<text x=\"" + fmt(px(b.xmin) - 4.0) + "\" y=\"" + fmt(py(b.ymin)) +
         "\" text-anchor=\"end\" font-size=\"10\">" + fmt(b.ymin) + "</text>\n";

  for (const Disk& d : disks) {
    out += "<circle cx=\"" + fmt(px(d.x)) + "\" cy=\"" + fmt(py(d.y)) + "\" r=\"" +
           fmt(d.radius * sx) + "\" fill=\"" + d.color + "\" fill-opacity=\"0.3\" stroke=\"" +
           d.color + "\"/>\n";
  }

  int legend_y = 36;
  for (const Series& s : series) {
    if (s.x.empty()) continue;
    out += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (i) out += ' ';
      out += fmt(px(s.x[i])) + "," + fmt(py(s.y[i]));
    }
    out += "\"/>\n";
    if (!s.label.empty()) {
      out += "<text x=\"" + std::to_string(width - kMargin) + "\" y=\"" +
             std::to_string(legend_y) + "\" text-anchor=\"end\" font-size=\"11\" fill=\"" +
             s.color + "\">" + s.label + "</text>\n";
      legend_y += 14;
    }
  }
  out += "</svg>\n";
  return out;
}

std::vector<int> histogram_counts(const std::vector<double>& values, int bins,
                                  double lo, double hi) {
  std::vector<int> counts(bins, 0);
  if (!(hi > lo) || bins < 1) return counts;
  for (double v : values) {
    if (v < lo || v > hi) continue;
    int b = static_cast<int>((v - lo) / (hi - lo) * bins);
    if (b == bins) b = bins - 1;  // right edge closed
    counts[b]++;
  }
  return counts;
}

std::string histogram_plot(const std::string& title,
                           const std::vector<double>& before,
                           const std::vector<double>& after, int bins,
                           const std::string& label_before,
                           const std::string& label_after, int width, int height) {
  double lo = std::numeric_limits<double>::max();
  double hi = -std::numeric_limits<double>::max();
  for (double v : before) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (double v : after) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (lo > hi) {
    lo = 0.0;
    hi = 1.0;
  }
  if (hi == lo) hi = lo + 1.0;

  const std::vector<int> cb = histogram_counts(before, bins, lo, hi);
  const std::vector<int> ca = histogram_counts(after, bins, lo, hi);
  int peak = 1;
  for (int c : cb) peak = std::max(peak, c);
  for (int c : ca) peak = std::max(peak, c);

  const double plot_w = width - 2.0 * kMargin;
  const double plot_h = height - 2.0 * kMargin;
  const double bar_w = plot_w / bins;

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
         "\" height=\"" + std::to_string(height) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + std::to_string(width / 2) +
         "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + title + "</text>\n";

  auto bars = [&](const std::vector<int>& counts, const std::string& color) {
    for (int i = 0; i < bins; ++i) {
      const double h = plot_h * counts[i] / peak;
      out += "<rect x=\"" + fmt(kMargin + i * bar_w) + "\" y=\"" +
             fmt(height - kMargin - h) + "\" width=\"" + fmt(bar_w) + "\" height=\"" +
             fmt(h) + "\" fill=\"" + color + "\" fill-opacity=\"0.5\"/>\n";
    }
  };
  bars(cb, "#1f77b4");
  bars(ca, "#ff7f0e");

  out += "<text x=\"" + std::to_string(width - kMargin) +
         "\" y=\"36\" text-anchor=\"end\" font-size=\"11\" fill=\"#1f77b4\">" +
         label_before + "</text>\n";
  out += "<text x=\"" + std::to_string(width - kMargin) +
         "\" y=\"50\" text-anchor=\"end\" font-size=\"11\" fill=\"#ff7f0e\">" +
         label_after + "</text>\n";
  out += "<text x=\"" + fmt(static_cast<double>(kMargin)) + "\" y=\"" +
         fmt(height - kMargin + 16.0) + "\" font-size=\"10\">" + fmt(lo) + "</text>\n";
  out += "<text x=\"" + fmt(width - static_cast<double>(kMargin)) + "\" y=\"" +
         fmt(height - kMargin + 16.0) + "\" text-anchor=\"end\" font-size=\"10\">" +
         fmt(hi) + "</text>\n";
  out += "</svg>\n";
  return out;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("svg: cannot open " + path);
  out << content;
}

}  // namespace ksc::svg
