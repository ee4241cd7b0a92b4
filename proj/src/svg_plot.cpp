#include "critflow/svg_plot.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace critflow {

namespace {

constexpr std::array<const char*, 8> palette{"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                             "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

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

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish() {
    if (!(lo <= hi)) lo = 0, hi = 1;
    if (hi - lo < 1e-12 * (1 + std::abs(hi))) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
};

}  // namespace

std::string render_svg(const LinePlot& plot) {
  const double left = 70, right = 20, top = 36, bottom = 50;
  const double w = plot.width - left - right, h = plot.height - top - bottom;
  auto xt = [&](double x) { return plot.log_x ? (x > 0 ? std::log10(x) : std::numeric_limits<double>::quiet_NaN()) : x; };

  Range rx, ry;
  for (const auto& s : plot.series) {
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (std::isfinite(xt(s.x[i])) && std::isfinite(s.y[i])) {
        rx.add(xt(s.x[i]));
        ry.add(s.y[i]);
      }
    }
  }
  rx.finish();
  ry.finish();
  auto px = [&](double x) { return left + (xt(x) - rx.lo) / (rx.hi - rx.lo) * w; };
  auto py = [&](double y) { return top + (1 - (y - ry.lo) / (ry.hi - ry.lo)) * h; };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\" font-family=\"sans-serif\" "
      "font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      plot.width, plot.height, plot.width, plot.height);
  svg += fmt::format("<text x=\"{:.1f}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n", plot.width / 2.0,
                     escape(plot.title));
  svg += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"none\" stroke=\"#333\"/>\n", left,
                     top, w, h);
  for (int i = 0; i <= 4; ++i) {
    const double fx = rx.lo + (rx.hi - rx.lo) * i / 4.0, fy = ry.lo + (ry.hi - ry.lo) * i / 4.0;
    const double gx = left + w * i / 4.0, gy = top + h - h * i / 4.0;
    svg += fmt::format("<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"#ddd\"/>\n", gx, top, gx, top + h);
    svg += fmt::format("<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"#ddd\"/>\n", left, gy, left + w, gy);
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n", gx, top + h + 16,
                       plot.log_x ? fmt::format("1e{:.2g}", fx) : fmt::format("{:.3g}", fx));
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{:.3g}</text>\n", left - 6, gy + 4, fy);
  }
  svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n", left + w / 2, plot.height - 12.0,
                     escape(plot.x_label));
  svg += fmt::format("<text x=\"16\" y=\"{:.1f}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1f})\">{}</text>\n",
                     top + h / 2, top + h / 2, escape(plot.y_label));

  for (double m : plot.markers) {
    if (!std::isfinite(xt(m)) || xt(m) < rx.lo || xt(m) > rx.hi) continue;
    svg += fmt::format("<line x1=\"{0:.2f}\" y1=\"{1:.1f}\" x2=\"{0:.2f}\" y2=\"{2:.1f}\" stroke=\"#555\" stroke-dasharray=\"5,4\"/>\n",
                       px(m), top, top + h);
  }

  for (std::size_t si = 0; si < plot.series.size(); ++si) {
    const auto& s = plot.series[si];
    const char* color = palette[si % palette.size()];
    const std::size_t n = std::min(s.x.size(), s.y.size());
    if (s.points) {
      for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(xt(s.x[i])) || !std::isfinite(s.y[i])) continue;
        svg += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"{}\"/>\n", px(s.x[i]), py(s.y[i]), color);
      }
    } else {
      std::string pts;
      // thin long series to at most ~4000 vertices
      const std::size_t stride = std::max<std::size_t>(1, n / 4000);
      for (std::size_t i = 0; i < n; i += stride) {
        if (!std::isfinite(xt(s.x[i])) || !std::isfinite(s.y[i])) continue;
        pts += fmt::format("{:.2f},{:.2f} ", px(s.x[i]), py(s.y[i]));
      }
      if (n && (n - 1) % stride && std::isfinite(xt(s.x[n - 1])) && std::isfinite(s.y[n - 1])) {
        pts += fmt::format("{:.2f},{:.2f}", px(s.x[n - 1]), py(s.y[n - 1]));
      }
      svg += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n", color, pts);
    }
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" fill=\"{}\">{}</text>\n", left + 10, top + 16 + 15.0 * static_cast<double>(si),
                       color, escape(s.name));
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace critflow
