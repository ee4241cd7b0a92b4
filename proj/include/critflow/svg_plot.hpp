#pragma once

#include <string>
#include <vector>

namespace critflow {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  /// draw markers instead of a polyline
  bool points = false;
};

struct LinePlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  /// dashed vertical lines, e.g. jump times
  std::vector<double> markers;
  bool log_x = false;
  int width = 720;
  int height = 440;
};

/// Self-contained SVG document; non-finite points are skipped.
std::string render_svg(const LinePlot& plot);

}  // namespace critflow
