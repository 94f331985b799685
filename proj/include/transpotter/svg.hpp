#pragma once

#include <string>
#include <vector>

namespace transpotter {

struct SvgSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

// Minimal deterministic line plot. Shared fixed palette, y clamped to the data
// range (or [0,1] when all values fit), optional shaded x-interval. The same
// inputs always produce the same bytes.
std::string svg_line_plot(const std::string& title, const std::string& x_label,
                          const std::string& y_label, const std::vector<SvgSeries>& series,
                          double shade_x0 = 0, double shade_x1 = -1);

}  // namespace transpotter
