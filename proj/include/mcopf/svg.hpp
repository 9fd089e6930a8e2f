#pragma once

#include <array>
#include <string>
#include <vector>

namespace mcopf {

struct SvgSeries {
    std::string label;
    std::vector<std::array<double, 2>> points;
    bool polyline = true; // connect markers in order
};

// Self-contained scatter plot, 800x600 viewBox, axes labeled P and Q (pu).
// One circle marker per point plus an optional polyline per series.
std::string render_scatter_svg(const std::vector<SvgSeries>& series);

} // namespace mcopf
