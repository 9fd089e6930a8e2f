#include "mcopf/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace mcopf {

namespace {

const char* const palette[] = {"#1f6fb2", "#c44e52", "#55a868", "#8172b2", "#937860", "#ce6dbd"};

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

} // namespace

std::string render_scatter_svg(const std::vector<SvgSeries>& series) {
    constexpr double width = 800.0, height = 600.0;
    constexpr double ml = 70.0, mr = 25.0, mt = 25.0, mb = 55.0;

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const SvgSeries& s : series)
        for (const auto& p : s.points) {
            if (!std::isfinite(p[0]) || !std::isfinite(p[1])) continue;
            xmin = std::min(xmin, p[0]);
            xmax = std::max(xmax, p[0]);
            ymin = std::min(ymin, p[1]);
            ymax = std::max(ymax, p[1]);
        }
    if (!(xmin <= xmax)) {
        xmin = ymin = 0.0;
        xmax = ymax = 1.0;
    }
    double xpad = std::max(1e-6, 0.05 * (xmax - xmin));
    double ypad = std::max(1e-6, 0.05 * (ymax - ymin));
    xmin -= xpad;
    xmax += xpad;
    ymin -= ypad;
    ymax += ypad;

    auto sx = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (width - ml - mr); };
    auto sy = [&](double y) { return height - mb - (y - ymin) / (ymax - ymin) * (height - mt - mb); };

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 600\">\n";
    out << "<rect width=\"800\" height=\"600\" fill=\"white\"/>\n";
    out << "<line x1=\"" << num(ml) << "\" y1=\"" << num(height - mb) << "\" x2=\"" << num(width - mr)
        << "\" y2=\"" << num(height - mb) << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << num(ml) << "\" y1=\"" << num(mt) << "\" x2=\"" << num(ml) << "\" y2=\""
        << num(height - mb) << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << num((ml + width - mr) / 2) << "\" y=\"" << num(height - 15)
        << "\" text-anchor=\"middle\" font-size=\"16\">P (pu)</text>\n";
    out << "<text x=\"20\" y=\"" << num((mt + height - mb) / 2)
        << "\" text-anchor=\"middle\" font-size=\"16\" transform=\"rotate(-90 20 "
        << num((mt + height - mb) / 2) << ")\">Q (pu)</text>\n";

    char lbl[64];
    for (int t = 0; t <= 4; ++t) {
        double x = xmin + (xmax - xmin) * t / 4.0;
        double y = ymin + (ymax - ymin) * t / 4.0;
        std::snprintf(lbl, sizeof(lbl), "%.4g", x);
        out << "<text x=\"" << num(sx(x)) << "\" y=\"" << num(height - mb + 20)
            << "\" text-anchor=\"middle\" font-size=\"12\">" << lbl << "</text>\n";
        std::snprintf(lbl, sizeof(lbl), "%.4g", y);
        out << "<text x=\"" << num(ml - 8) << "\" y=\"" << num(sy(y) + 4)
            << "\" text-anchor=\"end\" font-size=\"12\">" << lbl << "</text>\n";
    }

    size_t ci = 0;
    for (const SvgSeries& s : series) {
        const char* color = palette[ci++ % (sizeof(palette) / sizeof(palette[0]))];
        if (s.polyline && s.points.size() > 1) {
            out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1\" points=\"";
            for (const auto& p : s.points)
                if (std::isfinite(p[0]) && std::isfinite(p[1]))
                    out << num(sx(p[0])) << ',' << num(sy(p[1])) << ' ';
            out << "\"/>\n";
        }
        for (const auto& p : s.points)
            if (std::isfinite(p[0]) && std::isfinite(p[1]))
                out << "<circle cx=\"" << num(sx(p[0])) << "\" cy=\"" << num(sy(p[1]))
                    << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        if (!s.label.empty())
            out << "<text x=\"" << num(width - mr - 10) << "\" y=\"" << num(mt + 18.0 * ci)
                << "\" text-anchor=\"end\" font-size=\"13\" fill=\"" << color << "\">" << s.label
                << "</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

} // namespace mcopf
