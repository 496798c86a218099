#ifndef UCAN_TOOLS_SVG_PLOT_HPP
#define UCAN_TOOLS_SVG_PLOT_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace ucan::tools {

// Minimal standalone SVG scatter/line plot; one polyline per named series.
inline std::string svg_plot(const std::string& title, const std::string& x_label,
                            const std::string& y_label,
                            const std::map<std::string, std::vector<std::pair<double, double>>>& series) {
    const int width = 640, height = 420, margin = 56;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& [name, pts] : series)
        for (const auto& [x, y] : pts) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    if (xmin > xmax) {
        xmin = 0;
        xmax = 1;
    }
    if (ymin > ymax) {
        ymin = 0;
        ymax = 1;
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;

    auto px = [&](double x) {
        return margin + (x - xmin) / (xmax - xmin) * (width - 2 * margin);
    };
    auto py = [&](double y) {
        return height - margin - (y - ymin) / (ymax - ymin) * (height - 2 * margin);
    };

    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
       << "\" height=\"" << height << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
          "font-family=\"sans-serif\" font-size=\"15\">"
       << title << "</text>\n";
    // axes
    os << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\""
       << width - margin << "\" y2=\"" << height - margin
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin
       << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << width / 2 << "\" y=\"" << height - 12
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
       << x_label << "</text>\n";
    os << "<text x=\"16\" y=\"" << height / 2
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
          "transform=\"rotate(-90 16 "
       << height / 2 << ")\">" << y_label << "</text>\n";
    // tick labels at the extremes
    os.precision(5);
    os << "<text x=\"" << margin << "\" y=\"" << height - margin + 16
       << "\" font-family=\"sans-serif\" font-size=\"10\">" << xmin << "</text>\n";
    os << "<text x=\"" << width - margin << "\" y=\"" << height - margin + 16
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << xmax
       << "</text>\n";
    os << "<text x=\"" << margin - 4 << "\" y=\"" << height - margin
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << ymin
       << "</text>\n";
    os << "<text x=\"" << margin - 4 << "\" y=\"" << margin + 4
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << ymax
       << "</text>\n";

    int idx = 0;
    for (const auto& [name, pts] : series) {
        const char* color = colors[idx % 5];
        std::ostringstream poly;
        for (const auto& [x, y] : pts) {
            poly << px(x) << ',' << py(y) << ' ';
            os << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y)
               << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
        }
        if (pts.size() > 1)
            os << "<polyline points=\"" << poly.str() << "\" fill=\"none\" stroke=\""
               << color << "\" stroke-width=\"1.2\"/>\n";
        os << "<text x=\"" << width - margin + 4 << "\" y=\"" << margin + 16 * idx
           << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << color << "\">"
           << name << "</text>\n";
        ++idx;
    }
    os << "</svg>\n";
    return os.str();
}

} // namespace ucan::tools

#endif
