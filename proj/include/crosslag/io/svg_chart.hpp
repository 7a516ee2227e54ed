#pragma once

#include <string>
#include <vector>

namespace crosslag {

struct ChartSeries {
    std::string label;
    std::vector<double> x, y;
    std::string color = "#000000";
    bool dashed = false;
};

struct ChartOptions {
    std::string title;
    std::string x_label = "weeks since the initial input";
    std::string y_label = "cases";
    int width = 800;
    int height = 400;
};

// Static SVG line chart with axes, ticks and a legend.
std::string render_line_chart(const std::vector<ChartSeries>& series, const ChartOptions& opts);

}  // namespace crosslag
