#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace vpred {

// CSV with a header row; numeric cells rendered with %.10g.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

struct SvgSeries {
    std::string label;
    std::string color;  // e.g. "#1f77b4"
    std::vector<std::pair<double, double>> points;
};

// Minimal path-based line plot with axes, ticks and a legend.
void write_svg_plot(const std::string& path, const std::string& title, const std::string& xlabel,
                    const std::string& ylabel, const std::vector<SvgSeries>& series,
                    bool draw_identity = false);

// Reproducibility manifest written next to every artifact-producing run.
void write_manifest(const std::string& out_dir, const nlohmann::json& config);

}  // namespace vpred
