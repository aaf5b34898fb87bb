#include "vpred/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "vpred/common.hpp"

namespace vpred {

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
    std::ofstream os(path);
    require(os.good(), "write_csv: cannot open " + path);
    for (size_t i = 0; i < header.size(); ++i) {
        os << header[i] << (i + 1 < header.size() ? "," : "\n");
    }
    for (const auto& row : rows) {
        require(row.size() == header.size(), "write_csv: row width does not match header");
        for (size_t i = 0; i < row.size(); ++i) {
            os << strfmt("%.10g", row[i]) << (i + 1 < row.size() ? "," : "\n");
        }
    }
    require(os.good(), "write_csv: write failed for " + path);
}

namespace {

constexpr int kW = 640, kH = 440;
constexpr int kMarginL = 70, kMarginR = 20, kMarginT = 40, kMarginB = 50;

double nice_step(double span) {
    const double raw = span / 6.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        if (raw <= m * mag) {
            return m * mag;
        }
    }
    return 10.0 * mag;
}

}  // namespace

void write_svg_plot(const std::string& path, const std::string& title, const std::string& xlabel,
                    const std::string& ylabel, const std::vector<SvgSeries>& series, bool draw_identity) {
    double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
    for (const auto& s : series) {
        for (const auto& [x, y] : s.points) {
            x_lo = std::min(x_lo, x);
            x_hi = std::max(x_hi, x);
            y_lo = std::min(y_lo, y);
            y_hi = std::max(y_hi, y);
        }
    }
    require(x_lo <= x_hi && y_lo <= y_hi, "write_svg_plot: no data points");
    if (x_hi == x_lo) {
        x_hi += 1.0;
    }
    if (y_hi == y_lo) {
        y_hi += 1.0;
    }
    const double x_pad = 0.05 * (x_hi - x_lo), y_pad = 0.05 * (y_hi - y_lo);
    x_lo -= x_pad;
    x_hi += x_pad;
    y_lo -= y_pad;
    y_hi += y_pad;

    auto px = [&](double x) { return kMarginL + (x - x_lo) / (x_hi - x_lo) * (kW - kMarginL - kMarginR); };
    auto py = [&](double y) { return kH - kMarginB - (y - y_lo) / (y_hi - y_lo) * (kH - kMarginT - kMarginB); };

    std::ofstream os(path);
    require(os.good(), "write_svg_plot: cannot open " + path);
    os << strfmt("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
                 "font-family=\"sans-serif\" font-size=\"12\">\n",
                 kW, kH);
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << strfmt("<text x=\"%d\" y=\"22\" font-size=\"15\" text-anchor=\"middle\">%s</text>\n", kW / 2,
                 title.c_str());

    // axes
    os << strfmt("<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n", kMarginL,
                 kH - kMarginB, kW - kMarginR, kH - kMarginB);
    os << strfmt("<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n", kMarginL, kMarginT,
                 kMarginL, kH - kMarginB);
    const double xs = nice_step(x_hi - x_lo), ys = nice_step(y_hi - y_lo);
    for (double x = std::ceil(x_lo / xs) * xs; x <= x_hi + 1e-9; x += xs) {
        os << strfmt("<line x1=\"%.1f\" y1=\"%d\" x2=\"%.1f\" y2=\"%d\" stroke=\"black\"/>\n", px(x),
                     kH - kMarginB, px(x), kH - kMarginB + 5);
        os << strfmt("<text x=\"%.1f\" y=\"%d\" text-anchor=\"middle\">%g</text>\n", px(x), kH - kMarginB + 19, x);
    }
    for (double y = std::ceil(y_lo / ys) * ys; y <= y_hi + 1e-9; y += ys) {
        os << strfmt("<line x1=\"%d\" y1=\"%.1f\" x2=\"%d\" y2=\"%.1f\" stroke=\"black\"/>\n", kMarginL - 5,
                     py(y), kMarginL, py(y));
        os << strfmt("<text x=\"%d\" y=\"%.1f\" text-anchor=\"end\">%g</text>\n", kMarginL - 8, py(y) + 4, y);
    }
    os << strfmt("<text x=\"%d\" y=\"%d\" text-anchor=\"middle\">%s</text>\n", kW / 2, kH - 12, xlabel.c_str());
    os << strfmt("<text x=\"16\" y=\"%d\" text-anchor=\"middle\" transform=\"rotate(-90 16 %d)\">%s</text>\n",
                 kH / 2, kH / 2, ylabel.c_str());

    if (draw_identity) {
        const double lo = std::max(x_lo, y_lo), hi = std::min(x_hi, y_hi);
        if (lo < hi) {
            os << strfmt("<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#aaaaaa\" "
                         "stroke-dasharray=\"4 3\"/>\n",
                         px(lo), py(lo), px(hi), py(hi));
        }
    }
    int legend_y = kMarginT + 8;
    for (const auto& s : series) {
        if (s.points.empty()) {
            continue;
        }
        std::string d = "M";
        for (const auto& [x, y] : s.points) {
            d += strfmt(" %.2f %.2f", px(x), py(y));
        }
        os << strfmt("<path d=\"%s\" fill=\"none\" stroke=\"%s\" stroke-width=\"1.8\"/>\n", d.c_str(),
                     s.color.c_str());
        for (const auto& [x, y] : s.points) {
            os << strfmt("<circle cx=\"%.2f\" cy=\"%.2f\" r=\"2.4\" fill=\"%s\"/>\n", px(x), py(y),
                         s.color.c_str());
        }
        os << strfmt("<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"%s\" stroke-width=\"2\"/>\n",
                     kW - 170, legend_y, kW - 150, legend_y, s.color.c_str());
        os << strfmt("<text x=\"%d\" y=\"%d\">%s</text>\n", kW - 144, legend_y + 4, s.label.c_str());
        legend_y += 18;
    }
    os << "</svg>\n";
}

void write_manifest(const std::string& out_dir, const nlohmann::json& config) {
    std::filesystem::create_directories(out_dir);
    std::ofstream os(out_dir + "/manifest.json");
    require(os.good(), "write_manifest: cannot open " + out_dir + "/manifest.json");
    os << config.dump(2) << "\n";
}

}  // namespace vpred
