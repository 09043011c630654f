#include "mmreid/svg_chart.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace mmreid::cli {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    return buf;
}

}  // namespace

void write_grouped_bar_chart(const std::string& path, const std::string& title,
                             const std::vector<BarGroup>& groups) {
    if (groups.empty()) throw std::invalid_argument("write_grouped_bar_chart: no groups");

    const int margin_left = 50, margin_top = 40, margin_bottom = 60;
    const int plot_h = 220;
    const int bar_w = 26, bar_gap = 6, group_gap = 34;
    const int group_w = 2 * bar_w + bar_gap;
    const int plot_w = static_cast<int>(groups.size()) * (group_w + group_gap);
    const int width = margin_left + plot_w + 20;
    const int height = margin_top + plot_h + margin_bottom;

    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_grouped_bar_chart: cannot open " + path);

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    out << "<text x=\"" << margin_left << "\" y=\"20\" font-size=\"14\">" << title << "</text>\n";

    // y axis with 0/25/50/75/100 gridlines
    for (int tick = 0; tick <= 4; ++tick) {
        const double frac = tick / 4.0;
        const int y = margin_top + static_cast<int>(plot_h * (1.0 - frac));
        out << "<line x1=\"" << margin_left << "\" y1=\"" << y << "\" x2=\"" << margin_left + plot_w
            << "\" y2=\"" << y << "\" stroke=\"#dddddd\"/>\n";
        out << "<text x=\"" << margin_left - 8 << "\" y=\"" << y + 4
            << "\" text-anchor=\"end\">" << fmt(frac * 100.0) << "</text>\n";
    }

    int x = margin_left + group_gap / 2;
    for (const auto& g : groups) {
        const double r1 = std::clamp(g.rank1, 0.0, 1.0);
        const double mp = std::clamp(g.map, 0.0, 1.0);
        const int h1 = static_cast<int>(plot_h * r1);
        const int h2 = static_cast<int>(plot_h * mp);
        out << "<rect x=\"" << x << "\" y=\"" << margin_top + plot_h - h1 << "\" width=\"" << bar_w
            << "\" height=\"" << h1 << "\" fill=\"#4878cf\"/>\n";
        out << "<text x=\"" << x + bar_w / 2 << "\" y=\"" << margin_top + plot_h - h1 - 4
            << "\" text-anchor=\"middle\">" << fmt(r1 * 100.0) << "</text>\n";
        out << "<rect x=\"" << x + bar_w + bar_gap << "\" y=\"" << margin_top + plot_h - h2
            << "\" width=\"" << bar_w << "\" height=\"" << h2 << "\" fill=\"#e1812c\"/>\n";
        out << "<text x=\"" << x + bar_w + bar_gap + bar_w / 2 << "\" y=\""
            << margin_top + plot_h - h2 - 4 << "\" text-anchor=\"middle\">" << fmt(mp * 100.0)
            << "</text>\n";
        out << "<text x=\"" << x + group_w / 2 << "\" y=\"" << margin_top + plot_h + 16
            << "\" text-anchor=\"middle\">" << g.label << "</text>\n";
        x += group_w + group_gap;
    }

    const int ly = margin_top + plot_h + 36;
    out << "<rect x=\"" << margin_left << "\" y=\"" << ly << "\" width=\"12\" height=\"12\" fill=\"#4878cf\"/>\n";
    out << "<text x=\"" << margin_left + 18 << "\" y=\"" << ly + 10 << "\">Rank1</text>\n";
    out << "<rect x=\"" << margin_left + 80 << "\" y=\"" << ly << "\" width=\"12\" height=\"12\" fill=\"#e1812c\"/>\n";
    out << "<text x=\"" << margin_left + 98 << "\" y=\"" << ly + 10 << "\">mAP</text>\n";
    out << "</svg>\n";
}

}  // namespace mmreid::cli
