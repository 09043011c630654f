#pragma once

#include <string>
#include <vector>

namespace mmreid::cli {

struct BarGroup {
    std::string label;
    double rank1 = 0.0;  // in [0,1]
    double map = 0.0;
};

// Static grouped bar chart (Rank1 and mAP per group) as a standalone SVG.
void write_grouped_bar_chart(const std::string& path, const std::string& title,
                             const std::vector<BarGroup>& groups);

}  // namespace mmreid::cli
