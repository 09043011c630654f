#pragma once

#include <string>
#include <vector>

#include "mmreid/config.hpp"
#include "mmreid/datakit.hpp"
#include "mmreid/evaluator.hpp"

namespace mmreid::cli {

struct GridCell {
    std::string name;
    train::TrainConfig config;
    // Re-ID losses driven by the (captionless view of the) single-camera
    // corpus instead of the multi-camera one.
    bool multi_from_single_corpus = false;
};

std::vector<std::string> grid_names();

// Cells share the base config and differ only in the swept fields.
std::vector<GridCell> make_grid(const std::string& name, const train::TrainConfig& base);

struct AblationOptions {
    int jobs = 1;
    int epochs_override = 0;  // 0 = keep each cell's epochs
    std::string ledger_path = "results.csv";
    std::string chart_path = "ablation.svg";
    std::uint64_t eval_seed = 0;
    bool quiet = false;
};

struct CellResult {
    std::string name;
    bool ok = false;
    std::string error;
    std::string digest;
    eval::Metrics metrics;
};

// Runs every cell (optionally on a small thread pool), evaluates on the
// target domain, appends ledger rows in grid order and emits the bar chart.
// Cell failures are recorded and the grid continues.
std::vector<CellResult> run_ablation(const std::string& grid_name, const train::TrainConfig& base,
                                     const data::Corpus& multi, const data::Corpus& single,
                                     const data::Corpus& target, const AblationOptions& options);

}  // namespace mmreid::cli
