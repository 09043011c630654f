#include "mmreid/ablation.hpp"

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "mmreid/kernels.hpp"
#include "mmreid/svg_chart.hpp"
#include "mmreid/trainer.hpp"

namespace mmreid::cli {

namespace fs = std::filesystem;

std::vector<std::string> grid_names() {
    return {"table2", "table3", "table4", "table5", "ks", "ns", "alpha", "tau"};
}

std::vector<GridCell> make_grid(const std::string& name, const train::TrainConfig& base) {
    using train::MatchVariant;
    using train::SingleReidPlacement;
    std::vector<GridCell> cells;
    auto cell = [&](const std::string& label) -> GridCell& {
        GridCell c;
        c.name = label;
        c.config = base;
        c.config.out_dir = base.out_dir + "/" + name + "_" + label;
        cells.push_back(std::move(c));
        return cells.back();
    };

    if (name == "table2") {
        // data-mix rows: multi / single without text / single with text /
        // multi + single in the Re-ID losses / the full method
        {
            auto& c = cell("multi");
            c.config.itm = false;
            c.config.ir = false;
        }
        {
            auto& c = cell("single_no_text");
            c.config.itm = false;
            c.config.ir = false;
            c.multi_from_single_corpus = true;
            c.config.multi_manifest = base.single_manifest;
        }
        {
            auto& c = cell("single_text");
            c.config.reid = false;
        }
        {
            auto& c = cell("multi_single_no_text");
            c.config.itm = false;
            c.config.ir = false;
            c.config.single_reid = SingleReidPlacement::kAll;
        }
        cell("full");
    } else if (name == "table3") {
        {
            auto& c = cell("reid");
            c.config.itm = false;
            c.config.ir = false;
        }
        {
            auto& c = cell("reid_itm");
            c.config.ir = false;
        }
        cell("reid_itm_ir");
    } else if (name == "table4") {
        // matching-loss design, measured without the reconstruction task
        for (auto [label, variant] : {std::pair<const char*, MatchVariant>{"clip", MatchVariant::kClip},
                                      {"soft_clip", MatchVariant::kSoftClip},
                                      {"im", MatchVariant::kIm},
                                      {"im_sp", MatchVariant::kImSp}}) {
            auto& c = cell(label);
            c.config.ir = false;
            c.config.match_variant = variant;
        }
    } else if (name == "table5") {
        // placement of the Re-ID losses on single-camera data; the "all"
        // row is the no-text configuration
        {
            auto& c = cell("all_no_text");
            c.config.itm = false;
            c.config.ir = false;
            c.config.single_reid = SingleReidPlacement::kAll;
        }
        for (auto [label, placement] :
             {std::pair<const char*, SingleReidPlacement>{"none", SingleReidPlacement::kNone},
              {"ins", SingleReidPlacement::kInsOnly},
              {"aug", SingleReidPlacement::kAugOnly},
              {"cen", SingleReidPlacement::kCenOnly}}) {
            auto& c = cell(label);
            c.config.single_reid = placement;
        }
    } else if (name == "ks") {
        // same-identity instances at fixed N_s = 32, alpha 0.5
        for (auto [label, ps, ks] : {std::tuple<const char*, int, int>{"ks1", 32, 1},
                                     {"ks2", 16, 2},
                                     {"ks4", 8, 4}}) {
            auto& c = cell(label);
            c.config.p_s = ps;
            c.config.k_s = ks;
            c.config.alpha = 0.5;
        }
    } else if (name == "ns") {
        // single-camera images per batch at K_s = 2, alpha 0.5
        for (auto [label, ps] : {std::pair<const char*, int>{"ns32", 16}, {"ns64", 32}, {"ns128", 64}}) {
            auto& c = cell(label);
            c.config.p_s = ps;
            c.config.k_s = 2;
            c.config.alpha = 0.5;
        }
    } else if (name == "alpha") {
        for (double a : {0.5, 0.6, 0.7}) {
            auto& c = cell("alpha" + std::to_string(static_cast<int>(a * 10)));
            c.config.alpha = a;
        }
    } else if (name == "tau") {
        for (auto [label, t] : {std::pair<const char*, double>{"tau007", 0.07},
                                {"tau010", 0.1},
                                {"tau015", 0.15},
                                {"tau020", 0.2}}) {
            auto& c = cell(label);
            c.config.tau_sp = t;
        }
    } else {
        throw std::invalid_argument("unknown ablation grid '" + name + "'");
    }
    return cells;
}

std::vector<CellResult> run_ablation(const std::string& grid_name, const train::TrainConfig& base,
                                     const data::Corpus& multi, const data::Corpus& single,
                                     const data::Corpus& target, const AblationOptions& options) {
    auto cells = make_grid(grid_name, base);
    std::vector<CellResult> results(cells.size());

    // The single corpus doubles as captionless multi-camera-style data for
    // the single_no_text cell.
    std::atomic<std::size_t> next{0};
    std::mutex io_mutex;
    const int jobs = std::max(1, options.jobs);
    const int saved_threads = kernels::thread_count();
    if (jobs > 1) kernels::set_thread_count(1);  // avoid oversubscription

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            auto& cell = cells[i];
            auto& result = results[i];
            result.name = cell.name;
            if (options.epochs_override > 0) {
                cell.config.epochs = options.epochs_override;
                cell.config.warmup_epochs = std::min(cell.config.warmup_epochs,
                                                     options.epochs_override / 2);
            }
            result.digest = train::config_digest(cell.config);
            try {
                const data::Corpus* cell_multi = cell.multi_from_single_corpus ? &single : &multi;
                train::Trainer trainer(cell.config, cell_multi, &single);
                trainer.run();
                result.metrics = eval::cross_domain_eval(trainer.model(), target, options.eval_seed);
                result.ok = true;
                if (!options.quiet) {
                    std::lock_guard<std::mutex> lock(io_mutex);
                    std::printf("[ablate] %s/%s rank1=%.3f rank5=%.3f map=%.3f\n", grid_name.c_str(),
                                cell.name.c_str(), result.metrics.rank1, result.metrics.rank5,
                                result.metrics.map);
                }
            } catch (const std::exception& e) {
                result.ok = false;
                result.error = e.what();
                if (!options.quiet) {
                    std::lock_guard<std::mutex> lock(io_mutex);
                    std::printf("[ablate] %s/%s FAILED: %s\n", grid_name.c_str(), cell.name.c_str(),
                                e.what());
                }
            }
        }
    };

    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    kernels::set_thread_count(saved_threads);

    // ledger rows in grid order, single writer
    for (const auto& r : results) {
        if (r.ok) {
            eval::append_results_ledger(options.ledger_path, r.digest, target.records.empty()
                                                                           ? "target"
                                                                           : target.records[0].domain,
                                        r.metrics);
        }
    }

    std::vector<BarGroup> groups;
    for (const auto& r : results) {
        if (r.ok) groups.push_back({r.name, r.metrics.rank1, r.metrics.map});
    }
    if (!groups.empty()) {
        if (fs::path(options.chart_path).has_parent_path()) {
            fs::create_directories(fs::path(options.chart_path).parent_path());
        }
        write_grouped_bar_chart(options.chart_path, grid_name, groups);
    }
    return results;
}

}  // namespace mmreid::cli
