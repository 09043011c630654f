#include "mmreid/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "mmreid/rng.hpp"

namespace mmreid::eval {

namespace {

double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
    return 1.0 - dot;
}

bool excluded(const RetrievalEntry& q, const RetrievalEntry& g) {
    return q.identity == g.identity && q.camera == g.camera;
}

bool has_valid_positive(const RetrievalRun& run, int qi) {
    const auto& q = run.queries[static_cast<std::size_t>(qi)];
    for (const auto& g : run.gallery) {
        if (excluded(q, g)) continue;
        if (g.identity == q.identity) return true;
    }
    return false;
}

}  // namespace

std::vector<int> rank_gallery(const RetrievalRun& run, int query_index) {
    const auto& q = run.queries.at(static_cast<std::size_t>(query_index));
    std::vector<std::pair<double, int>> scored;
    scored.reserve(run.gallery.size());
    for (int gi = 0; gi < static_cast<int>(run.gallery.size()); ++gi) {
        const auto& g = run.gallery[static_cast<std::size_t>(gi)];
        if (excluded(q, g)) continue;
        scored.emplace_back(cosine_distance(q.emb, g.emb), gi);
    }
    std::sort(scored.begin(), scored.end());  // ties fall to the lower index
    std::vector<int> order;
    order.reserve(scored.size());
    for (const auto& [d, gi] : scored) order.push_back(gi);
    return order;
}

double cmc(const RetrievalRun& run, int k) {
    if (k < 1) throw std::invalid_argument("cmc: k must be >= 1");
    int evaluated = 0;
    int hits = 0;
    for (int qi = 0; qi < static_cast<int>(run.queries.size()); ++qi) {
        if (!has_valid_positive(run, qi)) continue;
        ++evaluated;
        const auto order = rank_gallery(run, qi);
        const int qid = run.queries[static_cast<std::size_t>(qi)].identity;
        for (int r = 0; r < std::min<int>(k, static_cast<int>(order.size())); ++r) {
            if (run.gallery[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])].identity == qid) {
                ++hits;
                break;
            }
        }
    }
    return evaluated == 0 ? 0.0 : static_cast<double>(hits) / evaluated;
}

double mean_ap(const RetrievalRun& run) {
    int evaluated = 0;
    double ap_sum = 0.0;
    for (int qi = 0; qi < static_cast<int>(run.queries.size()); ++qi) {
        if (!has_valid_positive(run, qi)) continue;
        ++evaluated;
        const auto order = rank_gallery(run, qi);
        const int qid = run.queries[static_cast<std::size_t>(qi)].identity;
        int relevant = 0;
        double ap = 0.0;
        for (int r = 0; r < static_cast<int>(order.size()); ++r) {
            if (run.gallery[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])].identity == qid) {
                ++relevant;
                ap += static_cast<double>(relevant) / (r + 1);
            }
        }
        ap_sum += ap / relevant;
    }
    return evaluated == 0 ? 0.0 : ap_sum / evaluated;
}

Metrics evaluate(const RetrievalRun& run) {
    Metrics m;
    for (int qi = 0; qi < static_cast<int>(run.queries.size()); ++qi) {
        if (has_valid_positive(run, qi)) {
            ++m.evaluated_queries;
        } else {
            ++m.skipped_queries;
        }
    }
    m.rank1 = cmc(run, 1);
    m.rank5 = cmc(run, 5);
    m.map = mean_ap(run);
    return m;
}

RetrievalRun build_run(const train::ModelBundle& model, const data::Corpus& target, std::uint64_t seed) {
    int max_camera = data::kNoCamera;
    for (const auto& rec : target.records) max_camera = std::max(max_camera, rec.camera);
    std::size_t camera_count = 0;
    {
        std::vector<int> cams;
        for (const auto& [id, cam_map] : target.index) {
            for (const auto& [cam, recs] : cam_map) {
                if (std::find(cams.begin(), cams.end(), cam) == cams.end()) cams.push_back(cam);
            }
        }
        camera_count = cams.size();
    }
    if (camera_count < 2) {
        throw std::invalid_argument("cross_domain_eval: target corpus has fewer than 2 cameras");
    }

    RetrievalRun run;
    for (const auto& [id, cam_map] : target.index) {
        for (const auto& [cam, recs] : cam_map) {
            std::vector<int> order = recs;
            Rng rng = derive_rng(seed, "eval_split", static_cast<std::uint64_t>(id),
                                 static_cast<std::uint64_t>(cam));
            rng.shuffle(order);
            for (std::size_t i = 0; i < order.size(); ++i) {
                const auto& rec = target.records[static_cast<std::size_t>(order[i])];
                auto encoded = model.momentum->encode(rec.image);
                auto projected = model.w_img.project(encoded.cls);
                RetrievalEntry entry;
                entry.emb = projected.zhat.data();
                entry.identity = rec.identity;
                entry.camera = rec.camera;
                if (i == 0) {
                    run.queries.push_back(std::move(entry));
                } else {
                    run.gallery.push_back(std::move(entry));
                }
            }
        }
    }
    return run;
}

Metrics cross_domain_eval(const train::ModelBundle& model, const data::Corpus& target,
                          std::uint64_t seed) {
    return evaluate(build_run(model, target, seed));
}

void append_results_ledger(const std::string& path, const std::string& config_digest,
                           const std::string& domain, const Metrics& metrics) {
    namespace fs = std::filesystem;
    const bool fresh = !fs::exists(path);
    if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
    std::ofstream out(path, std::ios::app);
    if (!out) throw std::runtime_error("results ledger: cannot open " + path);
    if (fresh) out << "config_digest,domain,rank1,rank5,map\n";
    out << config_digest << ',' << domain << ',' << metrics.rank1 << ',' << metrics.rank5 << ','
        << metrics.map << '\n';
}

}  // namespace mmreid::eval
