#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "mmreid/evaluator.hpp"
#include "mmreid/rng.hpp"

using namespace mmreid;
using namespace mmreid::eval;

namespace {

RetrievalEntry entry(std::vector<double> emb, int id, int cam) {
    double norm = 0.0;
    for (double v : emb) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0) {
        for (auto& v : emb) v /= norm;
    }
    return {std::move(emb), id, cam};
}

// Naive oracle: full scan, no shared code with the implementation.
struct OracleMetrics {
    double rank1 = 0.0, rank5 = 0.0, map = 0.0;
};

OracleMetrics oracle_eval(const RetrievalRun& run) {
    OracleMetrics om;
    int evaluated = 0;
    double r1 = 0.0, r5 = 0.0, ap_total = 0.0;
    for (const auto& q : run.queries) {
        struct Cand { double dist; int index; int id; };
        std::vector<Cand> cands;
        for (int gi = 0; gi < static_cast<int>(run.gallery.size()); ++gi) {
            const auto& g = run.gallery[static_cast<std::size_t>(gi)];
            if (g.identity == q.identity && g.camera == q.camera) continue;
            double dot = 0.0;
            for (std::size_t k = 0; k < q.emb.size(); ++k) dot += q.emb[k] * g.emb[k];
            cands.push_back({1.0 - dot, gi, g.identity});
        }
        bool has_pos = false;
        for (const auto& c : cands) {
            if (c.id == q.identity) has_pos = true;
        }
        if (!has_pos) continue;
        ++evaluated;
        // selection sort by (dist, index) -- deliberately primitive
        for (std::size_t i = 0; i < cands.size(); ++i) {
            std::size_t best = i;
            for (std::size_t j = i + 1; j < cands.size(); ++j) {
                if (cands[j].dist < cands[best].dist ||
                    (cands[j].dist == cands[best].dist && cands[j].index < cands[best].index)) {
                    best = j;
                }
            }
            std::swap(cands[i], cands[best]);
        }
        int first_hit = -1;
        int rel = 0;
        double ap = 0.0;
        for (int r = 0; r < static_cast<int>(cands.size()); ++r) {
            if (cands[static_cast<std::size_t>(r)].id == q.identity) {
                if (first_hit < 0) first_hit = r;
                ++rel;
                ap += static_cast<double>(rel) / (r + 1);
            }
        }
        if (first_hit == 0) r1 += 1.0;
        if (first_hit < 5) r5 += 1.0;
        ap_total += ap / rel;
    }
    om.rank1 = r1 / evaluated;
    om.rank5 = r5 / evaluated;
    om.map = ap_total / evaluated;
    return om;
}

}  // namespace

TEST_CASE("rank_gallery forced orderings") {
    SUBCASE("duplicate of the query ranks first") {
        RetrievalRun run;
        run.queries.push_back(entry({1, 0, 0}, 0, 0));
        for (int i = 0; i < 5; ++i) run.gallery.push_back(entry({0, 1, 0}, 10 + i, 1));
        run.gallery.push_back(entry({1, 0, 0}, 0, 1));  // index 5
        auto order = rank_gallery(run, 0);
        REQUIRE(!order.empty());
        CHECK(order[0] == 5);
    }
    SUBCASE("orthogonal decoys rank after the true match") {
        RetrievalRun run;
        run.queries.push_back(entry({1, 0}, 3, 0));
        run.gallery.push_back(entry({0, 1}, 9, 0));
        run.gallery.push_back(entry({0.9, 0.1}, 3, 1));
        auto order = rank_gallery(run, 0);
        CHECK(order[0] == 1);
    }
    SUBCASE("ties break toward the lower index") {
        RetrievalRun run;
        run.queries.push_back(entry({1, 0}, 0, 0));
        run.gallery.push_back(entry({0, 1}, 1, 0));
        run.gallery.push_back(entry({0, 1}, 2, 0));
        auto order = rank_gallery(run, 0);
        CHECK(order[0] == 0);
        CHECK(order[1] == 1);
    }
    SUBCASE("same identity and camera entries are excluded") {
        RetrievalRun run;
        run.queries.push_back(entry({1, 0}, 0, 0));
        run.gallery.push_back(entry({1, 0}, 0, 0));  // excluded
        run.gallery.push_back(entry({0, 1}, 1, 0));
        auto order = rank_gallery(run, 0);
        CHECK(order.size() == 1);
        CHECK(order[0] == 1);
    }
}

TEST_CASE("cmc forced cases") {
    RetrievalRun run;
    run.queries.push_back(entry({1, 0}, 0, 0));
    run.gallery.push_back(entry({0.95, 0.05}, 9, 1));  // closer imposter
    run.gallery.push_back(entry({0.7, 0.3}, 0, 1));    // match at rank 2
    CHECK(cmc(run, 1) == 0.0);
    CHECK(cmc(run, 2) == 1.0);
    CHECK_THROWS_AS(cmc(run, 0), std::invalid_argument);

    RetrievalRun perfect;
    for (int i = 0; i < 4; ++i) {
        perfect.queries.push_back(entry({1.0 * i + 1, 0.1 * i}, i, 0));
        perfect.gallery.push_back(entry({1.0 * i + 1, 0.1 * i}, i, 1));
    }
    CHECK(cmc(perfect, 1) == 1.0);
}

TEST_CASE("mean_ap forced cases") {
    SUBCASE("relevant at ranks 1 and 3 of 5") {
        RetrievalRun run;
        run.queries.push_back(entry({1, 0}, 0, 0));
        run.gallery.push_back(entry({1, 0}, 0, 1));          // rank 1, relevant
        run.gallery.push_back(entry({0.9, 0.1}, 7, 0));      // rank 2
        run.gallery.push_back(entry({0.8, 0.2}, 0, 2));      // rank 3, relevant
        run.gallery.push_back(entry({0.7, 0.3}, 8, 0));
        run.gallery.push_back(entry({0.6, 0.4}, 9, 0));
        CHECK(std::abs(mean_ap(run) - (1.0 / 1 + 2.0 / 3) / 2) < 1e-9);
    }
    SUBCASE("all gallery relevant gives 1") {
        RetrievalRun run;
        run.queries.push_back(entry({1, 0}, 0, 0));
        run.gallery.push_back(entry({0.9, 0.1}, 0, 1));
        run.gallery.push_back(entry({0.5, 0.5}, 0, 2));
        CHECK(mean_ap(run) == doctest::Approx(1.0));
    }
    SUBCASE("single relevant at rank r gives 1/r") {
        for (int r = 1; r <= 4; ++r) {
            RetrievalRun run;
            run.queries.push_back(entry({1, 0}, 0, 0));
            for (int i = 0; i < 4; ++i) {
                const double sim = 0.9 - 0.1 * i;
                const bool is_match = (i == r - 1);
                run.gallery.push_back(entry({sim, std::sqrt(1 - sim * sim)}, is_match ? 0 : 50 + i, 1));
            }
            CHECK(std::abs(mean_ap(run) - 1.0 / r) < 1e-9);
        }
    }
}

TEST_CASE("metrics match the naive oracle on random instances") {
    Rng rng(2025);
    for (int trial = 0; trial < 30; ++trial) {
        RetrievalRun run;
        const int ids = 3 + rng.uniform_int(10);
        const int queries = 5 + rng.uniform_int(15);
        const int gallery = 20 + rng.uniform_int(180);
        const int d = 6;
        auto random_entry = [&](int id, int cam) {
            std::vector<double> e(static_cast<std::size_t>(d));
            for (auto& v : e) v = rng.normal(0.0, 1.0);
            return entry(std::move(e), id, cam);
        };
        for (int i = 0; i < queries; ++i) run.queries.push_back(random_entry(rng.uniform_int(ids), 0));
        for (int i = 0; i < gallery; ++i) {
            run.gallery.push_back(random_entry(rng.uniform_int(ids), 1 + rng.uniform_int(2)));
        }
        auto m = evaluate(run);
        auto om = oracle_eval(run);
        CHECK(m.rank1 == om.rank1);
        CHECK(m.rank5 == om.rank5);
        CHECK(std::abs(m.map - om.map) < 1e-12);
    }
}

TEST_CASE("cmc is nondecreasing and saturates at the gallery size") {
    Rng rng(7);
    RetrievalRun run;
    for (int i = 0; i < 8; ++i) {
        std::vector<double> e(4);
        for (auto& v : e) v = rng.normal(0.0, 1.0);
        run.queries.push_back(entry(e, i % 4, 0));
    }
    for (int i = 0; i < 24; ++i) {
        std::vector<double> e(4);
        for (auto& v : e) v = rng.normal(0.0, 1.0);
        run.gallery.push_back(entry(e, i % 4, 1));
    }
    double prev = 0.0;
    for (int k = 1; k <= 24; ++k) {
        const double c = cmc(run, k);
        CHECK(c >= prev);
        prev = c;
    }
    CHECK(prev == 1.0);
}

TEST_CASE("metrics are invariant to gallery storage order") {
    Rng rng(9);
    RetrievalRun run;
    for (int i = 0; i < 6; ++i) {
        std::vector<double> e(5);
        for (auto& v : e) v = rng.normal(0.0, 1.0);
        run.queries.push_back(entry(e, i % 3, 0));
    }
    for (int i = 0; i < 30; ++i) {
        std::vector<double> e(5);
        for (auto& v : e) v = rng.normal(0.0, 1.0);
        run.gallery.push_back(entry(e, i % 3, 1 + i % 2));
    }
    auto base = evaluate(run);
    RetrievalRun shuffled = run;
    std::reverse(shuffled.gallery.begin(), shuffled.gallery.end());
    auto moved = evaluate(shuffled);
    CHECK(base.rank1 == moved.rank1);
    CHECK(base.rank5 == moved.rank5);
    CHECK(std::abs(base.map - moved.map) < 1e-12);
}

TEST_CASE("cross-domain evaluation protocol") {
    train::TrainConfig cfg;
    cfg.image_height = 16;
    cfg.image_width = 8;
    cfg.patch = 4;
    cfg.embed_dim = 16;
    cfg.depth = 1;
    cfg.heads = 2;
    cfg.proj_dim = 8;
    cfg.text_depth = 1;
    cfg.text_heads = 2;
    cfg.decoder_depth = 1;
    cfg.decoder_heads = 2;
    auto model = train::ModelBundle::create(cfg);

    data::CorpusSpec tspec;
    tspec.n_ids = 8;
    tspec.cameras = 2;
    tspec.images_per_id_per_cam = 2;
    tspec.height = 16;
    tspec.width = 8;
    tspec.seed = 77;
    tspec.domain_style = "target";
    auto target = data::generate_corpus(tspec);

    SUBCASE("identical model and corpus give identical metrics") {
        auto a = cross_domain_eval(model, target, 5);
        auto b = cross_domain_eval(model, target, 5);
        CHECK(a.rank1 == b.rank1);
        CHECK(a.map == b.map);
    }
    SUBCASE("single-camera targets are rejected") {
        data::CorpusSpec bad = tspec;
        bad.cameras = 1;
        auto single_cam = data::generate_corpus(bad);
        CHECK_THROWS_AS(cross_domain_eval(model, single_cam, 5), std::invalid_argument);
    }
    SUBCASE("untrained encoders score near chance") {
        data::CorpusSpec big = tspec;
        big.n_ids = 32;
        auto wide = data::generate_corpus(big);
        double mean_rank1 = 0.0;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            train::TrainConfig c2 = cfg;
            c2.seed = 1000 + seed;
            auto m2 = train::ModelBundle::create(c2);
            mean_rank1 += cross_domain_eval(m2, wide, seed).rank1;
        }
        mean_rank1 /= 5;
        CHECK(mean_rank1 <= 3.0 / 32.0);
    }
}

TEST_CASE("results ledger appends rows with a header") {
    const std::string path = (std::filesystem::temp_directory_path() / "mmreid_ledger_test.csv").string();
    std::filesystem::remove(path);
    Metrics m;
    m.rank1 = 0.5;
    m.rank5 = 0.75;
    m.map = 0.4;
    append_results_ledger(path, "abc123", "target", m);
    append_results_ledger(path, "def456", "target", m);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "config_digest,domain,rank1,rank5,map");
    std::getline(in, line);
    CHECK(line.find("abc123,target,0.5,0.75,0.4") == 0);
    std::filesystem::remove(path);
}
