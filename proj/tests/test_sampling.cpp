#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <set>

#include "mmreid/sampling.hpp"

using namespace mmreid;
using namespace mmreid::sampling;

namespace {

data::Corpus multi_corpus(int ids, int cameras, int per_cam, std::uint64_t seed = 5) {
    data::CorpusSpec spec;
    spec.n_ids = ids;
    spec.cameras = cameras;
    spec.images_per_id_per_cam = per_cam;
    spec.height = 16;
    spec.width = 8;
    spec.seed = seed;
    return data::generate_corpus(spec);
}

data::Corpus single_corpus(int ids, int per_id, std::uint64_t seed = 6) {
    data::CorpusSpec spec;
    spec.n_ids = ids;
    spec.cameras = 1;
    spec.images_per_id_per_cam = per_id;
    spec.height = 16;
    spec.width = 8;
    spec.seed = seed;
    spec.with_captions = true;
    return data::generate_corpus(spec);
}

}  // namespace

TEST_CASE("default composition: 32 multi + 64 single = 96") {
    auto multi = multi_corpus(16, 4, 2);
    auto single = single_corpus(40, 2);
    SamplerConfig cfg;
    BatchSampler sampler(&multi, &single, cfg);
    auto batch = sampler.compose(0, 0, 0, true);
    CHECK(batch.multi.size() == 32);
    CHECK(batch.single.size() == 64);
    CHECK(batch.size() == 96);

    // multi part: P_m identities, K_m each, all cameras distinct per identity
    std::map<int, std::multiset<int>> cams_per_id;
    for (const auto* rec : batch.multi) cams_per_id[rec->identity].insert(rec->camera);
    CHECK(cams_per_id.size() == 8);
    for (const auto& [id, cams] : cams_per_id) {
        CHECK(cams.size() == 4);
        CHECK(std::set<int>(cams.begin(), cams.end()).size() == 4);  // pairwise distinct
    }

    // single part: P_s identities x K_s, all with captions
    std::map<int, int> per_id;
    for (const auto* rec : batch.single) {
        ++per_id[rec->identity];
        CHECK(rec->has_caption());
    }
    CHECK(per_id.size() == 32);
    for (const auto& [id, count] : per_id) CHECK(count == 2);
}

TEST_CASE("identity with fewer cameras than K_m spans what it has") {
    auto multi = multi_corpus(8, 2, 3);  // 2 cameras only
    SamplerConfig cfg;
    cfg.p_m = 4;
    cfg.k_m = 4;
    BatchSampler sampler(&multi, nullptr, cfg);
    BatchFlags flags;
    auto part = sampler.sample_multi(0, 0, &flags);
    CHECK(part.size() == 16);
    std::map<int, std::set<int>> cams;
    for (const auto* rec : part) cams[rec->identity].insert(rec->camera);
    for (const auto& [id, s] : cams) CHECK(s.size() == 2);  // max achievable
    CHECK(flags.camera_shortfall_identities.size() == 4);
}

TEST_CASE("identity with a single image repeats it with a flag") {
    auto single = single_corpus(36, 1);
    SamplerConfig cfg;
    cfg.p_s = 36;
    cfg.k_s = 2;
    BatchSampler sampler(nullptr, &single, cfg);
    BatchFlags flags;
    auto part = sampler.sample_single(0, &flags);
    CHECK(part.size() == 72);
    CHECK(flags.duplicated_identities.size() == 36);
}

TEST_CASE("K_s = 1 downstream labels are all distinct") {
    auto single = single_corpus(40, 2);
    SamplerConfig cfg;
    cfg.p_s = 32;
    cfg.k_s = 1;
    BatchSampler sampler(nullptr, &single, cfg);
    auto part = sampler.sample_single(0, nullptr);
    std::set<int> labels;
    for (const auto* rec : part) labels.insert(rec->identity);
    CHECK(labels.size() == part.size());
}

TEST_CASE("same (seed, epoch, step) reproduces the batch bit-identically") {
    auto multi = multi_corpus(16, 4, 2);
    auto single = single_corpus(40, 2);
    SamplerConfig cfg;
    cfg.seed = 77;
    BatchSampler a(&multi, &single, cfg);
    BatchSampler b(&multi, &single, cfg);
    for (int step = 0; step < 3; ++step) {
        auto ba = a.compose(1, step, 10 + step, true);
        auto bb = b.compose(1, step, 10 + step, true);
        REQUIRE(ba.multi.size() == bb.multi.size());
        for (std::size_t i = 0; i < ba.multi.size(); ++i) CHECK(ba.multi[i] == bb.multi[i]);
        for (std::size_t i = 0; i < ba.single.size(); ++i) CHECK(ba.single[i] == bb.single[i]);
    }
    auto other = a.compose(2, 0, 13, true);
    auto base = a.compose(1, 0, 10, true);
    bool same = true;
    for (std::size_t i = 0; i < base.multi.size(); ++i) {
        if (base.multi[i] != other.multi[i]) same = false;
    }
    CHECK_FALSE(same);
}

TEST_CASE("epoch coverage: no identity repeats within a shuffle cycle") {
    auto multi = multi_corpus(16, 3, 2);
    SamplerConfig cfg;
    cfg.p_m = 4;
    BatchSampler sampler(&multi, nullptr, cfg);
    // 16 ids / 4 per batch -> cycle of 4 steps covers every identity once
    std::set<int> seen;
    for (int step = 0; step < 4; ++step) {
        for (const auto* rec : sampler.sample_multi(0, step, nullptr)) seen.insert(rec->identity);
    }
    CHECK(seen.size() == 16);
    // next cycle may reshuffle but must again stay repetition-free
    std::set<int> second;
    for (int step = 4; step < 8; ++step) {
        for (const auto* rec : sampler.sample_multi(0, step, nullptr)) second.insert(rec->identity);
    }
    CHECK(second.size() == 16);
}

TEST_CASE("single stream cycles independently of epochs") {
    auto single = single_corpus(64, 2);
    SamplerConfig cfg;
    cfg.p_s = 32;
    BatchSampler sampler(nullptr, &single, cfg);
    // cycle length 2: steps 0,1 cover all 64 ids
    std::set<int> seen;
    for (long long g = 0; g < 2; ++g) {
        for (const auto* rec : sampler.sample_single(g, nullptr)) seen.insert(rec->identity);
    }
    CHECK(seen.size() == 64);
}

TEST_CASE("re-id-only batches skip the single part") {
    auto multi = multi_corpus(16, 3, 2);
    SamplerConfig cfg;
    BatchSampler sampler(&multi, nullptr, cfg);
    auto batch = sampler.compose(0, 0, 0, false);
    CHECK(batch.multi.size() == 32);
    CHECK(batch.single.empty());
}

TEST_CASE("undersized corpora are rejected with counts") {
    auto multi = multi_corpus(4, 3, 2);
    SamplerConfig cfg;  // needs 8 identities
    try {
        BatchSampler sampler(&multi, nullptr, cfg);
        FAIL("expected sampler error");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("4") != std::string::npos);
        CHECK(msg.find("8") != std::string::npos);
    }
}

TEST_CASE("composed sizes always match the config") {
    auto multi = multi_corpus(12, 3, 2);
    auto single = single_corpus(40, 2);
    for (int pm : {4, 6}) {
        for (int ks : {1, 2, 4}) {
            SamplerConfig cfg;
            cfg.p_m = pm;
            cfg.k_m = 3;
            cfg.p_s = 16;
            cfg.k_s = ks;
            BatchSampler sampler(&multi, &single, cfg);
            auto batch = sampler.compose(0, 1, 1, true);
            CHECK(batch.multi.size() == static_cast<std::size_t>(pm * 3));
            CHECK(batch.single.size() == static_cast<std::size_t>(16 * ks));
        }
    }
}
