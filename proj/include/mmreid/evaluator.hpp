#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmreid/datakit.hpp"
#include "mmreid/trainer.hpp"

namespace mmreid::eval {

struct RetrievalEntry {
    std::vector<double> emb;  // unit-norm shared-space projection
    int identity = 0;
    int camera = 0;
};

struct RetrievalRun {
    std::vector<RetrievalEntry> queries;
    std::vector<RetrievalEntry> gallery;
};

// Gallery indices by ascending cosine distance, ties broken by index.
// Entries sharing BOTH identity and camera with the query are excluded
// (standard cross-camera protocol).
std::vector<int> rank_gallery(const RetrievalRun& run, int query_index);

// Fraction of non-skipped queries whose first correct match ranks <= k.
// Queries with no valid positive after exclusion are skipped and counted.
double cmc(const RetrievalRun& run, int k);
double mean_ap(const RetrievalRun& run);

struct Metrics {
    double rank1 = 0.0;
    double rank5 = 0.0;
    double map = 0.0;
    int evaluated_queries = 0;
    int skipped_queries = 0;
};

Metrics evaluate(const RetrievalRun& run);

// Embeds the target corpus with the MOMENTUM encoder projections, splits one
// image per (identity, camera) into the query set under a seeded order, and
// reports Rank1/Rank5/mAP.
RetrievalRun build_run(const train::ModelBundle& model, const data::Corpus& target, std::uint64_t seed);
Metrics cross_domain_eval(const train::ModelBundle& model, const data::Corpus& target,
                          std::uint64_t seed);

// Appends "config_digest,domain,rank1,rank5,map" rows; writes the header on
// first touch.
void append_results_ledger(const std::string& path, const std::string& config_digest,
                           const std::string& domain, const Metrics& metrics);

}  // namespace mmreid::eval
