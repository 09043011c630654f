#pragma once

#include <vector>

#include "mmreid/tensor.hpp"

namespace mmreid::match {

struct MatchBatch {
    Value z_img;     // n x d shared-space projections
    Value zhat_img;  // row-normalized
    Value z_txt;
    Value zhat_txt;
    std::vector<int> labels;

    int size() const { return static_cast<int>(labels.size()); }
    void validate() const;
};

// Row-stochastic identity-aware target distribution: the anchor pair gets
// alpha, every other same-identity pair shares (1 - alpha) equally, all
// cross-identity entries are zero. Rows without positives fall back to a
// one-hot diagonal and are recorded.
struct SoftTargets {
    int n = 0;
    double alpha = 0.0;
    std::vector<double> q;  // n * n, row-major
    std::vector<int> fallback_rows;

    double at(int i, int j) const { return q[static_cast<std::size_t>(i) * n + j]; }
};

SoftTargets soft_targets(const std::vector<int>& labels, double alpha);

// p = softmax(z_query . zhat_key^T) per row: the query side is deliberately
// unnormalized and there is no temperature; normalize_query exposes the
// symmetric variant.
Value similarity_distribution(const Value& z_query, const Value& zhat_key, bool normalize_query = false);

// One direction of the identity-aware matching loss:
// (1/n) sum_ij p_ij log(p_ij / (q_ij + eps)).
Value matching_direction_loss(const Value& z_query, const Value& zhat_key, const SoftTargets& targets,
                              double eps, bool normalize_query = false);

// Both directions, image->text plus text->image, sharing the same targets.
Value identity_aware_matching_loss(const MatchBatch& batch, double alpha, double eps = 1e-8,
                                   bool normalize_query = false);

// argmin over same-label cosine similarity, ties to the lowest index;
// -1 when the anchor has no positive.
int hardest_positive_index(const std::vector<double>& zhat_img_data, int n, int d,
                           const std::vector<int>& labels, int anchor);

struct SpAnchorTerm {
    int anchor = -1;
    int hardest_positive = -1;
    double value = 0.0;
};

// Per eligible anchor: -(s_pos/tau - log sum_k exp(s_k/tau)) over the K
// negatives; include_positive_in_denominator switches to the InfoNCE-style
// denominator that also carries exp(s_pos/tau).
Value structure_preserving_loss(const MatchBatch& batch, double tau,
                                bool include_positive_in_denominator = false,
                                std::vector<SpAnchorTerm>* terms = nullptr);

// Symmetric cross-entropy with one-hot diagonal targets over
// zhat_img . zhat_txt^T / temperature, averaged over both directions.
Value clip_loss(const MatchBatch& batch, double temperature);

// Cross-entropy against soft_targets(labels, alpha) instead of the diagonal;
// collapses to clip_loss bitwise when all labels are distinct.
Value soft_clip_loss(const MatchBatch& batch, double temperature, double alpha);

}  // namespace mmreid::match
