#pragma once

#include <utility>
#include <vector>

#include "mmreid/tensor.hpp"

namespace mmreid::reid {

struct ReIDBatch {
    Value emb;      // n x d shared-space projections of the original images
    Value emb_aug;  // row-aligned projections of the augmented twins
    std::vector<int> labels;
    std::vector<int> cameras;

    int size() const { return static_cast<int>(labels.size()); }
    void validate(bool require_aug) const;
};

// Batch-local centroids over the normalized embeddings: one per identity and
// one per (identity, camera) pair, re-normalized to unit length. Built in
// the graph so gradients flow back through the means.
struct CentroidSet {
    Value id_centroids;  // k x d
    std::vector<int> id_labels;
    Value cam_centroids;  // q x d
    std::vector<std::pair<int, int>> cam_keys;  // (label, camera)
};

CentroidSet compute_centroids(const ReIDBatch& batch);

struct LossStats {
    int skipped_anchors = 0;
    bool all_skipped = false;
};

// Multi-positive InfoNCE: -log( sum_pos e^{s/tau} / sum_{k != i} e^{s/tau} ),
// averaged over anchors that have at least one positive.
Value instance_loss(const ReIDBatch& batch, double tau, LossStats* stats = nullptr);

// InfoNCE with the augmented twin as the sole positive against all twins.
Value augmentation_loss(const ReIDBatch& batch, double tau);

// Each embedding against all identity centroids, own centroid positive.
Value centroids_loss(const ReIDBatch& batch, const CentroidSet& centroids, double tau);

// Positives: same identity under other cameras; negatives: other identities'
// centroids. Anchors whose identity appears under a single camera are
// skipped; if every anchor is skipped the loss is exactly 0.
Value camera_centroids_loss(const ReIDBatch& batch, const CentroidSet& centroids, double tau,
                            LossStats* stats = nullptr);

// L_ins + L_aug + L_cen + 0.5 * L_cc
Value combine_reid_components(const Value& ins, const Value& aug, const Value& cen, const Value& cc);

struct ReidTotal {
    Value total, ins, aug, cen, cc;
    LossStats instance_stats, camera_stats;
};

ReidTotal reid_total(const ReIDBatch& batch, double tau);

}  // namespace mmreid::reid
