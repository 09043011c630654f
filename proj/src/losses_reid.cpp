#include "mmreid/losses_reid.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>

namespace mmreid::reid {

namespace {

// -log( sum(E .* pos_mask) / sum(E .* den_mask) ) per selected anchor row,
// with E = exp(S / tau) rows already restricted to the anchors.
Value masked_info_nce(const Value& sims, const std::vector<int>& anchors,
                      std::vector<double> pos_mask, std::vector<double> den_mask, double tau) {
    const int m = static_cast<int>(anchors.size());
    const int cols = sims.cols();
    Value e = vexp(scale(select_rows(sims, anchors), 1.0 / tau));
    Value num = row_sum(mul(e, Value::constant(m, cols, std::move(pos_mask), "pos_mask")));
    Value den = row_sum(mul(e, Value::constant(m, cols, std::move(den_mask), "den_mask")));
    return mean_all(sub(vlog(den), vlog(num)));
}

}  // namespace

void ReIDBatch::validate(bool require_aug) const {
    const int n = size();
    if (n < 1) throw std::invalid_argument("ReIDBatch: empty batch");
    if (emb.rows() != n) {
        throw std::invalid_argument("ReIDBatch: emb rows " + std::to_string(emb.rows()) +
                                    " != label count " + std::to_string(n));
    }
    if (static_cast<int>(cameras.size()) != n) {
        throw std::invalid_argument("ReIDBatch: cameras length mismatch");
    }
    if (require_aug && (!emb_aug.valid() || emb_aug.rows() != n || emb_aug.cols() != emb.cols())) {
        throw std::invalid_argument("ReIDBatch: emb_aug missing or misshaped");
    }
}

CentroidSet compute_centroids(const ReIDBatch& batch) {
    batch.validate(false);
    Value zhat = l2_normalize_rows(batch.emb);
    const int n = batch.size();

    std::map<int, std::vector<int>> by_id;
    std::map<std::pair<int, int>, std::vector<int>> by_id_cam;
    for (int i = 0; i < n; ++i) {
        by_id[batch.labels[static_cast<std::size_t>(i)]].push_back(i);
        by_id_cam[{batch.labels[static_cast<std::size_t>(i)],
                   batch.cameras[static_cast<std::size_t>(i)]}].push_back(i);
    }

    CentroidSet cs;
    std::vector<Value> id_means;
    for (const auto& [label, rows] : by_id) {
        id_means.push_back(col_mean(select_rows(zhat, rows)));
        cs.id_labels.push_back(label);
    }
    cs.id_centroids = l2_normalize_rows(concat_rows(id_means));

    std::vector<Value> cam_means;
    for (const auto& [key, rows] : by_id_cam) {
        cam_means.push_back(col_mean(select_rows(zhat, rows)));
        cs.cam_keys.push_back(key);
    }
    cs.cam_centroids = l2_normalize_rows(concat_rows(cam_means));
    return cs;
}

Value instance_loss(const ReIDBatch& batch, double tau, LossStats* stats) {
    batch.validate(false);
    const int n = batch.size();
    Value zhat = l2_normalize_rows(batch.emb);
    Value sims = matmul(zhat, transpose(zhat));

    std::vector<int> anchors;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (j != i && batch.labels[static_cast<std::size_t>(j)] == batch.labels[static_cast<std::size_t>(i)]) {
                anchors.push_back(i);
                break;
            }
        }
    }
    if (stats) {
        stats->skipped_anchors = n - static_cast<int>(anchors.size());
        stats->all_skipped = anchors.empty();
    }
    if (anchors.empty()) return Value::scalar(0.0);

    const int m = static_cast<int>(anchors.size());
    std::vector<double> pos_mask(static_cast<std::size_t>(m) * n, 0.0);
    std::vector<double> den_mask(static_cast<std::size_t>(m) * n, 0.0);
    for (int r = 0; r < m; ++r) {
        const int i = anchors[static_cast<std::size_t>(r)];
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            den_mask[static_cast<std::size_t>(r) * n + j] = 1.0;
            if (batch.labels[static_cast<std::size_t>(j)] == batch.labels[static_cast<std::size_t>(i)]) {
                pos_mask[static_cast<std::size_t>(r) * n + j] = 1.0;
            }
        }
    }
    return masked_info_nce(sims, anchors, std::move(pos_mask), std::move(den_mask), tau);
}

Value augmentation_loss(const ReIDBatch& batch, double tau) {
    batch.validate(true);
    const int n = batch.size();
    Value zhat = l2_normalize_rows(batch.emb);
    Value zhat_aug = l2_normalize_rows(batch.emb_aug);
    Value sims = matmul(zhat, transpose(zhat_aug));  // s_ij = <z_i, z'_j>

    std::vector<int> anchors(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) anchors[static_cast<std::size_t>(i)] = i;
    std::vector<double> pos_mask(static_cast<std::size_t>(n) * n, 0.0);
    std::vector<double> den_mask(static_cast<std::size_t>(n) * n, 1.0);
    for (int i = 0; i < n; ++i) pos_mask[static_cast<std::size_t>(i) * n + i] = 1.0;
    return masked_info_nce(sims, anchors, std::move(pos_mask), std::move(den_mask), tau);
}

Value centroids_loss(const ReIDBatch& batch, const CentroidSet& centroids, double tau) {
    batch.validate(false);
    const int n = batch.size();
    const int k = static_cast<int>(centroids.id_labels.size());
    Value zhat = l2_normalize_rows(batch.emb);
    Value sims = matmul(zhat, transpose(centroids.id_centroids));  // n x k

    std::vector<int> anchors(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) anchors[static_cast<std::size_t>(i)] = i;
    std::vector<double> pos_mask(static_cast<std::size_t>(n) * k, 0.0);
    std::vector<double> den_mask(static_cast<std::size_t>(n) * k, 1.0);
    for (int i = 0; i < n; ++i) {
        const auto it = std::find(centroids.id_labels.begin(), centroids.id_labels.end(),
                                  batch.labels[static_cast<std::size_t>(i)]);
        if (it == centroids.id_labels.end()) {
            throw std::logic_error("centroids_loss: centroid set does not cover batch labels");
        }
        const int c = static_cast<int>(it - centroids.id_labels.begin());
        pos_mask[static_cast<std::size_t>(i) * k + c] = 1.0;
    }
    return masked_info_nce(sims, anchors, std::move(pos_mask), std::move(den_mask), tau);
}

Value camera_centroids_loss(const ReIDBatch& batch, const CentroidSet& centroids, double tau,
                            LossStats* stats) {
    batch.validate(false);
    const int n = batch.size();
    const int q = static_cast<int>(centroids.cam_keys.size());
    Value zhat = l2_normalize_rows(batch.emb);

    std::vector<int> anchors;
    std::vector<std::vector<double>> pos_rows;
    std::vector<std::vector<double>> den_rows;
    for (int i = 0; i < n; ++i) {
        const int label = batch.labels[static_cast<std::size_t>(i)];
        const int camera = batch.cameras[static_cast<std::size_t>(i)];
        std::vector<double> pos(static_cast<std::size_t>(q), 0.0);
        std::vector<double> den(static_cast<std::size_t>(q), 0.0);
        bool has_pos = false;
        bool has_neg = false;
        for (int c = 0; c < q; ++c) {
            const auto& [cl, cc] = centroids.cam_keys[static_cast<std::size_t>(c)];
            if (cl == label && cc != camera) {
                pos[static_cast<std::size_t>(c)] = 1.0;
                den[static_cast<std::size_t>(c)] = 1.0;
                has_pos = true;
            } else if (cl != label) {
                den[static_cast<std::size_t>(c)] = 1.0;
                has_neg = true;
            }
        }
        if (!has_pos || !has_neg) continue;
        anchors.push_back(i);
        pos_rows.push_back(std::move(pos));
        den_rows.push_back(std::move(den));
    }
    if (stats) {
        stats->skipped_anchors = n - static_cast<int>(anchors.size());
        stats->all_skipped = anchors.empty();
    }
    if (anchors.empty()) return Value::scalar(0.0);  // single-camera-only batch

    const int m = static_cast<int>(anchors.size());
    std::vector<double> pos_mask;
    std::vector<double> den_mask;
    pos_mask.reserve(static_cast<std::size_t>(m) * q);
    den_mask.reserve(static_cast<std::size_t>(m) * q);
    for (int r = 0; r < m; ++r) {
        pos_mask.insert(pos_mask.end(), pos_rows[static_cast<std::size_t>(r)].begin(),
                        pos_rows[static_cast<std::size_t>(r)].end());
        den_mask.insert(den_mask.end(), den_rows[static_cast<std::size_t>(r)].begin(),
                        den_rows[static_cast<std::size_t>(r)].end());
    }
    Value sims = matmul(zhat, transpose(centroids.cam_centroids));  // n x q
    return masked_info_nce(sims, anchors, std::move(pos_mask), std::move(den_mask), tau);
}

Value combine_reid_components(const Value& ins, const Value& aug, const Value& cen, const Value& cc) {
    return add(add(ins, aug), add(cen, scale(cc, 0.5)));
}

ReidTotal reid_total(const ReIDBatch& batch, double tau) {
    ReidTotal out;
    CentroidSet centroids = compute_centroids(batch);
    out.ins = instance_loss(batch, tau, &out.instance_stats);
    out.aug = augmentation_loss(batch, tau);
    out.cen = centroids_loss(batch, centroids, tau);
    out.cc = camera_centroids_loss(batch, centroids, tau, &out.camera_stats);
    out.total = combine_reid_components(out.ins, out.aug, out.cen, out.cc);
    return out;
}

}  // namespace mmreid::reid
