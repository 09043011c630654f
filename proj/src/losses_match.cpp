#include "mmreid/losses_match.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mmreid::match {

namespace {

// Shared cross-entropy core so that clip and soft-clip follow the exact same
// computation path (bitwise, not just numerically).
Value cross_entropy_vs_targets(const Value& zhat_q, const Value& zhat_k, const Value& targets,
                               double temperature) {
    const int n = zhat_q.rows();
    Value logits = scale(matmul(zhat_q, transpose(zhat_k)), 1.0 / temperature);
    Value lp = log_softmax_rows(logits);
    return scale(sum_all(mul(targets, lp)), -1.0 / n);
}

Value targets_to_value(const SoftTargets& t) {
    return Value::constant(t.n, t.n, t.q, "soft_targets");
}

Value identity_targets(int n) {
    std::vector<double> q(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) q[static_cast<std::size_t>(i) * n + i] = 1.0;
    return Value::constant(n, n, std::move(q), "one_hot_targets");
}

}  // namespace

void MatchBatch::validate() const {
    const int n = size();
    if (n < 2) throw std::invalid_argument("MatchBatch: needs at least 2 samples, got " + std::to_string(n));
    const int d = z_img.cols();
    auto check = [&](const Value& v, const char* name) {
        if (v.rows() != n || v.cols() != d) {
            throw std::invalid_argument(std::string("MatchBatch: ") + name + " is " +
                                        std::to_string(v.rows()) + "x" + std::to_string(v.cols()) +
                                        ", expected " + std::to_string(n) + "x" + std::to_string(d));
        }
    };
    check(z_img, "z_img");
    check(zhat_img, "zhat_img");
    check(z_txt, "z_txt");
    check(zhat_txt, "zhat_txt");
}

SoftTargets soft_targets(const std::vector<int>& labels, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw std::invalid_argument("soft_targets: alpha must lie in (0,1), got " + std::to_string(alpha));
    }
    const int n = static_cast<int>(labels.size());
    SoftTargets t;
    t.n = n;
    t.alpha = alpha;
    t.q.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) {
        int n_pos = 0;
        for (int j = 0; j < n; ++j) {
            if (j != i && labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(i)]) ++n_pos;
        }
        double* row = t.q.data() + static_cast<std::size_t>(i) * n;
        if (n_pos == 0) {
            row[i] = 1.0;
            t.fallback_rows.push_back(i);
            continue;
        }
        const double share = (1.0 - alpha) / n_pos;
        for (int j = 0; j < n; ++j) {
            if (j == i) {
                row[j] = alpha;
            } else if (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(i)]) {
                row[j] = share;
            }
        }
    }
    return t;
}

Value similarity_distribution(const Value& z_query, const Value& zhat_key, bool normalize_query) {
    if (z_query.cols() != zhat_key.cols()) {
        throw std::invalid_argument("similarity_distribution: dim mismatch " +
                                    std::to_string(z_query.cols()) + " vs " +
                                    std::to_string(zhat_key.cols()));
    }
    Value q = normalize_query ? l2_normalize_rows(z_query) : z_query;
    return softmax_rows(matmul(q, transpose(zhat_key)));
}

Value matching_direction_loss(const Value& z_query, const Value& zhat_key, const SoftTargets& targets,
                              double eps, bool normalize_query) {
    const int n = z_query.rows();
    if (targets.n != n) {
        throw std::invalid_argument("matching_direction_loss: targets for " + std::to_string(targets.n) +
                                    " samples, batch has " + std::to_string(n));
    }
    Value q = normalize_query ? l2_normalize_rows(z_query) : z_query;
    Value logits = matmul(q, transpose(zhat_key));
    Value p = softmax_rows(logits);
    Value lp = log_softmax_rows(logits);
    std::vector<double> log_q(targets.q.size());
    for (std::size_t i = 0; i < log_q.size(); ++i) log_q[i] = std::log(targets.q[i] + eps);
    Value c = Value::constant(n, n, std::move(log_q), "log_targets");
    // p_ij * (log p_ij - log(q_ij + eps)); p == 0 entries contribute exactly 0
    return scale(sum_all(mul(p, sub(lp, c))), 1.0 / n);
}

Value identity_aware_matching_loss(const MatchBatch& batch, double alpha, double eps,
                                   bool normalize_query) {
    batch.validate();
    SoftTargets targets = soft_targets(batch.labels, alpha);
    Value l_it = matching_direction_loss(batch.z_img, batch.zhat_txt, targets, eps, normalize_query);
    Value l_ti = matching_direction_loss(batch.z_txt, batch.zhat_img, targets, eps, normalize_query);
    return add(l_it, l_ti);
}

int hardest_positive_index(const std::vector<double>& zhat, int n, int d,
                           const std::vector<int>& labels, int anchor) {
    int best = -1;
    double best_sim = 0.0;
    for (int j = 0; j < n; ++j) {
        if (j == anchor || labels[static_cast<std::size_t>(j)] != labels[static_cast<std::size_t>(anchor)]) {
            continue;
        }
        double sim = 0.0;
        for (int k = 0; k < d; ++k) {
            sim += zhat[static_cast<std::size_t>(anchor) * d + k] * zhat[static_cast<std::size_t>(j) * d + k];
        }
        if (best < 0 || sim < best_sim) {  // ties keep the lowest index
            best = j;
            best_sim = sim;
        }
    }
    return best;
}

Value structure_preserving_loss(const MatchBatch& batch, double tau,
                                bool include_positive_in_denominator,
                                std::vector<SpAnchorTerm>* terms) {
    batch.validate();
    if (tau <= 0.0) throw std::invalid_argument("structure_preserving_loss: tau must be positive");
    const int n = batch.size();
    const int d = batch.zhat_img.cols();
    const auto& labels = batch.labels;

    std::vector<int> anchors;
    std::vector<int> hardest;
    for (int i = 0; i < n; ++i) {
        const int j = hardest_positive_index(batch.zhat_img.data(), n, d, labels, i);
        if (j < 0) continue;  // no positive
        bool has_negative = false;
        for (int k = 0; k < n; ++k) {
            if (labels[static_cast<std::size_t>(k)] != labels[static_cast<std::size_t>(i)]) {
                has_negative = true;
                break;
            }
        }
        if (!has_negative) continue;
        anchors.push_back(i);
        hardest.push_back(j);
    }
    if (anchors.empty()) {
        throw std::runtime_error("structure_preserving_loss: no anchor has both a positive and a "
                                 "negative; check the sampler configuration");
    }

    const int m = static_cast<int>(anchors.size());
    Value sims = matmul(batch.zhat_img, transpose(batch.zhat_img));  // n x n

    std::vector<std::pair<int, int>> pos_entries;
    std::vector<double> den_mask(static_cast<std::size_t>(m) * n, 0.0);
    for (int r = 0; r < m; ++r) {
        const int i = anchors[static_cast<std::size_t>(r)];
        pos_entries.emplace_back(i, hardest[static_cast<std::size_t>(r)]);
        for (int k = 0; k < n; ++k) {
            if (labels[static_cast<std::size_t>(k)] != labels[static_cast<std::size_t>(i)]) {
                den_mask[static_cast<std::size_t>(r) * n + k] = 1.0;
            }
        }
        if (include_positive_in_denominator) {
            den_mask[static_cast<std::size_t>(r) * n + hardest[static_cast<std::size_t>(r)]] = 1.0;
        }
    }

    Value s_pos = scale(select_entries(sims, pos_entries), 1.0 / tau);          // m x 1
    Value e = vexp(scale(select_rows(sims, anchors), 1.0 / tau));               // m x n
    Value den = row_sum(mul(e, Value::constant(m, n, std::move(den_mask), "sp_mask")));
    Value per_anchor = sub(vlog(den), s_pos);                                   // m x 1
    if (terms) {
        terms->clear();
        for (int r = 0; r < m; ++r) {
            terms->push_back({anchors[static_cast<std::size_t>(r)],
                              hardest[static_cast<std::size_t>(r)],
                              per_anchor.data()[static_cast<std::size_t>(r)]});
        }
    }
    return mean_all(per_anchor);
}

Value clip_loss(const MatchBatch& batch, double temperature) {
    batch.validate();
    if (temperature <= 0.0) throw std::invalid_argument("clip_loss: temperature must be positive");
    Value targets = identity_targets(batch.size());
    Value i2t = cross_entropy_vs_targets(batch.zhat_img, batch.zhat_txt, targets, temperature);
    Value t2i = cross_entropy_vs_targets(batch.zhat_txt, batch.zhat_img, targets, temperature);
    return scale(add(i2t, t2i), 0.5);
}

Value soft_clip_loss(const MatchBatch& batch, double temperature, double alpha) {
    batch.validate();
    if (temperature <= 0.0) throw std::invalid_argument("soft_clip_loss: temperature must be positive");
    Value targets = targets_to_value(soft_targets(batch.labels, alpha));
    Value i2t = cross_entropy_vs_targets(batch.zhat_img, batch.zhat_txt, targets, temperature);
    Value t2i = cross_entropy_vs_targets(batch.zhat_txt, batch.zhat_img, targets, temperature);
    return scale(add(i2t, t2i), 0.5);
}

}  // namespace mmreid::match
