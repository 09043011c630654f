#include "mmreid/sampling.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "mmreid/rng.hpp"

namespace mmreid::sampling {

namespace {

std::vector<int> identity_slice(const std::vector<int>& ids, std::uint64_t seed, const char* tag,
                                std::uint64_t epoch, long long index, int take) {
    const int per_cycle = static_cast<int>(ids.size()) / take;  // >= 1, validated upstream
    const long long cycle = index / per_cycle;
    const int within = static_cast<int>(index % per_cycle);
    std::vector<int> perm = ids;
    Rng rng = derive_rng(seed, tag, epoch, static_cast<std::uint64_t>(cycle));
    rng.shuffle(perm);
    return {perm.begin() + static_cast<std::ptrdiff_t>(within) * take,
            perm.begin() + static_cast<std::ptrdiff_t>(within + 1) * take};
}

}  // namespace

BatchSampler::BatchSampler(const data::Corpus* multi_corpus, const data::Corpus* single_corpus,
                           const SamplerConfig& cfg)
    : multi_(multi_corpus), single_(single_corpus), cfg_(cfg) {
    if (multi_) {
        multi_ids_ = multi_->identities();
        if (static_cast<int>(multi_ids_.size()) < cfg_.p_m) {
            throw std::invalid_argument("BatchSampler: multi corpus has " +
                                        std::to_string(multi_ids_.size()) + " identities, need P_m=" +
                                        std::to_string(cfg_.p_m));
        }
        for (int id : multi_ids_) {
            int images = 0;
            for (const auto& [cam, recs] : multi_->index.at(id)) images += static_cast<int>(recs.size());
            if (images < 2) {
                throw std::invalid_argument("BatchSampler: multi identity " + std::to_string(id) +
                                            " has fewer than 2 images");
            }
        }
    }
    if (single_) {
        single_ids_ = single_->identities();
        if (static_cast<int>(single_ids_.size()) < cfg_.p_s) {
            throw std::invalid_argument("BatchSampler: single corpus has " +
                                        std::to_string(single_ids_.size()) + " identities, need P_s=" +
                                        std::to_string(cfg_.p_s));
        }
    }
}

std::vector<const data::SampleRecord*> BatchSampler::sample_multi(int epoch, int step,
                                                                  BatchFlags* flags) const {
    if (!multi_) throw std::logic_error("BatchSampler: no multi corpus attached");
    auto chosen = identity_slice(multi_ids_, cfg_.seed, "multi_ids",
                                 static_cast<std::uint64_t>(epoch), step, cfg_.p_m);

    std::vector<const data::SampleRecord*> out;
    out.reserve(static_cast<std::size_t>(cfg_.multi_size()));
    for (int id : chosen) {
        Rng rng = derive_rng(cfg_.seed, "multi_pick", static_cast<std::uint64_t>(epoch),
                             static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(id));
        const auto& cam_map = multi_->index.at(id);
        std::vector<int> cameras;
        for (const auto& [cam, recs] : cam_map) cameras.push_back(cam);
        if (cfg_.enforce_camera_diversity) rng.shuffle(cameras);

        std::vector<int> picked;
        // one image from each distinct camera first
        for (int cam : cameras) {
            if (static_cast<int>(picked.size()) == cfg_.k_m) break;
            const auto& recs = cam_map.at(cam);
            picked.push_back(recs[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(recs.size())))]);
        }
        if (static_cast<int>(cameras.size()) < cfg_.k_m && flags) {
            flags->camera_shortfall_identities.push_back(id);
        }
        // refill across all of the identity's images, with replacement
        std::vector<int> all;
        for (const auto& [cam, recs] : cam_map) all.insert(all.end(), recs.begin(), recs.end());
        bool duplicated = false;
        while (static_cast<int>(picked.size()) < cfg_.k_m) {
            const int rec = all[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(all.size())))];
            if (std::find(picked.begin(), picked.end(), rec) != picked.end()) duplicated = true;
            picked.push_back(rec);
        }
        if (duplicated && flags) flags->duplicated_identities.push_back(id);
        for (int rec : picked) out.push_back(&multi_->records[static_cast<std::size_t>(rec)]);
    }
    return out;
}

std::vector<const data::SampleRecord*> BatchSampler::sample_single(long long global_step,
                                                                   BatchFlags* flags) const {
    if (!single_) throw std::logic_error("BatchSampler: no single corpus attached");
    auto chosen = identity_slice(single_ids_, cfg_.seed, "single_ids", 0, global_step, cfg_.p_s);

    std::vector<const data::SampleRecord*> out;
    out.reserve(static_cast<std::size_t>(cfg_.single_size()));
    for (int id : chosen) {
        Rng rng = derive_rng(cfg_.seed, "single_pick", static_cast<std::uint64_t>(global_step),
                             static_cast<std::uint64_t>(id));
        std::vector<int> all;
        for (const auto& [cam, recs] : single_->index.at(id)) {
            all.insert(all.end(), recs.begin(), recs.end());
        }
        std::vector<int> picked;
        if (static_cast<int>(all.size()) >= cfg_.k_s) {
            std::vector<int> order(all.size());
            for (std::size_t i = 0; i < all.size(); ++i) order[i] = static_cast<int>(i);
            rng.shuffle(order);
            for (int i = 0; i < cfg_.k_s; ++i) picked.push_back(all[static_cast<std::size_t>(order[i])]);
        } else {
            for (int i = 0; i < cfg_.k_s; ++i) {
                picked.push_back(all[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(all.size())))]);
            }
            if (flags) flags->duplicated_identities.push_back(id);
        }
        for (int rec : picked) {
            const auto& record = single_->records[static_cast<std::size_t>(rec)];
            if (!record.has_caption()) {
                throw std::runtime_error("BatchSampler: single-camera record of identity " +
                                         std::to_string(id) + " lacks a caption");
            }
            out.push_back(&record);
        }
    }
    return out;
}

ComposedBatch BatchSampler::compose(int epoch, int step, long long global_step, bool need_single) const {
    ComposedBatch batch;
    batch.epoch = epoch;
    batch.step = step;
    batch.multi = sample_multi(epoch, step, &batch.flags);
    if (static_cast<int>(batch.multi.size()) != cfg_.multi_size()) {
        throw std::logic_error("BatchSampler: multi part size " + std::to_string(batch.multi.size()) +
                               " != P_m*K_m = " + std::to_string(cfg_.multi_size()));
    }
    if (need_single) {
        batch.single = sample_single(global_step, &batch.flags);
        if (static_cast<int>(batch.single.size()) != cfg_.single_size()) {
            throw std::logic_error("BatchSampler: single part size " + std::to_string(batch.single.size()) +
                                   " != P_s*K_s = " + std::to_string(cfg_.single_size()));
        }
    }
    return batch;
}

}  // namespace mmreid::sampling
