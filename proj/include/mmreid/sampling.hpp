#pragma once

#include <cstdint>
#include <vector>

#include "mmreid/datakit.hpp"

namespace mmreid::sampling {

struct SamplerConfig {
    int p_m = 8;   // multi-camera identities per batch
    int k_m = 4;   // images per multi identity, camera-diverse
    int p_s = 32;  // single-camera identities per batch
    int k_s = 2;   // images per single identity
    std::uint64_t seed = 0;
    bool enforce_camera_diversity = true;

    int multi_size() const { return p_m * k_m; }
    int single_size() const { return p_s * k_s; }
};

struct BatchFlags {
    std::vector<int> duplicated_identities;     // identities that repeated an image
    std::vector<int> camera_shortfall_identities;  // fewer distinct cameras than k_m
};

struct ComposedBatch {
    std::vector<const data::SampleRecord*> multi;
    std::vector<const data::SampleRecord*> single;
    int epoch = 0;
    int step = 0;
    BatchFlags flags;

    int size() const { return static_cast<int>(multi.size() + single.size()); }
};

// Deterministic in (seed, epoch, step): identity order per epoch comes from a
// seeded shuffle consumed in slices; when a shuffle is exhausted mid-epoch a
// fresh one starts, so no identity repeats within a shuffle cycle. The
// single-camera stream cycles independently of epochs.
class BatchSampler {
public:
    BatchSampler(const data::Corpus* multi_corpus, const data::Corpus* single_corpus,
                 const SamplerConfig& cfg);

    std::vector<const data::SampleRecord*> sample_multi(int epoch, int step, BatchFlags* flags) const;
    std::vector<const data::SampleRecord*> sample_single(long long global_step, BatchFlags* flags) const;

    // multi part first, then the single part; need_single=false yields a
    // Re-ID-only batch.
    ComposedBatch compose(int epoch, int step, long long global_step, bool need_single) const;

    const SamplerConfig& config() const { return cfg_; }

private:
    const data::Corpus* multi_;
    const data::Corpus* single_;
    SamplerConfig cfg_;
    std::vector<int> multi_ids_;
    std::vector<int> single_ids_;
};

}  // namespace mmreid::sampling
