#pragma once

#include <cstdint>
#include <vector>

#include "mmreid/encoders.hpp"
#include "mmreid/image.hpp"
#include "mmreid/nn.hpp"
#include "mmreid/tensor.hpp"

namespace mmreid::recon {

struct MaskPlan {
    std::vector<int> masked;   // sorted patch indices
    std::vector<int> visible;  // complement, sorted
    double ratio = 0.0;
    std::uint64_t seed = 0;

    std::vector<std::uint8_t> visibility(int patch_count) const;
};

// Uniform sample without replacement of round(ratio * patch_count) indices,
// deterministic in the seed.
MaskPlan make_mask(int patch_count, double ratio, std::uint64_t seed);

struct DecoderConfig {
    int depth = 4;  // self-attention, cross-attention over text, feed-forward
    int embed_dim = 64;
    int heads = 4;
    int patch = 8;
    int channels = 3;
    double init_stddev = 0.02;

    int patch_dim() const { return patch * patch * channels; }
    void validate() const;
};

class Decoder {
public:
    Decoder(const DecoderConfig& cfg, std::uint64_t seed);
    Decoder(const DecoderConfig& cfg, const nn::ParamStore& src, bool trainable);

    const DecoderConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

    // img_tokens: encoder output (CLS + all patch positions, mask tokens in
    // place); text_tokens: full text encoder output sequence. Returns pixel
    // predictions for every patch position, patch_count x patch_dim.
    Value decode(const Value& img_tokens, const Value& text_tokens,
                 const Value* text_mask = nullptr) const;

private:
    void bind();
    DecoderConfig cfg_;
    nn::ParamStore params_;
    std::vector<nn::DecoderBlock> blocks_;
    nn::LayerNorm final_ln_;
    nn::Linear pixel_head_;
};

// (1/M) sum over masked patches of the squared pixel error; predictions at
// visible positions never enter the loss.
Value mse_masked(const Value& original_patches, const Value& predicted_patches, const MaskPlan& plan);

// Ground-truth visible patches + predicted masked patches.
Value assemble_patches(const Value& original_patches, const Value& predicted_patches,
                       const MaskPlan& plan);

// 1 - cos(CLS(f'(x)), CLS(f'(xhat))). The x branch is constant; the xhat
// branch backpropagates through the frozen momentum encoder into the
// decoder. Degenerate CLS norms skip the term (loss 0, flag set).
struct CosineLoss {
    Value loss;
    bool skipped = false;
};
CosineLoss cosine_semantic_loss(const Value& original_patches, const Value& reconstructed_patches,
                                const enc::ImageEncoder& momentum);

Value reconstruction_loss(const Value& mse, const Value& cos);

// Full single-sample pipeline used by the trainer.
struct SampleReconstruction {
    Value mse;
    Value cos;
    bool cos_skipped = false;
    Value predicted;  // patch_count x patch_dim
};
SampleReconstruction reconstruct_sample(const Value& original_patches, const enc::ImageEncoder& online,
                                        const enc::ImageEncoder& momentum,
                                        const enc::TextEncodeOutput& text, const Decoder& decoder,
                                        const MaskPlan& plan);

// Gray out the masked patches for triplet dumps.
Image masked_preview(const Image& img, const MaskPlan& plan, int patch);

}  // namespace mmreid::recon
