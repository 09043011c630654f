#include "mmreid/reconstruction.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "mmreid/rng.hpp"

namespace mmreid::recon {

std::vector<std::uint8_t> MaskPlan::visibility(int patch_count) const {
    std::vector<std::uint8_t> flags(static_cast<std::size_t>(patch_count), 1);
    for (int m : masked) flags[static_cast<std::size_t>(m)] = 0;
    return flags;
}

MaskPlan make_mask(int patch_count, double ratio, std::uint64_t seed) {
    if (patch_count < 2) throw std::invalid_argument("make_mask: need at least 2 patches");
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw std::invalid_argument("make_mask: ratio must lie in (0,1), got " + std::to_string(ratio));
    }
    const int count = static_cast<int>(std::lround(ratio * patch_count));
    if (count < 1 || count >= patch_count) {
        throw std::invalid_argument("make_mask: ratio " + std::to_string(ratio) + " would mask " +
                                    std::to_string(count) + " of " + std::to_string(patch_count) +
                                    " patches");
    }
    Rng rng = derive_rng(seed, "mask_plan");
    MaskPlan plan;
    plan.ratio = ratio;
    plan.seed = seed;
    plan.masked = rng.sample_without_replacement(patch_count, count);
    std::vector<std::uint8_t> is_masked(static_cast<std::size_t>(patch_count), 0);
    for (int m : plan.masked) is_masked[static_cast<std::size_t>(m)] = 1;
    for (int i = 0; i < patch_count; ++i) {
        if (!is_masked[static_cast<std::size_t>(i)]) plan.visible.push_back(i);
    }
    return plan;
}

void DecoderConfig::validate() const {
    if (depth < 1) throw std::invalid_argument("DecoderConfig: depth must be >= 1");
    if (embed_dim % heads != 0) {
        throw std::invalid_argument("DecoderConfig: embed_dim not divisible by heads");
    }
    if (patch < 1 || channels < 1) throw std::invalid_argument("DecoderConfig: bad patch/channels");
}

Decoder::Decoder(const DecoderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng = derive_rng(seed, "decoder");
    for (int i = 0; i < cfg_.depth; ++i) {
        nn::DecoderBlock::create(params_, "dec" + std::to_string(i), cfg_.embed_dim, cfg_.heads, rng,
                                 cfg_.init_stddev);
    }
    nn::LayerNorm::create(params_, "final_ln", cfg_.embed_dim);
    // output regressor starts near zero regardless of the block init scale,
    // keeping the initial pixel loss from swamping the shared encoder
    nn::Linear::create(params_, "pixel_head", cfg_.embed_dim, cfg_.patch_dim(), rng,
                       std::min(cfg_.init_stddev, 0.02));
    bind();
}

Decoder::Decoder(const DecoderConfig& cfg, const nn::ParamStore& src, bool trainable)
    : cfg_(cfg), params_(src.clone(trainable)) {
    cfg_.validate();
    bind();
}

void Decoder::bind() {
    blocks_.clear();
    for (int i = 0; i < cfg_.depth; ++i) {
        blocks_.push_back(nn::DecoderBlock::from_store(params_, "dec" + std::to_string(i), cfg_.heads));
    }
    final_ln_ = nn::LayerNorm::from_store(params_, "final_ln");
    pixel_head_ = nn::Linear::from_store(params_, "pixel_head");
}

Value Decoder::decode(const Value& img_tokens, const Value& text_tokens, const Value* text_mask) const {
    if (img_tokens.cols() != cfg_.embed_dim || text_tokens.cols() != cfg_.embed_dim) {
        throw std::invalid_argument("Decoder::decode: token dim " + std::to_string(img_tokens.cols()) +
                                    "/" + std::to_string(text_tokens.cols()) + " does not match config " +
                                    std::to_string(cfg_.embed_dim));
    }
    Value x = img_tokens;
    for (const auto& block : blocks_) x = block.forward(x, text_tokens, text_mask);
    x = final_ln_.forward(x);
    // CLS rides along through the blocks; pixels come from the patch slots.
    return pixel_head_.forward(slice_rows(x, 1, x.rows()));
}

Value mse_masked(const Value& original_patches, const Value& predicted_patches, const MaskPlan& plan) {
    if (original_patches.rows() != predicted_patches.rows() ||
        original_patches.cols() != predicted_patches.cols()) {
        throw std::invalid_argument("mse_masked: patch matrices differ in shape");
    }
    if (plan.masked.empty()) throw std::invalid_argument("mse_masked: plan has no masked patches");
    Value diff = sub(select_rows(predicted_patches, plan.masked),
                     select_rows(original_patches, plan.masked));
    return mean_all(row_sum(mul(diff, diff)));
}

Value assemble_patches(const Value& original_patches, const Value& predicted_patches,
                       const MaskPlan& plan) {
    const int p = original_patches.rows();
    std::vector<std::uint8_t> flags = plan.visibility(p);
    std::vector<Value> parts;
    int i = 0;
    while (i < p) {
        const bool vis = flags[static_cast<std::size_t>(i)] != 0;
        int j = i;
        std::vector<int> run;
        while (j < p && (flags[static_cast<std::size_t>(j)] != 0) == vis) run.push_back(j++);
        parts.push_back(select_rows(vis ? original_patches : predicted_patches, run));
        i = j;
    }
    return concat_rows(parts);
}

CosineLoss cosine_semantic_loss(const Value& original_patches, const Value& reconstructed_patches,
                                const enc::ImageEncoder& momentum) {
    // x branch: plain forward, re-wrapped as a constant
    Value cls_x = momentum.encode_patches(Value::constant(original_patches.rows(),
                                                          original_patches.cols(),
                                                          original_patches.data())).cls;
    Value cls_x_const = Value::constant(1, cls_x.cols(), cls_x.data(), "cls_detached");
    Value cls_hat = momentum.encode_patches(reconstructed_patches).cls;

    Value nx = l2_normalize_rows(cls_x_const);
    Value nhat = l2_normalize_rows(cls_hat);
    if (!nx.degenerate_rows().empty() || !nhat.degenerate_rows().empty()) {
        return {Value::scalar(0.0), true};
    }
    return {add_scalar(neg(dot_rows(nx, nhat)), 1.0), false};
}

Value reconstruction_loss(const Value& mse, const Value& cos) { return add(mse, cos); }

SampleReconstruction reconstruct_sample(const Value& original_patches, const enc::ImageEncoder& online,
                                        const enc::ImageEncoder& momentum,
                                        const enc::TextEncodeOutput& text, const Decoder& decoder,
                                        const MaskPlan& plan) {
    const auto flags = plan.visibility(original_patches.rows());
    auto encoded = online.encode_patches(original_patches, &flags);
    SampleReconstruction out;
    out.predicted = decoder.decode(encoded.tokens, text.tokens,
                                   text.has_pad_mask ? &text.pad_mask : nullptr);
    out.mse = mse_masked(original_patches, out.predicted, plan);
    Value assembled = assemble_patches(original_patches, out.predicted, plan);
    auto cos = cosine_semantic_loss(original_patches, assembled, momentum);
    out.cos = cos.loss;
    out.cos_skipped = cos.skipped;
    return out;
}

Image masked_preview(const Image& img, const MaskPlan& plan, int patch) {
    Image out = img;
    const int pw = img.width / patch;
    for (int m : plan.masked) {
        const int py = m / pw, px = m % pw;
        for (int y = 0; y < patch; ++y) {
            for (int x = 0; x < patch; ++x) {
                for (int c = 0; c < 3; ++c) out.at(py * patch + y, px * patch + x, c) = 0.5;
            }
        }
    }
    return out;
}

}  // namespace mmreid::recon
