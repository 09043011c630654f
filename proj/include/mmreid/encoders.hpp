#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "mmreid/image.hpp"
#include "mmreid/nn.hpp"
#include "mmreid/tensor.hpp"

namespace mmreid::enc {

struct ImageEncoderConfig {
    int height = 64;
    int width = 32;
    int patch = 8;
    int embed_dim = 64;
    int depth = 2;
    int heads = 4;
    double init_stddev = 0.02;

    int patches_y() const { return height / patch; }
    int patches_x() const { return width / patch; }
    int patch_count() const { return patches_y() * patches_x(); }
    int patch_dim() const { return patch * patch * 3; }
    int tokens() const { return patch_count() + 1; }  // CLS + patches
    void validate() const;
};

// Closed vocabulary with reserved entries [CLS]=0, [PAD]=1, [UNK]=2.
struct Vocab {
    static constexpr int kCls = 0;
    static constexpr int kPad = 1;
    static constexpr int kUnk = 2;

    std::vector<std::string> words;  // index -> word
    std::unordered_map<std::string, int> index;

    static Vocab build(const std::vector<std::string>& content_words);
    // Whitespace tokenization; punctuation stripped; unknown words -> [UNK].
    std::vector<int> encode(const std::string& caption) const;
    int size() const { return static_cast<int>(words.size()); }
};

struct TextEncoderConfig {
    Vocab vocab;
    int max_len = 24;  // caption tokens, excluding the prepended CLS
    int embed_dim = 64;
    int depth = 2;
    int heads = 4;
    double init_stddev = 0.02;
    void validate() const;
};

struct EncodeOutput {
    Value tokens;  // T x D, CLS at row 0
    Value cls;     // 1 x D
};

class ImageEncoder {
public:
    ImageEncoder(const ImageEncoderConfig& cfg, std::uint64_t seed);
    // Clone another encoder's parameters; trainable=false builds the frozen
    // momentum twin.
    ImageEncoder(const ImageEncoderConfig& cfg, const nn::ParamStore& src, bool trainable);

    const ImageEncoderConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

    // patches: patch_count x patch_dim (graph value, so decoder outputs can
    // flow through). visible marks patch slots kept from the input; masked
    // slots carry the learned mask token and never read their pixels.
    EncodeOutput encode_patches(const Value& patches,
                                const std::vector<std::uint8_t>* visible = nullptr) const;
    EncodeOutput encode(const Image& img, const std::vector<std::uint8_t>* visible = nullptr) const;

private:
    void bind();
    ImageEncoderConfig cfg_;
    nn::ParamStore params_;
    Value patch_w_, patch_b_, cls_, pos_, mask_token_;
    std::vector<nn::EncoderBlock> blocks_;
    nn::LayerNorm final_ln_;
};

struct TextEncodeOutput {
    Value tokens;     // L x D including CLS at row 0
    Value cls;        // 1 x D
    Value pad_mask;   // 1 x L additive mask, valid only when has_pad_mask
    bool has_pad_mask = false;
    bool empty_caption = false;
};

class TextEncoder {
public:
    TextEncoder(const TextEncoderConfig& cfg, std::uint64_t seed);
    TextEncoder(const TextEncoderConfig& cfg, const nn::ParamStore& src, bool trainable);

    const TextEncoderConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

    TextEncodeOutput encode(const std::vector<int>& token_ids) const;
    TextEncodeOutput encode(const std::string& caption) const;

private:
    void bind();
    TextEncoderConfig cfg_;
    nn::ParamStore params_;
    Value tok_emb_, pos_;
    std::vector<nn::EncoderBlock> blocks_;
    nn::LayerNorm final_ln_;
};

// Linear, bias-free projection into the shared embedding space.
struct ProjectionHead {
    Value w;  // proj_dim x embed_dim

    static ProjectionHead create(nn::ParamStore& store, const std::string& name, int embed_dim,
                                 int proj_dim, Rng& rng, double stddev = 0.02);
    static ProjectionHead from_store(const nn::ParamStore& store, const std::string& name);

    struct Out {
        Value z;
        Value zhat;
    };
    Out project(const Value& h) const;
};

// theta' <- m * theta' + (1 - m) * theta. Momentum parameters are frozen
// leaves; they never receive gradients.
void ema_update(const nn::ParamStore& online, nn::ParamStore& momentum, double m);

}  // namespace mmreid::enc
