#include "mmreid/encoders.hpp"

#include <cctype>
#include <stdexcept>

namespace mmreid::enc {

namespace {

constexpr double kMaskedOut = -1e30;  // exp() underflows to exactly 0

}  // namespace

void ImageEncoderConfig::validate() const {
    if (height <= 0 || width <= 0 || patch <= 0) {
        throw std::invalid_argument("ImageEncoderConfig: non-positive dimensions");
    }
    if (height % patch != 0 || width % patch != 0) {
        throw std::invalid_argument("ImageEncoderConfig: image " + std::to_string(height) + "x" +
                                    std::to_string(width) + " not divisible by patch " +
                                    std::to_string(patch));
    }
    if (embed_dim % heads != 0) {
        throw std::invalid_argument("ImageEncoderConfig: embed_dim " + std::to_string(embed_dim) +
                                    " not divisible by heads " + std::to_string(heads));
    }
    if (depth < 1) throw std::invalid_argument("ImageEncoderConfig: depth must be >= 1");
}

void TextEncoderConfig::validate() const {
    if (vocab.size() < 3) throw std::invalid_argument("TextEncoderConfig: vocab missing reserved entries");
    if (embed_dim % heads != 0) {
        throw std::invalid_argument("TextEncoderConfig: embed_dim not divisible by heads");
    }
    if (max_len < 1 || depth < 1) throw std::invalid_argument("TextEncoderConfig: bad max_len/depth");
}

Vocab Vocab::build(const std::vector<std::string>& content_words) {
    Vocab v;
    v.words = {"[CLS]", "[PAD]", "[UNK]"};
    for (const auto& w : content_words) {
        if (v.index.count(w) || w == "[CLS]" || w == "[PAD]" || w == "[UNK]") continue;
        v.index[w] = static_cast<int>(v.words.size());
        v.words.push_back(w);
    }
    v.index["[CLS]"] = kCls;
    v.index["[PAD]"] = kPad;
    v.index["[UNK]"] = kUnk;
    return v;
}

std::vector<int> Vocab::encode(const std::string& caption) const {
    std::vector<int> ids;
    std::string word;
    auto flush = [&] {
        if (word.empty()) return;
        auto it = index.find(word);
        ids.push_back(it == index.end() ? kUnk : it->second);
        word.clear();
    };
    for (char ch : caption) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        } else {
            flush();
        }
    }
    flush();
    return ids;
}

// ----------------------------------------------------------- ImageEncoder

ImageEncoder::ImageEncoder(const ImageEncoderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng = derive_rng(seed, "image_encoder");
    const int d = cfg_.embed_dim;
    const double sd = cfg_.init_stddev;
    nn::init_normal(params_, "patch_embed.w", d, cfg_.patch_dim(), rng, sd);
    nn::init_const(params_, "patch_embed.b", 1, d, 0.0);
    nn::init_normal(params_, "cls", 1, d, rng, sd);
    nn::init_normal(params_, "pos", cfg_.tokens(), d, rng, sd);
    nn::init_normal(params_, "mask_token", 1, d, rng, sd);
    for (int i = 0; i < cfg_.depth; ++i) {
        nn::EncoderBlock::create(params_, "block" + std::to_string(i), d, cfg_.heads, rng, sd);
    }
    nn::LayerNorm::create(params_, "final_ln", d);
    bind();
}

ImageEncoder::ImageEncoder(const ImageEncoderConfig& cfg, const nn::ParamStore& src, bool trainable)
    : cfg_(cfg), params_(src.clone(trainable)) {
    cfg_.validate();
    bind();
}

void ImageEncoder::bind() {
    patch_w_ = params_.get("patch_embed.w");
    patch_b_ = params_.get("patch_embed.b");
    cls_ = params_.get("cls");
    pos_ = params_.get("pos");
    mask_token_ = params_.get("mask_token");
    blocks_.clear();
    for (int i = 0; i < cfg_.depth; ++i) {
        blocks_.push_back(nn::EncoderBlock::from_store(params_, "block" + std::to_string(i), cfg_.heads));
    }
    final_ln_ = nn::LayerNorm::from_store(params_, "final_ln");
}

EncodeOutput ImageEncoder::encode_patches(const Value& patches,
                                          const std::vector<std::uint8_t>* visible) const {
    const int p = cfg_.patch_count();
    if (patches.rows() != p || patches.cols() != cfg_.patch_dim()) {
        throw std::invalid_argument("encode_patches: expected " + std::to_string(p) + "x" +
                                    std::to_string(cfg_.patch_dim()) + ", got " +
                                    std::to_string(patches.rows()) + "x" + std::to_string(patches.cols()));
    }
    bool all_visible = true;
    if (visible) {
        if (static_cast<int>(visible->size()) != p) {
            throw std::invalid_argument("encode_patches: visible mask length " +
                                        std::to_string(visible->size()) + " != patch count " +
                                        std::to_string(p));
        }
        for (auto f : *visible) {
            if (!f) { all_visible = false; break; }
        }
    }

    Value embedded;
    if (!visible || all_visible) {
        embedded = affine(patches, patch_w_, patch_b_);
    } else {
        // Masked slots carry the shared mask token; their pixels never enter
        // the graph. Consecutive runs keep the node count small.
        std::vector<int> visible_idx;
        for (int i = 0; i < p; ++i) {
            if ((*visible)[static_cast<std::size_t>(i)]) visible_idx.push_back(i);
        }
        Value vis_embedded;
        if (!visible_idx.empty()) {
            vis_embedded = affine(select_rows(patches, visible_idx), patch_w_, patch_b_);
        }
        std::vector<Value> parts;
        int i = 0;
        int vis_cursor = 0;
        while (i < p) {
            const bool run_visible = (*visible)[static_cast<std::size_t>(i)] != 0;
            int j = i;
            while (j < p && ((*visible)[static_cast<std::size_t>(j)] != 0) == run_visible) ++j;
            if (run_visible) {
                parts.push_back(slice_rows(vis_embedded, vis_cursor, vis_cursor + (j - i)));
                vis_cursor += j - i;
            } else {
                parts.push_back(repeat_rows(mask_token_, j - i));
            }
            i = j;
        }
        embedded = concat_rows(parts);
    }

    Value x = add(concat_rows({cls_, embedded}), pos_);
    for (const auto& block : blocks_) x = block.forward(x);
    x = final_ln_.forward(x);
    return {x, slice_rows(x, 0, 1)};
}

EncodeOutput ImageEncoder::encode(const Image& img, const std::vector<std::uint8_t>* visible) const {
    if (img.height != cfg_.height || img.width != cfg_.width) {
        throw std::invalid_argument("encode: image " + std::to_string(img.height) + "x" +
                                    std::to_string(img.width) + " does not match config " +
                                    std::to_string(cfg_.height) + "x" + std::to_string(cfg_.width));
    }
    Value patches = Value::constant(cfg_.patch_count(), cfg_.patch_dim(), patchify(img, cfg_.patch));
    return encode_patches(patches, visible);
}

// ------------------------------------------------------------ TextEncoder

TextEncoder::TextEncoder(const TextEncoderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng = derive_rng(seed, "text_encoder");
    const int d = cfg_.embed_dim;
    const double sd = cfg_.init_stddev;
    nn::init_normal(params_, "tok_emb", cfg_.vocab.size(), d, rng, sd);
    nn::init_normal(params_, "pos", cfg_.max_len + 1, d, rng, sd);
    for (int i = 0; i < cfg_.depth; ++i) {
        nn::EncoderBlock::create(params_, "block" + std::to_string(i), d, cfg_.heads, rng, sd);
    }
    nn::LayerNorm::create(params_, "final_ln", d);
    bind();
}

TextEncoder::TextEncoder(const TextEncoderConfig& cfg, const nn::ParamStore& src, bool trainable)
    : cfg_(cfg), params_(src.clone(trainable)) {
    cfg_.validate();
    bind();
}

void TextEncoder::bind() {
    tok_emb_ = params_.get("tok_emb");
    pos_ = params_.get("pos");
    blocks_.clear();
    for (int i = 0; i < cfg_.depth; ++i) {
        blocks_.push_back(nn::EncoderBlock::from_store(params_, "block" + std::to_string(i), cfg_.heads));
    }
    final_ln_ = nn::LayerNorm::from_store(params_, "final_ln");
}

TextEncodeOutput TextEncoder::encode(const std::vector<int>& token_ids) const {
    if (static_cast<int>(token_ids.size()) > cfg_.max_len) {
        throw std::invalid_argument("TextEncoder: caption of " + std::to_string(token_ids.size()) +
                                    " tokens exceeds max_len " + std::to_string(cfg_.max_len));
    }
    std::vector<int> seq{Vocab::kCls};
    bool any_content = false;
    std::vector<std::size_t> pad_positions;
    for (int id : token_ids) {
        if (id < 0 || id >= cfg_.vocab.size()) {
            throw std::invalid_argument("TextEncoder: token id " + std::to_string(id) + " out of vocab");
        }
        if (id == Vocab::kPad) {
            pad_positions.push_back(seq.size());
        } else {
            any_content = true;
        }
        seq.push_back(id);
    }

    TextEncodeOutput out;
    out.empty_caption = !any_content;

    const int len = static_cast<int>(seq.size());
    Value x = add(select_rows(tok_emb_, seq), slice_rows(pos_, 0, len));

    const Value* mask_ptr = nullptr;
    if (!pad_positions.empty()) {
        std::vector<double> mask(static_cast<std::size_t>(len), 0.0);
        for (std::size_t pos : pad_positions) mask[pos] = kMaskedOut;
        out.pad_mask = Value::constant(1, len, std::move(mask), "pad_mask");
        out.has_pad_mask = true;
        mask_ptr = &out.pad_mask;
    }

    for (const auto& block : blocks_) x = block.forward(x, mask_ptr);
    x = final_ln_.forward(x);
    out.tokens = x;
    out.cls = slice_rows(x, 0, 1);
    return out;
}

TextEncodeOutput TextEncoder::encode(const std::string& caption) const {
    return encode(cfg_.vocab.encode(caption));
}

// --------------------------------------------------------- ProjectionHead

ProjectionHead ProjectionHead::create(nn::ParamStore& store, const std::string& name, int embed_dim,
                                      int proj_dim, Rng& rng, double stddev) {
    ProjectionHead h;
    h.w = nn::init_normal(store, name + ".w", proj_dim, embed_dim, rng, stddev);
    return h;
}

ProjectionHead ProjectionHead::from_store(const nn::ParamStore& store, const std::string& name) {
    ProjectionHead h;
    h.w = store.get(name + ".w");
    return h;
}

ProjectionHead::Out ProjectionHead::project(const Value& h) const {
    Value z = affine(h, w);
    return {z, l2_normalize_rows(z)};
}

void ema_update(const nn::ParamStore& online, nn::ParamStore& momentum, double m) {
    if (m < 0.0 || m > 1.0) throw std::invalid_argument("ema_update: m must be in [0,1]");
    momentum.ema_from(online, m);
}

}  // namespace mmreid::enc
