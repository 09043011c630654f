#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mmreid/rng.hpp"
#include "mmreid/tensor.hpp"

namespace mmreid::nn {

// Ordered, named registry of trainable leaf tensors. The optimizer, EMA
// update and checkpoint code all walk this list; order is construction order
// and therefore deterministic.
class ParamStore {
public:
    Value add(const std::string& name, int rows, int cols, std::vector<double> data, bool trainable = true);
    Value get(const std::string& name) const;
    bool has(const std::string& name) const;
    const std::vector<std::pair<std::string, Value>>& items() const { return items_; }

    // Deep copy with the same names/shapes; trainable=false yields frozen
    // leaves (the momentum twin).
    ParamStore clone(bool trainable) const;
    // Structural match required: same names, shapes, order.
    void copy_from(const ParamStore& src);
    // theta' <- m * theta' + (1 - m) * theta, elementwise.
    void ema_from(const ParamStore& online, double m);
    void zero_grads();
    std::int64_t total_size() const;

private:
    std::vector<std::pair<std::string, Value>> items_;
};

Value init_normal(ParamStore& store, const std::string& name, int rows, int cols, Rng& rng,
                  double stddev, bool trainable = true);
Value init_const(ParamStore& store, const std::string& name, int rows, int cols, double v,
                 bool trainable = true);

struct Linear {
    Value w;  // out x in
    Value b;  // 1 x out, invalid when bias-free
    static Linear create(ParamStore& store, const std::string& prefix, int in, int out, Rng& rng,
                         double stddev = 0.02, bool bias = true);
    static Linear from_store(const ParamStore& store, const std::string& prefix, bool bias = true);
    Value forward(const Value& x) const { return affine(x, w, b); }
};

struct LayerNorm {
    Value gamma;
    Value beta;
    static LayerNorm create(ParamStore& store, const std::string& prefix, int dim);
    static LayerNorm from_store(const ParamStore& store, const std::string& prefix);
    Value forward(const Value& x) const { return layer_norm_rows(x, gamma, beta); }
};

// Standard scaled dot-product multi-head attention. Queries come from x
// (T x D), keys/values from kv (S x D). The optional additive mask (1 x S)
// is added to every logit row before the softmax; -1e30 entries underflow to
// exactly zero attention weight.
struct MultiHeadAttention {
    int heads = 1;
    Linear q, k, v, o;
    static MultiHeadAttention create(ParamStore& store, const std::string& prefix, int dim, int heads,
                                     Rng& rng, double stddev = 0.02);
    static MultiHeadAttention from_store(const ParamStore& store, const std::string& prefix, int heads);
    Value forward(const Value& x, const Value& kv, const Value* additive_mask = nullptr) const;
};

struct FeedForward {
    Linear fc1, fc2;
    static FeedForward create(ParamStore& store, const std::string& prefix, int dim, int hidden,
                              Rng& rng, double stddev = 0.02);
    static FeedForward from_store(const ParamStore& store, const std::string& prefix);
    Value forward(const Value& x) const { return fc2.forward(gelu(fc1.forward(x))); }
};

// Pre-norm transformer encoder block: x += attn(ln1(x)); x += ff(ln2(x)).
struct EncoderBlock {
    LayerNorm ln1, ln2;
    MultiHeadAttention attn;
    FeedForward ff;
    static EncoderBlock create(ParamStore& store, const std::string& prefix, int dim, int heads,
                               Rng& rng, double stddev = 0.02);
    static EncoderBlock from_store(const ParamStore& store, const std::string& prefix, int heads);
    Value forward(const Value& x, const Value* additive_mask = nullptr) const;
};

// Pre-norm decoder block: self-attention, cross-attention over text tokens,
// feed-forward.
struct DecoderBlock {
    LayerNorm ln1, ln_cross, ln2;
    MultiHeadAttention self_attn, cross_attn;
    FeedForward ff;
    static DecoderBlock create(ParamStore& store, const std::string& prefix, int dim, int heads,
                               Rng& rng, double stddev = 0.02);
    static DecoderBlock from_store(const ParamStore& store, const std::string& prefix, int heads);
    Value forward(const Value& x, const Value& text_tokens, const Value* text_mask = nullptr) const;
};

}  // namespace mmreid::nn
