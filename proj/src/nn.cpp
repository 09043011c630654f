#include "mmreid/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace mmreid::nn {

Value ParamStore::add(const std::string& name, int rows, int cols, std::vector<double> data, bool trainable) {
    if (has(name)) throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
    Value v = trainable ? Value::param(rows, cols, std::move(data))
                        : Value::constant(rows, cols, std::move(data), "frozen");
    items_.emplace_back(name, v);
    return v;
}

Value ParamStore::get(const std::string& name) const {
    for (const auto& [n, v] : items_) {
        if (n == name) return v;
    }
    throw std::out_of_range("ParamStore: no parameter '" + name + "'");
}

bool ParamStore::has(const std::string& name) const {
    for (const auto& [n, v] : items_) {
        if (n == name) return true;
    }
    return false;
}

ParamStore ParamStore::clone(bool trainable) const {
    ParamStore out;
    for (const auto& [n, v] : items_) {
        out.add(n, v.rows(), v.cols(), v.data(), trainable);
    }
    return out;
}

void ParamStore::copy_from(const ParamStore& src) {
    if (src.items_.size() != items_.size()) {
        throw std::invalid_argument("ParamStore::copy_from: parameter trees are not shape-congruent");
    }
    for (std::size_t i = 0; i < items_.size(); ++i) {
        auto& [n, v] = items_[i];
        const auto& [sn, sv] = src.items_[i];
        if (n != sn || v.rows() != sv.rows() || v.cols() != sv.cols()) {
            throw std::invalid_argument("ParamStore::copy_from: mismatch at '" + n + "' vs '" + sn + "'");
        }
        v.leaf_data() = sv.data();
    }
}

void ParamStore::ema_from(const ParamStore& online, double m) {
    if (online.items_.size() != items_.size()) {
        throw std::invalid_argument("ParamStore::ema_from: parameter trees are not shape-congruent");
    }
    for (std::size_t i = 0; i < items_.size(); ++i) {
        auto& [n, v] = items_[i];
        const auto& [sn, sv] = online.items_[i];
        if (n != sn || v.rows() != sv.rows() || v.cols() != sv.cols()) {
            throw std::invalid_argument("ParamStore::ema_from: mismatch at '" + n + "' vs '" + sn + "'");
        }
        auto& dst = v.leaf_data();
        const auto& src = sv.data();
        for (std::size_t j = 0; j < dst.size(); ++j) {
            dst[j] = m * dst[j] + (1.0 - m) * src[j];
        }
    }
}

void ParamStore::zero_grads() {
    for (auto& [n, v] : items_) {
        if (v.requires_grad()) v.zero_grad();
    }
}

std::int64_t ParamStore::total_size() const {
    std::int64_t total = 0;
    for (const auto& [n, v] : items_) total += v.size();
    return total;
}

Value init_normal(ParamStore& store, const std::string& name, int rows, int cols, Rng& rng,
                  double stddev, bool trainable) {
    std::vector<double> d(static_cast<std::size_t>(rows) * cols);
    for (auto& v : d) v = rng.normal(0.0, stddev);
    return store.add(name, rows, cols, std::move(d), trainable);
}

Value init_const(ParamStore& store, const std::string& name, int rows, int cols, double v, bool trainable) {
    return store.add(name, rows, cols,
                     std::vector<double>(static_cast<std::size_t>(rows) * cols, v), trainable);
}

Linear Linear::create(ParamStore& store, const std::string& prefix, int in, int out, Rng& rng,
                      double stddev, bool bias) {
    Linear l;
    l.w = init_normal(store, prefix + ".w", out, in, rng, stddev);
    if (bias) l.b = init_const(store, prefix + ".b", 1, out, 0.0);
    return l;
}

Linear Linear::from_store(const ParamStore& store, const std::string& prefix, bool bias) {
    Linear l;
    l.w = store.get(prefix + ".w");
    if (bias) l.b = store.get(prefix + ".b");
    return l;
}

LayerNorm LayerNorm::create(ParamStore& store, const std::string& prefix, int dim) {
    LayerNorm ln;
    ln.gamma = init_const(store, prefix + ".gamma", 1, dim, 1.0);
    ln.beta = init_const(store, prefix + ".beta", 1, dim, 0.0);
    return ln;
}

LayerNorm LayerNorm::from_store(const ParamStore& store, const std::string& prefix) {
    LayerNorm ln;
    ln.gamma = store.get(prefix + ".gamma");
    ln.beta = store.get(prefix + ".beta");
    return ln;
}

MultiHeadAttention MultiHeadAttention::create(ParamStore& store, const std::string& prefix, int dim,
                                              int heads, Rng& rng, double stddev) {
    if (dim % heads != 0) {
        throw std::invalid_argument("MultiHeadAttention: dim " + std::to_string(dim) +
                                    " not divisible by heads " + std::to_string(heads));
    }
    MultiHeadAttention a;
    a.heads = heads;
    a.q = Linear::create(store, prefix + ".q", dim, dim, rng, stddev);
    a.k = Linear::create(store, prefix + ".k", dim, dim, rng, stddev);
    a.v = Linear::create(store, prefix + ".v", dim, dim, rng, stddev);
    a.o = Linear::create(store, prefix + ".o", dim, dim, rng, stddev);
    return a;
}

MultiHeadAttention MultiHeadAttention::from_store(const ParamStore& store, const std::string& prefix,
                                                  int heads) {
    MultiHeadAttention a;
    a.heads = heads;
    a.q = Linear::from_store(store, prefix + ".q");
    a.k = Linear::from_store(store, prefix + ".k");
    a.v = Linear::from_store(store, prefix + ".v");
    a.o = Linear::from_store(store, prefix + ".o");
    return a;
}

Value MultiHeadAttention::forward(const Value& x, const Value& kv, const Value* additive_mask) const {
    const int dim = q.w.rows();
    const int dh = dim / heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    Value Q = q.forward(x);
    Value K = k.forward(kv);
    Value V = v.forward(kv);
    std::vector<Value> head_outputs;
    head_outputs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        Value qh = slice_cols(Q, h * dh, (h + 1) * dh);
        Value kh = slice_cols(K, h * dh, (h + 1) * dh);
        Value vh = slice_cols(V, h * dh, (h + 1) * dh);
        Value logits = scale(matmul(qh, transpose(kh)), inv_sqrt_dh);
        if (additive_mask) logits = add_row_bias(logits, *additive_mask);
        head_outputs.push_back(matmul(softmax_rows(logits), vh));
    }
    return o.forward(concat_cols(head_outputs));
}

FeedForward FeedForward::create(ParamStore& store, const std::string& prefix, int dim, int hidden,
                                Rng& rng, double stddev) {
    FeedForward f;
    f.fc1 = Linear::create(store, prefix + ".fc1", dim, hidden, rng, stddev);
    f.fc2 = Linear::create(store, prefix + ".fc2", hidden, dim, rng, stddev);
    return f;
}

FeedForward FeedForward::from_store(const ParamStore& store, const std::string& prefix) {
    FeedForward f;
    f.fc1 = Linear::from_store(store, prefix + ".fc1");
    f.fc2 = Linear::from_store(store, prefix + ".fc2");
    return f;
}

EncoderBlock EncoderBlock::create(ParamStore& store, const std::string& prefix, int dim, int heads,
                                  Rng& rng, double stddev) {
    EncoderBlock b;
    b.ln1 = LayerNorm::create(store, prefix + ".ln1", dim);
    b.attn = MultiHeadAttention::create(store, prefix + ".attn", dim, heads, rng, stddev);
    b.ln2 = LayerNorm::create(store, prefix + ".ln2", dim);
    b.ff = FeedForward::create(store, prefix + ".ff", dim, 4 * dim, rng, stddev);
    return b;
}

EncoderBlock EncoderBlock::from_store(const ParamStore& store, const std::string& prefix, int heads) {
    EncoderBlock b;
    b.ln1 = LayerNorm::from_store(store, prefix + ".ln1");
    b.attn = MultiHeadAttention::from_store(store, prefix + ".attn", heads);
    b.ln2 = LayerNorm::from_store(store, prefix + ".ln2");
    b.ff = FeedForward::from_store(store, prefix + ".ff");
    return b;
}

Value EncoderBlock::forward(const Value& x, const Value* additive_mask) const {
    Value h = ln1.forward(x);
    Value y = add(x, attn.forward(h, h, additive_mask));
    return add(y, ff.forward(ln2.forward(y)));
}

DecoderBlock DecoderBlock::create(ParamStore& store, const std::string& prefix, int dim, int heads,
                                  Rng& rng, double stddev) {
    DecoderBlock b;
    b.ln1 = LayerNorm::create(store, prefix + ".ln1", dim);
    b.self_attn = MultiHeadAttention::create(store, prefix + ".self", dim, heads, rng, stddev);
    b.ln_cross = LayerNorm::create(store, prefix + ".lnc", dim);
    b.cross_attn = MultiHeadAttention::create(store, prefix + ".cross", dim, heads, rng, stddev);
    b.ln2 = LayerNorm::create(store, prefix + ".ln2", dim);
    b.ff = FeedForward::create(store, prefix + ".ff", dim, 4 * dim, rng, stddev);
    return b;
}

DecoderBlock DecoderBlock::from_store(const ParamStore& store, const std::string& prefix, int heads) {
    DecoderBlock b;
    b.ln1 = LayerNorm::from_store(store, prefix + ".ln1");
    b.self_attn = MultiHeadAttention::from_store(store, prefix + ".self", heads);
    b.ln_cross = LayerNorm::from_store(store, prefix + ".lnc");
    b.cross_attn = MultiHeadAttention::from_store(store, prefix + ".cross", heads);
    b.ln2 = LayerNorm::from_store(store, prefix + ".ln2");
    b.ff = FeedForward::from_store(store, prefix + ".ff");
    return b;
}

Value DecoderBlock::forward(const Value& x, const Value& text_tokens, const Value* text_mask) const {
    Value h = ln1.forward(x);
    Value y = add(x, self_attn.forward(h, h, nullptr));
    y = add(y, cross_attn.forward(ln_cross.forward(y), text_tokens, text_mask));
    return add(y, ff.forward(ln2.forward(y)));
}

}  // namespace mmreid::nn
