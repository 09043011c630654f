#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "mmreid/encoders.hpp"
#include "mmreid/gradcheck.hpp"

using namespace mmreid;
using namespace mmreid::enc;

namespace {

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

ImageEncoderConfig tiny_image_cfg() {
    ImageEncoderConfig cfg;
    cfg.height = 16;
    cfg.width = 8;
    cfg.patch = 4;
    cfg.embed_dim = 16;
    cfg.depth = 2;
    cfg.heads = 2;
    return cfg;
}

TextEncoderConfig tiny_text_cfg() {
    TextEncoderConfig cfg;
    cfg.vocab = Vocab::build({"a", "person", "wearing", "red", "blue", "shirt", "pants"});
    cfg.max_len = 10;
    cfg.embed_dim = 16;
    cfg.depth = 2;
    cfg.heads = 2;
    return cfg;
}

Image test_image(int h, int w, std::uint64_t seed) {
    Image img(h, w);
    Rng rng(seed);
    for (auto& v : img.px) v = rng.uniform();
    return img;
}

}  // namespace

TEST_CASE("config invariants are enforced") {
    ImageEncoderConfig bad = tiny_image_cfg();
    bad.patch = 5;
    CHECK_THROWS_AS(ImageEncoder(bad, 1), std::invalid_argument);
    bad = tiny_image_cfg();
    bad.heads = 3;
    CHECK_THROWS_AS(ImageEncoder(bad, 1), std::invalid_argument);
}

TEST_CASE("zero image yields a finite CLS vector") {
    ImageEncoder encoder(tiny_image_cfg(), 7);
    Image zero(16, 8, 0.0);
    auto out = encoder.encode(zero);
    CHECK(out.cls.rows() == 1);
    CHECK(out.cls.cols() == 16);
    for (double v : out.cls.data()) CHECK(std::isfinite(v));
}

TEST_CASE("all-visible mask equals no mask bitwise") {
    ImageEncoder encoder(tiny_image_cfg(), 7);
    Image img = test_image(16, 8, 3);
    std::vector<std::uint8_t> all(8, 1);
    auto plain = encoder.encode(img);
    auto masked = encoder.encode(img, &all);
    CHECK(bitwise_equal(plain.tokens.data(), masked.tokens.data()));
    CHECK(bitwise_equal(plain.cls.data(), masked.cls.data()));
}

TEST_CASE("permuting two patches changes the output") {
    ImageEncoderConfig cfg = tiny_image_cfg();
    ImageEncoder encoder(cfg, 7);
    Image img = test_image(16, 8, 4);
    auto patches = patchify(img, cfg.patch);
    const int dim = cfg.patch_dim();
    auto swapped = patches;
    for (int j = 0; j < dim; ++j) std::swap(swapped[j], swapped[static_cast<std::size_t>(dim) + j]);
    auto a = encoder.encode_patches(Value::constant(cfg.patch_count(), dim, patches));
    auto b = encoder.encode_patches(Value::constant(cfg.patch_count(), dim, swapped));
    CHECK_FALSE(bitwise_equal(a.cls.data(), b.cls.data()));
}

TEST_CASE("masked patch slots ignore pixel content bitwise") {
    ImageEncoderConfig cfg = tiny_image_cfg();
    ImageEncoder encoder(cfg, 7);
    Image img = test_image(16, 8, 5);
    std::vector<std::uint8_t> visible = {1, 0, 1, 0, 0, 1, 0, 1};
    auto base = encoder.encode(img, &visible);

    Image noisy = img;
    Rng rng(99);
    for (int p = 0; p < cfg.patch_count(); ++p) {
        if (visible[static_cast<std::size_t>(p)]) continue;
        const int py = p / cfg.patches_x(), px = p % cfg.patches_x();
        for (int y = 0; y < cfg.patch; ++y) {
            for (int x = 0; x < cfg.patch; ++x) {
                for (int c = 0; c < 3; ++c) {
                    noisy.at(py * cfg.patch + y, px * cfg.patch + x, c) = rng.uniform();
                }
            }
        }
    }
    auto perturbed = encoder.encode(noisy, &visible);
    CHECK(bitwise_equal(base.tokens.data(), perturbed.tokens.data()));
    CHECK(bitwise_equal(base.cls.data(), perturbed.cls.data()));
}

TEST_CASE("mask length must match patch count") {
    ImageEncoder encoder(tiny_image_cfg(), 7);
    Image img = test_image(16, 8, 6);
    std::vector<std::uint8_t> wrong(5, 1);
    CHECK_THROWS_AS(encoder.encode(img, &wrong), std::invalid_argument);
}

TEST_CASE("identical captions produce identical CLS vectors") {
    TextEncoder text(tiny_text_cfg(), 11);
    auto a = text.encode("a person wearing a red shirt");
    auto b = text.encode("a person wearing a red shirt");
    CHECK(bitwise_equal(a.cls.data(), b.cls.data()));
}

TEST_CASE("trailing PAD tokens leave the CLS unchanged") {
    TextEncoder text(tiny_text_cfg(), 11);
    std::vector<int> ids = text.config().vocab.encode("red shirt");
    auto plain = text.encode(ids);
    auto padded_ids = ids;
    padded_ids.push_back(Vocab::kPad);
    padded_ids.push_back(Vocab::kPad);
    auto padded = text.encode(padded_ids);
    CHECK(bitwise_equal(plain.cls.data(), padded.cls.data()));
    CHECK(padded.has_pad_mask);
}

TEST_CASE("empty caption encodes as CLS alone and is flagged") {
    TextEncoder text(tiny_text_cfg(), 11);
    auto out = text.encode(std::vector<int>{});
    CHECK(out.empty_caption);
    CHECK(out.tokens.rows() == 1);
    for (double v : out.cls.data()) CHECK(std::isfinite(v));
}

TEST_CASE("unknown words map to UNK") {
    TextEncoder text(tiny_text_cfg(), 11);
    auto with_unknown = text.config().vocab.encode("red dragon");
    std::vector<int> expected = {text.config().vocab.index.at("red"), Vocab::kUnk};
    CHECK(with_unknown == expected);
}

TEST_CASE("captions over max_len are rejected") {
    TextEncoder text(tiny_text_cfg(), 11);
    std::vector<int> too_long(11, Vocab::kUnk);
    CHECK_THROWS_AS(text.encode(too_long), std::invalid_argument);
}

TEST_CASE("different captions are not perfectly aligned") {
    TextEncoder text(tiny_text_cfg(), 11);
    auto red = l2_normalize_rows(text.encode("red shirt").cls);
    auto blue = l2_normalize_rows(text.encode("blue shirt").cls);
    double cos = 0.0;
    for (int j = 0; j < red.cols(); ++j) cos += red.at(0, j) * blue.at(0, j);
    CHECK(cos < 1.0 - 1e-9);
}

TEST_CASE("projection with identity weights is a passthrough") {
    nn::ParamStore store;
    Rng rng(5);
    auto head = ProjectionHead::create(store, "w_img", 4, 4, rng);
    auto& w = head.w.leaf_data();
    std::fill(w.begin(), w.end(), 0.0);
    for (int i = 0; i < 4; ++i) w[static_cast<std::size_t>(i) * 4 + i] = 1.0;
    Value h = Value::constant(3, 4, {1, 2, 3, 4, -1, 0, 2, 5, 0.5, 0.25, -2, 1});
    auto out = head.project(h);
    CHECK(bitwise_equal(out.z.data(), h.data()));
    for (int i = 0; i < 3; ++i) {
        double norm = 0.0;
        for (int j = 0; j < 4; ++j) norm += out.zhat.at(i, j) * out.zhat.at(i, j);
        CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-10);
    }
}

TEST_CASE("projection gradient matches finite differences") {
    nn::ParamStore store;
    Rng rng(6);
    auto head = ProjectionHead::create(store, "w", 6, 3, rng, 0.2);
    std::vector<double> hd(static_cast<std::size_t>(4) * 6);
    for (auto& v : hd) v = rng.normal(0.0, 1.0);
    Value h = Value::constant(4, 6, std::move(hd));
    auto report = check_gradients([&] {
        auto out = head.project(h);
        return sum_all(mul(out.z, out.z));
    }, {{"w", head.w}}, 1e-5, 1e-4);
    CHECK(report.pass);
}

TEST_CASE("ema update endpoints and midpoint") {
    ImageEncoderConfig cfg = tiny_image_cfg();
    ImageEncoder online(cfg, 21);
    ImageEncoder momentum(cfg, online.params(), false);

    // perturb online so the stores differ
    for (auto& [name, v] : online.params().items()) {
        for (auto& x : v.leaf_data()) x += 0.125;
    }

    SUBCASE("m=0 copies exactly") {
        ema_update(online.params(), momentum.params(), 0.0);
        for (std::size_t i = 0; i < online.params().items().size(); ++i) {
            CHECK(bitwise_equal(momentum.params().items()[i].second.data(),
                                online.params().items()[i].second.data()));
        }
    }
    SUBCASE("m=1 freezes") {
        auto before = momentum.params().items()[0].second.data();
        ema_update(online.params(), momentum.params(), 1.0);
        CHECK(bitwise_equal(momentum.params().items()[0].second.data(), before));
    }
    SUBCASE("midpoint") {
        auto& mv = momentum.params().items()[0].second;
        auto& ov = online.params().items()[0].second;
        std::fill(mv.leaf_data().begin(), mv.leaf_data().end(), 2.0);
        std::fill(ov.leaf_data().begin(), ov.leaf_data().end(), 4.0);
        ema_update(online.params(), momentum.params(), 0.5);
        CHECK(mv.data()[0] == doctest::Approx(3.0));
    }
    SUBCASE("convex combination bounds") {
        auto lows = momentum.params().items()[1].second.data();
        auto highs = online.params().items()[1].second.data();
        ema_update(online.params(), momentum.params(), 0.73);
        const auto& mixed = momentum.params().items()[1].second.data();
        for (std::size_t i = 0; i < mixed.size(); ++i) {
            CHECK(mixed[i] >= std::min(lows[i], highs[i]) - 1e-15);
            CHECK(mixed[i] <= std::max(lows[i], highs[i]) + 1e-15);
        }
    }
}

TEST_CASE("ema rejects shape-incongruent trees") {
    ImageEncoderConfig cfg = tiny_image_cfg();
    ImageEncoder online(cfg, 21);
    ImageEncoderConfig other = cfg;
    other.depth = 1;
    ImageEncoder small(other, 22);
    CHECK_THROWS_AS(ema_update(online.params(), small.params(), 0.5), std::invalid_argument);
}

TEST_CASE("momentum encoder receives no gradient") {
    ImageEncoderConfig cfg = tiny_image_cfg();
    ImageEncoder online(cfg, 31);
    ImageEncoder momentum(cfg, online.params(), false);
    std::vector<std::vector<double>> before;
    for (const auto& [n, v] : momentum.params().items()) before.push_back(v.data());

    Image img = test_image(16, 8, 8);
    auto out = momentum.encode(img);
    Value loss = sum_all(mul(out.cls, out.cls));
    loss.backward();  // no differentiable leaf anywhere: must be a no-op

    std::size_t i = 0;
    for (const auto& [n, v] : momentum.params().items()) {
        CHECK_FALSE(v.has_grad());
        CHECK(bitwise_equal(v.data(), before[i++]));
    }
}

TEST_CASE("same seed reproduces the encoder bitwise") {
    ImageEncoderConfig cfg = tiny_image_cfg();
    ImageEncoder a(cfg, 77);
    ImageEncoder b(cfg, 77);
    Image img = test_image(16, 8, 9);
    CHECK(bitwise_equal(a.encode(img).cls.data(), b.encode(img).cls.data()));
}
