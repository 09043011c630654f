#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "mmreid/datakit.hpp"
#include "mmreid/rng.hpp"

using namespace mmreid;
using namespace mmreid::data;
namespace fs = std::filesystem;

namespace {

bool images_equal(const Image& a, const Image& b) {
    return a.height == b.height && a.width == b.width &&
           std::memcmp(a.px.data(), b.px.data(), a.px.size() * sizeof(double)) == 0;
}

CorpusSpec small_spec() {
    CorpusSpec spec;
    spec.n_ids = 16;
    spec.cameras = 3;
    spec.images_per_id_per_cam = 4;
    spec.height = 32;
    spec.width = 16;
    spec.seed = 11;
    return spec;
}

}  // namespace

TEST_CASE("corpus counting and camera ids") {
    auto corpus = generate_corpus(small_spec());
    CHECK(corpus.records.size() == 16 * 3 * 4);
    CHECK(corpus.identities().size() == 16);
    for (const auto& rec : corpus.records) {
        CHECK(rec.camera >= 0);
        CHECK(rec.camera < 3);
        for (double v : rec.image.px) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("single-camera corpora use the NONE camera and carry captions") {
    CorpusSpec spec = small_spec();
    spec.cameras = 1;
    spec.with_captions = true;
    auto corpus = generate_corpus(spec);
    for (const auto& rec : corpus.records) {
        CHECK(rec.camera == kNoCamera);
        CHECK(rec.has_caption());
    }
}

TEST_CASE("generation is byte-identical under the same seed") {
    CorpusSpec spec = small_spec();
    spec.with_captions = true;
    spec.cameras = 1;
    auto a = generate_corpus(spec);
    auto b = generate_corpus(spec);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(images_equal(a.records[i].image, b.records[i].image));
        CHECK(a.records[i].caption == b.records[i].caption);
    }
}

TEST_CASE("captions are a pure function of the attribute spec") {
    AttributeSpec spec{2, 3, 1, 0};
    CHECK(caption_for(spec) == caption_for(spec));
    CHECK(caption_for(spec) == "a person wearing a green shirt and brown pants, carrying a backpack");
    AttributeSpec plain{0, 0, 0, 1};
    CHECK(caption_for(plain) == "a person wearing a red shirt and black pants");
}

TEST_CASE("same identity differs across cameras but shares its caption") {
    CorpusSpec spec = small_spec();
    spec.with_captions = true;
    auto corpus = generate_corpus(spec);
    const auto& cam_map = corpus.index.at(0);
    const auto& r0 = corpus.records[static_cast<std::size_t>(cam_map.at(0)[0])];
    const auto& r1 = corpus.records[static_cast<std::size_t>(cam_map.at(1)[0])];
    CHECK_FALSE(images_equal(r0.image, r1.image));
    CHECK(r0.caption == r1.caption);
}

TEST_CASE("manifest round trip preserves the index") {
    const std::string dir = (fs::temp_directory_path() / "mmreid_corpus_test").string();
    fs::remove_all(dir);
    CorpusSpec spec = small_spec();
    spec.n_ids = 4;
    spec.with_captions = true;
    auto corpus = generate_corpus(spec);
    write_corpus(corpus, dir);

    auto loaded = load_manifest(dir + "/manifest.jsonl", true);
    CHECK(loaded.records.size() == corpus.records.size());
    CHECK(loaded.identities() == corpus.identities());
    for (std::size_t i = 0; i < corpus.records.size(); ++i) {
        CHECK(loaded.records[i].identity == corpus.records[i].identity);
        CHECK(loaded.records[i].camera == corpus.records[i].camera);
        CHECK(loaded.records[i].caption == corpus.records[i].caption);
        // 8-bit quantization: pixels within half a level
        for (int k = 0; k < loaded.records[i].image.size(); ++k) {
            CHECK(std::abs(loaded.records[i].image.px[static_cast<std::size_t>(k)] -
                           corpus.records[i].image.px[static_cast<std::size_t>(k)]) < 0.5 / 255 + 1e-12);
        }
    }
    fs::remove_all(dir);
}

TEST_CASE("manifest validation failures") {
    const std::string dir = (fs::temp_directory_path() / "mmreid_manifest_test").string();
    fs::remove_all(dir);
    fs::create_directories(dir);

    SUBCASE("malformed line reports its number") {
        std::ofstream(dir + "/manifest.jsonl") << "{\"image_path\": \"x.ppm\"\n";
        try {
            load_manifest(dir + "/manifest.jsonl", false);
            FAIL("expected parse error");
        } catch (const std::runtime_error& e) {
            CHECK(std::string(e.what()).find("line 1") != std::string::npos);
        }
    }
    SUBCASE("caption rule enforced when text enabled") {
        std::ofstream(dir + "/manifest.jsonl")
            << R"({"image_path":"a.ppm","identity":0,"camera":null,"domain":"d","caption":null})"
            << "\n";
        CHECK_THROWS_AS(load_manifest(dir + "/manifest.jsonl", true), std::runtime_error);
    }
    SUBCASE("missing image file is named") {
        std::ofstream(dir + "/manifest.jsonl")
            << R"({"image_path":"gone.ppm","identity":0,"camera":0,"domain":"d","caption":null})"
            << "\n";
        try {
            load_manifest(dir + "/manifest.jsonl", false);
            FAIL("expected missing-file error");
        } catch (const std::runtime_error& e) {
            CHECK(std::string(e.what()).find("gone.ppm") != std::string::npos);
        }
    }
    SUBCASE("duplicates are dropped with a warning") {
        Image img(4, 4, 0.5);
        write_ppm(img, dir + "/dup.ppm");
        std::ofstream(dir + "/manifest.jsonl")
            << R"({"image_path":"dup.ppm","identity":3,"camera":0,"domain":"d","caption":null})" << "\n"
            << R"({"image_path":"dup.ppm","identity":3,"camera":0,"domain":"d","caption":null})" << "\n";
        auto corpus = load_manifest(dir + "/manifest.jsonl", false);
        CHECK(corpus.records.size() == 1);
        CHECK(corpus.warnings.size() == 1);
    }
    fs::remove_all(dir);
}

TEST_CASE("augmentation transforms") {
    CorpusSpec spec = small_spec();
    spec.n_ids = 2;
    auto corpus = generate_corpus(spec);
    const Image& img = corpus.records[0].image;

    SUBCASE("horizontal flip is an involution") {
        CHECK(images_equal(hflip(hflip(img)), img));
    }
    SUBCASE("grayscale equalizes channels") {
        Image gray = to_grayscale(img);
        for (int y = 0; y < gray.height; ++y) {
            for (int x = 0; x < gray.width; ++x) {
                CHECK(gray.at(y, x, 0) == gray.at(y, x, 1));
                CHECK(gray.at(y, x, 1) == gray.at(y, x, 2));
            }
        }
    }
    SUBCASE("augment is deterministic in its seed") {
        CHECK(images_equal(augment(img, 99), augment(img, 99)));
        CHECK_FALSE(images_equal(augment(img, 99), augment(img, 100)));
    }
    SUBCASE("augment preserves dimensions and range") {
        for (std::uint64_t s = 0; s < 20; ++s) {
            Image out = augment(img, s);
            CHECK(out.height == img.height);
            CHECK(out.width == img.width);
            for (double v : out.px) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
        }
    }
}

TEST_CASE("ppm io round trip is exact at 8 bits") {
    Image img(6, 5);
    Rng rng(3);
    for (auto& v : img.px) v = rng.uniform();
    const std::string path = (fs::temp_directory_path() / "mmreid_ppm_test.ppm").string();
    write_ppm(img, path);
    Image back = read_ppm(path);
    CHECK(back.height == 6);
    CHECK(back.width == 5);
    Image again = read_ppm(path);
    CHECK(images_equal(back, again));
    write_ppm(back, path);
    CHECK(images_equal(read_ppm(path), back));  // quantized fixed point
    fs::remove(path);
}

TEST_CASE("domain styles shift the palette") {
    CorpusSpec spec = small_spec();
    spec.n_ids = 2;
    spec.cameras = 1;
    auto source = generate_corpus(spec);
    spec.domain_style = "target";
    auto target = generate_corpus(spec);
    CHECK_FALSE(images_equal(source.records[0].image, target.records[0].image));
}
