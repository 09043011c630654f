#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mmreid/image.hpp"

namespace mmreid::data {

inline constexpr int kNoCamera = -1;

// The identity essence: identical specs render identical captions.
struct AttributeSpec {
    int shirt_color = 0;
    int pants_color = 0;
    int accessory = 0;  // 0 = none
    int build = 0;

    bool operator==(const AttributeSpec&) const = default;
};

const std::vector<std::pair<std::string, std::array<double, 3>>>& shirt_palette();
const std::vector<std::pair<std::string, std::array<double, 3>>>& pants_palette();
const std::vector<std::pair<std::string, std::array<double, 3>>>& accessory_palette();  // [0] = none
const std::vector<std::string>& build_names();

// "a person wearing a {shirt} shirt and {pants} pants[, carrying a {accessory}]"
std::string caption_for(const AttributeSpec& spec);
// Every word the caption grammar can emit; feeds the text encoder vocab.
std::vector<std::string> caption_vocabulary();

// Per-camera photometric fingerprint, deterministic in (corpus seed, camera).
struct CameraModel {
    double brightness = 0.0;
    std::array<double, 3> gain = {1.0, 1.0, 1.0};
    double blur_sigma = 0.0;
    double noise_sigma = 0.0;

    static CameraModel derive(std::uint64_t corpus_seed, int camera_id);
};

struct SampleRecord {
    Image image;
    int identity = 0;
    int camera = kNoCamera;
    std::string domain;
    std::string caption;  // empty = no caption
    std::string image_path;

    bool has_caption() const { return !caption.empty(); }
};

struct CorpusSpec {
    int n_ids = 16;
    int cameras = 1;  // 1 -> records carry camera = NONE
    int images_per_id_per_cam = 2;
    int height = 64;
    int width = 32;
    std::string domain_style = "source";
    std::uint64_t seed = 0;
    bool with_captions = false;
};

struct Corpus {
    std::vector<SampleRecord> records;
    std::map<int, std::map<int, std::vector<int>>> index;  // identity -> camera -> record ids
    std::vector<std::string> warnings;

    std::vector<int> identities() const;
    int camera_count(int identity) const;
    void build_index();
};

// Layered block figure per identity (head / torso by shirt color / legs by
// pants color / accessory marker), small geometric jitter per image, domain
// palette shift, camera transform. Identical seeds give byte-identical
// corpora.
Corpus generate_corpus(const CorpusSpec& spec);

// Images as binary PPM plus a JSON-lines manifest.
void write_corpus(const Corpus& corpus, const std::string& dir);
Corpus load_manifest(const std::string& manifest_path, bool text_enabled);

// Seeded pipeline: pad-and-crop shift, horizontal flip p=0.5, Gaussian blur
// p=0.5 with sigma in [0.1, 2.0], grayscale p=0.2; output clamped to [0,1].
Image augment(const Image& img, std::uint64_t seed);

Image hflip(const Image& img);
Image shift_pad_crop(const Image& img, int dx, int dy);
Image gaussian_blur(const Image& img, double sigma);
Image to_grayscale(const Image& img);

void write_ppm(const Image& img, const std::string& path);
Image read_ppm(const std::string& path);

}  // namespace mmreid::data
