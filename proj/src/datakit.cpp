#include "mmreid/datakit.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "mmreid/rng.hpp"

namespace mmreid::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

void fill_rect(Image& img, int y0, int y1, int x0, int x1, const std::array<double, 3>& color) {
    y0 = std::clamp(y0, 0, img.height);
    y1 = std::clamp(y1, 0, img.height);
    x0 = std::clamp(x0, 0, img.width);
    x1 = std::clamp(x1, 0, img.width);
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = color[static_cast<std::size_t>(c)];
        }
    }
}

// Deterministic per-domain palette shift.
struct DomainStyle {
    std::array<double, 3> background;
    std::array<double, 3> tint;
    double brightness;

    static DomainStyle derive(const std::string& tag) {
        Rng rng = derive_rng(0xD0A411ULL, tag);
        DomainStyle s;
        for (auto& c : s.background) c = rng.uniform(0.05, 0.45);
        for (auto& c : s.tint) c = rng.uniform(0.85, 1.15);
        s.brightness = rng.uniform(-0.06, 0.06);
        return s;
    }
};

Image render_identity(const CorpusSpec& spec, const AttributeSpec& attrs, const DomainStyle& style,
                      Rng& rng) {
    const int h = spec.height;
    const int w = spec.width;
    Image img(h, w);

    // background with slight per-image variation
    std::array<double, 3> bg = style.background;
    const double bg_jitter = rng.uniform(-0.04, 0.04);
    for (auto& c : bg) c = clamp01(c + bg_jitter);
    fill_rect(img, 0, h, 0, w, bg);

    const int cx = w / 2 + rng.uniform_int(5) - 2;
    const int dy = rng.uniform_int(5) - 2;

    const auto& shirt = shirt_palette()[static_cast<std::size_t>(attrs.shirt_color)].second;
    const auto& pants = pants_palette()[static_cast<std::size_t>(attrs.pants_color)].second;
    const std::array<double, 3> skin = {0.91, 0.76, 0.62};

    const int head_r = std::max(2, w / 8) + rng.uniform_int(2);
    const int head_top = h / 16 + 1 + dy;
    const int torso_top = head_top + 2 * head_r + 1;
    const int torso_bottom = torso_top + h * 2 / 5;
    const int torso_half = (attrs.build == 0 ? w / 6 : w / 4) + rng.uniform_int(2);
    const int leg_bottom = h - h / 16;

    fill_rect(img, head_top, head_top + 2 * head_r, cx - head_r, cx + head_r, skin);
    fill_rect(img, torso_top, torso_bottom, cx - torso_half, cx + torso_half, shirt);
    const int leg_w = std::max(2, torso_half / 2);
    fill_rect(img, torso_bottom, leg_bottom, cx - torso_half, cx - torso_half + leg_w, pants);
    fill_rect(img, torso_bottom, leg_bottom, cx + torso_half - leg_w, cx + torso_half, pants);

    if (attrs.accessory > 0) {
        const auto& acc = accessory_palette()[static_cast<std::size_t>(attrs.accessory)].second;
        switch (attrs.accessory) {
            case 1:  // backpack: band on the left of the torso
                fill_rect(img, torso_top + 2, torso_bottom - 2, cx - torso_half - 3, cx - torso_half,
                          acc);
                break;
            case 2:  // bag: block at the hip
                fill_rect(img, torso_bottom - 4, torso_bottom + 4, cx + torso_half, cx + torso_half + 4,
                          acc);
                break;
            default:  // hat: block above the head
                fill_rect(img, head_top - 3, head_top, cx - head_r, cx + head_r, acc);
                break;
        }
    }

    // domain tint
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                img.at(y, x, c) =
                    clamp01(img.at(y, x, c) * style.tint[static_cast<std::size_t>(c)] + style.brightness);
            }
        }
    }
    return img;
}

void apply_photometric(Image& img, double brightness, const std::array<double, 3>& gain,
                       double blur_sigma, double noise_sigma, Rng& noise_rng) {
    for (int i = 0; i < img.size(); ++i) {
        const int c = i % 3;
        img.px[static_cast<std::size_t>(i)] =
            clamp01(img.px[static_cast<std::size_t>(i)] * gain[static_cast<std::size_t>(c)] + brightness);
    }
    if (blur_sigma > 0.0) img = gaussian_blur(img, blur_sigma);
    if (noise_sigma > 0.0) {
        for (auto& v : img.px) v = clamp01(v + noise_rng.normal(0.0, noise_sigma));
    }
}

}  // namespace

const std::vector<std::pair<std::string, std::array<double, 3>>>& shirt_palette() {
    static const std::vector<std::pair<std::string, std::array<double, 3>>> p = {
        {"red", {0.85, 0.12, 0.12}},    {"blue", {0.15, 0.25, 0.85}},
        {"green", {0.13, 0.65, 0.22}},  {"yellow", {0.92, 0.86, 0.15}},
        {"purple", {0.55, 0.18, 0.7}},  {"orange", {0.95, 0.55, 0.1}},
        {"cyan", {0.2, 0.8, 0.85}},     {"white", {0.93, 0.93, 0.93}},
        {"pink", {0.95, 0.55, 0.7}},    {"olive", {0.5, 0.55, 0.2}},
    };
    return p;
}

const std::vector<std::pair<std::string, std::array<double, 3>>>& pants_palette() {
    static const std::vector<std::pair<std::string, std::array<double, 3>>> p = {
        {"black", {0.08, 0.08, 0.1}},  {"navy", {0.1, 0.12, 0.4}},
        {"gray", {0.55, 0.55, 0.58}},  {"brown", {0.45, 0.3, 0.15}},
        {"khaki", {0.72, 0.65, 0.45}}, {"white", {0.92, 0.92, 0.9}},
        {"denim", {0.3, 0.45, 0.65}},  {"maroon", {0.45, 0.1, 0.15}},
    };
    return p;
}

const std::vector<std::pair<std::string, std::array<double, 3>>>& accessory_palette() {
    static const std::vector<std::pair<std::string, std::array<double, 3>>> p = {
        {"", {0, 0, 0}},
        {"backpack", {0.2, 0.12, 0.08}},
        {"bag", {0.75, 0.7, 0.2}},
        {"hat", {0.25, 0.25, 0.3}},
    };
    return p;
}

const std::vector<std::string>& build_names() {
    static const std::vector<std::string> b = {"slim", "broad"};
    return b;
}

std::string caption_for(const AttributeSpec& spec) {
    std::string caption = "a person wearing a " +
                          shirt_palette()[static_cast<std::size_t>(spec.shirt_color)].first +
                          " shirt and " +
                          pants_palette()[static_cast<std::size_t>(spec.pants_color)].first + " pants";
    if (spec.accessory > 0) {
        caption += ", carrying a " +
                   accessory_palette()[static_cast<std::size_t>(spec.accessory)].first;
    }
    return caption;
}

std::vector<std::string> caption_vocabulary() {
    std::vector<std::string> words = {"a", "person", "wearing", "shirt", "and", "pants", "carrying"};
    for (const auto& [name, rgb] : shirt_palette()) words.push_back(name);
    for (const auto& [name, rgb] : pants_palette()) words.push_back(name);
    for (const auto& [name, rgb] : accessory_palette()) {
        if (!name.empty()) words.push_back(name);
    }
    return words;
}

CameraModel CameraModel::derive(std::uint64_t corpus_seed, int camera_id) {
    Rng rng = derive_rng(corpus_seed, "camera_model", static_cast<std::uint64_t>(camera_id));
    CameraModel m;
    m.brightness = rng.uniform(-0.12, 0.12);
    for (auto& g : m.gain) g = rng.uniform(0.78, 1.22);
    m.blur_sigma = rng.bernoulli(0.5) ? rng.uniform(0.4, 1.1) : 0.0;
    m.noise_sigma = rng.uniform(0.01, 0.05);
    return m;
}

std::vector<int> Corpus::identities() const {
    std::vector<int> ids;
    ids.reserve(index.size());
    for (const auto& [id, cams] : index) ids.push_back(id);
    return ids;
}

int Corpus::camera_count(int identity) const {
    auto it = index.find(identity);
    return it == index.end() ? 0 : static_cast<int>(it->second.size());
}

void Corpus::build_index() {
    index.clear();
    for (int i = 0; i < static_cast<int>(records.size()); ++i) {
        const auto& r = records[static_cast<std::size_t>(i)];
        index[r.identity][r.camera].push_back(i);
    }
}

Corpus generate_corpus(const CorpusSpec& spec) {
    if (spec.n_ids < 2) throw std::invalid_argument("generate_corpus: need at least 2 identities");
    if (spec.cameras < 1) throw std::invalid_argument("generate_corpus: need at least 1 camera");

    const DomainStyle style = DomainStyle::derive(spec.domain_style);

    // unique attribute draws, bounded retries
    Rng attr_rng = derive_rng(spec.seed, "attributes");
    std::set<std::tuple<int, int, int, int>> seen;
    std::vector<AttributeSpec> attrs;
    for (int id = 0; id < spec.n_ids; ++id) {
        bool placed = false;
        for (int attempt = 0; attempt < 100; ++attempt) {
            AttributeSpec a;
            a.shirt_color = attr_rng.uniform_int(static_cast<int>(shirt_palette().size()));
            a.pants_color = attr_rng.uniform_int(static_cast<int>(pants_palette().size()));
            a.accessory = attr_rng.uniform_int(static_cast<int>(accessory_palette().size()));
            a.build = attr_rng.uniform_int(static_cast<int>(build_names().size()));
            if (seen.insert({a.shirt_color, a.pants_color, a.accessory, a.build}).second) {
                attrs.push_back(a);
                placed = true;
                break;
            }
        }
        if (!placed) {
            throw std::runtime_error("generate_corpus: could not draw a unique AttributeSpec for id " +
                                     std::to_string(id) + " after 100 retries; enlarge the palettes");
        }
    }

    std::vector<CameraModel> cams;
    for (int c = 0; c < spec.cameras; ++c) cams.push_back(CameraModel::derive(spec.seed, c));

    Corpus corpus;
    for (int id = 0; id < spec.n_ids; ++id) {
        for (int cam = 0; cam < spec.cameras; ++cam) {
            for (int k = 0; k < spec.images_per_id_per_cam; ++k) {
                Rng rec_rng = derive_rng(spec.seed, "record", static_cast<std::uint64_t>(id),
                                         static_cast<std::uint64_t>(cam), static_cast<std::uint64_t>(k));
                SampleRecord rec;
                rec.identity = id;
                rec.domain = spec.domain_style;
                rec.image = render_identity(spec, attrs[static_cast<std::size_t>(id)], style, rec_rng);
                if (spec.cameras == 1) {
                    // single-camera convention: NONE camera, per-image style
                    // jitter stands in for web-image diversity
                    rec.camera = kNoCamera;
                    std::array<double, 3> gain;
                    for (auto& g : gain) g = rec_rng.uniform(0.82, 1.18);
                    apply_photometric(rec.image, rec_rng.uniform(-0.1, 0.1), gain,
                                      rec_rng.bernoulli(0.3) ? rec_rng.uniform(0.3, 0.9) : 0.0,
                                      rec_rng.uniform(0.005, 0.03), rec_rng);
                } else {
                    rec.camera = cam;
                    const auto& m = cams[static_cast<std::size_t>(cam)];
                    apply_photometric(rec.image, m.brightness, m.gain, m.blur_sigma, m.noise_sigma,
                                      rec_rng);
                }
                if (spec.with_captions) rec.caption = caption_for(attrs[static_cast<std::size_t>(id)]);
                corpus.records.push_back(std::move(rec));
            }
        }
    }
    corpus.build_index();
    return corpus;
}

void write_corpus(const Corpus& corpus, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "images");
    std::ofstream manifest(fs::path(dir) / "manifest.jsonl");
    if (!manifest) throw std::runtime_error("write_corpus: cannot open manifest in " + dir);
    std::map<std::pair<int, int>, int> counters;
    for (const auto& rec : corpus.records) {
        const int k = counters[{rec.identity, rec.camera}]++;
        const std::string rel = "images/id" + std::to_string(rec.identity) + "_cam" +
                                std::to_string(rec.camera) + "_" + std::to_string(k) + ".ppm";
        write_ppm(rec.image, (fs::path(dir) / rel).string());
        json line;
        line["image_path"] = rel;
        line["identity"] = rec.identity;
        if (rec.camera == kNoCamera) {
            line["camera"] = nullptr;
        } else {
            line["camera"] = rec.camera;
        }
        line["domain"] = rec.domain;
        if (rec.has_caption()) {
            line["caption"] = rec.caption;
        } else {
            line["caption"] = nullptr;
        }
        manifest << line.dump() << "\n";
    }
}

Corpus load_manifest(const std::string& manifest_path, bool text_enabled) {
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("load_manifest: cannot open " + manifest_path);
    const fs::path base = fs::path(manifest_path).parent_path();

    Corpus corpus;
    std::set<std::pair<int, std::string>> seen;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::runtime_error("load_manifest: malformed record at line " +
                                     std::to_string(line_no) + ": " + e.what());
        }
        SampleRecord rec;
        try {
            rec.image_path = j.at("image_path").get<std::string>();
            rec.identity = j.at("identity").get<int>();
            rec.camera = j.at("camera").is_null() ? kNoCamera : j.at("camera").get<int>();
            rec.domain = j.value("domain", std::string());
            rec.caption = j.at("caption").is_null() ? std::string() : j.at("caption").get<std::string>();
        } catch (const json::exception& e) {
            throw std::runtime_error("load_manifest: bad schema at line " + std::to_string(line_no) +
                                     ": " + e.what());
        }
        if (text_enabled && rec.camera == kNoCamera && !rec.has_caption()) {
            throw std::runtime_error("load_manifest: line " + std::to_string(line_no) +
                                     ": single-camera record without caption while text is enabled");
        }
        if (!seen.insert({rec.identity, rec.image_path}).second) {
            corpus.warnings.push_back("duplicate record (identity " + std::to_string(rec.identity) +
                                      ", " + rec.image_path + ") dropped");
            continue;
        }
        const fs::path img_path = base / rec.image_path;
        if (!fs::exists(img_path)) {
            throw std::runtime_error("load_manifest: missing image file " + img_path.string());
        }
        rec.image = read_ppm(img_path.string());
        corpus.records.push_back(std::move(rec));
    }
    corpus.build_index();
    return corpus;
}

Image hflip(const Image& img) {
    Image out(img.height, img.width);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
        }
    }
    return out;
}

Image shift_pad_crop(const Image& img, int dx, int dy) {
    Image out(img.height, img.width);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const int sy = std::clamp(y + dy, 0, img.height - 1);  // edge-replicate padding
            const int sx = std::clamp(x + dx, 0, img.width - 1);
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(sy, sx, c);
        }
    }
    return out;
}

Image gaussian_blur(const Image& img, double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(2.0 * sigma)));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += kernel[static_cast<std::size_t>(i + radius)];
    }
    for (auto& k : kernel) k /= sum;

    Image tmp(img.height, img.width);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    const int sx = std::clamp(x + i, 0, img.width - 1);
                    acc += kernel[static_cast<std::size_t>(i + radius)] * img.at(y, sx, c);
                }
                tmp.at(y, x, c) = acc;
            }
        }
    }
    Image out(img.height, img.width);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    const int sy = std::clamp(y + i, 0, img.height - 1);
                    acc += kernel[static_cast<std::size_t>(i + radius)] * tmp.at(sy, x, c);
                }
                out.at(y, x, c) = clamp01(acc);
            }
        }
    }
    return out;
}

Image to_grayscale(const Image& img) {
    Image out(img.height, img.width);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const double g =
                0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = g;
        }
    }
    return out;
}

Image augment(const Image& img, std::uint64_t seed) {
    Rng rng = derive_rng(seed, "augment");
    Image out = img;
    const int pad = std::max(1, img.width / 8);
    const int dx = rng.uniform_int(2 * pad + 1) - pad;
    const int dy = rng.uniform_int(2 * pad + 1) - pad;
    out = shift_pad_crop(out, dx, dy);
    if (rng.bernoulli(0.5)) out = hflip(out);
    if (rng.bernoulli(0.5)) out = gaussian_blur(out, rng.uniform(0.1, 2.0));
    if (rng.bernoulli(0.2)) out = to_grayscale(out);
    for (auto& v : out.px) v = clamp01(v);
    return out;
}

void write_ppm(const Image& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_ppm: cannot open " + path);
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> bytes(static_cast<std::size_t>(img.size()));
    for (int i = 0; i < img.size(); ++i) {
        bytes[static_cast<std::size_t>(i)] =
            static_cast<unsigned char>(std::lround(clamp01(img.px[static_cast<std::size_t>(i)]) * 255.0));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Image read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_ppm: cannot open " + path);
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    if (magic != "P6" || maxval != 255 || w <= 0 || h <= 0) {
        throw std::runtime_error("read_ppm: unsupported format in " + path);
    }
    in.get();  // single whitespace after header
    Image img(h, w);
    std::vector<unsigned char> bytes(static_cast<std::size_t>(img.size()));
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
        throw std::runtime_error("read_ppm: truncated pixel data in " + path);
    }
    for (int i = 0; i < img.size(); ++i) {
        img.px[static_cast<std::size_t>(i)] = bytes[static_cast<std::size_t>(i)] / 255.0;
    }
    return img;
}

}  // namespace mmreid::data
