#include "mmreid/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <variant>

namespace mmreid::train {

namespace {

using FieldRef = std::variant<int*, double*, bool*, std::string*, std::uint64_t*,
                              MatchVariant*, SingleReidPlacement*>;

struct Entry {
    std::string key;  // "section.key"
    FieldRef ref;
};

std::vector<Entry> schema(TrainConfig& c) {
    return {
        {"train.epochs", &c.epochs},
        {"train.lr", &c.lr},
        {"train.weight_decay", &c.weight_decay},
        {"train.warmup_epochs", &c.warmup_epochs},
        {"train.ema_m", &c.ema_m},
        {"train.seed", &c.seed},
        {"train.checkpoint_every", &c.checkpoint_every},
        {"train.out_dir", &c.out_dir},
        {"tasks.reid", &c.reid},
        {"tasks.itm", &c.itm},
        {"tasks.ir", &c.ir},
        {"losses.match_variant", &c.match_variant},
        {"losses.sp_include_positive", &c.sp_include_positive},
        {"losses.single_reid", &c.single_reid},
        {"losses.alpha", &c.alpha},
        {"losses.tau_sp", &c.tau_sp},
        {"losses.tau_reid", &c.tau_reid},
        {"losses.kl_eps", &c.kl_eps},
        {"losses.clip_temperature", &c.clip_temperature},
        {"losses.normalize_query", &c.normalize_query},
        {"rec.mask_ratio", &c.mask_ratio},
        {"model.image_height", &c.image_height},
        {"model.image_width", &c.image_width},
        {"model.patch", &c.patch},
        {"model.embed_dim", &c.embed_dim},
        {"model.depth", &c.depth},
        {"model.heads", &c.heads},
        {"model.proj_dim", &c.proj_dim},
        {"model.text_depth", &c.text_depth},
        {"model.text_heads", &c.text_heads},
        {"model.text_max_len", &c.text_max_len},
        {"model.decoder_depth", &c.decoder_depth},
        {"model.decoder_heads", &c.decoder_heads},
        {"model.init_stddev", &c.init_stddev},
        {"sampler.p_m", &c.p_m},
        {"sampler.k_m", &c.k_m},
        {"sampler.p_s", &c.p_s},
        {"sampler.k_s", &c.k_s},
        {"data.multi_manifest", &c.multi_manifest},
        {"data.single_manifest", &c.single_manifest},
        {"data.target_manifest", &c.target_manifest},
        {"data.dump_reconstructions", &c.dump_reconstructions},
    };
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string value_to_string(const FieldRef& ref) {
    return std::visit(
        [](auto* p) -> std::string {
            using T = std::remove_pointer_t<decltype(p)>;
            if constexpr (std::is_same_v<T, int>) return std::to_string(*p);
            else if constexpr (std::is_same_v<T, double>) return format_double(*p);
            else if constexpr (std::is_same_v<T, bool>) return *p ? "on" : "off";
            else if constexpr (std::is_same_v<T, std::string>) return *p;
            else if constexpr (std::is_same_v<T, std::uint64_t>) return std::to_string(*p);
            else return to_string(*p);
        },
        ref);
}

void assign_value(const FieldRef& ref, const std::string& key, const std::string& raw) {
    const std::string value = trim(raw);
    try {
        std::visit(
            [&](auto* p) {
                using T = std::remove_pointer_t<decltype(p)>;
                if constexpr (std::is_same_v<T, int>) {
                    *p = std::stoi(value);
                } else if constexpr (std::is_same_v<T, double>) {
                    *p = std::stod(value);
                } else if constexpr (std::is_same_v<T, bool>) {
                    if (value == "on" || value == "true" || value == "1") *p = true;
                    else if (value == "off" || value == "false" || value == "0") *p = false;
                    else throw std::invalid_argument("expected on/off");
                } else if constexpr (std::is_same_v<T, std::string>) {
                    *p = value;
                } else if constexpr (std::is_same_v<T, std::uint64_t>) {
                    *p = std::stoull(value);
                } else if constexpr (std::is_same_v<T, MatchVariant>) {
                    *p = match_variant_from_string(value);
                } else {
                    *p = placement_from_string(value);
                }
            },
            ref);
    } catch (const std::exception& e) {
        throw std::invalid_argument("config: bad value '" + value + "' for " + key + ": " + e.what());
    }
}

}  // namespace

std::string to_string(MatchVariant v) {
    switch (v) {
        case MatchVariant::kClip: return "clip";
        case MatchVariant::kSoftClip: return "soft_clip";
        case MatchVariant::kIm: return "im";
        default: return "im_sp";
    }
}

std::string to_string(SingleReidPlacement p) {
    switch (p) {
        case SingleReidPlacement::kNone: return "none";
        case SingleReidPlacement::kAll: return "all";
        case SingleReidPlacement::kInsOnly: return "ins";
        case SingleReidPlacement::kAugOnly: return "aug";
        default: return "cen";
    }
}

MatchVariant match_variant_from_string(const std::string& s) {
    if (s == "clip") return MatchVariant::kClip;
    if (s == "soft_clip") return MatchVariant::kSoftClip;
    if (s == "im") return MatchVariant::kIm;
    if (s == "im_sp") return MatchVariant::kImSp;
    throw std::invalid_argument("unknown match variant '" + s + "' (clip|soft_clip|im|im_sp)");
}

SingleReidPlacement placement_from_string(const std::string& s) {
    if (s == "none") return SingleReidPlacement::kNone;
    if (s == "all") return SingleReidPlacement::kAll;
    if (s == "ins") return SingleReidPlacement::kInsOnly;
    if (s == "aug") return SingleReidPlacement::kAugOnly;
    if (s == "cen") return SingleReidPlacement::kCenOnly;
    throw std::invalid_argument("unknown placement '" + s + "' (none|all|ins|aug|cen)");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
    if (warmup_epochs > epochs) {
        throw std::invalid_argument("config: warmup_epochs " + std::to_string(warmup_epochs) +
                                    " exceeds epochs " + std::to_string(epochs));
    }
    if (lr <= 0.0 || tau_sp <= 0.0 || tau_reid <= 0.0 || clip_temperature <= 0.0) {
        throw std::invalid_argument("config: rates and temperatures must be positive");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("config: alpha must lie in (0,1)");
    if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) {
        throw std::invalid_argument("config: mask_ratio must lie in (0,1)");
    }
    if (ema_m < 0.0 || ema_m > 1.0) throw std::invalid_argument("config: ema_m must lie in [0,1]");
    if (weight_decay < 0.0 || weight_decay >= 1.0) {
        throw std::invalid_argument("config: weight_decay must lie in [0,1)");
    }
}

TrainConfig parse_config_text(const std::string& text) {
    TrainConfig cfg;
    auto entries = schema(cfg);
    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw std::invalid_argument("config: malformed section at line " + std::to_string(line_no));
            }
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config: expected key = value at line " + std::to_string(line_no));
        }
        const std::string key = section + "." + trim(line.substr(0, eq));
        bool found = false;
        for (auto& e : entries) {
            if (e.key == key) {
                assign_value(e.ref, key, line.substr(eq + 1));
                found = true;
                break;
            }
        }
        if (!found) {
            throw std::invalid_argument("config: unknown key '" + key + "' at line " +
                                        std::to_string(line_no));
        }
    }
    return cfg;
}

TrainConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str());
}

void apply_override(TrainConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw std::invalid_argument("override: expected section.key=value, got '" + assignment + "'");
    }
    const std::string key = trim(assignment.substr(0, eq));
    auto entries = schema(cfg);
    for (auto& e : entries) {
        if (e.key == key) {
            assign_value(e.ref, key, assignment.substr(eq + 1));
            return;
        }
    }
    throw std::invalid_argument("override: unknown key '" + key + "'");
}

std::string config_to_text(const TrainConfig& cfg) {
    auto& mutable_cfg = const_cast<TrainConfig&>(cfg);
    auto entries = schema(mutable_cfg);
    std::string out;
    std::string section;
    for (const auto& e : entries) {
        const auto dot = e.key.find('.');
        const std::string sec = e.key.substr(0, dot);
        if (sec != section) {
            if (!out.empty()) out += "\n";
            out += "[" + sec + "]\n";
            section = sec;
        }
        out += e.key.substr(dot + 1) + " = " + value_to_string(e.ref) + "\n";
    }
    return out;
}

std::string config_digest(const TrainConfig& cfg) {
    const std::string text = config_to_text(cfg);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& cfg) {
    auto& mutable_cfg = const_cast<TrainConfig&>(cfg);
    auto entries = schema(mutable_cfg);
    std::vector<std::pair<std::string, std::string>> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.emplace_back(e.key, value_to_string(e.ref));
    return out;
}

}  // namespace mmreid::train
