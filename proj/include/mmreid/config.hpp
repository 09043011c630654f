#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mmreid::train {

enum class MatchVariant { kClip, kSoftClip, kIm, kImSp };
enum class SingleReidPlacement { kNone, kAll, kInsOnly, kAugOnly, kCenOnly };

std::string to_string(MatchVariant v);
std::string to_string(SingleReidPlacement p);
MatchVariant match_variant_from_string(const std::string& s);
SingleReidPlacement placement_from_string(const std::string& s);

struct TrainConfig {
    // [train]
    int epochs = 100;
    double lr = 1e-3;  // desk-scale default; the reference setting is 1e-5
    double weight_decay = 0.02;
    int warmup_epochs = 10;
    double ema_m = 0.99;
    std::uint64_t seed = 0;
    int checkpoint_every = 0;  // epochs between checkpoints; 0 = final only
    std::string out_dir = "runs/default";

    // [tasks]
    bool reid = true;
    bool itm = true;
    bool ir = true;

    // [losses]
    MatchVariant match_variant = MatchVariant::kImSp;
    bool sp_include_positive = false;  // structure-preserving denominator mode
    SingleReidPlacement single_reid = SingleReidPlacement::kNone;
    double alpha = 0.6;
    double tau_sp = 0.1;
    double tau_reid = 0.05;
    double kl_eps = 1e-8;
    double clip_temperature = 0.1;
    bool normalize_query = false;

    // [rec]
    double mask_ratio = 0.75;

    // [model]
    int image_height = 64;
    int image_width = 32;
    int patch = 8;
    int embed_dim = 64;
    int depth = 2;
    int heads = 4;
    int proj_dim = 32;
    int text_depth = 2;
    int text_heads = 4;
    int text_max_len = 24;
    int decoder_depth = 4;
    int decoder_heads = 4;
    double init_stddev = 0.05;

    // [sampler]
    int p_m = 8;
    int k_m = 4;
    int p_s = 32;
    int k_s = 2;

    // [data]
    std::string multi_manifest;
    std::string single_manifest;
    std::string target_manifest;
    std::string dump_reconstructions;  // directory; empty = off

    void validate() const;
};

// "key = value" lines under [section] headers; '#' starts a comment.
TrainConfig parse_config_text(const std::string& text);
TrainConfig parse_config_file(const std::string& path);
// "section.key=value"
void apply_override(TrainConfig& cfg, const std::string& assignment);
std::string config_to_text(const TrainConfig& cfg);
// FNV-1a over the canonical text echo.
std::string config_digest(const TrainConfig& cfg);

// Stable listing of every config entry as section.key plus its current
// value; backs the parser, the echo, and the CLI flag registry.
std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& cfg);

}  // namespace mmreid::train
