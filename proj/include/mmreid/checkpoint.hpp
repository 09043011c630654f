#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mmreid::train {

// Checkpoint payload as plain data. Sections carry named parameter groups
// (one per model component); the optimizer state rides alongside keyed by
// "group/param". Serialized little-endian with a trailing FNV-1a digest.
struct CheckpointData {
    std::uint32_t version = 1;
    std::string config_text;
    std::uint32_t epoch = 0;
    std::uint64_t global_step = 0;
    std::uint64_t adam_t = 0;

    struct Array {
        std::uint32_t rows = 0;
        std::uint32_t cols = 0;
        std::vector<double> data;
    };
    // group -> (name -> array); std::map keeps the on-disk order canonical
    std::map<std::string, std::map<std::string, Array>> groups;
    std::map<std::string, std::vector<double>> adam_m;
    std::map<std::string, std::vector<double>> adam_v;
};

void save_checkpoint(const CheckpointData& ckpt, const std::string& path);
CheckpointData load_checkpoint(const std::string& path);  // verifies digest + version

}  // namespace mmreid::train
