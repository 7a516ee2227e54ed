#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crosslag/data/dataset.hpp"
#include "crosslag/model/forecaster.hpp"

namespace crosslag {

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kCheckpointFormat = "crosslag-checkpoint";

// Everything needed to run a trained model on new data.
struct Checkpoint {
    ModelConfig config;
    std::string target_name = "cases";
    std::vector<std::string> features;
    NormStats stats;
    ModelParams params;

    nlohmann::ordered_json to_json() const;
    // Throws CompatibilityError on a wrong format/version or missing arrays.
    static Checkpoint from_json(const nlohmann::json& j);
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Lower-case hex SHA-256.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace crosslag
