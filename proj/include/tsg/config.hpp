#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

namespace tsg {

// One flat dotted-key namespace shared by the JSON config file and CLI
// overrides. Defaults carry the published training settings.
struct TrainConfig {
    std::string preset = "desk";
    uint64_t seed = 1;
    uint64_t codec_seed = 2024;

    int batch = 4;
    float lambda = 0.1f;
    float lr_g = 2e-4f;
    float lr_d = 2e-4f;
    float lr_t = 2e-3f;
    float beta1 = 0.5f;
    float beta2 = 0.999f;
    int epochs = 160;
    int steps = 0;  // 0: derive from epochs * floor(N / batch)
    int checkpoint_every = 0;
    int eval_every = 0;
    bool two_stage = true;
    bool freeze_generator = false;

    std::string manifest;
    std::string val_manifest;
    std::string out_dir = "runs/out";
    bool save_samples = true;
    int sample_rows = 4;
};

// Applies the flat JSON object at `path`; unknown keys are rejected.
void apply_config_file(TrainConfig& config, const std::filesystem::path& path);

// Applies one "key=value" override.
void apply_override(TrainConfig& config, const std::string& assignment);

nlohmann::json config_to_json(const TrainConfig& config);
TrainConfig config_from_json(const nlohmann::json& j);

// Key list with defaults, for --help.
std::string config_key_help();

}  // namespace tsg
