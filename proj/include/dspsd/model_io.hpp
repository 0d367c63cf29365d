#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "dspsd/pipeline.hpp"

namespace dspsd {

nlohmann::json config_to_json(const TrainConfig& config);
// Keys missing from `j` keep the values already in `base`; unknown keys are a
// ConfigError.
TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path);

nlohmann::json model_to_json(const ModelBundle& model);
ModelBundle model_from_json(const nlohmann::json& j);

// Versioned JSON; every tensor is a nested array of rows.
void save_model(const ModelBundle& model, const std::filesystem::path& path);
ModelBundle load_model(const std::filesystem::path& path);

}  // namespace dspsd
