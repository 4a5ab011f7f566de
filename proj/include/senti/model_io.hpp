#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "senti/training.hpp"

namespace senti {

inline constexpr char kModelMagic[4] = {'S', 'S', 'M', '1'};

/// "SSM1", a little-endian u32 header length, the JSON header, then float32
/// tensor blocks (row-major) in the order W_f W_i W_o W_c b_f b_i b_o b_c
/// W_out b_out embeddings.
void save_model(const std::filesystem::path& path, const Model& model, const std::optional<Metrics>& metrics = {});
Model load_model(const std::filesystem::path& path);

/// The header of a model file (without tensors).
nlohmann::json read_model_header(const std::filesystem::path& path);

nlohmann::json metrics_to_json(const Metrics& m);
nlohmann::json history_to_json(const TrainHistory& history);
void save_history(const std::filesystem::path& path, const TrainHistory& history);

}  // namespace senti
