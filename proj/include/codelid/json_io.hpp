#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "codelid/corpus.hpp"
#include "codelid/training.hpp"
#include "codelid/transformer.hpp"

namespace codelid {

// Missing keys keep their defaults; unknown keys are rejected so typos in
// config files surface as errors.
void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);
void to_json(nlohmann::json& j, const OptimizerHyper& h);
void from_json(const nlohmann::json& j, OptimizerHyper& h);
void to_json(nlohmann::json& j, const MaskingPolicy& p);
void from_json(const nlohmann::json& j, MaskingPolicy& p);
void to_json(nlohmann::json& j, const CleaningPolicy& p);
void from_json(const nlohmann::json& j, CleaningPolicy& p);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& value);

// Little-endian float32 blobs.
void append_f32(std::vector<char>& out, std::span<const float> values);
void read_f32(std::span<const char> in, std::size_t& offset, std::span<float> values);

}  // namespace codelid
