// Versioned JSON model files.
#pragma once

#include "ezgp/inference.hpp"

#include <filesystem>
#include <string>

namespace ezgp {

inline constexpr int kModelFormatVersion = 1;

/// Schema, kind, parameters at full precision, nugget, seed, objective, scaling, the
/// normalized training data and the start trace. Key order is fixed.
std::string serialize_model(const FittedModel& m);

/// Rebuilds the prediction cache from the stored parameters and training data.
FittedModel deserialize_model(const std::string& text);

void save_model(const std::filesystem::path& path, const FittedModel& m);
FittedModel load_model(const std::filesystem::path& path);

}  // namespace ezgp
