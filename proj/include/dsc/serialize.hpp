#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "dsc/tensor.hpp"

namespace dsc {

inline constexpr const char* kTensorFormatTag = "dsc.tensors/1";

nlohmann::json tensors_to_json(const std::vector<TensorPtr>& params);
// Loads values into already-constructed named tensors; shape-checked.
void tensors_from_json(const nlohmann::json& j, const std::vector<TensorPtr>& params);

nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);

// FNV-1a over the canonical dump, as a 16-hex-digit string.
std::string fingerprint(const nlohmann::json& j);

}  // namespace dsc
