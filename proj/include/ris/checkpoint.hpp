#ifndef RIS_CHECKPOINT_HPP
#define RIS_CHECKPOINT_HPP

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ris/nn.hpp"

namespace ris::inline RIS_PRECISION {

using TensorMap = std::map<std::string, Tensor>;

// Binary blob: magic, count, then per tensor its name, shape and values
// widened to double (so float and double builds read each other exactly).
void save_tensors(const std::filesystem::path& path, const std::vector<std::pair<std::string, const Tensor*>>& tensors);
TensorMap load_tensors(const std::filesystem::path& path);

// Copies `prefix + name` entries of `from` into the referenced tensors.
// Missing names and shape mismatches throw.
void restore_tensors(const TensorMap& from, const std::vector<NamedTensorRef>& into, const std::string& prefix = "");
std::vector<std::pair<std::string, const Tensor*>> with_prefix(const std::vector<NamedTensorRef>& refs,
                                                               const std::string& prefix);

// Write to a sibling temp file, then rename over the target.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
void write_json_atomic(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);

// 64-bit FNV-1a as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

}  // namespace ris

#endif  // RIS_CHECKPOINT_HPP
