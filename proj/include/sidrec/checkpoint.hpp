#pragma once

#include "sidrec/network.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace sidrec {

inline constexpr int checkpoint_format_version = 1;

struct checkpoint {
    model_config config;
    model_params params;
    // Every key=value line of the config block, model keys included.
    std::map<std::string, std::string> metadata;
};

// Model config as ordered key=value pairs (d_model, d_ff, heads, ...).
std::map<std::string, std::string> model_config_entries(const model_config& config);
model_config model_config_from_entries(const std::map<std::string, std::string>& entries);

// "SIDM", u32 config byte length, UTF-8 key=value config block, u32 tensor
// count, then per tensor: u32 name length, name, u32 rank, u32 dims, float32
// LE data. `provenance` lines are appended to the config block.
std::string serialize_checkpoint(const model_config& config, const model_params& params,
                                 const std::map<std::string, std::string>& provenance = {});
checkpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const model_config& config, const model_params& params,
                     const std::map<std::string, std::string>& provenance = {});
checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace sidrec
