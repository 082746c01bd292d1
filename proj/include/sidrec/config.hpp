#pragma once

#include "sidrec/network.hpp"
#include "sidrec/tokenizer.hpp"
#include "sidrec/training.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace sidrec {

enum class tokenizer_kind { pse, rq, random };

// Everything a pipeline run needs. Serialized as a flat key=value file;
// unknown keys are rejected.
struct run_config {
    model_config model;
    tokenizer_kind tokenizer = tokenizer_kind::pse;
    tokenizer_options tokenizer_settings;
    training_options training;

    std::string log_path = "interactions.tsv";
    log_format log_kind = log_format::tsv;
    std::string embeddings_path = "items.side";
    std::string output_dir = ".";

    // Model digits/codebook size also drive the tokenizer.
    tokenizer_options effective_tokenizer() const;
    void validate() const;

    void set(const std::string& key, const std::string& value);
    std::string get(const std::string& key) const;
    static const std::vector<std::string>& keys();

    std::map<std::string, std::string> entries() const;
    std::string serialize() const;
    static run_config parse(std::string_view text);
    static run_config load(const std::filesystem::path& path);

    // "key=value" strings, as given on the command line.
    void apply_overrides(const std::vector<std::string>& overrides);
};

} // namespace sidrec
