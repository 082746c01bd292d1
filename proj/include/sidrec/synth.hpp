#pragma once

#include "sidrec/dataset.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sidrec {

// Clustered items with a latent n-digit code each, and users who walk
// their preferred cluster in a fixed cyclic order with occasional random
// picks.
struct synth_options {
    std::size_t users = 50;
    std::size_t items = 40;
    std::size_t clusters = 4;
    std::size_t digits = 3;       // latent code width; dim must be a multiple
    std::size_t codebook_size = 4;
    std::size_t dim = 24;
    std::size_t min_length = 8;
    std::size_t max_length = 14;
    double noise = 0.1;           // probability of a uniformly random item
    double center_scale = 3.0;
    double item_scale = 0.3;
    std::uint64_t seed = 1;

    void validate() const;
};

struct synth_data {
    interaction_log log;
    std::string log_tsv; // records interleaved by timestamp, as written
    item_embedding_table embeddings;
    std::vector<std::size_t> cluster_of;         // per item
    std::vector<std::vector<std::uint32_t>> code_of; // latent code per item

    std::string cluster_table() const; // "item\tcluster\tcode"
    std::string summary() const;
};

synth_data generate_synthetic(const synth_options& options);

// Writes interactions.tsv, items.side, clusters.tsv and synth.txt.
void write_synthetic(const synth_data& data, const std::filesystem::path& out_dir);

} // namespace sidrec
