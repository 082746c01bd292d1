#pragma once

#include "sidrec/matrix.hpp"
#include "sidrec/semantic_id.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sidrec {

enum class log_format { tsv, jsonl };

log_format parse_log_format(std::string_view name);

struct user_sequence {
    std::string user;
    std::vector<std::string> items;       // chronological
    std::vector<std::int64_t> timestamps; // parallel to items
};

// Users appear in order of first occurrence in the input; each user's items
// are stably sorted by timestamp so ties keep input order.
struct interaction_log {
    std::vector<user_sequence> users;

    std::size_t interaction_count() const;
};

interaction_log parse_log(std::string_view text, log_format format);
interaction_log load_log(const std::filesystem::path& path, log_format format);
std::string format_log_tsv(const interaction_log& log);

struct item_embedding_table {
    std::vector<std::string> ids;
    matrix vectors; // |I| x d

    std::size_t dim() const { return vectors.cols(); }
    std::size_t size() const { return ids.size(); }

    // Throws data_error on duplicate ids, non-finite values or d % n != 0.
    void validate(std::size_t digits) const;
};

// Binary layout: "SIDE", u32 count, u32 dim, count*dim float32 LE, then
// newline-separated UTF-8 ids.
std::string serialize_embeddings(const item_embedding_table& table);
item_embedding_table deserialize_embeddings(std::string_view bytes);
void save_embeddings(const std::filesystem::path& path, const item_embedding_table& table);
item_embedding_table load_embeddings(const std::filesystem::path& path);

// Every item referenced by the log must have an embedding row.
void check_log_items(const interaction_log& log, const item_embedding_table& table);

inline constexpr std::size_t min_sequence_length = 3;

struct user_split {
    std::string user;
    std::vector<std::string> train; // all but the last two interactions
    std::string valid_target;
    std::string test_target;
};

struct split_spec {
    std::vector<user_split> users;
    std::size_t dropped_users = 0;
};

split_spec leave_last_out(const interaction_log& log);
std::string split_summary(const split_spec& split);

using sid_map = std::unordered_map<std::string, semantic_id>;

struct training_instance {
    std::vector<semantic_id> context; // most recent last, at most L_input long
    semantic_id target;
};

// Expands every train prefix [i1..iL] into the L-1 instances (i1..ip-1 -> ip).
std::vector<training_instance> sliding_window_expand(const split_spec& split, const sid_map& tokens,
                                                     std::size_t input_length);

struct eval_instance {
    std::string user;
    std::vector<semantic_id> context;
    semantic_id target;
    std::string target_item;
};

// Validation: context is the train prefix. Test: train prefix plus the
// validation item. Both are truncated to the most recent input_length items.
std::vector<eval_instance> validation_instances(const split_spec& split, const sid_map& tokens,
                                                std::size_t input_length);
std::vector<eval_instance> test_instances(const split_spec& split, const sid_map& tokens,
                                          std::size_t input_length);

} // namespace sidrec
