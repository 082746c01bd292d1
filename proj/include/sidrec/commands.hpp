#pragma once

#include "sidrec/config.hpp"
#include "sidrec/synth.hpp"
#include "sidrec/training.hpp"

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace sidrec {

// Artifact names inside run_config::output_dir.
namespace artifacts {
inline constexpr const char* sid_map = "sids.tsv";
inline constexpr const char* codebooks = "codebooks.sidc";
inline constexpr const char* tokenizer_report = "tokenizer.txt";
inline constexpr const char* checkpoint = "model.sidm";
inline constexpr const char* trace = "trace.txt";
inline constexpr const char* split = "split.txt";
inline constexpr const char* effective_config = "run.cfg";
} // namespace artifacts

std::filesystem::path artifact_path(const run_config& config, const char* name);
// Config entries prefixed with "run." for checkpoints and reports.
std::map<std::string, std::string> provenance_of(const run_config& config);

synth_data cmd_synth(const synth_options& options, const std::filesystem::path& out_dir);

struct tokenize_output {
    std::vector<std::string> ids;
    sid_map tokens;
    tokenizer_report report;
};
tokenize_output cmd_tokenize(const run_config& config);

struct train_output {
    training_result result;
    split_spec split;
    std::size_t instances = 0;
};
train_output cmd_train(const run_config& config, std::ostream* progress = nullptr);

enum class eval_split { valid, test };
eval_split parse_eval_split(const std::string& name);
// Returns the report text and writes it to eval_<split>.txt.
std::string cmd_eval(const run_config& config, eval_split split);

// Top-K for a history given as item ids, as TSV rows
// "rank<TAB>score<TAB>d0,d1,...<TAB>items sharing the SID".
std::string cmd_decode(const run_config& config, const std::vector<std::string>& history, std::size_t top_k);

std::string cmd_count_signals(std::size_t digits);

// Ablation variants: pse-rq, pse-random, no-ocn, no-onpolicy, no-cpd, ls, lr, ms, mr.
const std::vector<std::string>& ablation_variants();
run_config ablation_config(const run_config& base, const std::string& variant);
// Runs tokenize, train and eval (valid and test) under output_dir/ablate-<variant>.
std::string cmd_ablate(const run_config& base, const std::string& variant, std::ostream* progress = nullptr);

} // namespace sidrec
