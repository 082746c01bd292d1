#pragma once

#include "sidrec/dataset.hpp"
#include "sidrec/decoding.hpp"
#include "sidrec/metrics.hpp"
#include "sidrec/network.hpp"
#include "sidrec/noising.hpp"

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace sidrec {

enum class noising_strategy { ocn_ls, ocn_lr, ocn_ms, ocn_mr, random, coherent };

struct noising_options {
    noising_strategy strategy = noising_strategy::ocn_ls;
    bool stochastic = false;          // sample the OCN order instead of sorting (ocn-ls only)
    std::vector<std::size_t> schedule; // empty means m_r = r for r = 1..n
    std::size_t coherent_paths = 1;    // k for coherent-k
    std::size_t random_views = 0;      // R for random masking, 0 means n

    // "ocn-ls", ..., "random", "coherent-3"
    static noising_options parse_strategy(std::string_view name);
    std::string strategy_name() const;
    std::vector<std::size_t> effective_schedule(std::size_t digits) const;
    std::size_t views_per_sample(std::size_t digits) const;
};

enum class decoder_kind { cpd, fixed_order };

struct evaluation_options {
    std::size_t beam_width = 128;
    std::vector<std::size_t> ks{1, 5, 10};
    decoder_kind decoder = decoder_kind::cpd;
    std::vector<std::size_t> fixed_order; // used by fixed_order, empty means identity
    bool filter_catalog = true;
};

struct optimizer_options {
    double learning_rate = 0.003;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.01;
    std::size_t warmup_steps = 10000;
};

struct training_options {
    noising_options noising;
    optimizer_options optimizer;
    evaluation_options evaluation;
    double label_smoothing = 0.1;
    std::size_t batch_size = 256;
    std::size_t max_epochs = 100;
    std::size_t patience = 15;
    std::uint64_t seed = 42;
};

// AdamW with linear warmup to a constant rate. Decay applies to weight
// matrices and embeddings, never to biases or norm gains. Parameters are
// rounded to float32 after each step so checkpoints are exact.
class adamw {
public:
    adamw(const model_config& config, optimizer_options options);

    void step(model_params& params, const model_params& gradient);
    double current_rate() const;
    std::size_t steps_taken() const { return steps_; }

private:
    optimizer_options options_;
    model_params m_;
    model_params v_;
    std::vector<char> decay_;
    std::size_t steps_ = 0;
};

// Builds the training views for one sample. `state` must come from the
// sample's own encoder pass. decoder_calls counts the probe and refreshes.
struct sample_views {
    std::vector<masked_view> views;
    std::size_t decoder_calls = 0;
};

sample_views make_views(const noising_options& options, const semantic_id& target, const encoder_state& state,
                        const model_params& params, const model_config& config, std::uint64_t seed);

std::set<semantic_id> catalog_of(const sid_map& tokens);

// Decodes every instance and scores the target's SID rank. Candidates are
// filtered to `catalog` when the options ask for it.
eval_outcome evaluate(const std::vector<eval_instance>& instances, const model_params& params,
                      const model_config& config, const evaluation_options& options,
                      const std::set<semantic_id>& catalog);

decode_result decode_for(const encoder_state& state, const model_params& params, const model_config& config,
                         const evaluation_options& options, std::size_t top_k);

struct epoch_report {
    std::size_t epoch = 0; // 1-based
    double train_loss = 0.0;
    double validation_score = 0.0;
    bool improved = false;
};

struct training_result {
    model_params best_params;
    train_trace trace;
    eval_outcome best_validation;
};

using epoch_callback = std::function<void(const epoch_report&)>;

training_result train_model(const std::vector<training_instance>& instances,
                            const std::vector<eval_instance>& validation, const std::set<semantic_id>& catalog,
                            const model_config& config, const training_options& options,
                            const epoch_callback& on_epoch = {});

// One pass of mini-batch updates; returns the mean batch loss.
double train_epoch(const std::vector<training_instance>& instances, model_params& params, adamw& optimizer,
                   const model_config& config, const training_options& options, std::size_t epoch,
                   std::size_t* decoder_calls = nullptr);

} // namespace sidrec
