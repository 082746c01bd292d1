#pragma once

#include "sidrec/matrix.hpp"
#include "sidrec/random.hpp"
#include "sidrec/semantic_id.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sidrec {

struct model_config {
    std::size_t d_model = 256;
    std::size_t d_ff = 1024;
    std::size_t heads = 4;
    std::size_t encoder_layers = 1;
    std::size_t decoder_layers = 4;
    std::size_t digits = 4;          // n
    std::size_t codebook_size = 256; // M
    std::size_t input_length = 50;   // L_input
    double dropout = 0.1;

    // Width of one per-digit SID embedding. n of them are concatenated and
    // projected to d_model, so the width is rounded up when n does not
    // divide d_model.
    std::size_t sid_embedding_dim() const { return (d_model + digits - 1) / digits; }
    std::size_t head_dim() const { return d_model / heads; }

    // Throws config_error.
    void validate() const;

    friend bool operator==(const model_config&, const model_config&) = default;
};

struct layer_norm_weights {
    matrix gain; // 1 x d
    matrix bias; // 1 x d

    friend bool operator==(const layer_norm_weights&, const layer_norm_weights&) = default;
};

struct attention_weights {
    matrix wq, bq, wk, bk, wv, bv, wo, bo; // d x d weights, 1 x d biases

    friend bool operator==(const attention_weights&, const attention_weights&) = default;
};

struct feed_forward_weights {
    matrix w1, b1; // d x d_ff, 1 x d_ff
    matrix w2, b2; // d_ff x d, 1 x d

    friend bool operator==(const feed_forward_weights&, const feed_forward_weights&) = default;
};

struct encoder_layer_weights {
    layer_norm_weights norm1;
    attention_weights self_attention;
    layer_norm_weights norm2;
    feed_forward_weights ffn;

    friend bool operator==(const encoder_layer_weights&, const encoder_layer_weights&) = default;
};

struct decoder_layer_weights {
    layer_norm_weights norm1;
    attention_weights self_attention;
    layer_norm_weights norm2;
    attention_weights cross_attention;
    layer_norm_weights norm3;
    feed_forward_weights ffn;

    friend bool operator==(const decoder_layer_weights&, const decoder_layer_weights&) = default;
};

// Every learnable tensor. Shapes follow from model_config alone.
struct model_params {
    std::vector<matrix> sid_embeddings; // n tables, M x d_e
    matrix mask_embedding;              // 1 x d_e
    matrix item_projection;             // (n * d_e) x d_model
    matrix item_projection_bias;        // 1 x d_model
    matrix pad_embedding;               // 1 x d_model
    matrix positions;                   // L_input x d_model
    matrix slot_positions;              // n x d_model, decoder digit slots
    std::vector<encoder_layer_weights> encoder;
    layer_norm_weights encoder_norm;
    std::vector<decoder_layer_weights> decoder;
    layer_norm_weights decoder_norm;
    std::vector<matrix> output_heads;      // n tables, d_model x M
    std::vector<matrix> output_head_biases; // n tables, 1 x M

    // All-zero tensors with the right shapes (gradient accumulators).
    static model_params zeros(const model_config& config);
    // Truncated-normal(stddev) embeddings and projections, unit norm gains,
    // zero biases.
    static model_params initialize(const model_config& config, std::uint64_t seed, double stddev = 0.02);

    // Visits every tensor in a fixed order with a stable dotted name.
    void visit(const std::function<void(const std::string&, matrix&)>& fn);
    void visit(const std::function<void(const std::string&, const matrix&)>& fn) const;

    std::size_t parameter_count() const;
    bool all_finite() const;
    void set_zero();
    // this += scale * other
    void add_scaled(const model_params& other, double scale);

    friend bool operator==(const model_params&, const model_params&) = default;
};

// Decoder slot value meaning "this digit is masked".
inline constexpr std::int32_t mask_slot = -1;
using slot_values = std::vector<std::int32_t>;

slot_values fully_masked(std::size_t digits);
slot_values slots_from(const semantic_id& sid);

// Encoder output for one user history, plus cross-attention keys and values
// for every decoder layer. Immutable once built and reusable for any number
// of decoder calls.
struct encoder_state {
    matrix hidden;                     // L_input x d_model
    std::vector<char> key_valid;       // padding mask, 1 = attendable
    std::vector<matrix> cross_keys;    // per decoder layer, L_input x d_model
    std::vector<matrix> cross_values;  // per decoder layer, L_input x d_model
};

struct digit_distributions {
    matrix probs;     // n x M
    matrix log_probs; // n x M, computed directly from the logits
};

// Dropout switch for forward passes. Inactive means eval mode.
struct dropout_source {
    double rate = 0.0;
    rng* generator = nullptr;

    bool active() const { return generator != nullptr && rate > 0.0; }
};

// Contexts shorter than L_input are left-padded; an empty context keeps the
// final PAD slot attendable so attention stays defined.
encoder_state encode(std::span<const semantic_id> context, const model_params& params, const model_config& config);

digit_distributions decode_digits(const slot_values& slots, const encoder_state& state, const model_params& params,
                                  const model_config& config);

// Same as decode_digits but recomputes cross-attention keys/values from
// state.hidden instead of using the cache.
digit_distributions decode_digits_uncached(const slot_values& slots, const encoder_state& state,
                                           const model_params& params, const model_config& config);

// Set of masked digit indices for one training view.
struct masked_view {
    std::vector<std::size_t> masked;
};

// One training sample: history, target, and the views it is supervised on.
struct supervised_sample {
    std::vector<semantic_id> context;
    semantic_id target;
    std::vector<masked_view> views;
};

// Label-smoothed target: (1 - alpha) one-hot + alpha / M.
std::vector<double> smoothed_target(std::uint32_t label, std::size_t codebook_size, double alpha);

struct loss_and_gradient {
    double loss = 0.0;
    model_params gradient;
};

// Mean over samples of (1/R) sum_r (1/|M_r|) sum_{k in M_r} CE(smoothed target, p^(r,k)).
loss_and_gradient loss_and_grad(std::span<const supervised_sample> batch, const model_params& params,
                                const model_config& config, double alpha, const dropout_source& dropout = {});

// Forward graph for one sample that keeps the encoder activations so several
// views can be scored and back-propagated against a single encoder pass.
class sample_graph {
public:
    sample_graph(std::span<const semantic_id> context, const model_params& params, const model_config& config,
                 const dropout_source& dropout);
    ~sample_graph();
    sample_graph(sample_graph&&) noexcept;
    sample_graph& operator=(sample_graph&&) noexcept;

    const encoder_state& state() const;

    // Decoder forward and backward for one view; returns the unweighted view
    // loss and accumulates weight * d(view loss) into `grad`.
    double add_view(const semantic_id& target, const masked_view& view, double alpha, double weight,
                    model_params& grad);

    // Back-propagates the accumulated encoder-side gradient. Call once, after
    // all views.
    void backward_encoder(model_params& grad);

private:
    struct impl;
    std::unique_ptr<impl> impl_;
};

} // namespace sidrec
