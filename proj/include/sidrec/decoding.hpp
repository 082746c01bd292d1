#pragma once

#include "sidrec/network.hpp"

#include <functional>
#include <set>
#include <vector>

namespace sidrec {

struct fill_step {
    std::size_t digit = 0;
    std::uint32_t codeword = 0;
    double log_prob = 0.0;
};

// A partially denoised SID. score is the sum of the log-probabilities of the
// fills committed so far, in commit order.
struct beam_branch {
    slot_values slots;
    std::vector<std::size_t> masked;
    double score = 0.0;
    std::vector<fill_step> fills;
};

struct decode_candidate {
    semantic_id sid;
    double score = 0.0;
    std::vector<fill_step> fills;
};

struct decode_result {
    std::vector<decode_candidate> candidates; // descending score, unique SIDs
    bool short_of_k = false;                  // fewer unique completions than K
    std::size_t decoder_calls = 0;
};

// Called after each reverse step with the surviving beam.
using beam_observer = std::function<void(std::size_t step, const std::vector<beam_branch>&)>;

// Confidence-guided parallel denoising: global beam search over
// (branch, masked digit, codeword) fills, keeping the best `beam_width`
// children per step. Ties are broken by lower branch index, digit, then
// codeword.
decode_result cpd_decode(const encoder_state& state, const model_params& params, const model_config& config,
                         std::size_t beam_width, std::size_t top_k, const beam_observer& observer = {});

// Beam search that fills digits strictly in `order`.
decode_result fixed_order_beam(const encoder_state& state, const model_params& params, const model_config& config,
                               const std::vector<std::size_t>& order, std::size_t beam_width, std::size_t top_k);

// Exhaustive search over every fill order and value under the same scoring
// rule. Refuses when M^n exceeds 10^6.
decode_result exact_oracle(const encoder_state& state, const model_params& params, const model_config& config,
                           std::size_t top_k);

struct filtered_result {
    decode_result result;
    std::size_t dropped = 0;
};

filtered_result filter_to_catalog(const decode_result& result, const std::set<semantic_id>& catalog);

} // namespace sidrec
