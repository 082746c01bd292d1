#include "sidrec/decoding.hpp"

#include "sidrec/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sidrec {

namespace {

struct child {
    double score;
    std::size_t branch;
    std::size_t digit;
    std::uint32_t codeword;
    double log_prob;
};

bool child_before(const child& a, const child& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.branch != b.branch) return a.branch < b.branch;
    if (a.digit != b.digit) return a.digit < b.digit;
    return a.codeword < b.codeword;
}

void check_widths(std::size_t beam_width, std::size_t top_k) {
    if (beam_width < 1) throw config_error("beam width must be at least 1");
    if (top_k < 1) throw config_error("K must be at least 1");
}

beam_branch root_branch(std::size_t digits) {
    beam_branch b;
    b.slots = fully_masked(digits);
    b.masked.resize(digits);
    std::iota(b.masked.begin(), b.masked.end(), 0);
    return b;
}

std::vector<digit_distributions> expand(const std::vector<beam_branch>& beam, const encoder_state& state,
                                        const model_params& params, const model_config& config) {
    std::vector<digit_distributions> out(beam.size());
    const auto count = static_cast<std::ptrdiff_t>(beam.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t b = 0; b < count; ++b) out[b] = decode_digits(beam[b].slots, state, params, config);
    return out;
}

std::vector<beam_branch> commit(const std::vector<beam_branch>& beam, std::vector<child>& children,
                                std::size_t beam_width) {
    const std::size_t keep = std::min(beam_width, children.size());
    std::partial_sort(children.begin(), children.begin() + static_cast<std::ptrdiff_t>(keep), children.end(),
                      child_before);
    std::vector<beam_branch> next;
    next.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) {
        const auto& c = children[i];
        beam_branch b = beam[c.branch];
        b.slots[c.digit] = static_cast<std::int32_t>(c.codeword);
        b.masked.erase(std::find(b.masked.begin(), b.masked.end(), c.digit));
        b.score = c.score;
        b.fills.push_back({c.digit, c.codeword, c.log_prob});
        next.push_back(std::move(b));
    }
    return next;
}

semantic_id to_sid(const slot_values& slots) {
    semantic_id sid;
    for (auto v : slots) sid.digits.push_back(static_cast<std::uint32_t>(v));
    return sid;
}

// Orders by score (then SID), drops duplicate SIDs keeping the best, keeps K.
decode_result finalize(std::vector<decode_candidate> all, std::size_t top_k, std::size_t calls) {
    std::sort(all.begin(), all.end(), [](const decode_candidate& a, const decode_candidate& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.sid < b.sid;
    });
    decode_result res;
    res.decoder_calls = calls;
    std::set<semantic_id> seen;
    for (auto& c : all) {
        if (!seen.insert(c.sid).second) continue;
        res.candidates.push_back(std::move(c));
        if (res.candidates.size() == top_k) break;
    }
    res.short_of_k = res.candidates.size() < top_k;
    return res;
}

decode_result finalize_beam(std::vector<beam_branch>& beam, std::size_t top_k, std::size_t calls) {
    std::vector<decode_candidate> all;
    for (auto& b : beam) all.push_back({to_sid(b.slots), b.score, std::move(b.fills)});
    return finalize(std::move(all), top_k, calls);
}

} // namespace

decode_result cpd_decode(const encoder_state& state, const model_params& params, const model_config& config,
                         std::size_t beam_width, std::size_t top_k, const beam_observer& observer) {
    check_widths(beam_width, top_k);
    std::vector<beam_branch> beam{root_branch(config.digits)};
    std::size_t calls = 0;
    for (std::size_t step = 0; step < config.digits; ++step) {
        const auto dists = expand(beam, state, params, config);
        calls += beam.size();
        std::vector<child> children;
        children.reserve(beam.size() * beam[0].masked.size() * config.codebook_size);
        for (std::size_t b = 0; b < beam.size(); ++b)
            for (auto k : beam[b].masked)
                for (std::uint32_t c = 0; c < config.codebook_size; ++c) {
                    const double lp = dists[b].log_probs(k, c);
                    children.push_back({beam[b].score + lp, b, k, c, lp});
                }
        beam = commit(beam, children, beam_width);
        if (observer) observer(step, beam);
    }
    return finalize_beam(beam, top_k, calls);
}

decode_result fixed_order_beam(const encoder_state& state, const model_params& params, const model_config& config,
                               const std::vector<std::size_t>& order, std::size_t beam_width, std::size_t top_k) {
    check_widths(beam_width, top_k);
    std::vector<std::size_t> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> identity(config.digits);
    std::iota(identity.begin(), identity.end(), 0);
    if (sorted != identity) throw config_error("decode order is not a permutation of the digits");

    std::vector<beam_branch> beam{root_branch(config.digits)};
    std::size_t calls = 0;
    for (std::size_t step = 0; step < config.digits; ++step) {
        const auto dists = expand(beam, state, params, config);
        calls += beam.size();
        const std::size_t k = order[step];
        std::vector<child> children;
        for (std::size_t b = 0; b < beam.size(); ++b)
            for (std::uint32_t c = 0; c < config.codebook_size; ++c) {
                const double lp = dists[b].log_probs(k, c);
                children.push_back({beam[b].score + lp, b, k, c, lp});
            }
        beam = commit(beam, children, beam_width);
    }
    return finalize_beam(beam, top_k, calls);
}

namespace {

struct oracle_search {
    const encoder_state& state;
    const model_params& params;
    const model_config& config;
    std::vector<decode_candidate> leaves;
    std::size_t calls = 0;

    void descend(slot_values& slots, double score, std::vector<fill_step>& fills) {
        std::vector<std::size_t> masked;
        for (std::size_t k = 0; k < slots.size(); ++k)
            if (slots[k] == mask_slot) masked.push_back(k);
        if (masked.empty()) {
            leaves.push_back({to_sid(slots), score, fills});
            return;
        }
        const auto dist = decode_digits(slots, state, params, config);
        ++calls;
        for (auto k : masked)
            for (std::uint32_t c = 0; c < config.codebook_size; ++c) {
                const double lp = dist.log_probs(k, c);
                slots[k] = static_cast<std::int32_t>(c);
                fills.push_back({k, c, lp});
                descend(slots, score + lp, fills);
                fills.pop_back();
                slots[k] = mask_slot;
            }
    }
};

} // namespace

decode_result exact_oracle(const encoder_state& state, const model_params& params, const model_config& config,
                           std::size_t top_k) {
    if (top_k < 1) throw config_error("K must be at least 1");
    const double space = std::pow(static_cast<double>(config.codebook_size), static_cast<double>(config.digits));
    if (space > 1e6) throw config_error("exact oracle refuses: M^n exceeds 10^6");
    oracle_search search{state, params, config, {}, 0};
    slot_values slots = fully_masked(config.digits);
    std::vector<fill_step> fills;
    search.descend(slots, 0.0, fills);
    return finalize(std::move(search.leaves), top_k, search.calls);
}

filtered_result filter_to_catalog(const decode_result& result, const std::set<semantic_id>& catalog) {
    filtered_result out;
    out.result.decoder_calls = result.decoder_calls;
    out.result.short_of_k = result.short_of_k;
    for (const auto& c : result.candidates) {
        if (catalog.contains(c.sid)) out.result.candidates.push_back(c);
        else ++out.dropped;
    }
    return out;
}

} // namespace sidrec
