#pragma once

#include "sidrec/network.hpp"
#include "sidrec/random.hpp"

#include <vector>

namespace sidrec::testing {

inline model_config tiny_config(std::size_t digits = 3, std::size_t codebook = 4) {
    model_config c;
    c.d_model = 8;
    c.d_ff = 16;
    c.heads = 2;
    c.encoder_layers = 1;
    c.decoder_layers = 1;
    c.digits = digits;
    c.codebook_size = codebook;
    c.input_length = 4;
    c.dropout = 0.0;
    return c;
}

inline semantic_id random_sid(rng& gen, std::size_t digits, std::size_t codebook) {
    semantic_id s;
    for (std::size_t k = 0; k < digits; ++k) s.digits.push_back(static_cast<std::uint32_t>(gen.below(codebook)));
    return s;
}

inline std::vector<semantic_id> random_context(rng& gen, std::size_t length, std::size_t digits,
                                               std::size_t codebook) {
    std::vector<semantic_id> out;
    for (std::size_t i = 0; i < length; ++i) out.push_back(random_sid(gen, digits, codebook));
    return out;
}

// Random model with a large enough init that outputs depend visibly on the
// inputs; biases and gains are perturbed too.
inline model_params random_model(const model_config& c, std::uint64_t seed, double stddev = 0.5) {
    auto p = model_params::initialize(c, seed, stddev);
    rng gen(mix_seed(seed, 99));
    p.visit([&](const std::string&, matrix& m) {
        for (auto& v : m.values()) v = static_cast<double>(static_cast<float>(v + 0.2 * stddev * gen.normal()));
    });
    return p;
}

} // namespace sidrec::testing
