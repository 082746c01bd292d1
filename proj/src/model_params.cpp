#include "sidrec/network.hpp"

#include "sidrec/error.hpp"

#include <cmath>

namespace sidrec {

void model_config::validate() const {
    auto positive = [](std::size_t v, const char* name) {
        if (v == 0) throw config_error(std::string(name) + " must be positive");
    };
    positive(d_model, "d_model");
    positive(d_ff, "d_ff");
    positive(heads, "heads");
    positive(encoder_layers, "encoder_layers");
    positive(decoder_layers, "decoder_layers");
    positive(digits, "n");
    positive(codebook_size, "M");
    positive(input_length, "input_length");
    if (d_model % heads != 0) throw config_error("d_model must be divisible by heads");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw config_error("dropout must lie in [0, 1)");
}

namespace {

template <class Params, class Fn>
void visit_all(Params& p, Fn&& fn) {
    auto norm = [&](const std::string& prefix, auto& ln) {
        fn(prefix + ".gain", ln.gain);
        fn(prefix + ".bias", ln.bias);
    };
    auto attn = [&](const std::string& prefix, auto& a) {
        fn(prefix + ".wq", a.wq);
        fn(prefix + ".bq", a.bq);
        fn(prefix + ".wk", a.wk);
        fn(prefix + ".bk", a.bk);
        fn(prefix + ".wv", a.wv);
        fn(prefix + ".bv", a.bv);
        fn(prefix + ".wo", a.wo);
        fn(prefix + ".bo", a.bo);
    };
    auto ffn = [&](const std::string& prefix, auto& f) {
        fn(prefix + ".w1", f.w1);
        fn(prefix + ".b1", f.b1);
        fn(prefix + ".w2", f.w2);
        fn(prefix + ".b2", f.b2);
    };
    for (std::size_t k = 0; k < p.sid_embeddings.size(); ++k)
        fn("sid_embedding." + std::to_string(k), p.sid_embeddings[k]);
    fn("mask_embedding", p.mask_embedding);
    fn("item_projection.weight", p.item_projection);
    fn("item_projection.bias", p.item_projection_bias);
    fn("pad_embedding", p.pad_embedding);
    fn("positions", p.positions);
    fn("slot_positions", p.slot_positions);
    for (std::size_t l = 0; l < p.encoder.size(); ++l) {
        const auto prefix = "encoder." + std::to_string(l);
        norm(prefix + ".norm1", p.encoder[l].norm1);
        attn(prefix + ".self_attention", p.encoder[l].self_attention);
        norm(prefix + ".norm2", p.encoder[l].norm2);
        ffn(prefix + ".ffn", p.encoder[l].ffn);
    }
    norm("encoder_norm", p.encoder_norm);
    for (std::size_t l = 0; l < p.decoder.size(); ++l) {
        const auto prefix = "decoder." + std::to_string(l);
        norm(prefix + ".norm1", p.decoder[l].norm1);
        attn(prefix + ".self_attention", p.decoder[l].self_attention);
        norm(prefix + ".norm2", p.decoder[l].norm2);
        attn(prefix + ".cross_attention", p.decoder[l].cross_attention);
        norm(prefix + ".norm3", p.decoder[l].norm3);
        ffn(prefix + ".ffn", p.decoder[l].ffn);
    }
    norm("decoder_norm", p.decoder_norm);
    for (std::size_t k = 0; k < p.output_heads.size(); ++k) {
        fn("output_head." + std::to_string(k) + ".weight", p.output_heads[k]);
        fn("output_head." + std::to_string(k) + ".bias", p.output_head_biases[k]);
    }
}

layer_norm_weights make_norm(std::size_t d) { return {matrix(1, d, 1.0), matrix(1, d)}; }

attention_weights make_attention(std::size_t d) {
    return {matrix(d, d), matrix(1, d), matrix(d, d), matrix(1, d),
            matrix(d, d), matrix(1, d), matrix(d, d), matrix(1, d)};
}

feed_forward_weights make_ffn(std::size_t d, std::size_t ff) {
    return {matrix(d, ff), matrix(1, ff), matrix(ff, d), matrix(1, d)};
}

// Biases and normalization parameters start at fixed values; everything
// else is drawn at random.
bool is_random_init(const std::string& name) {
    const auto dot = name.rfind('.');
    const std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
    static const char* fixed[] = {"gain", "bias", "bq", "bk", "bv", "bo", "b1", "b2"};
    for (const char* f : fixed)
        if (leaf == f) return false;
    return true;
}

} // namespace

model_params model_params::zeros(const model_config& c) {
    c.validate();
    const std::size_t d = c.d_model, de = c.sid_embedding_dim();
    model_params p;
    for (std::size_t k = 0; k < c.digits; ++k) p.sid_embeddings.emplace_back(c.codebook_size, de);
    p.mask_embedding = matrix(1, de);
    p.item_projection = matrix(c.digits * de, d);
    p.item_projection_bias = matrix(1, d);
    p.pad_embedding = matrix(1, d);
    p.positions = matrix(c.input_length, d);
    p.slot_positions = matrix(c.digits, d);
    for (std::size_t l = 0; l < c.encoder_layers; ++l)
        p.encoder.push_back({make_norm(d), make_attention(d), make_norm(d), make_ffn(d, c.d_ff)});
    p.encoder_norm = make_norm(d);
    for (std::size_t l = 0; l < c.decoder_layers; ++l)
        p.decoder.push_back(
            {make_norm(d), make_attention(d), make_norm(d), make_attention(d), make_norm(d), make_ffn(d, c.d_ff)});
    p.decoder_norm = make_norm(d);
    for (std::size_t k = 0; k < c.digits; ++k) {
        p.output_heads.emplace_back(d, c.codebook_size);
        p.output_head_biases.emplace_back(1, c.codebook_size);
    }
    p.set_zero();
    return p;
}

model_params model_params::initialize(const model_config& c, std::uint64_t seed, double stddev) {
    model_params p = zeros(c);
    rng gen(seed);
    p.visit([&](const std::string& name, matrix& m) {
        if (name.ends_with(".gain")) {
            m.fill(1.0);
        } else if (is_random_init(name)) {
            for (auto& v : m.values()) v = static_cast<double>(static_cast<float>(gen.truncated_normal(stddev)));
        }
    });
    return p;
}

void model_params::visit(const std::function<void(const std::string&, matrix&)>& fn) { visit_all(*this, fn); }

void model_params::visit(const std::function<void(const std::string&, const matrix&)>& fn) const {
    visit_all(*this, fn);
}

std::size_t model_params::parameter_count() const {
    std::size_t total = 0;
    visit([&](const std::string&, const matrix& m) { total += m.size(); });
    return total;
}

bool model_params::all_finite() const {
    bool ok = true;
    visit([&](const std::string&, const matrix& m) {
        for (double v : m.values()) ok = ok && std::isfinite(v);
    });
    return ok;
}

void model_params::set_zero() {
    visit([](const std::string&, matrix& m) { m.fill(0.0); });
}

void model_params::add_scaled(const model_params& other, double scale) {
    std::vector<const matrix*> src;
    other.visit([&](const std::string&, const matrix& m) { src.push_back(&m); });
    std::size_t i = 0;
    visit([&](const std::string&, matrix& m) {
        const matrix& o = *src.at(i++);
        if (!m.same_shape(o)) throw std::invalid_argument("add_scaled: shape mismatch");
        double* dst = m.data();
        const double* s = o.data();
        for (std::size_t j = 0; j < m.size(); ++j) dst[j] += scale * s[j];
    });
}

slot_values fully_masked(std::size_t digits) { return slot_values(digits, mask_slot); }

slot_values slots_from(const semantic_id& sid) {
    slot_values out;
    for (auto d : sid.digits) out.push_back(static_cast<std::int32_t>(d));
    return out;
}

} // namespace sidrec
