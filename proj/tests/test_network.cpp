#include "gradcheck.hpp"
#include "helpers.hpp"
#include "sidrec/checkpoint.hpp"
#include "sidrec/error.hpp"

#include <doctest.h>

#include <cmath>

using namespace sidrec;
using namespace sidrec::testing;

namespace {

void zero_heads(model_params& p) {
    for (auto& h : p.output_heads) h.fill(0.0);
    for (auto& b : p.output_head_biases) b.fill(0.0);
}

} // namespace

TEST_CASE("config validation") {
    auto c = tiny_config();
    CHECK_NOTHROW(c.validate());
    c.heads = 3;
    CHECK_THROWS_AS(c.validate(), config_error);
    c = tiny_config();
    c.dropout = 1.0;
    CHECK_THROWS_AS(c.validate(), config_error);
    c = tiny_config();
    c.digits = 0;
    CHECK_THROWS_AS(c.validate(), config_error);
}

TEST_CASE("zero output heads give uniform rows") {
    const auto c = tiny_config();
    auto p = random_model(c, 3);
    zero_heads(p);
    rng gen(1);
    const auto state = encode(random_context(gen, 2, 3, 4), p, c);
    const auto d = decode_digits(slot_values{mask_slot, 2, mask_slot}, state, p, c);
    for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t v = 0; v < 4; ++v) CHECK(d.probs(k, v) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("fully masked rows are normalized and strictly inside (0, 1)") {
    const auto c = tiny_config();
    const auto p = random_model(c, 4);
    rng gen(2);
    for (std::size_t len = 0; len <= 5; ++len) {
        const auto state = encode(random_context(gen, std::min<std::size_t>(len, 4), 3, 4), p, c);
        const auto d = decode_digits(fully_masked(3), state, p, c);
        for (std::size_t k = 0; k < 3; ++k) {
            double sum = 0.0;
            for (std::size_t v = 0; v < 4; ++v) {
                CHECK(d.probs(k, v) > 0.0);
                CHECK(d.probs(k, v) < 1.0);
                CHECK(std::exp(d.log_probs(k, v)) == doctest::Approx(d.probs(k, v)).epsilon(1e-12));
                sum += d.probs(k, v);
            }
            CHECK(std::fabs(sum - 1.0) <= 1e-5);
        }
    }
}

TEST_CASE("empty context encodes to finite values") {
    const auto c = tiny_config();
    const auto p = random_model(c, 5);
    const auto state = encode({}, p, c);
    CHECK(state.hidden.rows() == c.input_length);
    CHECK(state.hidden.cols() == c.d_model);
    for (double v : state.hidden.values()) CHECK(std::isfinite(v));
    std::size_t attendable = 0;
    for (char v : state.key_valid) attendable += v != 0;
    CHECK(attendable == 1);
    const auto d = decode_digits(fully_masked(3), state, p, c);
    for (double v : d.probs.values()) CHECK(std::isfinite(v));
}

TEST_CASE("eval-mode forward passes are bitwise deterministic") {
    const auto c = tiny_config();
    const auto p = random_model(c, 6);
    rng gen(3);
    const auto ctx = random_context(gen, 3, 3, 4);
    const auto a = encode(ctx, p, c);
    const auto b = encode(ctx, p, c);
    CHECK(a.hidden == b.hidden);
    CHECK(a.cross_keys == b.cross_keys);
    const slot_values slots{1, mask_slot, 3};
    CHECK(decode_digits(slots, a, p, c).probs == decode_digits(slots, b, p, c).probs);
}

TEST_CASE("history order matters") {
    const auto c = tiny_config();
    const auto p = random_model(c, 7);
    const std::vector<semantic_id> ctx{{0, 1, 2}, {3, 3, 0}, {1, 0, 1}};
    const std::vector<semantic_id> swapped{{3, 3, 0}, {0, 1, 2}, {1, 0, 1}};
    CHECK_FALSE(encode(ctx, p, c).hidden == encode(swapped, p, c).hidden);
}

TEST_CASE("visible digits influence other digits") {
    const auto c = tiny_config();
    const auto p = random_model(c, 8);
    rng gen(4);
    const auto state = encode(random_context(gen, 2, 3, 4), p, c);
    const auto a = decode_digits(slot_values{0, mask_slot, mask_slot}, state, p, c);
    const auto b = decode_digits(slot_values{3, mask_slot, mask_slot}, state, p, c);
    double diff = 0.0;
    for (std::size_t k = 1; k < 3; ++k)
        for (std::size_t v = 0; v < 4; ++v) diff = std::max(diff, std::fabs(a.probs(k, v) - b.probs(k, v)));
    CHECK(diff > 1e-6);
}

TEST_CASE("cached cross-attention equals a fresh computation") {
    const auto c = tiny_config();
    const auto p = random_model(c, 9);
    rng gen(5);
    for (int trial = 0; trial < 20; ++trial) {
        const auto state = encode(random_context(gen, gen.below(5), 3, 4), p, c);
        slot_values slots(3);
        for (auto& s : slots) s = gen.below(2) ? mask_slot : static_cast<std::int32_t>(gen.below(4));
        const auto a = decode_digits(slots, state, p, c);
        const auto b = decode_digits_uncached(slots, state, p, c);
        for (std::size_t i = 0; i < a.probs.size(); ++i)
            CHECK(std::fabs(a.probs.data()[i] - b.probs.data()[i]) <= 1e-6);
    }
}

TEST_CASE("input errors") {
    const auto c = tiny_config();
    const auto p = random_model(c, 10);
    CHECK_THROWS(encode(std::vector<semantic_id>{{0, 4, 0}}, p, c));
    CHECK_THROWS(encode(std::vector<semantic_id>{{0, 1}}, p, c));
    CHECK_THROWS(encode(std::vector<semantic_id>(5, semantic_id{0, 0, 0}), p, c));
    const auto state = encode({}, p, c);
    CHECK_THROWS(decode_digits(slot_values{0, 1}, state, p, c));
    CHECK_THROWS(decode_digits(slot_values{0, 1, 9}, state, p, c));

    supervised_sample s{{}, {1, 2, 3}, {{{}}}};
    CHECK_THROWS_AS(loss_and_grad(std::span(&s, 1), p, c, 0.1), compute_error);
    s.views = {{{0, 0}}};
    CHECK_THROWS_AS(loss_and_grad(std::span(&s, 1), p, c, 0.1), compute_error);
}

TEST_CASE("uniform predictions with no smoothing cost ln M per digit") {
    const auto c = tiny_config();
    auto p = random_model(c, 11);
    zero_heads(p);
    supervised_sample s{{{0, 1, 2}}, {1, 2, 3}, {{{0}}, {{0, 1, 2}}}};
    const auto out = loss_and_grad(std::span(&s, 1), p, c, 0.0);
    CHECK(out.loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("predicting the smoothed target costs its entropy") {
    const auto c = tiny_config();
    auto p = random_model(c, 12);
    zero_heads(p);
    const semantic_id target{1, 2, 3};
    const double alpha = 0.1;
    double entropy = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
        const auto q = smoothed_target(target[k], 4, alpha);
        for (std::size_t v = 0; v < 4; ++v) p.output_head_biases[k](0, v) = std::log(q[v]);
    }
    for (double q : smoothed_target(0, 4, alpha)) entropy -= q * std::log(q);
    supervised_sample s{{}, target, {{{2}}, {{0, 2}}}};
    CHECK(loss_and_grad(std::span(&s, 1), p, c, alpha).loss == doctest::Approx(entropy).epsilon(1e-12));
}

TEST_CASE("gradient matches central differences") {
    for (std::uint64_t seed : {11u, 12u}) {
        const auto st = gradient_check(tiny_config(), seed, 500, 1e-3, 1e-4, 0.2);
        MESSAGE("seed " << seed << ": within=" << st.within << "/" << st.sampled << " worst=" << st.worst);
        CHECK(st.within * 100 >= st.sampled * 99);
    }
}

TEST_CASE("gradient at the production init scale, small eps") {
    // Gradients here are ~1e-7, so round-off needs an absolute floor.
    const auto st = gradient_check(tiny_config(), 21, 200, 1e-5, 1e-4, 0.02, 1e-5);
    MESSAGE("within=" << st.within << "/" << st.sampled << " worst=" << st.worst);
    CHECK(st.within * 100 >= st.sampled * 99);
}

TEST_CASE("sample_graph matches loss_and_grad") {
    const auto c = tiny_config();
    const auto p = random_model(c, 13);
    supervised_sample s{{{0, 1, 2}, {3, 2, 1}}, {2, 0, 1}, {{{1}}, {{1, 2}}}};
    const auto whole = loss_and_grad(std::span(&s, 1), p, c, 0.1);

    auto grad = model_params::zeros(c);
    sample_graph g(s.context, p, c, {});
    double loss = 0.0;
    for (const auto& v : s.views) loss += 0.5 * g.add_view(s.target, v, 0.1, 0.5, grad);
    g.backward_encoder(grad);
    CHECK(loss == doctest::Approx(whole.loss).epsilon(1e-12));
    CHECK(grad == whole.gradient);
}

TEST_CASE("dropout is reproducible from its seed") {
    auto c = tiny_config();
    c.dropout = 0.3;
    const auto p = random_model(c, 14);
    supervised_sample s{{{0, 1, 2}}, {2, 0, 1}, {{{0, 1, 2}}}};
    rng g1(5), g2(5), g3(6);
    const auto a = loss_and_grad(std::span(&s, 1), p, c, 0.1, {0.3, &g1});
    const auto b = loss_and_grad(std::span(&s, 1), p, c, 0.1, {0.3, &g2});
    const auto d = loss_and_grad(std::span(&s, 1), p, c, 0.1, {0.3, &g3});
    CHECK(a.loss == b.loss);
    CHECK(a.gradient == b.gradient);
    CHECK(a.loss != d.loss);
}

TEST_CASE("parameter shapes follow the config") {
    auto c = tiny_config();
    c.d_model = 32;
    c.heads = 4;
    const auto p = model_params::initialize(c, 1);
    CHECK(p.sid_embeddings.size() == 3);
    CHECK(p.sid_embeddings[0].cols() == 11); // ceil(32 / 3)
    CHECK(p.item_projection.rows() == 33);
    CHECK(p.item_projection.cols() == 32);
    CHECK(p.positions.rows() == c.input_length);
    CHECK(p.output_heads[2].rows() == 32);
    CHECK(p.output_heads[2].cols() == 4);
    CHECK(p.all_finite());
    for (const auto& b : p.output_head_biases)
        for (double v : b.values()) CHECK(v == 0.0);
    // Truncated normal: every weight within two standard deviations.
    for (double v : p.item_projection.values()) CHECK(std::fabs(v) <= 0.04 + 1e-9);
}

TEST_CASE("checkpoints round-trip bitwise") {
    const auto c = tiny_config();
    const auto p = model_params::initialize(c, 15);
    const auto bytes = serialize_checkpoint(c, p, {{"run.seed", "15"}});
    CHECK(bytes.substr(0, 4) == "SIDM");
    const auto back = deserialize_checkpoint(bytes);
    CHECK(back.config == c);
    CHECK(back.params == p);
    CHECK(back.metadata.at("run.seed") == "15");
    CHECK(serialize_checkpoint(back.config, back.params, {{"run.seed", "15"}}) == bytes);

    auto broken = bytes;
    broken[0] = 'X';
    CHECK_THROWS_AS(deserialize_checkpoint(broken), data_error);
    CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() / 2)), data_error);

    // A different format version in the config block is rejected.
    auto versioned = bytes;
    const auto pos = versioned.find("format_version=1");
    REQUIRE(pos != std::string::npos);
    versioned[pos + 15] = '2';
    CHECK_THROWS_AS(deserialize_checkpoint(versioned), data_error);
}
