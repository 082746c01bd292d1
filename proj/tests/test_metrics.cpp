#include "sidrec/metrics.hpp"
#include "sidrec/random.hpp"
#include "sidrec/training.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace sidrec;

namespace {

decode_result ranked(std::initializer_list<std::uint32_t> firsts) {
    decode_result r;
    for (auto f : firsts) r.candidates.push_back({semantic_id{f, 0}, 0.0, {}});
    return r;
}

} // namespace

TEST_CASE("rank lookup") {
    const auto r = ranked({4, 2, 7});
    CHECK(rank_of(r, semantic_id{4, 0}) == 1u);
    CHECK(rank_of(r, semantic_id{7, 0}) == 3u);
    CHECK_FALSE(rank_of(r, semantic_id{7, 1}).has_value());
    CHECK_FALSE(rank_of(decode_result{}, semantic_id{4, 0}).has_value());
}

TEST_CASE("per-instance hit and ndcg") {
    CHECK(hit_at(1, 1) == 1.0);
    CHECK(ndcg_at(1, 10) == 1.0);
    CHECK(ndcg_at(3, 10) == doctest::Approx(0.5));
    CHECK(ndcg_at(3, 2) == 0.0);
    CHECK(hit_at(3, 2) == 0.0);
    CHECK(hit_at(std::nullopt, 10) == 0.0);
    CHECK(ndcg_at(std::nullopt, 10) == 0.0);
    CHECK(ndcg_at(10, 10) == doctest::Approx(1.0 / std::log2(11.0)));
}

TEST_CASE("validation score weights") {
    eval_outcome o;
    o.recall[10] = 1.0;
    o.ndcg[10] = 1.0;
    CHECK(validation_score(o) == doctest::Approx(1.0));
    o.recall[10] = 0.0;
    o.ndcg[10] = 0.0;
    CHECK(validation_score(o) == 0.0);
    o.recall[10] = 0.08;
    o.ndcg[10] = 0.05;
    CHECK(validation_score(o) == doctest::Approx(0.056));
}

TEST_CASE("aggregate") {
    const auto o = aggregate({1u, 3u, std::nullopt, 12u}, {1, 5, 10, 20});
    CHECK(o.recall.at(1) == doctest::Approx(0.25));
    CHECK(o.recall.at(5) == doctest::Approx(0.5));
    CHECK(o.recall.at(10) == doctest::Approx(0.5));
    CHECK(o.recall.at(20) == doctest::Approx(0.75));
    CHECK(o.ndcg.at(5) == doctest::Approx((1.0 + 0.5) / 4));

    const auto empty = aggregate({}, {10});
    CHECK(empty.recall.at(10) == 0.0);

    const auto report = o.to_report({{"run.seed", "42"}});
    CHECK(report.find("recall@10=0.500000") != std::string::npos);
    CHECK(report.find("[config]\nrun.seed=42") != std::string::npos);
}

TEST_CASE("metric properties on random rank lists") {
    rng gen(1);
    const std::vector<std::size_t> ks{1, 2, 5, 10, 20, 50};
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::optional<std::size_t>> ranks;
        const auto count = 1 + gen.below(40);
        for (std::size_t i = 0; i < count; ++i) {
            if (gen.uniform() < 0.3) ranks.push_back(std::nullopt);
            else ranks.push_back(1 + gen.below(60));
        }
        const auto o = aggregate(ranks, ks);
        for (std::size_t i = 0; i < ks.size(); ++i) {
            const auto k = ks[i];
            CHECK(o.ndcg.at(k) <= o.recall.at(k) + 1e-15);
            CHECK(o.recall.at(k) >= 0.0);
            CHECK(o.recall.at(k) <= 1.0);
            if (i > 0) {
                CHECK(o.recall.at(k) >= o.recall.at(ks[i - 1]));
                CHECK(o.ndcg.at(k) >= o.ndcg.at(ks[i - 1]));
            }
        }
        auto shuffled = ranks;
        gen.shuffle(shuffled.begin(), shuffled.end());
        const auto s = aggregate(shuffled, ks);
        for (auto k : ks) {
            CHECK(s.recall.at(k) == doctest::Approx(o.recall.at(k)).epsilon(1e-12));
            CHECK(s.ndcg.at(k) == doctest::Approx(o.ndcg.at(k)).epsilon(1e-12));
        }
    }
}

TEST_CASE("early stopping") {
    SUBCASE("improving scores never stop") {
        early_stopper s(3);
        for (int e = 0; e < 50; ++e) CHECK_FALSE(s.observe(0.01 * e));
        CHECK(s.best_epoch() == 50);
    }
    SUBCASE("flat scores stop after patience epochs") {
        early_stopper s(4);
        std::size_t stopped_at = 0;
        for (int e = 0; e < 20 && !stopped_at; ++e)
            if (s.observe(0.3)) stopped_at = s.epochs_seen();
        CHECK(stopped_at == 5);
        CHECK(s.best_epoch() == 1);
    }
    SUBCASE("noisy traces match a direct replay") {
        rng gen(2);
        for (int trial = 0; trial < 100; ++trial) {
            const std::size_t patience = 1 + gen.below(6);
            std::vector<double> scores;
            for (int e = 0; e < 60; ++e) scores.push_back(std::round(gen.uniform() * 20) / 20);
            early_stopper s(patience);
            std::size_t stop = 0;
            for (std::size_t e = 0; e < scores.size() && !stop; ++e)
                if (s.observe(scores[e])) stop = e + 1;

            // Replay: the first epoch whose preceding `patience` epochs all
            // failed to beat the running best.
            std::size_t best = 0, expect_stop = 0;
            for (std::size_t e = 1; e < scores.size(); ++e) {
                if (scores[e] > scores[best]) best = e;
                else if (e - best >= patience) {
                    expect_stop = e + 1;
                    break;
                }
            }
            CHECK(stop == expect_stop);
            const std::size_t upto = stop ? stop : scores.size();
            const auto top = std::max_element(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(upto));
            CHECK(s.best_epoch() == static_cast<std::size_t>(top - scores.begin()) + 1);
            CHECK(s.best_score() == *top);
        }
    }
}

TEST_CASE("effective sample passes") {
    noising_options ocn;
    CHECK(ocn.views_per_sample(4) == 4);
    train_trace t;
    t.best_epoch = 7;
    t.views_per_sample_per_epoch = ocn.views_per_sample(4);
    CHECK(t.esp() == 28);
    t.validation_scores = {0.1, 0.2};
    t.train_losses = {3.0, 2.0};
    CHECK(t.to_text().find("esp=28") != std::string::npos);
}
