// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include "gradcheck.hpp"
#include "helpers.hpp"
#include "sidrec/combinatorics.hpp"
#include "sidrec/commands.hpp"
#include "sidrec/decoding.hpp"
#include "sidrec/metrics.hpp"
#include "sidrec/noising.hpp"
#include "sidrec/tokenizer.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>

using namespace sidrec;
using namespace sidrec::testing;
namespace fs = std::filesystem;

namespace {

struct verdict {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok && pass) detail = "failed: " + what;
        pass = pass && ok;
    }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// ---------------------------------------------------------------------------

verdict combinatorics_exactness() {
    verdict v;
    for (std::size_t n = 1; n <= 10; ++n) {
        std::uint64_t brute = 0;
        for (std::uint32_t mask = 1; mask < (1u << n); ++mask) brute += static_cast<std::uint64_t>(std::popcount(mask));
        const auto census = count_signals(n);
        v.require(census.mdm_signals == brute, "closed form vs brute force at n=" + std::to_string(n));
        v.require(enumerate_signals(n).size() == brute, "enumeration size at n=" + std::to_string(n));
        v.require(census.min_samples_mdm == (1u << n) - 1, "minimum samples at n=" + std::to_string(n));
    }
    const auto c4 = count_signals(4);
    v.require(c4.mdm_signals == 32, "n=4 signals");
    v.require(c4.min_samples_mdm == 15, "n=4 minimum masking configurations");
    v.require(minimum_cover(4) == 15, "n=4 minimum cover by search");
    if (v.pass) v.detail = "n=1..10 exact; n=4: 32 signals, 15 configurations";
    return v;
}

verdict cpd_oracle_equivalence() {
    verdict v;
    const auto c = tiny_config(3, 4);
    rng gen(2024);
    std::size_t monotone_breaks = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto p = random_model(c, 1000 + seed);
        const auto state = encode(random_context(gen, 1 + gen.below(4), 3, 4), p, c);
        const auto oracle = exact_oracle(state, p, c, 64);
        const auto full = cpd_decode(state, p, c, 1'000'000, 64);
        bool same = full.candidates.size() == oracle.candidates.size();
        for (std::size_t i = 0; same && i < full.candidates.size(); ++i)
            same = full.candidates[i].sid == oracle.candidates[i].sid &&
                   std::fabs(full.candidates[i].score - oracle.candidates[i].score) <= 1e-9;
        v.require(same, "untruncated beam differs from oracle (model " + std::to_string(seed) + ")");
        double previous = -1e300;
        for (std::size_t width : {2u, 4u, 8u}) {
            const double top = cpd_decode(state, p, c, width, 1).candidates[0].score;
            v.require(top <= oracle.candidates[0].score + 1e-12, "beam top-1 above oracle");
            if (top < previous) ++monotone_breaks;
            previous = top;
        }
    }
    v.require(monotone_breaks == 0, std::to_string(monotone_breaks) + " top-1 decreases as B_act grows");
    if (v.pass) v.detail = "100 models exact; top-1 <= oracle and non-decreasing over B_act 2,4,8";
    return v;
}

verdict gradient_correctness() {
    verdict v;
    const auto st = gradient_check(tiny_config(3, 4), 11, 500, 1e-3, 1e-4, 0.2);
    const double frac = static_cast<double>(st.within) / static_cast<double>(st.sampled);
    v.require(st.sampled == 500, "sampled coordinates");
    v.require(frac >= 0.99, "agreement " + fmt("%.3f", frac));
    v.detail = std::to_string(st.within) + "/" + std::to_string(st.sampled) + " within 1e-4 relative" +
               (v.pass ? "" : "; " + v.detail);
    return v;
}

verdict distribution_normalization() {
    verdict v;
    rng gen(4);
    double worst = 0.0;
    std::size_t calls = 0;
    for (std::uint64_t m = 0; m < 100; ++m) {
        const std::size_t n = 1 + gen.below(4), codebook = 2 + gen.below(7);
        auto c = tiny_config(n, codebook);
        const auto p = random_model(c, 77 + m, 0.3 + gen.uniform() * 1.5);
        const auto state = encode(random_context(gen, gen.below(c.input_length + 1), n, codebook), p, c);
        for (int k = 0; k < 100; ++k, ++calls) {
            slot_values slots(n);
            for (auto& s : slots) s = gen.uniform() < 0.5 ? mask_slot : static_cast<std::int32_t>(gen.below(codebook));
            const auto d = decode_digits(slots, state, p, c);
            for (std::size_t r = 0; r < n; ++r) {
                double sum = 0.0;
                for (double x : d.probs.row(r)) {
                    v.require(std::isfinite(x) && x >= 0.0, "non-finite or negative probability");
                    sum += x;
                }
                worst = std::max(worst, std::fabs(sum - 1.0));
            }
        }
    }
    v.require(worst <= 1e-5, "row sum deviation " + fmt("%.3g", worst));
    if (v.pass) v.detail = std::to_string(calls) + " calls, worst |sum-1| = " + fmt("%.3g", worst);
    return v;
}

verdict ocn_structure() {
    verdict v;
    rng gen(5);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + gen.below(8);
        difficulty_profile prof;
        for (std::size_t k = 0; k < n; ++k) {
            const double d = std::round(gen.uniform() * 8) / 10; // ties happen
            prof.delta.push_back(d);
            prof.p_max.push_back(1.0 - d);
        }
        prof.order.resize(n);
        std::iota(prof.order.begin(), prof.order.end(), 0);
        std::stable_sort(prof.order.begin(), prof.order.end(),
                         [&](std::size_t a, std::size_t b) { return prof.delta[a] > prof.delta[b]; });
        std::vector<std::size_t> schedule;
        for (std::size_t m = 1; m <= n; ++m)
            if (m == n || gen.uniform() < 0.5) schedule.push_back(m);
        const auto views = build_ocn_views(prof, schedule);
        v.require(views.views.size() == schedule.size(), "view count");
        v.require(views.nested(), "views not nested");
        const std::size_t hardest = prof.order[0];
        for (std::size_t r = 0; r < schedule.size(); ++r) {
            v.require(views.ratio(r) == static_cast<double>(schedule[r]) / static_cast<double>(n), "ratio t_r");
            const auto& m = views.views[r].masked;
            v.require(std::find(m.begin(), m.end(), hardest) != m.end(), "hardest digit missing from a view");
        }
    }

    // The four selection/refresh variants on live models.
    for (std::size_t n : {2u, 3u, 4u}) {
        const auto c = tiny_config(n, 4);
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const auto p = random_model(c, 300 + seed);
            const auto state = encode(random_context(gen, 2, n, 4), p, c);
            const auto prof = probe_difficulty(state, p, c);
            const auto target = random_sid(gen, n, 4);
            for (auto policy : {selection_policy::least, selection_policy::most})
                for (auto refresh : {refresh_mode::static_order, refresh_mode::refresh}) {
                    const auto out = ocn_variant(prof, full_schedule(n), policy, refresh, target, state, p, c);
                    auto sorted = out.order;
                    std::sort(sorted.begin(), sorted.end());
                    std::vector<std::size_t> identity(n);
                    std::iota(identity.begin(), identity.end(), 0);
                    v.require(sorted == identity, "variant order is not a permutation");
                    v.require(out.schedule.nested() && out.schedule.views.size() == n, "variant schedule invalid");
                }
        }
        // Uniform difficulty: zero output weights give 1/M everywhere.
        auto flat = random_model(c, 9);
        for (auto& h : flat.output_heads) h.fill(0.0);
        for (auto& b : flat.output_head_biases) b.fill(0.0);
        const auto state = encode({}, flat, c);
        const auto prof = probe_difficulty(state, flat, c);
        const auto target = random_sid(gen, n, 4);
        std::vector<std::vector<std::vector<std::uint8_t>>> mats;
        for (auto policy : {selection_policy::least, selection_policy::most})
            for (auto refresh : {refresh_mode::static_order, refresh_mode::refresh})
                mats.push_back(ocn_variant(prof, full_schedule(n), policy, refresh, target, state, flat, c)
                                   .schedule.as_matrix());
        for (const auto& m : mats) v.require(m == mats[0], "variants differ under uniform difficulty");
    }
    if (v.pass) v.detail = "1000 profiles nested with exact ratios; 4 variants valid and equal under uniform delta";
    return v;
}

verdict pse_quality() {
    verdict v;
    rng gen(6);
    item_embedding_table table;
    table.vectors = matrix(512, 16);
    for (std::size_t i = 0; i < 512; ++i) {
        table.ids.push_back("p" + std::to_string(i));
        for (auto& x : table.vectors.row(i)) x = gen.normal();
    }
    tokenizer_options o;
    o.digits = 4;
    o.codebook_size = 8;
    o.outer_iterations = 8;
    o.seed = 3;
    const auto fit = fit_pse(table, o);
    const auto& h = fit.distortion_history;
    for (std::size_t i = 1; i < h.size(); ++i)
        v.require(h[i] <= h[i - 1] * (1.0 + 1e-9), "distortion rose at outer iteration " + std::to_string(i + 1));
    v.require(fit.worst_orthogonality_error <= 1e-5, "rotation orthogonality");
    v.require(fit.codebooks.orthogonality_error() <= 1e-5, "final rotation orthogonality");

    item_embedding_table items;
    items.vectors = matrix(100, 16);
    for (std::size_t i = 0; i < 100; ++i) {
        items.ids.push_back("q" + std::to_string(i));
        for (auto& x : items.vectors.row(i)) x = gen.normal();
    }
    const auto tokens = tokenize(items, fit.codebooks);
    const auto rotated = fit.codebooks.rotate(items.vectors);
    const std::size_t sub = fit.codebooks.sub_dim();
    std::size_t agree = 0;
    for (std::size_t i = 0; i < 100; ++i) {
        semantic_id brute;
        for (std::size_t k = 0; k < 4; ++k) {
            std::uint32_t best = 0;
            double best_d = 1e300;
            for (std::uint32_t m = 0; m < 8; ++m) {
                double d = 0.0;
                for (std::size_t j = 0; j < sub; ++j) {
                    const double diff = rotated(i, k * sub + j) - fit.codebooks.codebooks[k](m, j);
                    d += diff * diff;
                }
                if (d < best_d) best_d = d, best = m;
            }
            brute.digits.push_back(best);
        }
        agree += tokens.at(items.ids[i]) == brute;
    }
    v.require(agree == 100, std::to_string(agree) + "/100 match the brute-force scan");
    if (v.pass)
        v.detail = "distortion " + fmt("%.2f", h.front()) + " -> " + fmt("%.2f", h.back()) + " over " +
                   std::to_string(h.size()) + " iterations; orthogonality " +
                   fmt("%.2g", fit.worst_orthogonality_error) + "; 100/100 brute-force matches";
    return v;
}

// Counts SID bigrams (last context SID -> target) over the training
// instances, scores every SID in the code space and ranks by count, then
// unigram count, then SID.
double memorization_ceiling(const std::vector<training_instance>& train, const std::vector<eval_instance>& valid,
                            std::size_t digits, std::size_t codebook) {
    std::map<std::pair<semantic_id, semantic_id>, double> bigram;
    std::map<semantic_id, double> unigram;
    for (const auto& t : train) {
        ++unigram[t.target];
        if (!t.context.empty()) ++bigram[{t.context.back(), t.target}];
    }
    std::vector<semantic_id> space;
    std::size_t total = 1;
    for (std::size_t k = 0; k < digits; ++k) total *= codebook;
    for (std::size_t code = 0; code < total; ++code) {
        semantic_id sid;
        std::size_t rest = code;
        std::vector<std::uint32_t> d(digits);
        for (std::size_t k = digits; k-- > 0;) d[k] = static_cast<std::uint32_t>(rest % codebook), rest /= codebook;
        sid.digits = d;
        space.push_back(sid);
    }
    std::vector<std::optional<std::size_t>> ranks;
    for (const auto& inst : valid) {
        std::vector<std::pair<std::pair<double, double>, semantic_id>> scored;
        for (const auto& sid : space) {
            double b = 0.0, u = 0.0;
            if (!inst.context.empty()) {
                auto it = bigram.find({inst.context.back(), sid});
                if (it != bigram.end()) b = it->second;
            }
            auto it = unigram.find(sid);
            if (it != unigram.end()) u = it->second;
            scored.push_back({{b, u}, sid});
        }
        std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
        std::optional<std::size_t> rank;
        for (std::size_t i = 0; i < scored.size() && !rank; ++i)
            if (scored[i].second == inst.target) rank = i + 1;
        ranks.push_back(rank);
    }
    return aggregate(ranks, {10}).recall.at(10);
}

run_config desk_config(const fs::path& data, const fs::path& out) {
    auto c = run_config::load(fs::path(SIDREC_SOURCE_DIR) / "configs" / "desk.cfg");
    c.apply_overrides({"log=" + (data / "interactions.tsv").string(), "embeddings=" + (data / "items.side").string(),
                       "output_dir=" + out.string()});
    return c;
}

verdict desk_learnability() {
    verdict v;
    const fs::path root = fs::current_path() / "acceptance_desk";
    fs::remove_all(root);
    synth_options so; // 50 users, 40 items, n=3, M=4
    const auto data = cmd_synth(so, root / "data");
    const auto config = desk_config(root / "data", root / "run");
    v.require(config.model.d_model == 32 && config.model.digits == 3 && config.model.codebook_size == 4 &&
                  config.training.max_epochs <= 300,
              "desk config shape");

    const auto tok = cmd_tokenize(config);
    const auto trained = cmd_train(config);
    const double recall = trained.result.best_validation.recall.at(10);
    v.require(recall >= 0.5, "validation Recall@10 " + fmt("%.3f", recall) + " < 0.5");

    const auto train = sliding_window_expand(trained.split, tok.tokens, config.model.input_length);
    const auto valid = validation_instances(trained.split, tok.tokens, config.model.input_length);
    const double ceiling = memorization_ceiling(train, valid, 3, 4);

    // Catalog-filtered decoding must only name SIDs that belong to items.
    const auto catalog = catalog_of(tok.tokens);
    std::size_t rows = 0, invalid = 0;
    for (const auto& u : trained.split.users) {
        std::vector<std::string> history = u.train;
        history.push_back(u.valid_target);
        std::istringstream lines(cmd_decode(config, history, 10));
        std::string line;
        while (std::getline(lines, line)) {
            ++rows;
            const auto fields_end = line.rfind('\t');
            const auto sid_start = line.rfind('\t', fields_end - 1) + 1;
            const auto sid = semantic_id::parse(line.substr(sid_start, fields_end - sid_start));
            invalid += catalog.count(sid) == 0;
        }
    }
    v.require(rows > 0 && invalid == 0, std::to_string(invalid) + " invalid SIDs in decoded output");
    const std::string report = cmd_eval(config, eval_split::test);
    const auto pos = report.find("recall@10=");
    v.detail = "valid Recall@10 = " + fmt("%.3f", recall) + " (bound 0.5, memorization ceiling " +
               fmt("%.3f", ceiling) + "), test Recall@10 = " + report.substr(pos + 10, 8) + ", best epoch " +
               std::to_string(trained.result.trace.best_epoch) + ", " + std::to_string(rows) +
               " decoded rows all valid" + (v.pass ? "" : "; " + v.detail);
    return v;
}

verdict metric_closed_forms() {
    verdict v;
    v.require(ndcg_at(1, 10) == 1.0, "rank 1");
    v.require(std::fabs(ndcg_at(3, 10) - 0.5) <= 1e-12, "rank 3");
    v.require(ndcg_at(std::nullopt, 10) == 0.0, "absent");

    // Sliding windows vs exact enumeration of (prefix, next) pairs.
    rng gen(8);
    for (int trial = 0; trial < 50; ++trial) {
        split_spec split;
        sid_map tokens;
        std::size_t expected = 0;
        const std::size_t limit = 1 + gen.below(6);
        std::vector<std::pair<std::vector<std::string>, std::string>> pairs;
        for (std::size_t u = 0; u < 1 + gen.below(6); ++u) {
            user_split us;
            us.user = "u" + std::to_string(u);
            for (std::size_t i = 0; i < 1 + gen.below(10); ++i) {
                const std::string item = "i" + std::to_string(gen.below(12));
                tokens[item] = semantic_id{static_cast<std::uint32_t>(std::stoul(item.substr(1)))};
                us.train.push_back(item);
            }
            for (std::size_t end = 1; end < us.train.size(); ++end)
                for (std::size_t begin = 0; begin < end; ++begin)
                    if (end - begin == std::min(end, limit)) {
                        pairs.push_back({{us.train.begin() + begin, us.train.begin() + end}, us.train[end]});
                        ++expected;
                    }
            split.users.push_back(us);
        }
        const auto inst = sliding_window_expand(split, tokens, limit);
        v.require(inst.size() == expected, "sliding-window count");
        for (std::size_t i = 0; i < std::min(inst.size(), pairs.size()); ++i) {
            std::vector<semantic_id> ctx;
            for (const auto& it : pairs[i].first) ctx.push_back(tokens.at(it));
            v.require(inst[i].context == ctx && inst[i].target == tokens.at(pairs[i].second), "sliding-window content");
        }
    }

    // Scripted run: 3-digit SIDs, 2-path coherent noising, ESP from the trace.
    const fs::path root = fs::current_path() / "acceptance_esp";
    fs::remove_all(root);
    synth_options so;
    so.users = 20;
    cmd_synth(so, root / "data");
    auto config = desk_config(root / "data", root / "run");
    config.apply_overrides({"noising=coherent-2", "max_epochs=4", "patience=10"});
    cmd_tokenize(config);
    const auto trained = cmd_train(config);
    const auto& trace = trained.result.trace;
    const std::string text = slurp(artifact_path(config, artifacts::trace));
    const auto value_of = [&](const std::string& key) {
        const auto p = text.find("\n" + key + "=");
        return p == std::string::npos ? std::size_t{0} : std::stoul(text.substr(p + key.size() + 2));
    };
    const std::size_t best = value_of("best_epoch"), esp = value_of("esp");
    v.require(best >= 1 && best == trace.best_epoch, "best_epoch in trace file");
    v.require(value_of("views_per_sample_per_epoch") == 3 * 2, "views per sample = n x k");
    v.require(esp == best * 3 * 2, "ESP = best_epoch x n x k");
    if (v.pass)
        v.detail = "NDCG closed forms; 50 sliding-window enumerations; ESP " + std::to_string(esp) + " = " +
                   std::to_string(best) + " x 3 x 2";
    return v;
}

verdict determinism() {
    verdict v;
    const fs::path root = fs::current_path() / "acceptance_determinism";
    fs::remove_all(root);
    synth_options so;
    cmd_synth(so, root / "data");
    auto config = desk_config(root / "data", root / "run");
    config.apply_overrides({"max_epochs=6", "noising=ocn-lr"});

    const auto run = [&] {
        fs::remove_all(root / "run");
        cmd_tokenize(config);
        const auto trained = cmd_train(config);
        std::map<std::string, std::string> out;
        for (const char* f : {artifacts::sid_map, artifacts::codebooks, artifacts::checkpoint, artifacts::trace})
            out[f] = slurp(artifact_path(config, f));
        out["eval_valid"] = cmd_eval(config, eval_split::valid);
        out["eval_test"] = cmd_eval(config, eval_split::test);
        std::string decoded;
        for (const auto& u : trained.split.users) decoded += cmd_decode(config, u.train, 10);
        out["decode"] = decoded;
        return out;
    };
    const auto a = run();
    const auto b = run();
    for (const auto& [name, bytes] : a) {
        v.require(!bytes.empty(), name + " is empty");
        v.require(b.at(name) == bytes, name + " differs between runs");
    }
    if (v.pass)
        v.detail = "checkpoint (" + std::to_string(a.at(artifacts::checkpoint).size()) +
                   " bytes), SID map, codebooks, trace, eval reports and decode output identical";
    return v;
}

} // namespace

int main() {
    struct criterion {
        int id;
        const char* name;
        double budget_seconds; // 0: none
        std::function<verdict()> run;
    };
    const std::vector<criterion> criteria{
        {1, "combinatorics exactness", 1, combinatorics_exactness},
        {2, "CPD-oracle equivalence", 30, cpd_oracle_equivalence},
        {3, "gradient correctness", 60, gradient_correctness},
        {4, "distribution normalization", 0, distribution_normalization},
        {5, "OCN structure", 0, ocn_structure},
        {6, "PSE quality", 0, pse_quality},
        {7, "desk-scale learnability", 300, desk_learnability},
        {8, "metric closed forms", 0, metric_closed_forms},
        {9, "determinism", 0, determinism},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v.pass = false;
            v.detail = std::string("exception: ") + e.what();
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.budget_seconds > 0 && seconds > c.budget_seconds) {
            v.pass = false;
            v.detail += "; over the " + fmt("%.0f", c.budget_seconds) + " s budget";
        }
        failed += !v.pass;
        std::printf("[%s] %d %s (%.2f s): %s\n", v.pass ? "PASS" : "FAIL", c.id, c.name, seconds, v.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
