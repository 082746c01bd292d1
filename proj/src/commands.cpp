#include "sidrec/commands.hpp"

#include "sidrec/binary_io.hpp"
#include "sidrec/checkpoint.hpp"
#include "sidrec/combinatorics.hpp"
#include "sidrec/error.hpp"
#include "sidrec/random.hpp"

#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

namespace sidrec {

namespace {

std::string config_block(const run_config& config) {
    return "\n[config]\n" + config.serialize();
}

sid_map load_tokens(const run_config& config, std::vector<std::string>* order = nullptr) {
    const auto path = artifact_path(config, artifacts::sid_map);
    if (!std::filesystem::exists(path)) throw data_error("missing SID map " + path.string() + " (run tokenize first)");
    auto tokens = load_sid_map(path, order);
    for (const auto& [item, sid] : tokens)
        if (!sid.valid_for(config.model.digits, config.model.codebook_size))
            throw data_error("SID of item \"" + item + "\" does not fit n=" + std::to_string(config.model.digits) +
                             ", M=" + std::to_string(config.model.codebook_size));
    return tokens;
}

interaction_log load_interactions(const run_config& config) {
    if (!std::filesystem::exists(config.log_path)) throw data_error("missing interaction log " + config.log_path);
    return load_log(config.log_path, config.log_kind);
}

checkpoint load_model(const run_config& config) {
    const auto path = artifact_path(config, artifacts::checkpoint);
    if (!std::filesystem::exists(path)) throw data_error("missing checkpoint " + path.string() + " (run train first)");
    auto ckpt = load_checkpoint(path);
    if (!(ckpt.config == config.model)) throw data_error("checkpoint model config does not match the run config");
    return ckpt;
}

} // namespace

std::filesystem::path artifact_path(const run_config& config, const char* name) {
    return std::filesystem::path(config.output_dir) / name;
}

std::map<std::string, std::string> provenance_of(const run_config& config) {
    std::map<std::string, std::string> out;
    for (const auto& [k, v] : config.entries()) out["run." + k] = v;
    return out;
}

synth_data cmd_synth(const synth_options& options, const std::filesystem::path& out_dir) {
    auto data = generate_synthetic(options);
    write_synthetic(data, out_dir);
    return data;
}

tokenize_output cmd_tokenize(const run_config& config) {
    config.validate();
    if (!std::filesystem::exists(config.embeddings_path))
        throw data_error("missing embedding table " + config.embeddings_path);
    const auto table = load_embeddings(config.embeddings_path);
    const auto opts = config.effective_tokenizer();
    std::filesystem::create_directories(config.output_dir);

    tokenize_output out;
    out.ids = table.ids;
    std::vector<double> sq_error;
    std::string extra;
    switch (config.tokenizer) {
    case tokenizer_kind::pse: {
        table.validate(opts.digits);
        const auto fit = fit_pse(table, opts);
        auto q = quantize(fit.codebooks, table.vectors);
        for (std::size_t i = 0; i < table.ids.size(); ++i) out.tokens[table.ids[i]] = q.codes[i];
        sq_error = std::move(q.sq_error);
        io::atomic_write(artifact_path(config, artifacts::codebooks), serialize_codebooks(fit.codebooks));
        std::ostringstream s;
        s.precision(12);
        for (std::size_t i = 0; i < fit.distortion_history.size(); ++i)
            s << "distortion.iter" << i + 1 << '=' << fit.distortion_history[i] << '\n';
        s << "orthogonality_error=" << fit.worst_orthogonality_error << '\n';
        extra = s.str();
        break;
    }
    case tokenizer_kind::rq: {
        table.validate(1);
        const auto fit = fit_rq_kmeans(table, opts);
        auto q = quantize_residual(fit.codebooks, table.vectors);
        for (std::size_t i = 0; i < table.ids.size(); ++i) out.tokens[table.ids[i]] = q.codes[i];
        sq_error = std::move(q.sq_error);
        std::ostringstream s;
        s.precision(12);
        for (std::size_t i = 0; i < fit.residual_history.size(); ++i)
            s << "residual.level" << i << '=' << fit.residual_history[i] << '\n';
        extra = s.str();
        break;
    }
    case tokenizer_kind::random:
        out.tokens = random_tokenize(table.ids, opts.digits, opts.codebook_size, opts.seed);
        break;
    }
    out.report = make_report(out.ids, out.tokens, opts.digits, opts.codebook_size, sq_error);
    io::atomic_write(artifact_path(config, artifacts::sid_map), format_sid_map(out.ids, out.tokens));
    io::atomic_write(artifact_path(config, artifacts::tokenizer_report),
                     out.report.to_text() + extra + config_block(config));
    return out;
}

train_output cmd_train(const run_config& config, std::ostream* progress) {
    config.validate();
    const auto log = load_interactions(config);
    const auto tokens = load_tokens(config);
    std::filesystem::create_directories(config.output_dir);

    train_output out;
    out.split = leave_last_out(log);
    if (out.split.users.empty()) throw data_error("no user has at least 3 interactions");
    const auto instances = sliding_window_expand(out.split, tokens, config.model.input_length);
    const auto validation = validation_instances(out.split, tokens, config.model.input_length);
    out.instances = instances.size();
    if (progress)
        *progress << "users=" << out.split.users.size() << " dropped=" << out.split.dropped_users
                  << " instances=" << instances.size() << " validation=" << validation.size() << '\n';

    epoch_callback report;
    if (progress)
        report = [&](const epoch_report& e) {
            char line[128];
            std::snprintf(line, sizeof line, "epoch %zu loss %.6f score %.6f%s\n", e.epoch, e.train_loss,
                          e.validation_score, e.improved ? " *" : "");
            *progress << line << std::flush;
        };
    out.result = train_model(instances, validation, catalog_of(tokens), config.model, config.training, report);

    save_checkpoint(artifact_path(config, artifacts::checkpoint), config.model, out.result.best_params,
                    provenance_of(config));
    io::atomic_write(artifact_path(config, artifacts::trace), out.result.trace.to_text() + config_block(config));
    io::atomic_write(artifact_path(config, artifacts::split), split_summary(out.split));
    io::atomic_write(artifact_path(config, artifacts::effective_config), config.serialize());
    return out;
}

eval_split parse_eval_split(const std::string& name) {
    if (name == "valid") return eval_split::valid;
    if (name == "test") return eval_split::test;
    throw config_error("split must be valid or test, got '" + name + "'");
}

std::string cmd_eval(const run_config& config, eval_split split) {
    config.validate();
    const auto log = load_interactions(config);
    const auto tokens = load_tokens(config);
    const auto model = load_model(config);
    const auto spec = leave_last_out(log);
    const auto instances = split == eval_split::valid ? validation_instances(spec, tokens, config.model.input_length)
                                                      : test_instances(spec, tokens, config.model.input_length);
    const auto outcome = evaluate(instances, model.params, model.config, config.training.evaluation, catalog_of(tokens));
    auto provenance = provenance_of(config);
    provenance["split"] = split == eval_split::valid ? "valid" : "test";
    const auto report = outcome.to_report(provenance);
    io::atomic_write(artifact_path(config, split == eval_split::valid ? "eval_valid.txt" : "eval_test.txt"), report);
    return report;
}

std::string cmd_decode(const run_config& config, const std::vector<std::string>& history, std::size_t top_k) {
    config.validate();
    if (top_k == 0) throw config_error("top_k must be positive");
    std::vector<std::string> order;
    const auto tokens = load_tokens(config, &order);
    const auto model = load_model(config);
    std::vector<semantic_id> context;
    for (const auto& item : history) {
        auto it = tokens.find(item);
        if (it == tokens.end()) throw data_error("item \"" + item + "\" has no SID");
        context.push_back(it->second);
    }
    if (context.size() > config.model.input_length)
        context.erase(context.begin(), context.end() - static_cast<std::ptrdiff_t>(config.model.input_length));

    const auto state = encode(context, model.params, model.config);
    const auto& eval = config.training.evaluation;
    auto result = decode_for(state, model.params, model.config, eval,
                             eval.filter_catalog ? std::max(top_k, eval.beam_width) : top_k);
    if (eval.filter_catalog) result = filter_to_catalog(result, catalog_of(tokens)).result;
    if (result.candidates.size() > top_k) result.candidates.resize(top_k);

    std::map<semantic_id, std::vector<std::string>> items_of;
    for (const auto& id : order) items_of[tokens.at(id)].push_back(id);
    std::string out;
    for (std::size_t r = 0; r < result.candidates.size(); ++r) {
        const auto& c = result.candidates[r];
        char score[40];
        std::snprintf(score, sizeof score, "%.9f", c.score);
        out += std::to_string(r + 1) + '\t' + score + '\t' + c.sid.to_string() + '\t';
        auto it = items_of.find(c.sid);
        if (it != items_of.end())
            for (std::size_t i = 0; i < it->second.size(); ++i) out += (i ? "," : "") + it->second[i];
        out += '\n';
    }
    return out;
}

std::string cmd_count_signals(std::size_t digits) {
    const auto census = count_signals(digits);
    return "signals=" + std::to_string(census.mdm_signals) + " min_samples=" + std::to_string(census.min_samples_mdm) +
           '\n' + "arm_signals=" + std::to_string(census.arm_signals) +
           " arm_min_samples=" + std::to_string(census.min_samples_arm) + '\n';
}

const std::vector<std::string>& ablation_variants() {
    static const std::vector<std::string> v = {"pse-rq", "pse-random", "no-ocn", "no-onpolicy", "no-cpd",
                                               "ls",     "lr",         "ms",     "mr"};
    return v;
}

run_config ablation_config(const run_config& base, const std::string& variant) {
    run_config c = base;
    if (variant == "pse-rq") c.tokenizer = tokenizer_kind::rq;
    else if (variant == "pse-random") c.tokenizer = tokenizer_kind::random;
    else if (variant == "no-ocn") c.set("noising", "random");
    else if (variant == "no-onpolicy") c.set("noising", "coherent-1");
    else if (variant == "no-cpd") {
        c.training.evaluation.decoder = decoder_kind::fixed_order;
        std::vector<std::size_t> order(c.model.digits);
        std::iota(order.begin(), order.end(), 0);
        rng gen(mix_seed(c.training.seed, fnv1a64("no-cpd")));
        gen.shuffle(order.begin(), order.end());
        c.training.evaluation.fixed_order = order;
    } else if (variant == "ls") c.set("noising", "ocn-ls");
    else if (variant == "lr") c.set("noising", "ocn-lr");
    else if (variant == "ms") c.set("noising", "ocn-ms");
    else if (variant == "mr") c.set("noising", "ocn-mr");
    else throw config_error("unknown ablation variant '" + variant + "'");
    c.output_dir = (std::filesystem::path(base.output_dir) / ("ablate-" + variant)).string();
    return c;
}

std::string cmd_ablate(const run_config& base, const std::string& variant, std::ostream* progress) {
    const auto config = ablation_config(base, variant);
    config.validate();
    cmd_tokenize(config);
    const auto trained = cmd_train(config, progress);
    const auto valid = cmd_eval(config, eval_split::valid);
    const auto test = cmd_eval(config, eval_split::test);
    std::string out = "variant=" + variant + '\n';
    out += "best_epoch=" + std::to_string(trained.result.trace.best_epoch) + '\n';
    out += "esp=" + std::to_string(trained.result.trace.esp()) + '\n';
    out += "\n# validation\n" + valid + "\n# test\n" + test;
    io::atomic_write(std::filesystem::path(config.output_dir) / "ablation.txt", out);
    return out;
}

} // namespace sidrec
