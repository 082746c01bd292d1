#include "sidrec/commands.hpp"
#include "sidrec/error.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

sidrec::run_config make_config(const std::string& path, const std::vector<std::string>& overrides) {
    auto config = path.empty() ? sidrec::run_config{} : sidrec::run_config::load(path);
    config.apply_overrides(overrides);
    config.validate();
    return config;
}

int fail(sidrec::exit_code code, const std::string& what) {
    std::cerr << "sidrec: " << what << '\n';
    return static_cast<int>(code);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semantic-ID generative recommender: tokenize, train, evaluate, decode"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    auto add_config = [&](CLI::App* cmd) {
        cmd->add_option("-c,--config", config_path, "key=value config file");
        cmd->add_option("-s,--set", overrides, "override a config key (key=value), repeatable");
    };

    sidrec::synth_options synth;
    std::string synth_out = "data";
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
    synth_cmd->add_option("--users", synth.users, "number of users")->capture_default_str();
    synth_cmd->add_option("--items", synth.items, "number of items")->capture_default_str();
    synth_cmd->add_option("--clusters", synth.clusters, "item clusters")->capture_default_str();
    synth_cmd->add_option("--digits", synth.digits, "latent code width")->capture_default_str();
    synth_cmd->add_option("--codebook-size", synth.codebook_size, "latent codewords per digit")->capture_default_str();
    synth_cmd->add_option("--dim", synth.dim, "embedding dimension")->capture_default_str();
    synth_cmd->add_option("--min-length", synth.min_length, "shortest user sequence")->capture_default_str();
    synth_cmd->add_option("--max-length", synth.max_length, "longest user sequence")->capture_default_str();
    synth_cmd->add_option("--noise", synth.noise, "probability of a random item")->capture_default_str();
    synth_cmd->add_option("--seed", synth.seed, "generator seed")->capture_default_str();
    synth_cmd->add_option("-o,--out", synth_out, "output directory")->capture_default_str();

    auto* tokenize_cmd = app.add_subcommand("tokenize", "fit the tokenizer and write the SID map");
    add_config(tokenize_cmd);
    auto* train_cmd = app.add_subcommand("train", "train the model and write the best checkpoint");
    add_config(train_cmd);

    std::string split = "test";
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    add_config(eval_cmd);
    eval_cmd->add_option("--split", split, "valid or test")->capture_default_str();

    std::vector<std::string> history;
    std::size_t top_k = 10;
    auto* decode_cmd = app.add_subcommand("decode", "print Top-K SIDs for a history");
    add_config(decode_cmd);
    decode_cmd->add_option("-k,--top-k", top_k, "number of candidates")->capture_default_str();
    decode_cmd->add_option("history", history, "item ids, oldest first");

    std::size_t digits = 4;
    auto* count_cmd = app.add_subcommand("count-signals", "supervision-signal census for n digits");
    count_cmd->add_option("n", digits, "digit count")->required();

    std::string variant;
    auto* ablate_cmd = app.add_subcommand("ablate", "run one ablation variant end to end");
    add_config(ablate_cmd);
    ablate_cmd->add_option("variant", variant, "variant name")
        ->required()
        ->check(CLI::IsMember(sidrec::ablation_variants()));

    auto* config_cmd = app.add_subcommand("config", "print the effective config");
    add_config(config_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(sidrec::exit_code::config);
    }

    try {
        if (*synth_cmd) {
            const auto data = sidrec::cmd_synth(synth, synth_out);
            std::cout << data.summary();
        } else if (*tokenize_cmd) {
            const auto out = sidrec::cmd_tokenize(make_config(config_path, overrides));
            std::cout << out.report.to_text();
        } else if (*train_cmd) {
            const auto out = sidrec::cmd_train(make_config(config_path, overrides), &std::cerr);
            std::cout << out.result.trace.to_text();
        } else if (*eval_cmd) {
            std::cout << sidrec::cmd_eval(make_config(config_path, overrides), sidrec::parse_eval_split(split));
        } else if (*decode_cmd) {
            std::cout << sidrec::cmd_decode(make_config(config_path, overrides), history, top_k);
        } else if (*count_cmd) {
            std::cout << sidrec::cmd_count_signals(digits);
        } else if (*ablate_cmd) {
            std::cout << sidrec::cmd_ablate(make_config(config_path, overrides), variant, &std::cerr);
        } else if (*config_cmd) {
            std::cout << make_config(config_path, overrides).serialize();
        }
    } catch (const sidrec::config_error& e) {
        return fail(sidrec::exit_code::config, e.what());
    } catch (const sidrec::data_error& e) {
        return fail(sidrec::exit_code::data, e.what());
    } catch (const std::exception& e) {
        return fail(sidrec::exit_code::runtime, e.what());
    }
    return 0;
}
