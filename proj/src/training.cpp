#include "sidrec/training.hpp"

#include "sidrec/error.hpp"
#include "sidrec/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sidrec {

namespace {

bool decays(const std::string& name) {
    const auto dot = name.rfind('.');
    const std::string leaf = dot == std::string::npos ? name : name.substr(dot + 1);
    return !leaf.empty() && leaf[0] == 'w';
}

std::vector<matrix*> tensors(model_params& p) {
    std::vector<matrix*> out;
    p.visit([&](const std::string&, matrix& m) { out.push_back(&m); });
    return out;
}

std::vector<const matrix*> tensors(const model_params& p) {
    std::vector<const matrix*> out;
    p.visit([&](const std::string&, const matrix& m) { out.push_back(&m); });
    return out;
}

} // namespace

noising_options noising_options::parse_strategy(std::string_view name) {
    noising_options o;
    if (name == "ocn-ls") o.strategy = noising_strategy::ocn_ls;
    else if (name == "ocn-lr") o.strategy = noising_strategy::ocn_lr;
    else if (name == "ocn-ms") o.strategy = noising_strategy::ocn_ms;
    else if (name == "ocn-mr") o.strategy = noising_strategy::ocn_mr;
    else if (name == "random") o.strategy = noising_strategy::random;
    else if (name.rfind("coherent-", 0) == 0) {
        o.strategy = noising_strategy::coherent;
        const std::string k(name.substr(9));
        if (k.empty() || k.find_first_not_of("0123456789") != std::string::npos)
            throw config_error("bad coherent path count in '" + std::string(name) + "'");
        o.coherent_paths = std::stoul(k);
        if (o.coherent_paths == 0) throw config_error("coherent-k needs k >= 1");
    } else {
        throw config_error("unknown noising strategy '" + std::string(name) + "'");
    }
    return o;
}

std::string noising_options::strategy_name() const {
    switch (strategy) {
    case noising_strategy::ocn_ls: return "ocn-ls";
    case noising_strategy::ocn_lr: return "ocn-lr";
    case noising_strategy::ocn_ms: return "ocn-ms";
    case noising_strategy::ocn_mr: return "ocn-mr";
    case noising_strategy::random: return "random";
    case noising_strategy::coherent: return "coherent-" + std::to_string(coherent_paths);
    }
    return "?";
}

std::vector<std::size_t> noising_options::effective_schedule(std::size_t digits) const {
    auto s = schedule.empty() ? full_schedule(digits) : schedule;
    validate_schedule(s, digits);
    return s;
}

std::size_t noising_options::views_per_sample(std::size_t digits) const {
    switch (strategy) {
    case noising_strategy::random: return random_views == 0 ? digits : random_views;
    case noising_strategy::coherent: return coherent_paths * effective_schedule(digits).size();
    default: return effective_schedule(digits).size();
    }
}

adamw::adamw(const model_config& config, optimizer_options options)
    : options_(options), m_(model_params::zeros(config)), v_(model_params::zeros(config)) {
    m_.visit([&](const std::string& name, const matrix&) { decay_.push_back(decays(name)); });
}

double adamw::current_rate() const {
    if (options_.warmup_steps == 0) return options_.learning_rate;
    const double ramp = static_cast<double>(steps_ + 1) / static_cast<double>(options_.warmup_steps);
    return options_.learning_rate * std::min(1.0, ramp);
}

void adamw::step(model_params& params, const model_params& gradient) {
    const double lr = current_rate();
    ++steps_;
    const double t = static_cast<double>(steps_);
    const double c1 = 1.0 - std::pow(options_.beta1, t);
    const double c2 = 1.0 - std::pow(options_.beta2, t);
    auto p = tensors(params);
    auto g = tensors(gradient);
    auto m = tensors(m_);
    auto v = tensors(v_);
    if (p.size() != g.size() || p.size() != m.size()) throw compute_error("optimizer: parameter layout changed");
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!p[i]->same_shape(*g[i])) throw compute_error("optimizer: gradient shape mismatch");
        double* w = p[i]->data();
        const double* gr = g[i]->data();
        double* mm = m[i]->data();
        double* vv = v[i]->data();
        const double decay = decay_[i] ? options_.weight_decay : 0.0;
        for (std::size_t j = 0; j < p[i]->size(); ++j) {
            mm[j] = options_.beta1 * mm[j] + (1.0 - options_.beta1) * gr[j];
            vv[j] = options_.beta2 * vv[j] + (1.0 - options_.beta2) * gr[j] * gr[j];
            const double update = (mm[j] / c1) / (std::sqrt(vv[j] / c2) + options_.epsilon);
            w[j] -= lr * (update + decay * w[j]);
            w[j] = static_cast<double>(static_cast<float>(w[j]));
        }
    }
    if (!params.all_finite()) throw compute_error("optimizer step produced non-finite parameters");
}

sample_views make_views(const noising_options& options, const semantic_id& target, const encoder_state& state,
                        const model_params& params, const model_config& config, std::uint64_t seed) {
    const std::size_t n = config.digits;
    sample_views out;
    auto take = [&](view_schedule s) { out.views = std::move(s.views); };
    switch (options.strategy) {
    case noising_strategy::random:
        take(build_random_views(n, options.random_views == 0 ? n : options.random_views, seed));
        return out;
    case noising_strategy::coherent:
        take(build_fixed_coherent_views(n, options.effective_schedule(n), options.coherent_paths, seed));
        return out;
    default: break;
    }
    const auto schedule = options.effective_schedule(n);
    const auto profile = probe_difficulty(state, params, config);
    if (options.strategy == noising_strategy::ocn_ls) {
        take(options.stochastic ? build_ocn_views_stochastic(profile, schedule, seed)
                                : build_ocn_views(profile, schedule));
        out.decoder_calls = 1;
        return out;
    }
    const bool most = options.strategy == noising_strategy::ocn_ms || options.strategy == noising_strategy::ocn_mr;
    const bool refresh = options.strategy == noising_strategy::ocn_lr || options.strategy == noising_strategy::ocn_mr;
    auto variant = ocn_variant(profile, schedule, most ? selection_policy::most : selection_policy::least,
                               refresh ? refresh_mode::refresh : refresh_mode::static_order, target, state, params,
                               config);
    take(std::move(variant.schedule));
    out.decoder_calls = variant.decoder_calls;
    return out;
}

std::set<semantic_id> catalog_of(const sid_map& tokens) {
    std::set<semantic_id> out;
    for (const auto& [item, sid] : tokens) out.insert(sid);
    return out;
}

decode_result decode_for(const encoder_state& state, const model_params& params, const model_config& config,
                         const evaluation_options& options, std::size_t top_k) {
    if (options.decoder == decoder_kind::cpd) return cpd_decode(state, params, config, options.beam_width, top_k);
    std::vector<std::size_t> order = options.fixed_order;
    if (order.empty()) {
        order.resize(config.digits);
        std::iota(order.begin(), order.end(), 0);
    }
    return fixed_order_beam(state, params, config, order, options.beam_width, top_k);
}

eval_outcome evaluate(const std::vector<eval_instance>& instances, const model_params& params,
                      const model_config& config, const evaluation_options& options,
                      const std::set<semantic_id>& catalog) {
    if (options.ks.empty()) throw config_error("evaluation needs at least one cutoff K");
    const std::size_t top_k = *std::max_element(options.ks.begin(), options.ks.end());
    std::vector<std::optional<std::size_t>> ranks(instances.size());
    std::vector<std::size_t> dropped(instances.size(), 0);
    const auto count = static_cast<std::ptrdiff_t>(instances.size());

    // Filtering happens after decoding, so decode extra candidates to keep
    // K valid ones where possible.
    const std::size_t decode_k = options.filter_catalog ? std::max(top_k, options.beam_width) : top_k;
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        try {
            const auto& inst = instances[static_cast<std::size_t>(i)];
            const auto state = encode(inst.context, params, config);
            auto result = decode_for(state, params, config, options, decode_k);
            if (options.filter_catalog) {
                auto filtered = filter_to_catalog(result, catalog);
                result = std::move(filtered.result);
                dropped[static_cast<std::size_t>(i)] = filtered.dropped;
            }
            if (result.candidates.size() > top_k) result.candidates.resize(top_k);
            ranks[static_cast<std::size_t>(i)] = rank_of(result, inst.target);
        } catch (...) {
#pragma omp critical(sidrec_eval_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    auto out = aggregate(ranks, options.ks);
    out.invalid_dropped = std::accumulate(dropped.begin(), dropped.end(), std::size_t{0});
    return out;
}

double train_epoch(const std::vector<training_instance>& instances, model_params& params, adamw& optimizer,
                   const model_config& config, const training_options& options, std::size_t epoch,
                   std::size_t* decoder_calls) {
    if (options.batch_size == 0) throw config_error("batch_size must be positive");
    if (instances.empty()) throw data_error("no training instances");
    const std::uint64_t epoch_seed = mix_seed(options.seed, epoch);
    std::vector<std::size_t> order(instances.size());
    std::iota(order.begin(), order.end(), 0);
    rng shuffler(epoch_seed);
    shuffler.shuffle(order.begin(), order.end());

    double loss_sum = 0.0;
    std::size_t batches = 0;
    std::size_t calls = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += options.batch_size) {
        const std::size_t end = std::min(order.size(), begin + options.batch_size);
        const std::size_t batch = end - begin;
        // Fixed chunking keeps the gradient sum order independent of the
        // thread count.
        const std::size_t chunks = std::min<std::size_t>(8, batch);
        std::vector<model_params> grads(chunks, model_params::zeros(config));
        std::vector<double> chunk_loss(chunks, 0.0);
        std::vector<std::size_t> chunk_calls(chunks, 0);
        std::exception_ptr failure;
#pragma omp parallel for schedule(static, 1)
        for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(chunks); ++c) {
            try {
                const auto cu = static_cast<std::size_t>(c);
                const std::size_t lo = begin + batch * cu / chunks;
                const std::size_t hi = begin + batch * (cu + 1) / chunks;
                for (std::size_t j = lo; j < hi; ++j) {
                    const std::size_t idx = order[j];
                    const auto& inst = instances[idx];
                    const std::uint64_t sample_seed = mix_seed(epoch_seed, idx);
                    rng dropout_gen(sample_seed);
                    sample_graph graph(inst.context, params, config, dropout_source{config.dropout, &dropout_gen});
                    auto views = make_views(options.noising, inst.target, graph.state(), params, config,
                                            splitmix64(sample_seed));
                    chunk_calls[cu] += views.decoder_calls;
                    const double r = static_cast<double>(views.views.size());
                    const double weight = 1.0 / (static_cast<double>(batch) * r);
                    for (const auto& v : views.views)
                        chunk_loss[cu] +=
                            graph.add_view(inst.target, v, options.label_smoothing, weight, grads[cu]) /
                            (static_cast<double>(batch) * r);
                    graph.backward_encoder(grads[cu]);
                }
            } catch (...) {
#pragma omp critical(sidrec_train_failure)
                if (!failure) failure = std::current_exception();
            }
        }
        if (failure) std::rethrow_exception(failure);
        for (std::size_t c = 1; c < chunks; ++c) grads[0].add_scaled(grads[c], 1.0);
        optimizer.step(params, grads[0]);
        double batch_loss = 0.0;
        for (double l : chunk_loss) batch_loss += l;
        for (auto c : chunk_calls) calls += c;
        loss_sum += batch_loss;
        ++batches;
    }
    if (decoder_calls) *decoder_calls = calls;
    return loss_sum / static_cast<double>(batches);
}

training_result train_model(const std::vector<training_instance>& instances,
                            const std::vector<eval_instance>& validation, const std::set<semantic_id>& catalog,
                            const model_config& config, const training_options& options,
                            const epoch_callback& on_epoch) {
    config.validate();
    if (options.max_epochs == 0) throw config_error("max_epochs must be positive");
    if (options.label_smoothing < 0.0 || options.label_smoothing >= 1.0)
        throw config_error("label_smoothing must lie in [0, 1)");
    model_params params = model_params::initialize(config, options.seed);
    adamw optimizer(config, options.optimizer);
    early_stopper stopper(options.patience);

    training_result out;
    out.best_params = params;
    out.trace.views_per_sample_per_epoch = options.noising.views_per_sample(config.digits);
    for (std::size_t epoch = 1; epoch <= options.max_epochs; ++epoch) {
        std::size_t calls = 0;
        const double loss = train_epoch(instances, params, optimizer, config, options, epoch, &calls);
        const auto outcome = evaluate(validation, params, config, options.evaluation, catalog);
        const double score = validation_score(outcome);
        out.trace.train_losses.push_back(loss);
        out.trace.validation_scores.push_back(score);
        out.trace.decoder_calls_per_epoch = calls;
        const bool stop = stopper.observe(score);
        const bool improved = stopper.best_epoch() == epoch;
        if (improved) {
            out.best_params = params;
            out.best_validation = outcome;
        }
        if (on_epoch) on_epoch({epoch, loss, score, improved});
        if (stop) break;
    }
    out.trace.best_epoch = stopper.best_epoch();
    return out;
}

} // namespace sidrec
