#include "sidrec/config.hpp"

#include "sidrec/binary_io.hpp"
#include "sidrec/error.hpp"

#include <cstdio>
#include <functional>
#include <sstream>

namespace sidrec {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::size_t parse_size(const std::string& key, const std::string& v) {
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
        throw config_error(key + ": expected a non-negative integer, got '" + v + "'");
    try {
        return std::stoull(v);
    } catch (const std::exception&) {
        throw config_error(key + ": integer out of range '" + v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing");
        return d;
    } catch (const std::exception&) {
        throw config_error(key + ": expected a number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw config_error(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    if (v.empty()) return out;
    std::stringstream ss(v);
    std::string part;
    while (std::getline(ss, part, ',')) out.push_back(parse_size(key, part));
    return out;
}

std::string format_list(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

struct field {
    std::string key;
    std::function<std::string(const run_config&)> get;
    std::function<void(run_config&, const std::string&)> set;
};

#define SIZE_FIELD(name, member)                                                                                   \
    field {                                                                                                        \
        name, [](const run_config& c) { return std::to_string(c.member); },                                      \
            [](run_config& c, const std::string& v) { c.member = parse_size(name, v); }                          \
    }
#define DOUBLE_FIELD(name, member)                                                                                 \
    field {                                                                                                        \
        name, [](const run_config& c) { return fmt_double(c.member); },                                          \
            [](run_config& c, const std::string& v) { c.member = parse_double(name, v); }                        \
    }
#define BOOL_FIELD(name, member)                                                                                   \
    field {                                                                                                        \
        name, [](const run_config& c) { return std::string(c.member ? "true" : "false"); },                      \
            [](run_config& c, const std::string& v) { c.member = parse_bool(name, v); }                          \
    }
#define STRING_FIELD(name, member)                                                                                 \
    field {                                                                                                        \
        name, [](const run_config& c) { return c.member; }, [](run_config& c, const std::string& v) { c.member = v; } \
    }
#define LIST_FIELD(name, member)                                                                                   \
    field {                                                                                                        \
        name, [](const run_config& c) { return format_list(c.member); },                                         \
            [](run_config& c, const std::string& v) { c.member = parse_list(name, v); }                          \
    }

const std::vector<field>& fields() {
    static const std::vector<field> table = {
        SIZE_FIELD("d_model", model.d_model),
        SIZE_FIELD("d_ff", model.d_ff),
        SIZE_FIELD("heads", model.heads),
        SIZE_FIELD("encoder_layers", model.encoder_layers),
        SIZE_FIELD("decoder_layers", model.decoder_layers),
        SIZE_FIELD("digits", model.digits),
        SIZE_FIELD("codebook_size", model.codebook_size),
        SIZE_FIELD("input_length", model.input_length),
        DOUBLE_FIELD("dropout", model.dropout),
        field{"tokenizer",
              [](const run_config& c) {
                  switch (c.tokenizer) {
                  case tokenizer_kind::pse: return std::string("pse");
                  case tokenizer_kind::rq: return std::string("rq");
                  case tokenizer_kind::random: return std::string("random");
                  }
                  return std::string("?");
              },
              [](run_config& c, const std::string& v) {
                  if (v == "pse") c.tokenizer = tokenizer_kind::pse;
                  else if (v == "rq") c.tokenizer = tokenizer_kind::rq;
                  else if (v == "random") c.tokenizer = tokenizer_kind::random;
                  else throw config_error("tokenizer: expected pse, rq or random, got '" + v + "'");
              }},
        SIZE_FIELD("tokenizer_iterations", tokenizer_settings.outer_iterations),
        SIZE_FIELD("kmeans_iterations", tokenizer_settings.kmeans_iterations),
        SIZE_FIELD("tokenizer_seed", tokenizer_settings.seed),
        BOOL_FIELD("learn_rotation", tokenizer_settings.learn_rotation),
        field{"noising",
              [](const run_config& c) { return c.training.noising.strategy_name(); },
              [](run_config& c, const std::string& v) {
                  const auto parsed = noising_options::parse_strategy(v);
                  c.training.noising.strategy = parsed.strategy;
                  c.training.noising.coherent_paths = parsed.coherent_paths;
              }},
        BOOL_FIELD("stochastic_ocn", training.noising.stochastic),
        LIST_FIELD("schedule", training.noising.schedule),
        SIZE_FIELD("random_views", training.noising.random_views),
        DOUBLE_FIELD("label_smoothing", training.label_smoothing),
        DOUBLE_FIELD("learning_rate", training.optimizer.learning_rate),
        DOUBLE_FIELD("weight_decay", training.optimizer.weight_decay),
        SIZE_FIELD("warmup_steps", training.optimizer.warmup_steps),
        SIZE_FIELD("batch_size", training.batch_size),
        SIZE_FIELD("max_epochs", training.max_epochs),
        SIZE_FIELD("patience", training.patience),
        SIZE_FIELD("seed", training.seed),
        SIZE_FIELD("beam_width", training.evaluation.beam_width),
        LIST_FIELD("top_k", training.evaluation.ks),
        field{"decoder",
              [](const run_config& c) {
                  return std::string(c.training.evaluation.decoder == decoder_kind::cpd ? "cpd" : "fixed-order");
              },
              [](run_config& c, const std::string& v) {
                  if (v == "cpd") c.training.evaluation.decoder = decoder_kind::cpd;
                  else if (v == "fixed-order") c.training.evaluation.decoder = decoder_kind::fixed_order;
                  else throw config_error("decoder: expected cpd or fixed-order, got '" + v + "'");
              }},
        LIST_FIELD("fixed_order", training.evaluation.fixed_order),
        BOOL_FIELD("filter_catalog", training.evaluation.filter_catalog),
        STRING_FIELD("log", log_path),
        field{"log_format",
              [](const run_config& c) { return std::string(c.log_kind == log_format::tsv ? "tsv" : "jsonl"); },
              [](run_config& c, const std::string& v) { c.log_kind = parse_log_format(v); }},
        STRING_FIELD("embeddings", embeddings_path),
        STRING_FIELD("output_dir", output_dir),
    };
    return table;
}

#undef SIZE_FIELD
#undef DOUBLE_FIELD
#undef BOOL_FIELD
#undef STRING_FIELD
#undef LIST_FIELD

const field& find_field(const std::string& key) {
    for (const auto& f : fields())
        if (f.key == key) return f;
    throw config_error("unknown config key '" + key + "'");
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace

tokenizer_options run_config::effective_tokenizer() const {
    auto t = tokenizer_settings;
    t.digits = model.digits;
    t.codebook_size = model.codebook_size;
    return t;
}

void run_config::validate() const {
    model.validate();
    if (training.label_smoothing < 0.0 || training.label_smoothing >= 1.0)
        throw config_error("label_smoothing must lie in [0, 1)");
    if (training.optimizer.learning_rate <= 0.0) throw config_error("learning_rate must be positive");
    if (training.optimizer.weight_decay < 0.0) throw config_error("weight_decay must be non-negative");
    if (training.batch_size == 0) throw config_error("batch_size must be positive");
    if (training.max_epochs == 0) throw config_error("max_epochs must be positive");
    if (training.patience == 0) throw config_error("patience must be positive");
    if (training.evaluation.beam_width == 0) throw config_error("beam_width must be positive");
    if (training.evaluation.ks.empty()) throw config_error("top_k needs at least one cutoff");
    for (auto k : training.evaluation.ks)
        if (k == 0) throw config_error("top_k cutoffs must be positive");
    if (tokenizer_settings.outer_iterations == 0 || tokenizer_settings.kmeans_iterations == 0)
        throw config_error("tokenizer iteration counts must be positive");
    training.noising.effective_schedule(model.digits);
    if (!training.evaluation.fixed_order.empty()) {
        auto order = training.evaluation.fixed_order;
        std::sort(order.begin(), order.end());
        for (std::size_t i = 0; i < order.size(); ++i)
            if (order[i] != i || order.size() != model.digits)
                throw config_error("fixed_order must be a permutation of 0..n-1");
    }
    if (output_dir.empty()) throw config_error("output_dir must not be empty");
}

void run_config::set(const std::string& key, const std::string& value) { find_field(key).set(*this, value); }

std::string run_config::get(const std::string& key) const { return find_field(key).get(*this); }

const std::vector<std::string>& run_config::keys() {
    static const std::vector<std::string> out = [] {
        std::vector<std::string> k;
        for (const auto& f : fields()) k.push_back(f.key);
        return k;
    }();
    return out;
}

std::map<std::string, std::string> run_config::entries() const {
    std::map<std::string, std::string> out;
    for (const auto& f : fields()) out[f.key] = f.get(*this);
    return out;
}

std::string run_config::serialize() const {
    std::string out;
    for (const auto& f : fields()) out += f.key + '=' + f.get(*this) + '\n';
    return out;
}

run_config run_config::parse(std::string_view text) {
    run_config c;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw config_error("config line " + std::to_string(line_no) + ": expected key=value");
        c.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return c;
}

run_config run_config::load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw config_error("config file not found: " + path.string());
    return parse(io::read_file(path));
}

void run_config::apply_overrides(const std::vector<std::string>& overrides) {
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw config_error("override '" + o + "' is not key=value");
        set(trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
    }
}

} // namespace sidrec
