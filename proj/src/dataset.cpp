#include "sidrec/dataset.hpp"

#include "sidrec/binary_io.hpp"
#include "sidrec/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace sidrec {

log_format parse_log_format(std::string_view name) {
    if (name == "tsv") return log_format::tsv;
    if (name == "jsonl") return log_format::jsonl;
    throw config_error("unknown log format \"" + std::string(name) + "\" (expected tsv or jsonl)");
}

std::size_t interaction_log::interaction_count() const {
    std::size_t total = 0;
    for (const auto& u : users) total += u.items.size();
    return total;
}

namespace {

struct raw_record {
    std::string user;
    std::string item;
    std::int64_t ts;
};

std::int64_t parse_timestamp(std::string_view s, std::size_t line_no) {
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw data_error("line " + std::to_string(line_no) + ": bad timestamp \"" + std::string(s) + "\"");
    return v;
}

raw_record parse_tsv_line(std::string_view line, std::size_t line_no) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    for (;;) {
        auto tab = line.find('\t', start);
        fields.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
        if (tab == std::string_view::npos) break;
        start = tab + 1;
    }
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty())
        throw data_error("line " + std::to_string(line_no) + ": expected user<TAB>item<TAB>timestamp");
    return {std::string(fields[0]), std::string(fields[1]), parse_timestamp(fields[2], line_no)};
}

std::string json_key_string(const nlohmann::json& v, std::size_t line_no, const char* key) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return v.dump();
    throw data_error("line " + std::to_string(line_no) + ": field \"" + key + "\" must be a string or integer");
}

raw_record parse_jsonl_line(std::string_view line, std::size_t line_no) {
    nlohmann::json obj;
    try {
        obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw data_error("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!obj.is_object() || !obj.contains("user") || !obj.contains("item") || !obj.contains("ts"))
        throw data_error("line " + std::to_string(line_no) + ": expected object with keys user, item, ts");
    const auto& ts = obj["ts"];
    if (!ts.is_number_integer()) throw data_error("line " + std::to_string(line_no) + ": ts must be an integer");
    return {json_key_string(obj["user"], line_no, "user"), json_key_string(obj["item"], line_no, "item"),
            ts.get<std::int64_t>()};
}

} // namespace

interaction_log parse_log(std::string_view text, log_format format) {
    std::vector<raw_record> records;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() : nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        records.push_back(format == log_format::tsv ? parse_tsv_line(line, line_no) : parse_jsonl_line(line, line_no));
    }

    interaction_log log;
    std::unordered_map<std::string, std::size_t> index;
    for (auto& r : records) {
        auto [it, inserted] = index.try_emplace(r.user, log.users.size());
        if (inserted) log.users.push_back({r.user, {}, {}});
        auto& seq = log.users[it->second];
        seq.items.push_back(std::move(r.item));
        seq.timestamps.push_back(r.ts);
    }
    for (auto& seq : log.users) {
        std::vector<std::size_t> order(seq.items.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return seq.timestamps[a] < seq.timestamps[b]; });
        user_sequence sorted{seq.user, {}, {}};
        for (auto i : order) {
            sorted.items.push_back(seq.items[i]);
            sorted.timestamps.push_back(seq.timestamps[i]);
        }
        seq = std::move(sorted);
    }
    return log;
}

interaction_log load_log(const std::filesystem::path& path, log_format format) {
    return parse_log(io::read_file(path), format);
}

std::string format_log_tsv(const interaction_log& log) {
    std::string out;
    for (const auto& u : log.users)
        for (std::size_t i = 0; i < u.items.size(); ++i)
            out += u.user + '\t' + u.items[i] + '\t' + std::to_string(u.timestamps[i]) + '\n';
    return out;
}

void item_embedding_table::validate(std::size_t digits) const {
    if (vectors.rows() != ids.size()) throw data_error("embedding table: id count does not match row count");
    if (digits == 0 || dim() % digits != 0)
        throw data_error("embedding dimension " + std::to_string(dim()) + " is not divisible by n=" +
                         std::to_string(digits));
    std::unordered_set<std::string> seen;
    for (const auto& id : ids)
        if (!seen.insert(id).second) throw data_error("duplicate embedding id \"" + id + "\"");
    for (std::size_t i = 0; i < vectors.rows(); ++i)
        for (double v : vectors.row(i))
            if (!std::isfinite(v)) throw data_error("non-finite embedding value for item \"" + ids[i] + "\"");
}

std::string serialize_embeddings(const item_embedding_table& table) {
    std::ostringstream out;
    io::write_bytes(out, "SIDE");
    io::write_u32(out, static_cast<std::uint32_t>(table.size()));
    io::write_u32(out, static_cast<std::uint32_t>(table.dim()));
    for (double v : table.vectors.values()) io::write_f32(out, static_cast<float>(v));
    for (std::size_t i = 0; i < table.ids.size(); ++i) {
        if (table.ids[i].find('\n') != std::string::npos) throw data_error("item id contains a newline");
        if (i) io::write_bytes(out, "\n");
        io::write_bytes(out, table.ids[i]);
    }
    return out.str();
}

item_embedding_table deserialize_embeddings(std::string_view bytes) {
    std::istringstream in{std::string(bytes)};
    io::expect_magic(in, "SIDE", "embedding file");
    const auto count = io::read_u32(in);
    const auto dim = io::read_u32(in);
    item_embedding_table table;
    table.vectors.resize(count, dim);
    for (auto& v : table.vectors.values()) v = io::read_f32(in);
    std::string rest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (count > 0) {
        std::size_t pos = 0;
        for (;;) {
            auto nl = rest.find('\n', pos);
            table.ids.push_back(rest.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos));
            if (nl == std::string::npos) break;
            pos = nl + 1;
        }
        if (!table.ids.empty() && table.ids.back().empty() && table.ids.size() == count + 1) table.ids.pop_back();
    }
    if (table.ids.size() != count)
        throw data_error("embedding file: expected " + std::to_string(count) + " ids, found " +
                         std::to_string(table.ids.size()));
    return table;
}

void save_embeddings(const std::filesystem::path& path, const item_embedding_table& table) {
    io::atomic_write(path, serialize_embeddings(table));
}

item_embedding_table load_embeddings(const std::filesystem::path& path) {
    return deserialize_embeddings(io::read_file(path));
}

void check_log_items(const interaction_log& log, const item_embedding_table& table) {
    std::unordered_set<std::string> known(table.ids.begin(), table.ids.end());
    for (const auto& u : log.users)
        for (const auto& item : u.items)
            if (!known.contains(item)) throw data_error("item \"" + item + "\" has no embedding row");
}

split_spec leave_last_out(const interaction_log& log) {
    split_spec split;
    for (const auto& u : log.users) {
        if (u.items.size() < min_sequence_length) {
            ++split.dropped_users;
            continue;
        }
        const auto len = u.items.size();
        user_split s;
        s.user = u.user;
        s.train.assign(u.items.begin(), u.items.end() - 2);
        s.valid_target = u.items[len - 2];
        s.test_target = u.items[len - 1];
        split.users.push_back(std::move(s));
    }
    return split;
}

std::string split_summary(const split_spec& split) {
    std::size_t train_items = 0;
    for (const auto& u : split.users) train_items += u.train.size();
    std::ostringstream out;
    out << "split: leave-last-out\n"
        << "users_retained=" << split.users.size() << '\n'
        << "users_dropped=" << split.dropped_users << " (fewer than " << min_sequence_length
        << " interactions)\n"
        << "train_interactions=" << train_items << '\n'
        << "valid_targets=" << split.users.size() << '\n'
        << "test_targets=" << split.users.size() << '\n';
    return out.str();
}

namespace {

const semantic_id& lookup(const sid_map& tokens, const std::string& item) {
    auto it = tokens.find(item);
    if (it == tokens.end()) throw data_error("item \"" + item + "\" has no semantic id");
    return it->second;
}

std::vector<semantic_id> tail_context(const sid_map& tokens, const std::vector<std::string>& items,
                                      std::size_t end, std::size_t input_length) {
    const std::size_t begin = end > input_length ? end - input_length : 0;
    std::vector<semantic_id> ctx;
    ctx.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) ctx.push_back(lookup(tokens, items[i]));
    return ctx;
}

} // namespace

std::vector<training_instance> sliding_window_expand(const split_spec& split, const sid_map& tokens,
                                                     std::size_t input_length) {
    if (input_length == 0) throw config_error("input length must be at least 1");
    std::vector<training_instance> out;
    for (const auto& u : split.users) {
        for (std::size_t p = 1; p < u.train.size(); ++p)
            out.push_back({tail_context(tokens, u.train, p, input_length), lookup(tokens, u.train[p])});
    }
    return out;
}

std::vector<eval_instance> validation_instances(const split_spec& split, const sid_map& tokens,
                                                std::size_t input_length) {
    std::vector<eval_instance> out;
    for (const auto& u : split.users)
        out.push_back({u.user, tail_context(tokens, u.train, u.train.size(), input_length),
                       lookup(tokens, u.valid_target), u.valid_target});
    return out;
}

std::vector<eval_instance> test_instances(const split_spec& split, const sid_map& tokens,
                                          std::size_t input_length) {
    std::vector<eval_instance> out;
    for (const auto& u : split.users) {
        auto history = u.train;
        history.push_back(u.valid_target);
        out.push_back({u.user, tail_context(tokens, history, history.size(), input_length),
                       lookup(tokens, u.test_target), u.test_target});
    }
    return out;
}

} // namespace sidrec
