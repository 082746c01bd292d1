#include "sidrec/checkpoint.hpp"

#include "sidrec/binary_io.hpp"
#include "sidrec/error.hpp"

#include <cstdio>
#include <sstream>

namespace sidrec {

namespace {

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::size_t parse_size(const std::map<std::string, std::string>& e, const std::string& key) {
    auto it = e.find(key);
    if (it == e.end()) throw data_error("checkpoint config is missing \"" + key + "\"");
    try {
        std::size_t used = 0;
        const auto v = std::stoull(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument(key);
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw data_error("checkpoint config: bad value for \"" + key + "\"");
    }
}

std::map<std::string, std::string> parse_block(std::string_view text) {
    std::map<std::string, std::string> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() : nl + 1;
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string_view::npos) throw data_error("checkpoint config: malformed line");
        out[std::string(line.substr(0, eq))] = std::string(line.substr(eq + 1));
    }
    return out;
}

} // namespace

std::map<std::string, std::string> model_config_entries(const model_config& c) {
    return {{"d_model", std::to_string(c.d_model)},
            {"d_ff", std::to_string(c.d_ff)},
            {"heads", std::to_string(c.heads)},
            {"encoder_layers", std::to_string(c.encoder_layers)},
            {"decoder_layers", std::to_string(c.decoder_layers)},
            {"n", std::to_string(c.digits)},
            {"M", std::to_string(c.codebook_size)},
            {"input_length", std::to_string(c.input_length)},
            {"dropout", format_double(c.dropout)}};
}

model_config model_config_from_entries(const std::map<std::string, std::string>& e) {
    model_config c;
    c.d_model = parse_size(e, "d_model");
    c.d_ff = parse_size(e, "d_ff");
    c.heads = parse_size(e, "heads");
    c.encoder_layers = parse_size(e, "encoder_layers");
    c.decoder_layers = parse_size(e, "decoder_layers");
    c.digits = parse_size(e, "n");
    c.codebook_size = parse_size(e, "M");
    c.input_length = parse_size(e, "input_length");
    auto it = e.find("dropout");
    if (it == e.end()) throw data_error("checkpoint config is missing \"dropout\"");
    try {
        c.dropout = std::stod(it->second);
    } catch (const std::exception&) {
        throw data_error("checkpoint config: bad dropout value");
    }
    return c;
}

std::string serialize_checkpoint(const model_config& config, const model_params& params,
                                 const std::map<std::string, std::string>& provenance) {
    std::string block = "format_version=" + std::to_string(checkpoint_format_version) + '\n';
    for (const auto& [k, v] : model_config_entries(config)) block += k + '=' + v + '\n';
    for (const auto& [k, v] : provenance) {
        if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos)
            throw config_error("checkpoint provenance entries must be single-line key=value");
        block += k + '=' + v + '\n';
    }

    std::ostringstream out;
    io::write_bytes(out, "SIDM");
    io::write_u32(out, static_cast<std::uint32_t>(block.size()));
    io::write_bytes(out, block);
    std::uint32_t count = 0;
    params.visit([&](const std::string&, const matrix&) { ++count; });
    io::write_u32(out, count);
    params.visit([&](const std::string& name, const matrix& m) {
        io::write_u32(out, static_cast<std::uint32_t>(name.size()));
        io::write_bytes(out, name);
        io::write_u32(out, 2);
        io::write_u32(out, static_cast<std::uint32_t>(m.rows()));
        io::write_u32(out, static_cast<std::uint32_t>(m.cols()));
        for (double v : m.values()) io::write_f32(out, static_cast<float>(v));
    });
    return out.str();
}

checkpoint deserialize_checkpoint(std::string_view bytes) {
    std::istringstream in{std::string(bytes)};
    io::expect_magic(in, "SIDM", "checkpoint");
    const auto block_len = io::read_u32(in);
    checkpoint ck;
    ck.metadata = parse_block(io::read_bytes(in, block_len));
    auto version = ck.metadata.find("format_version");
    if (version == ck.metadata.end() || version->second != std::to_string(checkpoint_format_version))
        throw data_error("checkpoint format version mismatch (expected " +
                         std::to_string(checkpoint_format_version) + ")");
    ck.config = model_config_from_entries(ck.metadata);
    try {
        ck.config.validate();
    } catch (const config_error& e) {
        throw data_error(std::string("checkpoint config invalid: ") + e.what());
    }
    ck.params = model_params::zeros(ck.config);

    const auto count = io::read_u32(in);
    std::uint32_t expected = 0;
    ck.params.visit([&](const std::string&, const matrix&) { ++expected; });
    if (count != expected)
        throw data_error("checkpoint has " + std::to_string(count) + " tensors, model expects " +
                         std::to_string(expected));
    ck.params.visit([&](const std::string& name, matrix& m) {
        const auto name_len = io::read_u32(in);
        const auto got = io::read_bytes(in, name_len);
        if (got != name) throw data_error("checkpoint tensor \"" + got + "\" found where \"" + name + "\" expected");
        const auto rank = io::read_u32(in);
        std::vector<std::uint32_t> dims(rank);
        for (auto& dim : dims) dim = io::read_u32(in);
        if (rank != 2 || dims[0] != m.rows() || dims[1] != m.cols())
            throw data_error("checkpoint tensor \"" + name + "\" has the wrong shape");
        for (auto& v : m.values()) v = io::read_f32(in);
    });
    if (in.peek() != std::char_traits<char>::eof()) throw data_error("checkpoint: trailing bytes");
    return ck;
}

void save_checkpoint(const std::filesystem::path& path, const model_config& config, const model_params& params,
                     const std::map<std::string, std::string>& provenance) {
    io::atomic_write(path, serialize_checkpoint(config, params, provenance));
}

checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(io::read_file(path)); }

} // namespace sidrec
