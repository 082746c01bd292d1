#include "sidrec/tokenizer.hpp"

#include "sidrec/binary_io.hpp"
#include "sidrec/error.hpp"
#include "sidrec/kernels.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace sidrec {

namespace {

void check_fit_inputs(const item_embedding_table& embeddings, const tokenizer_options& opt) {
    if (opt.digits == 0 || opt.codebook_size == 0) throw config_error("tokenizer: n and M must be positive");
    if (embeddings.size() < opt.codebook_size)
        throw config_error("tokenizer: " + std::to_string(embeddings.size()) + " items is fewer than M=" +
                           std::to_string(opt.codebook_size));
    embeddings.validate(opt.digits);
}

matrix column_block(const matrix& m, std::size_t begin, std::size_t width) {
    matrix out(m.rows(), width);
    for (std::size_t i = 0; i < m.rows(); ++i)
        std::copy_n(m.row(i).begin() + static_cast<std::ptrdiff_t>(begin), width, out.row(i).begin());
    return out;
}

double total_distortion(const codebook_set& cb, const matrix& rotated) {
    double total = 0.0;
    for (std::size_t k = 0; k < cb.digits; ++k) {
        auto near = kernels::nearest_centroid(rotated, cb.codebooks[k], k * cb.sub_dim());
        for (double d : near.sq_distance) total += d;
    }
    return total;
}

// Orthogonal R maximizing tr(R X^T Y), i.e. minimizing sum ||R x_i - y_i||^2.
matrix procrustes(const matrix& x, const matrix& y) {
    const std::size_t d = x.cols();
    matrix cross;
    kernels::gemm_tn(x, y, cross); // X^T Y, d x d
    Eigen::MatrixXd b(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) b(i, j) = cross(i, j);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(b, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::MatrixXd r = svd.matrixV() * svd.matrixU().transpose();
    matrix out(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) out(i, j) = r(i, j);
    return out;
}

void round_to_float(matrix& m) {
    for (auto& v : m.values()) v = static_cast<double>(static_cast<float>(v));
}

} // namespace

double codebook_set::orthogonality_error() const {
    matrix rtr;
    kernels::gemm_tn(rotation, rotation, rtr);
    double worst = 0.0;
    for (std::size_t i = 0; i < rtr.rows(); ++i)
        for (std::size_t j = 0; j < rtr.cols(); ++j)
            worst = std::max(worst, std::fabs(rtr(i, j) - (i == j ? 1.0 : 0.0)));
    return worst;
}

void codebook_set::validate() const {
    if (digits == 0 || codebook_size == 0 || dim % digits != 0)
        throw data_error("codebooks: invalid n/M/d combination");
    if (rotation.rows() != dim || rotation.cols() != dim) throw data_error("codebooks: rotation must be d x d");
    if (codebooks.size() != digits) throw data_error("codebooks: expected one codebook per digit");
    for (const auto& c : codebooks)
        if (c.rows() != codebook_size || c.cols() != sub_dim()) throw data_error("codebooks: codebook shape");
    auto finite = [](const matrix& m) {
        return std::all_of(m.values().begin(), m.values().end(), [](double v) { return std::isfinite(v); });
    };
    if (!finite(rotation)) throw data_error("codebooks: non-finite rotation");
    for (const auto& c : codebooks)
        if (!finite(c)) throw data_error("codebooks: non-finite centroid");
}

matrix codebook_set::rotate(const matrix& vectors) const {
    if (vectors.cols() != dim)
        throw data_error("embedding dimension " + std::to_string(vectors.cols()) + " does not match codebook dimension " +
                         std::to_string(dim));
    matrix out;
    kernels::gemm_nt(vectors, rotation, out);
    return out;
}

pse_fit_result fit_pse(const item_embedding_table& embeddings, const tokenizer_options& opt) {
    check_fit_inputs(embeddings, opt);
    const std::size_t d = embeddings.dim(), n = opt.digits, sub = d / n;
    const std::size_t outer = std::max<std::size_t>(opt.outer_iterations, 1);

    pse_fit_result res;
    auto& cb = res.codebooks;
    cb.digits = n;
    cb.codebook_size = opt.codebook_size;
    cb.dim = d;
    cb.rotation = matrix(d, d);
    for (std::size_t i = 0; i < d; ++i) cb.rotation(i, i) = 1.0;
    cb.codebooks.resize(n);

    rng gen(opt.seed);
    matrix rotated = cb.rotate(embeddings.vectors);
    for (std::size_t it = 0; it < outer; ++it) {
        // (a) rotation fixed: per-subspace k-means, warm-started after the first pass.
        matrix recon(embeddings.size(), d);
        for (std::size_t k = 0; k < n; ++k) {
            matrix block = column_block(rotated, k * sub, sub);
            matrix init = it == 0 ? kmeanspp_seed(block, opt.codebook_size, gen) : cb.codebooks[k];
            auto km = lloyd(block, std::move(init), opt.kmeans_iterations);
            cb.codebooks[k] = std::move(km.centroids);
            for (std::size_t i = 0; i < embeddings.size(); ++i)
                std::copy_n(cb.codebooks[k].row(km.assignment[i]).begin(), sub,
                            recon.row(i).begin() + static_cast<std::ptrdiff_t>(k * sub));
        }
        // (b) assignments fixed: orthogonal Procrustes for the rotation.
        if (opt.learn_rotation) {
            cb.rotation = procrustes(embeddings.vectors, recon);
            res.worst_orthogonality_error = std::max(res.worst_orthogonality_error, cb.orthogonality_error());
            rotated = cb.rotate(embeddings.vectors);
        }
        res.distortion_history.push_back(total_distortion(cb, rotated));
    }

    // Stored at float32 precision so the codebook file round-trips exactly.
    round_to_float(cb.rotation);
    for (auto& c : cb.codebooks) round_to_float(c);
    res.worst_orthogonality_error = std::max(res.worst_orthogonality_error, cb.orthogonality_error());
    return res;
}

quantization quantize(const codebook_set& cb, const matrix& vectors) {
    const matrix rotated = cb.rotate(vectors);
    quantization q;
    q.codes.assign(vectors.rows(), semantic_id{});
    q.sq_error.assign(vectors.rows(), 0.0);
    for (auto& c : q.codes) c.digits.resize(cb.digits);
    for (std::size_t k = 0; k < cb.digits; ++k) {
        auto near = kernels::nearest_centroid(rotated, cb.codebooks[k], k * cb.sub_dim());
        for (std::size_t i = 0; i < vectors.rows(); ++i) {
            q.codes[i].digits[k] = near.index[i];
            q.sq_error[i] += near.sq_distance[i];
        }
    }
    return q;
}

sid_map tokenize(const item_embedding_table& embeddings, const codebook_set& codebooks) {
    auto q = quantize(codebooks, embeddings.vectors);
    sid_map out;
    for (std::size_t i = 0; i < embeddings.size(); ++i) out.emplace(embeddings.ids[i], std::move(q.codes[i]));
    return out;
}

std::vector<double> reconstruct(const codebook_set& cb, const semantic_id& sid) {
    if (!sid.valid_for(cb.digits, cb.codebook_size)) throw data_error("reconstruct: semantic id out of range");
    std::vector<double> concat;
    concat.reserve(cb.dim);
    for (std::size_t k = 0; k < cb.digits; ++k) {
        auto row = cb.codebooks[k].row(sid[k]);
        concat.insert(concat.end(), row.begin(), row.end());
    }
    std::vector<double> out(cb.dim, 0.0);
    for (std::size_t i = 0; i < cb.dim; ++i)
        for (std::size_t j = 0; j < cb.dim; ++j) out[j] += cb.rotation(i, j) * concat[i];
    return out;
}

rq_fit_result fit_rq_kmeans(const item_embedding_table& embeddings, const tokenizer_options& opt) {
    check_fit_inputs(embeddings, opt);
    rq_fit_result res;
    auto& cb = res.codebooks;
    cb.levels = opt.digits;
    cb.codebook_size = opt.codebook_size;
    cb.dim = embeddings.dim();

    auto sq_norm = [](const matrix& m) {
        double s = 0.0;
        for (double v : m.values()) s += v * v;
        return s;
    };

    rng gen(opt.seed);
    matrix residual = embeddings.vectors;
    res.residual_history.push_back(sq_norm(residual));
    for (std::size_t level = 0; level < opt.digits; ++level) {
        auto km = lloyd(residual, kmeanspp_seed(residual, opt.codebook_size, gen),
                        std::max<std::size_t>(opt.kmeans_iterations, 1));
        round_to_float(km.centroids);
        auto near = kernels::nearest_centroid(residual, km.centroids);
        for (std::size_t i = 0; i < residual.rows(); ++i) {
            auto c = km.centroids.row(near.index[i]);
            auto r = residual.row(i);
            for (std::size_t t = 0; t < r.size(); ++t) r[t] -= c[t];
        }
        cb.codebooks.push_back(std::move(km.centroids));
        res.residual_history.push_back(sq_norm(residual));
    }
    return res;
}

quantization quantize_residual(const residual_codebooks& cb, const matrix& vectors) {
    if (vectors.cols() != cb.dim) throw data_error("embedding dimension does not match residual codebooks");
    quantization q;
    q.codes.assign(vectors.rows(), semantic_id{});
    matrix residual = vectors;
    for (std::size_t level = 0; level < cb.levels; ++level) {
        auto near = kernels::nearest_centroid(residual, cb.codebooks[level]);
        for (std::size_t i = 0; i < vectors.rows(); ++i) {
            q.codes[i].digits.push_back(near.index[i]);
            auto c = cb.codebooks[level].row(near.index[i]);
            auto r = residual.row(i);
            for (std::size_t t = 0; t < r.size(); ++t) r[t] -= c[t];
        }
    }
    q.sq_error.assign(vectors.rows(), 0.0);
    for (std::size_t i = 0; i < vectors.rows(); ++i)
        for (double v : residual.row(i)) q.sq_error[i] += v * v;
    return q;
}

sid_map tokenize_residual(const item_embedding_table& embeddings, const residual_codebooks& codebooks) {
    auto q = quantize_residual(codebooks, embeddings.vectors);
    sid_map out;
    for (std::size_t i = 0; i < embeddings.size(); ++i) out.emplace(embeddings.ids[i], std::move(q.codes[i]));
    return out;
}

sid_map random_tokenize(const std::vector<std::string>& item_ids, std::size_t digits, std::size_t codebook_size,
                        std::uint64_t seed) {
    sid_map out;
    for (const auto& id : item_ids) {
        rng gen(mix_seed(fnv1a64(id), seed));
        semantic_id sid;
        for (std::size_t k = 0; k < digits; ++k) sid.digits.push_back(static_cast<std::uint32_t>(gen.below(codebook_size)));
        out.emplace(id, std::move(sid));
    }
    return out;
}

tokenizer_report make_report(const std::vector<std::string>& ids, const sid_map& tokens, std::size_t digits,
                             std::size_t codebook_size, const std::vector<double>& sq_error) {
    tokenizer_report rep;
    rep.items = ids.size();
    rep.usage.assign(digits, std::vector<std::size_t>(codebook_size, 0));
    std::map<semantic_id, std::size_t> per_sid;
    for (const auto& id : ids) {
        const auto& sid = tokens.at(id);
        for (std::size_t k = 0; k < digits; ++k) ++rep.usage[k][sid[k]];
        ++per_sid[sid];
    }
    rep.unique_sids = per_sid.size();
    for (const auto& [sid, count] : per_sid) {
        rep.max_items_per_sid = std::max(rep.max_items_per_sid, count);
        if (count > 1) rep.collided_items += count;
    }
    double total = 0.0;
    for (double e : sq_error) total += e;
    rep.distortion = sq_error.empty() ? 0.0 : total / static_cast<double>(sq_error.size());
    return rep;
}

std::string tokenizer_report::to_text() const {
    std::ostringstream out;
    out.precision(9);
    out << "items=" << items << '\n'
        << "distortion=" << distortion << '\n'
        << "unique_sids=" << unique_sids << '\n'
        << "max_items_per_sid=" << max_items_per_sid << '\n'
        << "collided_items=" << collided_items << '\n';
    for (std::size_t k = 0; k < usage.size(); ++k) {
        out << "usage_digit" << k << '=';
        for (std::size_t j = 0; j < usage[k].size(); ++j) out << (j ? "," : "") << usage[k][j];
        out << '\n';
    }
    return out.str();
}

std::string serialize_codebooks(const codebook_set& cb) {
    cb.validate();
    std::ostringstream out;
    io::write_bytes(out, "SIDC");
    io::write_u32(out, static_cast<std::uint32_t>(cb.digits));
    io::write_u32(out, static_cast<std::uint32_t>(cb.codebook_size));
    io::write_u32(out, static_cast<std::uint32_t>(cb.dim));
    for (double v : cb.rotation.values()) io::write_f32(out, static_cast<float>(v));
    for (const auto& c : cb.codebooks)
        for (double v : c.values()) io::write_f32(out, static_cast<float>(v));
    return out.str();
}

codebook_set deserialize_codebooks(std::string_view bytes) {
    std::istringstream in{std::string(bytes)};
    io::expect_magic(in, "SIDC", "codebook file");
    codebook_set cb;
    cb.digits = io::read_u32(in);
    cb.codebook_size = io::read_u32(in);
    cb.dim = io::read_u32(in);
    if (cb.digits == 0 || cb.dim % cb.digits != 0) throw data_error("codebook file: invalid header");
    cb.rotation.resize(cb.dim, cb.dim);
    for (auto& v : cb.rotation.values()) v = io::read_f32(in);
    for (std::size_t k = 0; k < cb.digits; ++k) {
        matrix c(cb.codebook_size, cb.sub_dim());
        for (auto& v : c.values()) v = io::read_f32(in);
        cb.codebooks.push_back(std::move(c));
    }
    if (in.peek() != std::char_traits<char>::eof()) throw data_error("codebook file: trailing bytes");
    cb.validate();
    return cb;
}

void save_codebooks(const std::filesystem::path& path, const codebook_set& codebooks) {
    io::atomic_write(path, serialize_codebooks(codebooks));
}

codebook_set load_codebooks(const std::filesystem::path& path) { return deserialize_codebooks(io::read_file(path)); }

std::string format_sid_map(const std::vector<std::string>& ids, const sid_map& tokens) {
    std::string out;
    for (const auto& id : ids) out += id + '\t' + tokens.at(id).to_string() + '\n';
    return out;
}

sid_map parse_sid_map(std::string_view text, std::vector<std::string>* order) {
    sid_map out;
    std::size_t pos = 0, line_no = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() : nl + 1;
        ++line_no;
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string_view::npos || tab == 0)
            throw data_error("sid map line " + std::to_string(line_no) + ": expected item<TAB>digits");
        std::string id(line.substr(0, tab));
        auto sid = semantic_id::parse(std::string(line.substr(tab + 1)));
        if (!out.emplace(id, std::move(sid)).second)
            throw data_error("sid map line " + std::to_string(line_no) + ": duplicate item \"" + id + "\"");
        if (order) order->push_back(id);
    }
    return out;
}

sid_map load_sid_map(const std::filesystem::path& path, std::vector<std::string>* order) {
    return parse_sid_map(io::read_file(path), order);
}

} // namespace sidrec
