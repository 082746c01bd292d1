#include "sidrec/synth.hpp"

#include "sidrec/binary_io.hpp"
#include "sidrec/error.hpp"
#include "sidrec/random.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <tuple>

namespace sidrec {

void synth_options::validate() const {
    if (items == 0) throw config_error("synth: items must be positive");
    if (clusters == 0 || clusters > items) throw config_error("synth: clusters must lie in [1, items]");
    if (digits == 0 || dim == 0 || dim % digits != 0) throw config_error("synth: dim must be a multiple of digits");
    if (codebook_size == 0) throw config_error("synth: codebook_size must be positive");
    double codes = 1.0;
    for (std::size_t k = 0; k < digits; ++k) codes *= static_cast<double>(codebook_size);
    if (codes < static_cast<double>(items)) throw config_error("synth: fewer latent codes than items");
    if (min_length < min_sequence_length || max_length < min_length)
        throw config_error("synth: need 3 <= min_length <= max_length");
    if (noise < 0.0 || noise > 1.0) throw config_error("synth: noise must lie in [0, 1]");
}

synth_data generate_synthetic(const synth_options& o) {
    o.validate();
    rng gen(o.seed);
    synth_data out;
    const std::size_t sub = o.dim / o.digits;

    // Codeword centres per digit subspace.
    std::vector<matrix> centers;
    for (std::size_t k = 0; k < o.digits; ++k) {
        matrix c(o.codebook_size, sub);
        for (auto& v : c.values()) v = gen.normal() * o.center_scale;
        centers.push_back(std::move(c));
    }

    // Distinct latent codes: a shuffled prefix of the code space.
    std::uint64_t space = 1;
    for (std::size_t k = 0; k < o.digits; ++k) space *= o.codebook_size;
    std::vector<std::uint64_t> chosen;
    if (space <= 1u << 20) {
        std::vector<std::uint64_t> all(space);
        std::iota(all.begin(), all.end(), 0);
        gen.shuffle(all.begin(), all.end());
        chosen.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(o.items));
    } else {
        while (chosen.size() < o.items) {
            const auto c = gen.below(space);
            if (std::find(chosen.begin(), chosen.end(), c) == chosen.end()) chosen.push_back(c);
        }
    }

    out.embeddings.vectors = matrix(o.items, o.dim);
    for (std::size_t i = 0; i < o.items; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "item%04zu", i);
        out.embeddings.ids.emplace_back(id);
        out.cluster_of.push_back(i % o.clusters);
        std::vector<std::uint32_t> code(o.digits);
        std::uint64_t c = chosen[i];
        for (std::size_t k = o.digits; k-- > 0;) {
            code[k] = static_cast<std::uint32_t>(c % o.codebook_size);
            c /= o.codebook_size;
        }
        for (std::size_t k = 0; k < o.digits; ++k)
            for (std::size_t j = 0; j < sub; ++j)
                out.embeddings.vectors(i, k * sub + j) =
                    static_cast<double>(static_cast<float>(centers[k](code[k], j) + gen.normal() * o.item_scale));
        out.code_of.push_back(std::move(code));
    }

    std::vector<std::vector<std::size_t>> members(o.clusters);
    for (std::size_t i = 0; i < o.items; ++i) members[out.cluster_of[i]].push_back(i);

    struct record {
        std::int64_t ts;
        std::size_t user;
        std::size_t pos;
        std::size_t item;
    };
    std::vector<record> records;
    for (std::size_t u = 0; u < o.users; ++u) {
        const auto& walk = members[gen.below(o.clusters)];
        std::size_t pos = gen.below(walk.size());
        const std::size_t length = o.min_length + gen.below(o.max_length - o.min_length + 1);
        std::int64_t ts = 1'600'000'000 + static_cast<std::int64_t>(gen.below(100'000));
        for (std::size_t s = 0; s < length; ++s) {
            const bool noisy = gen.uniform() < o.noise;
            const std::size_t item = noisy ? gen.below(o.items) : walk[pos];
            records.push_back({ts, u, s, item});
            pos = (pos + 1) % walk.size();
            ts += 60 + static_cast<std::int64_t>(gen.below(3600));
        }
    }
    std::sort(records.begin(), records.end(), [](const record& a, const record& b) {
        return std::tie(a.ts, a.user, a.pos) < std::tie(b.ts, b.user, b.pos);
    });
    std::string tsv;
    for (const auto& r : records)
        tsv += "user" + std::to_string(r.user) + '\t' + out.embeddings.ids[r.item] + '\t' + std::to_string(r.ts) + '\n';
    out.log = parse_log(tsv, log_format::tsv);
    out.log_tsv = std::move(tsv);
    return out;
}

std::string synth_data::cluster_table() const {
    std::string out = "item\tcluster\tcode\n";
    for (std::size_t i = 0; i < embeddings.ids.size(); ++i) {
        out += embeddings.ids[i] + '\t' + std::to_string(cluster_of[i]) + '\t';
        for (std::size_t k = 0; k < code_of[i].size(); ++k) out += (k ? "," : "") + std::to_string(code_of[i][k]);
        out += '\n';
    }
    return out;
}

std::string synth_data::summary() const {
    std::size_t clusters = 0;
    for (auto c : cluster_of) clusters = std::max(clusters, c + 1);
    std::vector<std::size_t> counts(clusters, 0);
    for (auto c : cluster_of) ++counts[c];
    std::ostringstream s;
    s << "users=" << log.users.size() << '\n'
      << "items=" << embeddings.ids.size() << '\n'
      << "interactions=" << log.interaction_count() << '\n'
      << "dim=" << embeddings.dim() << '\n';
    for (std::size_t c = 0; c < clusters; ++c) s << "cluster." << c << ".items=" << counts[c] << '\n';
    return s.str();
}

void write_synthetic(const synth_data& data, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    io::atomic_write(out_dir / "interactions.tsv", data.log_tsv);
    save_embeddings(out_dir / "items.side", data.embeddings);
    io::atomic_write(out_dir / "clusters.tsv", data.cluster_table());
    io::atomic_write(out_dir / "synth.txt", data.summary());
}

} // namespace sidrec
