#pragma once

#include "sidrec/dataset.hpp"
#include "sidrec/matrix.hpp"
#include "sidrec/random.hpp"
#include "sidrec/semantic_id.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sidrec {

// ---------------------------------------------------------------------------
// k-means
// ---------------------------------------------------------------------------

struct kmeans_result {
    matrix centroids;                    // k x dim
    std::vector<std::uint32_t> assignment;
    double sse = 0.0;                    // sum of squared distances to assigned centroid
};

// k-means++ seeding: first centre uniform, later ones with probability
// proportional to squared distance from the nearest chosen centre.
matrix kmeanspp_seed(const matrix& points, std::size_t k, rng& gen);

// Lloyd iterations from `initial`. Empty clusters are reseeded to the point
// farthest from its assigned centroid. Stops early once assignments settle.
kmeans_result lloyd(const matrix& points, matrix initial, std::size_t iterations);

kmeans_result kmeans(const matrix& points, std::size_t k, std::size_t iterations, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Parallel semantic encoding (rotate, partition, quantize)
// ---------------------------------------------------------------------------

struct codebook_set {
    std::size_t digits = 0;        // n
    std::size_t codebook_size = 0; // M
    std::size_t dim = 0;           // d
    matrix rotation;               // d x d, orthogonal
    std::vector<matrix> codebooks; // n matrices of M x (d / n)

    std::size_t sub_dim() const { return dim / digits; }

    // max |R^T R - I|
    double orthogonality_error() const;
    // Throws data_error if shapes disagree or any value is non-finite.
    void validate() const;

    // Row i becomes R h_i.
    matrix rotate(const matrix& vectors) const;
};

struct tokenizer_options {
    std::size_t digits = 4;
    std::size_t codebook_size = 256;
    std::size_t outer_iterations = 5;  // rotation / codebook alternations
    std::size_t kmeans_iterations = 25;
    std::uint64_t seed = 0;
    bool learn_rotation = true;         // false keeps R = I
};

struct pse_fit_result {
    codebook_set codebooks;
    // Total squared quantization error after each outer iteration.
    std::vector<double> distortion_history;
    // Largest |R^T R - I| seen after any rotation update.
    double worst_orthogonality_error = 0.0;
};

pse_fit_result fit_pse(const item_embedding_table& embeddings, const tokenizer_options& options);

struct quantization {
    std::vector<semantic_id> codes;
    std::vector<double> sq_error; // per item, in the original space
};

quantization quantize(const codebook_set& codebooks, const matrix& vectors);
sid_map tokenize(const item_embedding_table& embeddings, const codebook_set& codebooks);

// Reconstruction R^T concat(c_k[s_k]) in the original embedding space.
std::vector<double> reconstruct(const codebook_set& codebooks, const semantic_id& sid);

// ---------------------------------------------------------------------------
// Ablation tokenizers
// ---------------------------------------------------------------------------

struct residual_codebooks {
    std::size_t levels = 0;
    std::size_t codebook_size = 0;
    std::size_t dim = 0;
    std::vector<matrix> codebooks; // levels x (M x d)
};

struct rq_fit_result {
    residual_codebooks codebooks;
    // Total squared residual norm before level 0 and after every level.
    std::vector<double> residual_history;
};

rq_fit_result fit_rq_kmeans(const item_embedding_table& embeddings, const tokenizer_options& options);
quantization quantize_residual(const residual_codebooks& codebooks, const matrix& vectors);
sid_map tokenize_residual(const item_embedding_table& embeddings, const residual_codebooks& codebooks);

// Uniform digits, deterministic per (item id, seed).
sid_map random_tokenize(const std::vector<std::string>& item_ids, std::size_t digits, std::size_t codebook_size,
                        std::uint64_t seed);

// ---------------------------------------------------------------------------
// Reporting and files
// ---------------------------------------------------------------------------

struct tokenizer_report {
    double distortion = 0.0; // mean squared quantization error per item
    std::vector<std::vector<std::size_t>> usage; // per digit, per codeword
    std::size_t items = 0;
    std::size_t unique_sids = 0;
    std::size_t max_items_per_sid = 0;
    std::size_t collided_items = 0; // items sharing their SID with another item

    std::string to_text() const;
};

tokenizer_report make_report(const std::vector<std::string>& ids, const sid_map& tokens, std::size_t digits,
                             std::size_t codebook_size, const std::vector<double>& sq_error);

// "SIDC", u32 n, u32 M, u32 d, rotation d*d float32 LE, then n codebooks of
// M * (d/n) float32 LE.
std::string serialize_codebooks(const codebook_set& codebooks);
codebook_set deserialize_codebooks(std::string_view bytes);
void save_codebooks(const std::filesystem::path& path, const codebook_set& codebooks);
codebook_set load_codebooks(const std::filesystem::path& path);

// TSV "item_id<TAB>d0,d1,...", rows in the given id order.
std::string format_sid_map(const std::vector<std::string>& ids, const sid_map& tokens);
sid_map parse_sid_map(std::string_view text, std::vector<std::string>* order = nullptr);
sid_map load_sid_map(const std::filesystem::path& path, std::vector<std::string>* order = nullptr);

} // namespace sidrec
