#include "sidrec/kernels.hpp"
#include "sidrec/tokenizer.hpp"

#include "sidrec/error.hpp"

#include <algorithm>
#include <limits>

namespace sidrec {

matrix kmeanspp_seed(const matrix& points, std::size_t k, rng& gen) {
    const std::size_t n = points.rows(), dim = points.cols();
    if (k == 0 || n < k) throw config_error("k-means: need at least k points");
    matrix centres(k, dim);
    std::vector<double> best(n, std::numeric_limits<double>::infinity());

    auto take = [&](std::size_t c, std::size_t idx) {
        std::copy_n(points.row(idx).begin(), dim, centres.row(c).begin());
        for (std::size_t i = 0; i < n; ++i) {
            double d = 0.0;
            for (std::size_t t = 0; t < dim; ++t) {
                const double diff = points(i, t) - centres(c, t);
                d += diff * diff;
            }
            best[i] = std::min(best[i], d);
        }
    };

    take(0, gen.below(n));
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (double b : best) total += b;
        std::size_t chosen = 0;
        if (total <= 0.0) {
            chosen = gen.below(n);
        } else {
            const double target = gen.uniform() * total;
            double cum = 0.0;
            chosen = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                cum += best[i];
                if (target < cum && best[i] > 0.0) {
                    chosen = i;
                    break;
                }
            }
        }
        take(c, chosen);
    }
    return centres;
}

kmeans_result lloyd(const matrix& points, matrix initial, std::size_t iterations) {
    const std::size_t n = points.rows(), dim = points.cols(), k = initial.rows();
    if (initial.cols() != dim) throw std::invalid_argument("lloyd: centroid width mismatch");
    kmeans_result res;
    res.centroids = std::move(initial);
    std::vector<std::uint32_t> previous;

    for (std::size_t it = 0; it < iterations; ++it) {
        auto near = kernels::nearest_centroid(points, res.centroids);
        res.assignment = std::move(near.index);

        std::vector<std::size_t> counts(k, 0);
        for (auto a : res.assignment) ++counts[a];

        // Empty clusters take the point currently farthest from its centroid.
        std::vector<bool> donor_used(n, false);
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            std::size_t far = n;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (donor_used[i] || counts[res.assignment[i]] <= 1) continue;
                if (near.sq_distance[i] > far_d) {
                    far_d = near.sq_distance[i];
                    far = i;
                }
            }
            if (far == n) continue; // fewer distinct donors than clusters
            donor_used[far] = true;
            --counts[res.assignment[far]];
            res.assignment[far] = static_cast<std::uint32_t>(c);
            counts[c] = 1;
            near.sq_distance[far] = 0.0;
            std::copy_n(points.row(far).begin(), dim, res.centroids.row(c).begin());
        }

        matrix sums(k, dim);
        for (std::size_t i = 0; i < n; ++i) {
            auto dst = sums.row(res.assignment[i]);
            auto src = points.row(i);
            for (std::size_t t = 0; t < dim; ++t) dst[t] += src[t];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            for (std::size_t t = 0; t < dim; ++t) res.centroids(c, t) = sums(c, t) / static_cast<double>(counts[c]);
        }

        if (res.assignment == previous) break;
        previous = res.assignment;
    }

    auto final_near = kernels::nearest_centroid(points, res.centroids);
    res.assignment = std::move(final_near.index);
    res.sse = 0.0;
    for (double d : final_near.sq_distance) res.sse += d;
    return res;
}

kmeans_result kmeans(const matrix& points, std::size_t k, std::size_t iterations, std::uint64_t seed) {
    rng gen(seed);
    return lloyd(points, kmeanspp_seed(points, k, gen), std::max<std::size_t>(iterations, 1));
}

} // namespace sidrec
