#include "sidrec/kernels.hpp"
#include "sidrec/random.hpp"

#include <doctest.h>

#include <cmath>

using namespace sidrec;

namespace {

matrix random_matrix(rng& gen, std::size_t r, std::size_t c) {
    matrix m(r, c);
    for (auto& v : m.values()) v = gen.normal();
    return m;
}

matrix transpose(const matrix& m) {
    matrix t(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
    return t;
}

matrix naive(const matrix& a, const matrix& b) {
    matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    return c;
}

void check_close(const matrix& x, const matrix& y) {
    REQUIRE(x.same_shape(y));
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::fabs(x.values()[i] - y.values()[i]) <= 1e-10);
}

} // namespace

TEST_CASE("gemm agrees with a naive product") {
    rng gen(1);
    for (auto [m, k, n] : {std::array<std::size_t, 3>{1, 1, 1}, {3, 5, 7}, {17, 9, 4}, {33, 65, 31}}) {
        const auto a = random_matrix(gen, m, k);
        const auto b = random_matrix(gen, k, n);
        const auto ref = naive(a, b);
        matrix c;
        kernels::serial::gemm_nn(a, b, c);
        check_close(c, ref);
        kernels::serial::gemm_nt(a, transpose(b), c);
        check_close(c, ref);
        kernels::serial::gemm_tn(transpose(a), b, c);
        check_close(c, ref);

        // Accumulation adds onto the existing output.
        matrix acc = ref;
        kernels::serial::gemm_nn(a, b, acc, true);
        for (std::size_t i = 0; i < acc.size(); ++i)
            CHECK(std::fabs(acc.values()[i] - 2 * ref.values()[i]) <= 1e-10);
    }
}

TEST_CASE("serial and OpenMP kernels agree bitwise") {
    rng gen(2);
    for (auto [m, k, n] : {std::array<std::size_t, 3>{2, 3, 4}, {64, 48, 80}, {129, 31, 67}}) {
        const auto a = random_matrix(gen, m, k);
        const auto b = random_matrix(gen, k, n);
        const auto bt = transpose(b);
        const auto at = transpose(a);
        matrix s, o;
        kernels::serial::gemm_nn(a, b, s);
        kernels::omp::gemm_nn(a, b, o);
        CHECK(s == o);
        kernels::serial::gemm_nt(a, bt, s);
        kernels::omp::gemm_nt(a, bt, o);
        CHECK(s == o);
        kernels::serial::gemm_tn(at, b, s);
        kernels::omp::gemm_tn(at, b, o);
        CHECK(s == o);
        matrix s2 = s, o2 = s;
        kernels::serial::gemm_nn(a, b, s2, true);
        kernels::omp::gemm_nn(a, b, o2, true);
        CHECK(s2 == o2);
    }
}

TEST_CASE("nearest centroid") {
    rng gen(3);
    const auto points = random_matrix(gen, 200, 12);
    const auto centroids = random_matrix(gen, 9, 4);
    for (std::size_t begin : {0u, 4u, 8u}) {
        const auto s = kernels::serial::nearest_centroid(points, centroids, begin);
        const auto o = kernels::omp::nearest_centroid(points, centroids, begin);
        CHECK(s.index == o.index);
        CHECK(s.sq_distance == o.sq_distance);
        for (std::size_t i = 0; i < points.rows(); ++i) {
            std::uint32_t best = 0;
            double best_d = 1e300;
            for (std::uint32_t c = 0; c < centroids.rows(); ++c) {
                double d = 0.0;
                for (std::size_t j = 0; j < 4; ++j) {
                    const double diff = points(i, begin + j) - centroids(c, j);
                    d += diff * diff;
                }
                if (d < best_d) best_d = d, best = c;
            }
            CHECK(s.index[i] == best);
            CHECK(std::fabs(s.sq_distance[i] - best_d) <= 1e-10);
        }
    }
}

TEST_CASE("nearest centroid ties go to the lowest index") {
    matrix points(1, 2, 0.0);
    matrix centroids(3, 2);
    centroids(0, 0) = 2.0;
    centroids(1, 0) = 1.0;
    centroids(2, 1) = 1.0;
    const auto r = kernels::omp::nearest_centroid(points, centroids);
    CHECK(r.index[0] == 1);
    CHECK(kernels::max_threads() >= 1);
}
