#include "sidrec/kernels.hpp"

#include <limits>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sidrec::kernels {

namespace {
// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t parallel_threshold = 1 << 15;
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

namespace omp {

void gemm_nn(const matrix& a, const matrix& b, matrix& c, bool accumulate) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) throw std::invalid_argument("gemm_nn: inner dimension mismatch");
    if (!accumulate) c.resize(m, n);
    else if (c.rows() != m || c.cols() != n) throw std::invalid_argument("gemm_nn: output shape");
    const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > parallel_threshold)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        double* ci = c.data() + i * n;
        const double* ai = a.data() + i * k;
        for (std::size_t t = 0; t < k; ++t) {
            const double av = ai[t];
            const double* bt = b.data() + t * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bt[j];
        }
    }
}

void gemm_nt(const matrix& a, const matrix& b, matrix& c, bool accumulate) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    if (b.cols() != k) throw std::invalid_argument("gemm_nt: inner dimension mismatch");
    if (!accumulate) c.resize(m, n);
    else if (c.rows() != m || c.cols() != n) throw std::invalid_argument("gemm_nt: output shape");
    const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > parallel_threshold)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        const double* ai = a.data() + i * k;
        double* ci = c.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* bj = b.data() + j * k;
            double s = ci[j];
            for (std::size_t t = 0; t < k; ++t) s += ai[t] * bj[t];
            ci[j] = s;
        }
    }
}

void gemm_tn(const matrix& a, const matrix& b, matrix& c, bool accumulate) {
    const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
    if (b.rows() != k) throw std::invalid_argument("gemm_tn: inner dimension mismatch");
    if (!accumulate) c.resize(m, n);
    else if (c.rows() != m || c.cols() != n) throw std::invalid_argument("gemm_tn: output shape");
    const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n > parallel_threshold)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        double* ci = c.data() + i * n;
        for (std::size_t t = 0; t < k; ++t) {
            const double av = a.data()[t * m + i];
            const double* bt = b.data() + t * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bt[j];
        }
    }
}

nearest_result nearest_centroid(const matrix& points, const matrix& centroids, std::size_t col_begin) {
    const std::size_t dim = centroids.cols();
    if (col_begin + dim > points.cols()) throw std::invalid_argument("nearest_centroid: column range");
    nearest_result out;
    out.index.resize(points.rows());
    out.sq_distance.resize(points.rows());
    const auto rows = static_cast<std::ptrdiff_t>(points.rows());
#pragma omp parallel for schedule(static) if (points.rows() * centroids.rows() * dim > parallel_threshold)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        const double* p = points.data() + i * points.cols() + col_begin;
        double best = std::numeric_limits<double>::infinity();
        std::uint32_t best_j = 0;
        for (std::size_t j = 0; j < centroids.rows(); ++j) {
            const double* cj = centroids.data() + j * dim;
            double d = 0.0;
            for (std::size_t t = 0; t < dim; ++t) {
                const double diff = p[t] - cj[t];
                d += diff * diff;
            }
            if (d < best) {
                best = d;
                best_j = static_cast<std::uint32_t>(j);
            }
        }
        out.index[i] = best_j;
        out.sq_distance[i] = best;
    }
    return out;
}

} // namespace omp
} // namespace sidrec::kernels
