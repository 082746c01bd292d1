#include "sidrec/kernels.hpp"

#include <limits>
#include <stdexcept>

namespace sidrec::kernels::serial {

void gemm_nn(const matrix& a, const matrix& b, matrix& c, bool accumulate) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) throw std::invalid_argument("gemm_nn: inner dimension mismatch");
    if (!accumulate) c.resize(m, n);
    else if (c.rows() != m || c.cols() != n) throw std::invalid_argument("gemm_nn: output shape");
    for (std::size_t i = 0; i < m; ++i) {
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
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a.data() + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* bj = b.data() + j * k;
            double s = c(i, j);
            for (std::size_t t = 0; t < k; ++t) s += ai[t] * bj[t];
            c(i, j) = s;
        }
    }
}

void gemm_tn(const matrix& a, const matrix& b, matrix& c, bool accumulate) {
    const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
    if (b.rows() != k) throw std::invalid_argument("gemm_tn: inner dimension mismatch");
    if (!accumulate) c.resize(m, n);
    else if (c.rows() != m || c.cols() != n) throw std::invalid_argument("gemm_tn: output shape");
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c.data() + i * n;
        for (std::size_t t = 0; t < k; ++t) {
            const double av = a(t, i);
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
    for (std::size_t i = 0; i < points.rows(); ++i) {
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

} // namespace sidrec::kernels::serial
