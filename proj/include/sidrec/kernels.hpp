#pragma once

// Dense kernels used by the network and the tokenizer. Each kernel exists
// twice: a serial reference and an OpenMP version. Both accumulate every
// output element in the same order, so they agree bitwise and results do not
// depend on the thread count.

#include "sidrec/matrix.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace sidrec::kernels {

struct nearest_result {
    std::vector<std::uint32_t> index;
    std::vector<double> sq_distance;
};

#define SIDREC_KERNEL_DECLS                                                              \
    /* c (+)= a * b, with a: m x k, b: k x n */                                          \
    void gemm_nn(const matrix& a, const matrix& b, matrix& c, bool accumulate = false);  \
    /* c (+)= a * b^T, with a: m x k, b: n x k */                                        \
    void gemm_nt(const matrix& a, const matrix& b, matrix& c, bool accumulate = false);  \
    /* c (+)= a^T * b, with a: k x m, b: k x n */                                        \
    void gemm_tn(const matrix& a, const matrix& b, matrix& c, bool accumulate = false);  \
    /* Lowest-index nearest centroid (squared L2) for every row of points, restricted */ \
    /* to columns [col_begin, col_begin + centroids.cols()). */                          \
    nearest_result nearest_centroid(const matrix& points, const matrix& centroids,       \
                                    std::size_t col_begin = 0);

namespace serial {
SIDREC_KERNEL_DECLS
}

namespace omp {
SIDREC_KERNEL_DECLS
}

#undef SIDREC_KERNEL_DECLS

// The library-wide default backend.
using omp::gemm_nn;
using omp::gemm_nt;
using omp::gemm_tn;
using omp::nearest_centroid;

// Number of threads OpenMP will use (1 when built without OpenMP).
int max_threads();

} // namespace sidrec::kernels
