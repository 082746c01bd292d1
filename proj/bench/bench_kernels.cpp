// Serial vs OpenMP kernels: wall time and a bitwise agreement check.
//   bench_kernels [repeats]

#include "sidrec/kernels.hpp"
#include "sidrec/random.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>

using namespace sidrec;

namespace {

matrix random_matrix(std::size_t r, std::size_t c, rng& gen) {
    matrix m(r, c);
    for (auto& v : m.values()) v = gen.normal();
    return m;
}

double time_ms(const std::function<void()>& fn, int repeats) {
    fn(); // warm-up
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < repeats; ++i) fn();
    const auto stop = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(stop - start).count() / repeats;
}

void report(const std::string& name, double serial_ms, double omp_ms, bool identical) {
    std::printf("%-28s serial %9.3f ms   omp %9.3f ms   speedup %5.2fx   %s\n", name.c_str(), serial_ms, omp_ms,
                serial_ms / omp_ms, identical ? "identical" : "MISMATCH");
}

} // namespace

int main(int argc, char** argv) {
    const int repeats = argc > 1 ? std::atoi(argv[1]) : 5;
    std::printf("threads=%d repeats=%d\n", kernels::max_threads(), repeats);
    rng gen(2024);

    for (std::size_t n : {64, 256, 512}) {
        const auto a = random_matrix(n, n, gen);
        const auto b = random_matrix(n, n, gen);
        matrix cs(n, n), co(n, n);
        const double ts = time_ms([&] { kernels::serial::gemm_nn(a, b, cs); }, repeats);
        const double to = time_ms([&] { kernels::omp::gemm_nn(a, b, co); }, repeats);
        report("gemm_nn " + std::to_string(n), ts, to, cs == co);
        const double ts2 = time_ms([&] { kernels::serial::gemm_nt(a, b, cs); }, repeats);
        const double to2 = time_ms([&] { kernels::omp::gemm_nt(a, b, co); }, repeats);
        report("gemm_nt " + std::to_string(n), ts2, to2, cs == co);
        const double ts3 = time_ms([&] { kernels::serial::gemm_tn(a, b, cs); }, repeats);
        const double to3 = time_ms([&] { kernels::omp::gemm_tn(a, b, co); }, repeats);
        report("gemm_tn " + std::to_string(n), ts3, to3, cs == co);
    }

    for (std::size_t points : {10000, 100000}) {
        const auto x = random_matrix(points, 64, gen);
        const auto c = random_matrix(256, 16, gen);
        kernels::nearest_result rs, ro;
        const double ts = time_ms([&] { rs = kernels::serial::nearest_centroid(x, c, 16); }, repeats);
        const double to = time_ms([&] { ro = kernels::omp::nearest_centroid(x, c, 16); }, repeats);
        report("nearest " + std::to_string(points) + "x256", ts, to,
               rs.index == ro.index && rs.sq_distance == ro.sq_distance);
    }
    return 0;
}
