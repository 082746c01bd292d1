#include "sidrec/combinatorics.hpp"

#include "sidrec/error.hpp"

#include <algorithm>
#include <bit>
#include <map>
#include <set>

namespace sidrec {

signal_census count_signals(std::size_t digits) {
    if (digits < 1 || digits > 30) throw config_error("n must lie in [1, 30]");
    signal_census c;
    c.digits = digits;
    c.arm_signals = digits;
    c.mdm_signals = static_cast<std::uint64_t>(digits) << (digits - 1);
    c.min_samples_arm = 1;
    c.min_samples_mdm = (std::uint64_t{1} << digits) - 1;
    return c;
}

std::string signal_census::to_text() const {
    return "n=" + std::to_string(digits) + '\n' + "arm_signals=" + std::to_string(arm_signals) +
           " arm_min_samples=" + std::to_string(min_samples_arm) + '\n' + "signals=" + std::to_string(mdm_signals) +
           " min_samples=" + std::to_string(min_samples_mdm) + '\n';
}

std::vector<signal> enumerate_signals(std::size_t digits) {
    if (digits < 1 || digits > 12) throw config_error("signal enumeration needs 1 <= n <= 12");
    std::vector<std::uint32_t> sets;
    for (std::uint32_t s = 1; s < (1u << digits); ++s) sets.push_back(s);
    std::stable_sort(sets.begin(), sets.end(),
                     [](std::uint32_t a, std::uint32_t b) { return std::popcount(a) < std::popcount(b); });
    std::vector<signal> out;
    for (auto s : sets)
        for (std::size_t k = 0; k < digits; ++k)
            if (s & (1u << k)) out.push_back({k, s});
    return out;
}

std::vector<signal> arm_signals(std::size_t digits) {
    std::vector<signal> out;
    for (const auto& sig : enumerate_signals(digits)) {
        const std::uint32_t suffix = ((1u << digits) - 1) & ~((1u << sig.target) - 1);
        if (sig.masked == suffix) out.push_back(sig);
    }
    std::sort(out.begin(), out.end(), [](const signal& a, const signal& b) { return a.target < b.target; });
    return out;
}

std::size_t minimum_cover(std::size_t digits) {
    if (digits < 1 || digits > 5) throw config_error("cover enumeration needs 1 <= n <= 5");
    const auto signals = enumerate_signals(digits);
    const std::uint32_t patterns = (1u << digits) - 1; // candidate masked sets 1..2^n-1
    // Which signals each pattern supervises.
    std::vector<std::vector<std::size_t>> covers(patterns + 1);
    for (std::size_t i = 0; i < signals.size(); ++i) covers[signals[i].masked].push_back(i);

    // Branch on the first uncovered signal: some chosen pattern must cover it.
    std::size_t best = patterns + 1;
    std::vector<int> covered(signals.size(), 0);
    auto search = [&](auto&& self, std::size_t chosen) -> void {
        if (chosen >= best) return;
        auto first = std::find(covered.begin(), covered.end(), 0);
        if (first == covered.end()) {
            best = chosen;
            return;
        }
        const auto idx = static_cast<std::size_t>(first - covered.begin());
        for (std::uint32_t p = 1; p <= patterns; ++p) {
            const auto& cov = covers[p];
            if (std::find(cov.begin(), cov.end(), idx) == cov.end()) continue;
            for (auto i : cov) ++covered[i];
            self(self, chosen + 1);
            for (auto i : cov) --covered[i];
        }
    };
    search(search, 0);
    return best;
}

} // namespace sidrec
