#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sidrec {

// Learnable target-context signals for an n-digit SID.
struct signal_census {
    std::size_t digits = 0;
    std::uint64_t arm_signals = 0;     // n: one per digit under its strict prefix
    std::uint64_t mdm_signals = 0;     // n * 2^(n-1)
    std::uint64_t min_samples_arm = 0; // 1
    std::uint64_t min_samples_mdm = 0; // 2^n - 1

    std::string to_text() const;
};

// Closed form, valid for 1 <= n <= 30.
signal_census count_signals(std::size_t digits);

// One supervision signal: predict `target` when `masked` (bitmask over
// digits) is hidden.
struct signal {
    std::size_t target = 0;
    std::uint32_t masked = 0;

    friend bool operator==(const signal&, const signal&) = default;
};

// Every (target, masked set) pair with target in the set, ordered by set size,
// then set bitmask, then target. Guarded to n <= 12.
std::vector<signal> enumerate_signals(std::size_t digits);

// The ARM subset: masked set is a suffix {k, ..., n-1} and the target is k.
std::vector<signal> arm_signals(std::size_t digits);

// Smallest number of masking patterns covering every MDM signal, found by
// enumeration (each pattern supervises exactly the signals sharing its set).
std::size_t minimum_cover(std::size_t digits);

} // namespace sidrec
