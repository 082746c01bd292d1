#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

namespace sidrec {

// An n-digit semantic ID: one codeword index per digit.
struct semantic_id {
    std::vector<std::uint32_t> digits;

    semantic_id() = default;
    explicit semantic_id(std::vector<std::uint32_t> d) : digits(std::move(d)) {}
    semantic_id(std::initializer_list<std::uint32_t> d) : digits(d) {}

    std::size_t size() const { return digits.size(); }
    std::uint32_t operator[](std::size_t k) const { return digits[k]; }

    bool valid_for(std::size_t n, std::size_t codebook_size) const;

    // "d0,d1,...", the form used in every text artifact.
    std::string to_string() const;
    static semantic_id parse(const std::string& text);

    friend auto operator<=>(const semantic_id&, const semantic_id&) = default;
};

struct semantic_id_hash {
    std::size_t operator()(const semantic_id& s) const noexcept {
        std::size_t h = 1469598103934665603ULL;
        for (auto d : s.digits) h = (h ^ d) * 1099511628211ULL;
        return h;
    }
};

} // namespace sidrec
