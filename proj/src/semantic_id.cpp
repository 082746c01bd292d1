#include "sidrec/semantic_id.hpp"

#include "sidrec/error.hpp"

#include <charconv>

namespace sidrec {

bool semantic_id::valid_for(std::size_t n, std::size_t codebook_size) const {
    if (digits.size() != n) return false;
    for (auto d : digits)
        if (d >= codebook_size) return false;
    return true;
}

std::string semantic_id::to_string() const {
    std::string out;
    for (std::size_t k = 0; k < digits.size(); ++k) {
        if (k) out += ',';
        out += std::to_string(digits[k]);
    }
    return out;
}

semantic_id semantic_id::parse(const std::string& text) {
    semantic_id sid;
    const char* p = text.data();
    const char* end = p + text.size();
    while (p < end) {
        std::uint32_t v = 0;
        auto [next, ec] = std::from_chars(p, end, v);
        if (ec != std::errc()) throw data_error("malformed semantic id \"" + text + "\"");
        sid.digits.push_back(v);
        p = next;
        if (p < end) {
            if (*p != ',') throw data_error("malformed semantic id \"" + text + "\"");
            ++p;
            if (p == end) throw data_error("malformed semantic id \"" + text + "\"");
        }
    }
    if (sid.digits.empty()) throw data_error("empty semantic id");
    return sid;
}

} // namespace sidrec
