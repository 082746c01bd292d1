#include "sidrec/noising.hpp"

#include "sidrec/error.hpp"
#include "sidrec/random.hpp"

#include <algorithm>
#include <numeric>

namespace sidrec {

namespace {

// Ranks `digits` for masking priority: descending delta for least, ascending
// for most, ties by ascending index.
void rank_digits(std::vector<std::size_t>& digits, const std::vector<double>& delta, selection_policy policy) {
    std::stable_sort(digits.begin(), digits.end(), [&](std::size_t a, std::size_t b) {
        if (delta[a] != delta[b]) return policy == selection_policy::least ? delta[a] > delta[b] : delta[a] < delta[b];
        return a < b;
    });
}

view_schedule views_from_order(const std::vector<std::size_t>& order, const std::vector<std::size_t>& schedule) {
    view_schedule out;
    out.digits = order.size();
    for (auto m : schedule) {
        masked_view v;
        v.masked.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m));
        out.views.push_back(std::move(v));
    }
    return out;
}

} // namespace

difficulty_profile profile_from(const digit_distributions& dist) {
    difficulty_profile p;
    const std::size_t n = dist.probs.rows();
    for (std::size_t k = 0; k < n; ++k) {
        auto row = dist.probs.row(k);
        const double mx = *std::max_element(row.begin(), row.end());
        p.p_max.push_back(mx);
        p.delta.push_back(1.0 - mx);
    }
    p.order.resize(n);
    std::iota(p.order.begin(), p.order.end(), 0);
    rank_digits(p.order, p.delta, selection_policy::least);
    return p;
}

difficulty_profile probe_difficulty(const encoder_state& state, const model_params& params,
                                    const model_config& config) {
    return profile_from(decode_digits(fully_masked(config.digits), state, params, config));
}

std::vector<std::vector<std::uint8_t>> view_schedule::as_matrix() const {
    std::vector<std::vector<std::uint8_t>> m(views.size(), std::vector<std::uint8_t>(digits, 0));
    for (std::size_t r = 0; r < views.size(); ++r)
        for (auto k : views[r].masked) m[r][k] = 1;
    return m;
}

bool view_schedule::nested() const {
    const auto m = as_matrix();
    for (std::size_t r = 1; r < m.size(); ++r) {
        if (views[r].masked.size() <= views[r - 1].masked.size()) return false;
        for (std::size_t k = 0; k < digits; ++k)
            if (m[r - 1][k] && !m[r][k]) return false;
    }
    return true;
}

std::string view_schedule::to_text() const {
    std::string out;
    for (const auto& row : as_matrix()) {
        for (auto b : row) out += b ? '1' : '0';
        out += '\n';
    }
    return out;
}

view_schedule view_schedule::parse_text(const std::string& text) {
    view_schedule out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
        pos = nl == std::string::npos ? text.size() : nl + 1;
        if (line.empty()) continue;
        if (out.views.empty()) out.digits = line.size();
        if (line.size() != out.digits) throw data_error("view schedule rows differ in width");
        masked_view v;
        for (std::size_t k = 0; k < line.size(); ++k) {
            if (line[k] == '1') v.masked.push_back(k);
            else if (line[k] != '0') throw data_error("view schedule rows must be 0/1");
        }
        out.views.push_back(std::move(v));
    }
    return out;
}

std::vector<std::size_t> full_schedule(std::size_t digits) {
    std::vector<std::size_t> s(digits);
    std::iota(s.begin(), s.end(), 1);
    return s;
}

void validate_schedule(const std::vector<std::size_t>& schedule, std::size_t digits) {
    if (schedule.empty()) throw config_error("view schedule is empty");
    if (schedule.size() > digits) throw config_error("view schedule has more views than digits");
    for (std::size_t r = 0; r < schedule.size(); ++r) {
        if (schedule[r] < 1 || schedule[r] > digits) throw config_error("view schedule entry outside [1, n]");
        if (r > 0 && schedule[r] <= schedule[r - 1]) throw config_error("view schedule must be strictly increasing");
    }
}

view_schedule build_ocn_views(const difficulty_profile& profile, const std::vector<std::size_t>& schedule) {
    validate_schedule(schedule, profile.order.size());
    return views_from_order(profile.order, schedule);
}

view_schedule build_ocn_views_stochastic(const difficulty_profile& profile, const std::vector<std::size_t>& schedule,
                                         std::uint64_t seed) {
    const std::size_t n = profile.delta.size();
    validate_schedule(schedule, n);
    rng gen(seed);
    std::vector<std::size_t> remaining(n);
    std::iota(remaining.begin(), remaining.end(), 0);
    std::vector<std::size_t> order;
    while (!remaining.empty()) {
        double total = 0.0;
        for (auto k : remaining) total += std::max(profile.delta[k], 0.0);
        std::size_t pick = remaining.size() - 1;
        if (total <= 0.0) {
            pick = gen.below(remaining.size());
        } else {
            const double u = gen.uniform() * total;
            double cum = 0.0;
            for (std::size_t i = 0; i < remaining.size(); ++i) {
                const double w = std::max(profile.delta[remaining[i]], 0.0);
                cum += w;
                if (u < cum && w > 0.0) {
                    pick = i;
                    break;
                }
            }
            // Rounding can leave u == total; fall back to the last positive weight.
            while (std::max(profile.delta[remaining[pick]], 0.0) <= 0.0) --pick;
        }
        order.push_back(remaining[pick]);
        remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    return views_from_order(order, schedule);
}

view_schedule build_random_views(std::size_t digits, std::size_t view_count, std::uint64_t seed) {
    if (digits == 0 || view_count == 0) throw config_error("random views need n >= 1 and R >= 1");
    rng gen(seed);
    view_schedule out;
    out.digits = digits;
    for (std::size_t r = 0; r < view_count; ++r) {
        const std::size_t size = 1 + gen.below(digits);
        std::vector<std::size_t> idx(digits);
        std::iota(idx.begin(), idx.end(), 0);
        for (std::size_t i = 0; i < size; ++i) std::swap(idx[i], idx[i + gen.below(digits - i)]);
        masked_view v;
        v.masked.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(size));
        std::sort(v.masked.begin(), v.masked.end());
        out.views.push_back(std::move(v));
    }
    return out;
}

view_schedule build_fixed_coherent_views(std::size_t digits, const std::vector<std::size_t>& schedule,
                                         std::size_t paths, std::uint64_t seed) {
    validate_schedule(schedule, digits);
    if (paths == 0) throw config_error("coherent noising needs at least one path");
    rng gen(seed);
    view_schedule out;
    out.digits = digits;
    for (std::size_t p = 0; p < paths; ++p) {
        std::vector<std::size_t> perm(digits);
        std::iota(perm.begin(), perm.end(), 0);
        gen.shuffle(perm.begin(), perm.end());
        auto chain = views_from_order(perm, schedule);
        for (auto& v : chain.views) out.views.push_back(std::move(v));
    }
    return out;
}

variant_views ocn_variant(const difficulty_profile& profile, const std::vector<std::size_t>& schedule,
                          selection_policy policy, refresh_mode refresh, const semantic_id& target,
                          const encoder_state& state, const model_params& params, const model_config& config) {
    const std::size_t n = profile.delta.size();
    validate_schedule(schedule, n);
    variant_views out;
    out.decoder_calls = 1;

    if (refresh == refresh_mode::static_order) {
        out.order.resize(n);
        std::iota(out.order.begin(), out.order.end(), 0);
        rank_digits(out.order, profile.delta, policy);
    } else {
        if (target.size() != n) throw data_error("refresh variant: target width does not match profile");
        // Reveal digits one at a time from the low-priority end, re-scoring
        // the remaining masked digits after each reveal.
        slot_values slots = fully_masked(n);
        std::vector<std::size_t> masked(n);
        std::iota(masked.begin(), masked.end(), 0);
        std::vector<double> delta = profile.delta;
        std::vector<std::size_t> reversed;
        while (!masked.empty()) {
            rank_digits(masked, delta, policy);
            const std::size_t reveal = masked.back();
            masked.pop_back();
            reversed.push_back(reveal);
            slots[reveal] = static_cast<std::int32_t>(target[reveal]);
            if (!masked.empty()) {
                delta = profile_from(decode_digits(slots, state, params, config)).delta;
                ++out.decoder_calls;
            }
        }
        out.order.assign(reversed.rbegin(), reversed.rend());
    }
    out.schedule = views_from_order(out.order, schedule);
    return out;
}

} // namespace sidrec
