#pragma once

#include "sidrec/network.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace sidrec {

// Per-digit confidence and difficulty from one fully masked decoder pass.
struct difficulty_profile {
    std::vector<double> p_max; // max_v p(v) per digit
    std::vector<double> delta; // 1 - p_max
    std::vector<std::size_t> order; // digits hardest -> easiest, ties by ascending index
};

difficulty_profile profile_from(const digit_distributions& dist);
difficulty_profile probe_difficulty(const encoder_state& state, const model_params& params,
                                    const model_config& config);

// Views are rows of a 0/1 matrix over digits. m_r is the masked count and
// t_r = m_r / n the corruption ratio.
struct view_schedule {
    std::size_t digits = 0;
    std::vector<masked_view> views;

    std::size_t mask_count(std::size_t r) const { return views.at(r).masked.size(); }
    double ratio(std::size_t r) const {
        return static_cast<double>(mask_count(r)) / static_cast<double>(digits);
    }
    std::vector<std::vector<std::uint8_t>> as_matrix() const;
    // Every view strictly contains the previous one.
    bool nested() const;
    // One "0101" row per view.
    std::string to_text() const;
    static view_schedule parse_text(const std::string& text);
};

// m_r = r for r = 1..n.
std::vector<std::size_t> full_schedule(std::size_t digits);
// Throws config_error unless 1 <= m_1 < ... < m_R <= digits.
void validate_schedule(const std::vector<std::size_t>& schedule, std::size_t digits);

// View r masks the m_r hardest digits (a prefix of profile.order).
view_schedule build_ocn_views(const difficulty_profile& profile, const std::vector<std::size_t>& schedule);

// Samples an order without replacement with probability proportional to
// delta (uniform over the remainder once it is all zero); views are nested
// prefixes of that order.
view_schedule build_ocn_views_stochastic(const difficulty_profile& profile, const std::vector<std::size_t>& schedule,
                                         std::uint64_t seed);

// Independent views: mask size uniform in 1..n, then a uniform subset of
// that size. Not nested.
view_schedule build_random_views(std::size_t digits, std::size_t view_count, std::uint64_t seed);

// `paths` independent random permutations, each expanded into nested views
// along the schedule. Yields paths * |schedule| views.
view_schedule build_fixed_coherent_views(std::size_t digits, const std::vector<std::size_t>& schedule,
                                         std::size_t paths, std::uint64_t seed);

enum class selection_policy { least, most };
enum class refresh_mode { static_order, refresh };

struct variant_views {
    view_schedule schedule;
    std::vector<std::size_t> order; // masking priority, first = masked in every view
    std::size_t decoder_calls = 0;  // includes the probe
};

// least: hardest digits are masked first. most: most confident first.
// refresh re-scores the still-masked digits after revealing each one, so the
// order is built from the easiest end with one decoder call per step.
variant_views ocn_variant(const difficulty_profile& profile, const std::vector<std::size_t>& schedule,
                          selection_policy policy, refresh_mode refresh, const semantic_id& target,
                          const encoder_state& state, const model_params& params, const model_config& config);

} // namespace sidrec
