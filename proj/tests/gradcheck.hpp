#pragma once

#include "helpers.hpp"

#include <algorithm>
#include <cmath>

namespace sidrec::testing {

struct gradcheck_stats {
    std::size_t sampled = 0;
    std::size_t within = 0;
    double worst = 0.0;
};

// Central differences on `coordinates` randomly chosen scalars. Relative
// error uses max(|numeric|, |analytic|, abs_floor) as the denominator.
inline gradcheck_stats gradient_check(const model_config& c, std::uint64_t seed, std::size_t coordinates,
                                      double eps, double tolerance, double init_std = 0.1,
                                      double abs_floor = 1e-8) {
    rng gen(seed);
    auto params = random_model(c, seed, init_std);
    std::vector<supervised_sample> batch;
    for (std::size_t b = 0; b < 2; ++b) {
        supervised_sample s;
        s.context = random_context(gen, 1 + b * 2, c.digits, c.codebook_size);
        s.target = random_sid(gen, c.digits, c.codebook_size);
        s.views = {{{0}}, {{0, 2}}, {{0, 1, 2}}};
        batch.push_back(s);
    }
    const double alpha = 0.1;
    const auto analytic = loss_and_grad(batch, params, c, alpha);

    std::vector<matrix*> ptensors;
    std::vector<const matrix*> gtensors;
    params.visit([&](const std::string&, matrix& m) { ptensors.push_back(&m); });
    analytic.gradient.visit([&](const std::string&, const matrix& m) { gtensors.push_back(&m); });
    std::size_t total = 0;
    for (auto* m : ptensors) total += m->size();

    gradcheck_stats st;
    for (std::size_t s = 0; s < coordinates; ++s) {
        std::size_t flat = gen.below(total);
        std::size_t t = 0;
        while (flat >= ptensors[t]->size()) flat -= ptensors[t++]->size();
        double& w = ptensors[t]->data()[flat];
        const double saved = w;
        w = saved + eps;
        const double up = loss_and_grad(batch, params, c, alpha).loss;
        w = saved - eps;
        const double down = loss_and_grad(batch, params, c, alpha).loss;
        w = saved;
        const double numeric = (up - down) / (2.0 * eps);
        const double exact = gtensors[t]->data()[flat];
        const double rel = std::fabs(numeric - exact) / std::max({std::fabs(numeric), std::fabs(exact), abs_floor});
        ++st.sampled;
        if (rel <= tolerance) ++st.within;
        st.worst = std::max(st.worst, rel);
    }
    return st;
}

} // namespace sidrec::testing
