#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "pdn/tensor.hpp"

namespace pdn {

// Central finite differences vs recorded gradients over every element of the
// given leaves (parameters and inputs alike). `build` must construct a fresh
// scalar output from the leaves' current values each call and must not mutate
// persistent state (batchnorm fragments pass update_running=false).
//
// Returns the max relative error, with the denominator floored at 1 so
// near-zero gradients are judged on absolute error. 64-bit mode only.
inline double grad_check(const std::function<Tensor()>& build, std::vector<Tensor> leaves,
                         double step = 1e-5) {
    for (auto& leaf : leaves) {
        leaf.set_requires_grad(true);
        leaf.zero_grad();
    }
    Tensor out = build();
    out.backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(leaves.size());
    for (auto& leaf : leaves)
        analytic.push_back(leaf.has_grad() ? leaf.grad()
                                           : std::vector<double>(leaf.values().size(), 0.0));

    double max_rel = 0.0;
    for (size_t li = 0; li < leaves.size(); ++li) {
        auto& vals = leaves[li].values();
        for (size_t i = 0; i < vals.size(); ++i) {
            const double keep = vals[i];
            vals[i] = keep + step;
            const double f_plus = build().item();
            vals[i] = keep - step;
            const double f_minus = build().item();
            vals[i] = keep;
            const double numeric = (f_plus - f_minus) / (2.0 * step);
            const double a = analytic[li][i];
            const double rel =
                std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
            if (rel > max_rel) max_rel = rel;
        }
    }
    return max_rel;
}

}  // namespace pdn
