#pragma once

#include <algorithm>
#include <functional>
#include <vector>

#include "emoseg/tensor.hpp"

namespace emoseg {

// Central-finite-difference gradient verification. `f` evaluates the scalar
// objective at the given parameter values; `analytic` are the gradients under
// test, one tensor per parameter, shape-matched. Returns the max relative
// error max(|a - fd| / max(|a|, |fd|, 1e-8)).
template <typename S>
double finite_diff_check(const std::function<S(const std::vector<Tensor<S>>&)>& f,
                         std::vector<Tensor<S>> params,
                         const std::vector<Tensor<S>>& analytic, double eps = 1e-4) {
    if (eps <= 0) throw NumericError("finite_diff_check: eps must be positive");
    double max_err = 0;
    for (size_t p = 0; p < params.size(); ++p) {
        for (long i = 0; i < params[p].numel(); ++i) {
            const S orig = params[p][i];
            params[p][i] = orig + static_cast<S>(eps);
            const double fp = static_cast<double>(f(params));
            params[p][i] = orig - static_cast<S>(eps);
            const double fm = static_cast<double>(f(params));
            params[p][i] = orig;
            const double fd = (fp - fm) / (2 * eps);
            const double an = static_cast<double>(analytic[p][i]);
            const double denom = std::max({std::abs(an), std::abs(fd), 1e-8});
            max_err = std::max(max_err, std::abs(an - fd) / denom);
        }
    }
    return max_err;
}

}  // namespace emoseg
