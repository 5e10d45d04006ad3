#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace zocert {

struct CheckResult {
    std::string name;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

// Central finite differences (step h, 64-bit) of a scalar objective against an
// implementation-provided gradient. Relative error is max_i |g_i - fd_i|
// normalized by the gradient's max magnitude.
CheckResult fd_check(const std::string& name, std::vector<double> point,
                     const std::function<double(const std::vector<double>&)>& objective,
                     const std::function<std::vector<double>(const std::vector<double>&)>& gradient,
                     double rel_tol, double step = 1e-5);

// The full oracle suite: every layer backward, composite networks, estimator
// exactness, and the chain-rule identity. Deterministic under `seed`;
// `n_seeds` randomized repetitions for the layer checks.
std::vector<CheckResult> run_gradcheck(std::uint64_t seed = 7, int n_seeds = 20);

}  // namespace zocert
