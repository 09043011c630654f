#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mmreid/tensor.hpp"

namespace mmreid {

struct GradReport {
    struct Entry {
        std::string name;
        double max_rel_err = 0.0;
        int checked_coords = 0;
    };
    std::vector<Entry> per_param;
    double step = 0.0;
    double tolerance = 0.0;
    double max_rel_err = 0.0;
    bool pass = false;
};

// Central finite differences (f(t+h) - f(t-h)) / 2h against the analytic
// gradient, on a random subsample of at least min_coords coordinates per
// parameter (all of them when the parameter is smaller). The objective
// builder is re-invoked for every probe, so it must rebuild the graph from
// the parameters' current leaf data. Relative error per coordinate is
// |a - f| / max(|a|, |f|, 1e-8).
GradReport check_gradients(const std::function<Value()>& objective,
                           const std::vector<std::pair<std::string, Value>>& params,
                           double step, double tolerance,
                           int min_coords = 32, std::uint64_t seed = 0);

}  // namespace mmreid
