#include "mmreid/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mmreid/rng.hpp"

namespace mmreid {

GradReport check_gradients(const std::function<Value()>& objective,
                           const std::vector<std::pair<std::string, Value>>& params,
                           double step, double tolerance,
                           int min_coords, std::uint64_t seed) {
    if (step <= 0.0) throw std::invalid_argument("check_gradients: step must be positive");

    for (const auto& [name, p] : params) {
        Value param = p;
        param.zero_grad();
    }
    Value loss = objective();
    if (loss.size() != 1) {
        throw std::logic_error("check_gradients: objective must be scalar-valued");
    }
    loss.backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& [name, p] : params) {
        if (!p.has_grad()) {
            throw std::logic_error("check_gradients: parameter '" + name +
                                   "' received no gradient from the objective");
        }
        analytic.push_back(p.grad());
    }

    GradReport report;
    report.step = step;
    report.tolerance = tolerance;

    Rng rng = derive_rng(seed, "gradcheck");
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        const auto& [name, p] = params[pi];
        Value param = p;
        const int n = param.size();
        std::vector<int> coords;
        if (n <= min_coords) {
            coords.resize(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
        } else {
            coords = rng.sample_without_replacement(n, min_coords);
        }

        GradReport::Entry entry;
        entry.name = name;
        entry.checked_coords = static_cast<int>(coords.size());
        for (int c : coords) {
            auto& data = param.leaf_data();
            const double saved = data[static_cast<std::size_t>(c)];
            data[static_cast<std::size_t>(c)] = saved + step;
            const double f_plus = objective().item();
            data[static_cast<std::size_t>(c)] = saved - step;
            const double f_minus = objective().item();
            data[static_cast<std::size_t>(c)] = saved;

            const double fd = (f_plus - f_minus) / (2.0 * step);
            const double an = analytic[pi][static_cast<std::size_t>(c)];
            const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8});
            entry.max_rel_err = std::max(entry.max_rel_err, rel);
        }
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.per_param.push_back(std::move(entry));
    }
    report.pass = report.max_rel_err < tolerance;
    return report;
}

}  // namespace mmreid
