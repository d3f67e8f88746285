#include "shapebias/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "shapebias/rng.hpp"

namespace shapebias {

GradCheckReport grad_check(const std::function<double(ParamSet&)>& loss_fn, ParamSet& params,
                           double tolerance, double h, int64_t max_per_tensor,
                           uint64_t sample_seed) {
    const double l0 = loss_fn(params);
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (const Parameter& p : params.all()) {
        if (!p.grad_set) {
            throw std::runtime_error("grad_check: loss_fn did not set gradient for " + p.name);
        }
        analytic.push_back(p.grad);
    }
    const double l1 = loss_fn(params);
    if (l0 != l1) {
        throw std::runtime_error("grad_check: closure is non-deterministic (" +
                                 std::to_string(l0) + " vs " + std::to_string(l1) + ")");
    }

    GradCheckReport report;
    report.tolerance = tolerance;
    RngStream pick(RngStream::mix(sample_seed));
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = params.all()[pi];
        const int64_t n = p.value.numel();
        std::vector<int64_t> idx;
        if (max_per_tensor <= 0 || n <= max_per_tensor) {
            idx.resize(static_cast<size_t>(n));
            for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
        } else {
            for (int64_t i = 0; i < max_per_tensor; ++i) {
                idx.push_back(static_cast<int64_t>(pick.bounded(static_cast<uint64_t>(n))));
            }
            std::sort(idx.begin(), idx.end());
            idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
        }

        GradCheckRow row;
        row.name = p.name;
        row.elements_checked = static_cast<int64_t>(idx.size());
        for (int64_t i : idx) {
            const double orig = p.value[i];
            p.value[i] = orig + h;
            const double lp = loss_fn(params);
            p.value[i] = orig - h;
            const double lm = loss_fn(params);
            p.value[i] = orig;
            const double numeric = (lp - lm) / (2.0 * h);
            const double a = analytic[pi][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
            row.max_rel_err = std::max(row.max_rel_err, std::abs(a - numeric) / denom);
        }
        report.worst = std::max(report.worst, row.max_rel_err);
        report.rows.push_back(std::move(row));
    }

    // Leave the params with fresh analytic gradients for the caller.
    loss_fn(params);
    return report;
}

} // namespace shapebias
