#pragma once

#include <functional>
#include <string>
#include <vector>

#include "shapebias/params.hpp"

namespace shapebias {

struct GradCheckRow {
    std::string name;
    int64_t elements_checked = 0;
    double max_rel_err = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckRow> rows;
    double worst = 0.0;
    double tolerance = 0.0;
    bool passed() const { return worst < tolerance; }
};

// Compares the analytic gradients produced by `loss_fn` (which must evaluate
// the loss and fill every parameter's gradient) against central finite
// differences with step `h`. `max_per_tensor` == 0 checks every element;
// otherwise a seeded sample of that many elements per tensor.
//
// Relative error uses |a - n| / max(|a|, |n|, 1e-6); the floor keeps
// near-zero gradients from amplifying finite-difference noise.
//
// Throws if two evaluations of `loss_fn` disagree (non-deterministic closure).
GradCheckReport grad_check(const std::function<double(ParamSet&)>& loss_fn, ParamSet& params,
                           double tolerance, double h = 1e-5, int64_t max_per_tensor = 0,
                           uint64_t sample_seed = 0);

} // namespace shapebias
