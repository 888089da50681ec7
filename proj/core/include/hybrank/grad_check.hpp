#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "hybrank/tensor.hpp"

namespace hybrank {

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-6;
    /// 0 checks every coordinate; otherwise a seeded sample of this many.
    std::size_t max_coords = 0;
    std::uint64_t seed = 0;
    /// Denominator floor: rel = |a - n| / max(|a|, |n|, floor).
    double floor = 1e-4;
};

struct GradCheckReport {
    std::size_t coords_checked = 0;
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    bool passed = false;
};

/// Scalar objective. When `accumulate_grad` is true it must also add the
/// analytic gradient of the returned value into the store's accumulators.
using Objective = std::function<double(bool accumulate_grad)>;

/// Compares analytic gradients against central differences. Parameter values
/// are restored on return.
GradCheckReport finite_diff_check(const Objective& fn, ParamStore& params, const GradCheckOptions& opts = {});

}  // namespace hybrank
