#include "hybrank/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "hybrank/random.hpp"

namespace hybrank {

GradCheckReport finite_diff_check(const Objective& fn, ParamStore& params, const GradCheckOptions& opts) {
    params.zero_grad();
    fn(true);

    std::vector<std::pair<Parameter*, std::size_t>> coords;
    for (auto& [name, p] : params.entries()) {
        for (std::size_t i = 0; i < p.value.size(); ++i) coords.emplace_back(&p, i);
    }
    if (opts.max_coords > 0 && opts.max_coords < coords.size()) {
        Rng rng(opts.seed);
        shuffle(coords, rng);
        coords.resize(opts.max_coords);
    }

    GradCheckReport report;
    for (auto [p, i] : coords) {
        const double original = p->value[i];
        p->value[i] = original + opts.step;
        const double up = fn(false);
        p->value[i] = original - opts.step;
        const double down = fn(false);
        p->value[i] = original;

        const double numeric = (up - down) / (2.0 * opts.step);
        const double analytic = p->grad[i];
        const double denom = std::max({std::abs(analytic), std::abs(numeric), opts.floor});
        const double rel = std::abs(analytic - numeric) / denom;
        ++report.coords_checked;
        if (rel > report.max_rel_error || std::isnan(rel)) {
            report.max_rel_error = std::isnan(rel) ? INFINITY : rel;
            report.worst_param = p->name;
            report.worst_index = i;
            report.worst_analytic = analytic;
            report.worst_numeric = numeric;
        }
    }
    report.passed = report.max_rel_error < opts.tolerance;
    return report;
}

}  // namespace hybrank
