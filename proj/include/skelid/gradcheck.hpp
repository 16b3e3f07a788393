#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "skelid/autograd.hpp"

namespace skelid {

// Central-difference verification of backward rules.
//
// `run(true)` must zero nothing itself: it builds a fresh graph from the
// current parameter values, runs backward (accumulating into parameter
// gradients), and returns the scalar loss. `run(false)` is forward-only.
// Relative error per coordinate uses max(|analytic|, |numeric|, 1e-8) as the
// denominator so near-zero gradients do not blow the ratio up.
//
// `atol`: coordinates where BOTH the analytic and the numeric derivative are
// below this bound count as matching. Deep compositions routinely have
// structurally dead coordinates (a unit behind an inactive relu, a weight
// dropped out for the whole batch); on those the central difference returns
// pure rounding noise of order eps·|loss|/h, which the relative floor would
// misread as an error. Keep the default 0 for primitives, whose gradients
// should never be dead.
inline double finite_difference_check(const std::function<double(bool)>& run, const std::vector<Parameter*>& params,
                                      double h = 1e-5, double atol = 0.0) {
    for (auto* p : params) p->zero_grad();
    run(true);
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (auto* p : params) analytic.push_back(p->grad);

    double worst = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        for (std::int64_t i = 0; i < p.value.numel(); ++i) {
            const double orig = p.value[i];
            p.value[i] = orig + h;
            const double fp = run(false);
            p.value[i] = orig - h;
            const double fm = run(false);
            p.value[i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double ana = analytic[pi][i];
            if (std::fabs(ana) < atol && std::fabs(numeric) < atol) continue;
            const double denom = std::max({std::fabs(ana), std::fabs(numeric), 1e-8});
            worst = std::max(worst, std::fabs(ana - numeric) / denom);
        }
    }
    return worst;
}

// One row of the verification table printed by the command-line checker.
struct GradCheckRow {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

}  // namespace skelid
