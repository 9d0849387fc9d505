#pragma once

#include <functional>
#include <string>

#include "tmt/autograd.hpp"

namespace tmt {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_coord = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t coords_checked = 0;
};

// Central-difference check of every coordinate on the tape against the
// analytic gradient of loss_fn(). loss_fn must rebuild the graph from the
// tape's current values each call and return a scalar. Error metric per
// coordinate: |analytic - numeric| / max(1, |numeric|).
//
// post_backward lets callers tamper with the analytic gradients before
// comparison (fault injection for negative controls).
GradCheckReport finite_diff_check(const std::function<Var()>& loss_fn, ParamTape& tape,
                                  double h = 1e-5,
                                  const std::function<void(ParamTape&)>& post_backward = {});

} // namespace tmt
