#include "tmt/gradcheck.hpp"

#include <cmath>
#include <vector>

#include "tmt/errors.hpp"

namespace tmt {

GradCheckReport finite_diff_check(const std::function<Var()>& loss_fn, ParamTape& tape, double h,
                                  const std::function<void(ParamTape&)>& post_backward) {
    if (h <= 0.0) throw ContractError("finite_diff_check: step h must be positive");

    tape.zero_grad();
    {
        Var loss = loss_fn();
        backward(loss);
    }
    if (post_backward) post_backward(tape);

    // snapshot analytic grads; the probe passes below run without grad
    // tracking so they cannot disturb them, but copying keeps this immune to
    // whatever loss_fn does internally
    std::vector<std::vector<double>> analytic(tape.size());
    for (std::size_t p = 0; p < tape.size(); ++p) analytic[p] = tape.param(p).grad().vec();

    GradCheckReport rep;
    NoGradGuard guard;
    for (std::size_t p = 0; p < tape.size(); ++p) {
        Var param = tape.param(p);
        Tensor& vals = param.node_->value;
        for (std::size_t i = 0; i < vals.numel(); ++i) {
            double saved = vals[i];
            vals[i] = saved + h;
            double f_plus = loss_fn().value()[0];
            vals[i] = saved - h;
            double f_minus = loss_fn().value()[0];
            vals[i] = saved;

            double numeric = (f_plus - f_minus) / (2.0 * h);
            double rel = std::abs(analytic[p][i] - numeric) / std::max(1.0, std::abs(numeric));
            ++rep.coords_checked;
            if (rel > rep.max_rel_error) {
                rep.max_rel_error = rel;
                rep.worst_param = tape.name(p);
                rep.worst_coord = i;
                rep.worst_analytic = analytic[p][i];
                rep.worst_numeric = numeric;
            }
        }
    }
    return rep;
}

} // namespace tmt
