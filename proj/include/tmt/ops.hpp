#pragma once

#include <optional>
#include <vector>

#include "tmt/autograd.hpp"

namespace tmt {

// Differentiable kernels. Each computes its value eagerly and records a
// reverse closure when any input requires gradients (and grads are enabled).
// 2-d means row-major [rows x cols]; "last axis" is the channel axis.

// elementwise, same shape
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scalar_mul(const Var& a, double s);
Var neg(const Var& a);
Var relu(const Var& x);
Var log_op(const Var& x);      // domain x > 0
Var sigmoid(const Var& x);
Var softplus(const Var& x);    // log(1 + e^x), overflow-safe
Var pow_scalar(const Var& x, double p); // domain x > 0 for non-integer p

// shape ops
Var reshape(const Var& x, std::vector<std::size_t> new_shape);
Var transpose(const Var& x);                        // 2-d
Var select(const Var& x, std::size_t axis, std::size_t index); // drops axis
Var stack0(const std::vector<Var>& parts);          // k same-shape -> [k, ...]
Var concat_cols(const std::vector<Var>& parts);     // 2-d, along columns
Var concat_vec(const std::vector<Var>& parts);      // 1-d concatenation

// reductions
Var sum_all(const Var& x);                          // -> scalar
Var sum_axis(const Var& x, std::size_t axis);
Var mean_axis(const Var& x, std::size_t axis);

// linear algebra
Var matmul(const Var& a, const Var& b);             // [m x k] * [k x n]
Var linear(const Var& x, const Var& weight, const std::optional<Var>& bias = std::nullopt);
Var scale_rows(const Var& x, const Var& a);         // [n x m] rows scaled by a[n]
Var vscale(const Var& x, const Var& s);             // x * scalar Var

// nonlinear blocks
Var softmax(const Var& x, std::size_t axis);        // max-subtracted, slices sum to 1
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps);

// vector helpers (1-d)
Var dot(const Var& a, const Var& b);
Var l2_normalize(const Var& v);                     // zero norm -> ContractError
Var cosine_similarity(const Var& a, const Var& b);  // zero norm -> ContractError

// -log softmax(logits)[label]; gradient is softmax - onehot
Var cross_entropy_with_logits(const Var& logits, std::size_t label);

// x: [H x W x Cin], kernel: [KH x KW x Cin x Cout], bias: [Cout]
Var conv2d(const Var& x, const Var& kernel, const Var& bias, std::size_t stride,
           std::size_t pad);

} // namespace tmt
