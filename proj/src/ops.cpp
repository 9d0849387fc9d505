#include "tmt/ops.hpp"

#include <algorithm>
#include <cmath>

#include "tmt/errors.hpp"

namespace tmt {

namespace {

bool wants_grad(std::initializer_list<const Var*> ins) {
    if (!grad_enabled()) return false;
    for (const Var* v : ins)
        if (v->requires_grad()) return true;
    return false;
}

void attach(Var& out, std::vector<NodePtr> parents, std::function<void()> fn) {
    out.node_->requires_grad = true;
    out.node_->parents = std::move(parents);
    out.node_->backward_fn = std::move(fn);
}

void check_same_shape(const char* op, const Var& a, const Var& b) {
    if (!a.value().same_shape(b.value())) {
        throw DimensionError(std::string(op) + ": shape mismatch " + a.value().shape_string() +
                             " vs " + b.value().shape_string());
    }
}

void check_2d(const char* op, const Var& a) {
    if (a.value().rank() != 2) {
        throw DimensionError(std::string(op) + ": expected 2-d tensor, got " +
                             a.value().shape_string());
    }
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

// ---------------------------------------------------------------------------
// elementwise

Var add(const Var& a, const Var& b) {
    check_same_shape("add", a, b);
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + b.value()[i];
    Var y(std::move(out));
    if (wants_grad({&a, &b})) {
        attach(y, {a.node_, b.node_}, [yn = y.node_.get(), an = a.node_, bn = b.node_] {
            const Tensor& g = yn->grad;
            if (an->requires_grad) {
                Tensor& ga = an->ensure_grad();
                for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
            }
            if (bn->requires_grad) {
                Tensor& gb = bn->ensure_grad();
                for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i];
            }
        });
    }
    return y;
}

Var sub(const Var& a, const Var& b) {
    check_same_shape("sub", a, b);
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] - b.value()[i];
    Var y(std::move(out));
    if (wants_grad({&a, &b})) {
        attach(y, {a.node_, b.node_}, [yn = y.node_.get(), an = a.node_, bn = b.node_] {
            const Tensor& g = yn->grad;
            if (an->requires_grad) {
                Tensor& ga = an->ensure_grad();
                for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
            }
            if (bn->requires_grad) {
                Tensor& gb = bn->ensure_grad();
                for (std::size_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
            }
        });
    }
    return y;
}

Var mul(const Var& a, const Var& b) {
    check_same_shape("mul", a, b);
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
    Var y(std::move(out));
    if (wants_grad({&a, &b})) {
        attach(y, {a.node_, b.node_}, [yn = y.node_.get(), an = a.node_, bn = b.node_] {
            const Tensor& g = yn->grad;
            if (an->requires_grad) {
                Tensor& ga = an->ensure_grad();
                for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * bn->value[i];
            }
            if (bn->requires_grad) {
                Tensor& gb = bn->ensure_grad();
                for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * an->value[i];
            }
        });
    }
    return y;
}

Var scalar_mul(const Var& a, double s) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * s;
    Var y(std::move(out));
    if (wants_grad({&a})) {
        attach(y, {a.node_}, [yn = y.node_.get(), an = a.node_, s] {
            if (!an->requires_grad) return;
            Tensor& ga = an->ensure_grad();
            for (std::size_t i = 0; i < yn->grad.numel(); ++i) ga[i] += yn->grad[i] * s;
        });
    }
    return y;
}

Var neg(const Var& a) { return scalar_mul(a, -1.0); }

Var relu(const Var& x) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::max(0.0, x.value()[i]);
    Var y(std::move(out));
    if (wants_grad({&x})) {
        // subgradient at 0 is 0
        attach(y, {x.node_}, [yn = y.node_.get(), xn = x.node_] {
            if (!xn->requires_grad) return;
            Tensor& gx = xn->ensure_grad();
            for (std::size_t i = 0; i < yn->grad.numel(); ++i)
                if (xn->value[i] > 0.0) gx[i] += yn->grad[i];
        });
    }
    return y;
}

Var log_op(const Var& x) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) {
        if (x.value()[i] <= 0.0) throw NumericError("log: non-positive input");
        out[i] = std::log(x.value()[i]);
    }
    Var y(std::move(out));
    if (wants_grad({&x})) {
        attach(y, {x.node_}, [yn = y.node_.get(), xn = x.node_] {
            if (!xn->requires_grad) return;
            Tensor& gx = xn->ensure_grad();
            for (std::size_t i = 0; i < yn->grad.numel(); ++i) gx[i] += yn->grad[i] / xn->value[i];
        });
    }
    return y;
}

Var sigmoid(const Var& x) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = stable_sigmoid(x.value()[i]);
    Var y(std::move(out));
    if (wants_grad({&x})) {
        attach(y, {x.node_}, [yn = y.node_.get(), xn = x.node_] {
            if (!xn->requires_grad) return;
            Tensor& gx = xn->ensure_grad();
            for (std::size_t i = 0; i < yn->grad.numel(); ++i) {
                double s = yn->value[i];
                gx[i] += yn->grad[i] * s * (1.0 - s);
            }
        });
    }
    return y;
}

Var softplus(const Var& x) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) {
        double v = x.value()[i];
        out[i] = std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
    }
    Var y(std::move(out));
    if (wants_grad({&x})) {
        attach(y, {x.node_}, [yn = y.node_.get(), xn = x.node_] {
            if (!xn->requires_grad) return;
            Tensor& gx = xn->ensure_grad();
            for (std::size_t i = 0; i < yn->grad.numel(); ++i)
                gx[i] += yn->grad[i] * stable_sigmoid(xn->value[i]);
        });
    }
    return y;
}

Var pow_scalar(const Var& x, double p) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) {
        if (x.value()[i] <= 0.0) throw NumericError("pow_scalar: non-positive base");
        out[i] = std::pow(x.value()[i], p);
    }
    Var y(std::move(out));
    if (wants_grad({&x})) {
        attach(y, {x.node_}, [yn = y.node_.get(), xn = x.node_, p] {
            if (!xn->requires_grad) return;
            Tensor& gx = xn->ensure_grad();
            for (std::size_t i = 0; i < yn->grad.numel(); ++i)
                gx[i] += yn->grad[i] * p * yn->value[i] / xn->value[i];
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// shape ops

Var reshape(const Var& x, std::vector<std::size_t> new_shape) {
    Tensor out = x.value().reshaped(std::move(new_shape));
    Var y(std::move(out));
    if (wants_grad({&x})) {
        attach(y, {x.node_}, [yn = y.node_.get(), xn = x.node_] {
            if (!xn->requires_grad) return;
            Tensor& gx = xn->ensure_grad();
            for (std::size_t i = 0; i < yn->grad.numel(); ++i) gx[i] += yn->grad[i];
        });
    }
    return y;
}

Var transpose(const Var& x) {
    check_2d("transpose", x);
    std::size_t rows = x.shape()[0], cols = x.shape()[1];
    Tensor out({cols, rows});
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out.at(j, i) = x.value().at(i, j);
    Var y(std::move(out));
    if (wants_grad({&x})) {
        attach(y, {x.node_}, [yn = y.node_.get(), xn = x.node_, rows, cols] {
            if (!xn->requires_grad) return;
            Tensor& gx = xn->ensure_grad();
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j) gx.at(i, j) += yn->grad.at(j, i);
        });
    }
    return y;
}

Var select(const Var& x, std::size_t axis, std::size_t index) {
    AxisSplit sp = split_axis(x.shape(), axis);
    if (index >= sp.n) {
        throw DimensionError("select: index " + std::to_string(index) + " out of range for axis " +
                             std::to_string(axis) + " of " + x.value().shape_string());
    }
    std::vector<std::size_t> out_shape = x.shape();
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
    if (out_shape.empty()) out_shape = {1};
    Tensor out(out_shape);
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t i = 0; i < sp.inner; ++i)
            out[o * sp.inner + i] = x.value()[(o * sp.n + index) * sp.inner + i];
    Var y(std::move(out));
    if (wants_grad({&x})) {
        attach(y, {x.node_}, [yn = y.node_.get(), xn = x.node_, sp, index] {
            if (!xn->requires_grad) return;
            Tensor& gx = xn->ensure_grad();
            for (std::size_t o = 0; o < sp.outer; ++o)
                for (std::size_t i = 0; i < sp.inner; ++i)
                    gx[(o * sp.n + index) * sp.inner + i] += yn->grad[o * sp.inner + i];
        });
    }
    return y;
}

Var stack0(const std::vector<Var>& parts) {
    if (parts.empty()) throw ContractError("stack0: empty input list");
    const std::vector<std::size_t>& base = parts[0].shape();
    for (const Var& p : parts) {
        if (p.shape() != base) {
            throw DimensionError("stack0: shape mismatch " + p.value().shape_string() + " vs " +
                                 parts[0].value().shape_string());
        }
    }
    std::size_t block = parts[0].numel();
    std::vector<std::size_t> out_shape;
    out_shape.push_back(parts.size());
    out_shape.insert(out_shape.end(), base.begin(), base.end());
    Tensor out(out_shape);
    for (std::size_t k = 0; k < parts.size(); ++k)
        std::copy_n(parts[k].value().data(), block, out.data() + k * block);
    Var y(std::move(out));
    bool want = false;
    for (const Var& p : parts) want = want || p.requires_grad();
    if (grad_enabled() && want) {
        std::vector<NodePtr> nodes;
        for (const Var& p : parts) nodes.push_back(p.node_);
        attach(y, nodes, [yn = y.node_.get(), nodes, block] {
            for (std::size_t k = 0; k < nodes.size(); ++k) {
                if (!nodes[k]->requires_grad) continue;
                Tensor& g = nodes[k]->ensure_grad();
                for (std::size_t i = 0; i < block; ++i) g[i] += yn->grad[k * block + i];
            }
        });
    }
    return y;
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: empty input list");
    std::size_t rows = 0, total_cols = 0;
    for (const Var& p : parts) {
        check_2d("concat_cols", p);
        if (&p == &parts[0]) rows = p.shape()[0];
        if (p.shape()[0] != rows) {
            throw DimensionError("concat_cols: row mismatch " + p.value().shape_string() + " vs " +
                                 parts[0].value().shape_string());
        }
        total_cols += p.shape()[1];
    }
    Tensor out({rows, total_cols});
    std::size_t off = 0;
    for (const Var& p : parts) {
        std::size_t c = p.shape()[1];
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < c; ++j) out.at(i, off + j) = p.value().at(i, j);
        off += c;
    }
    Var y(std::move(out));
    bool want = false;
    for (const Var& p : parts) want = want || p.requires_grad();
    if (grad_enabled() && want) {
        std::vector<NodePtr> nodes;
        std::vector<std::size_t> offsets;
        std::size_t o = 0;
        for (const Var& p : parts) {
            nodes.push_back(p.node_);
            offsets.push_back(o);
            o += p.shape()[1];
        }
        attach(y, nodes, [yn = y.node_.get(), nodes, offsets, rows] {
            for (std::size_t k = 0; k < nodes.size(); ++k) {
                if (!nodes[k]->requires_grad) continue;
                Tensor& g = nodes[k]->ensure_grad();
                std::size_t c = nodes[k]->value.shape()[1];
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < c; ++j)
                        g.at(i, j) += yn->grad.at(i, offsets[k] + j);
            }
        });
    }
    return y;
}

Var concat_vec(const std::vector<Var>& parts) {
    if (parts.empty()) throw ContractError("concat_vec: empty input list");
    std::size_t total = 0;
    for (const Var& p : parts) {
        if (p.value().rank() != 1) {
            throw DimensionError("concat_vec: expected 1-d parts, got " + p.value().shape_string());
        }
        total += p.numel();
    }
    Tensor out({total});
    std::size_t off = 0;
    for (const Var& p : parts) {
        std::copy_n(p.value().data(), p.numel(), out.data() + off);
        off += p.numel();
    }
    Var y(std::move(out));
    bool want = false;
    for (const Var& p : parts) want = want || p.requires_grad();
    if (grad_enabled() && want) {
        std::vector<NodePtr> nodes;
        for (const Var& p : parts) nodes.push_back(p.node_);
        attach(y, nodes, [yn = y.node_.get(), nodes] {
            std::size_t off2 = 0;
            for (const NodePtr& n : nodes) {
                std::size_t c = n->value.numel();
                if (n->requires_grad) {
                    Tensor& g = n->ensure_grad();
                    for (std::size_t i = 0; i < c; ++i) g[i] += yn->grad[off2 + i];
                }
                off2 += c;
            }
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// reductions

Var sum_all(const Var& x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) s += x.value()[i];
    Var y(Tensor::scalar(s));
    if (wants_grad({&x})) {
        attach(y, {x.node_}, [yn = y.node_.get(), xn = x.node_] {
            if (!xn->requires_grad) return;
            Tensor& gx = xn->ensure_grad();
            double g = yn->grad[0];
            for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += g;
        });
    }
    return y;
}

Var sum_axis(const Var& x, std::size_t axis) {
    AxisSplit sp = split_axis(x.shape(), axis);
    std::vector<std::size_t> out_shape = x.shape();
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
    if (out_shape.empty()) out_shape = {1};
    Tensor out(out_shape);
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t t = 0; t < sp.n; ++t)
            for (std::size_t i = 0; i < sp.inner; ++i)
                out[o * sp.inner + i] += x.value()[(o * sp.n + t) * sp.inner + i];
    Var y(std::move(out));
    if (wants_grad({&x})) {
        attach(y, {x.node_}, [yn = y.node_.get(), xn = x.node_, sp] {
            if (!xn->requires_grad) return;
            Tensor& gx = xn->ensure_grad();
            for (std::size_t o = 0; o < sp.outer; ++o)
                for (std::size_t t = 0; t < sp.n; ++t)
                    for (std::size_t i = 0; i < sp.inner; ++i)
                        gx[(o * sp.n + t) * sp.inner + i] += yn->grad[o * sp.inner + i];
        });
    }
    return y;
}

Var mean_axis(const Var& x, std::size_t axis) {
    double inv = 1.0 / static_cast<double>(x.shape()[axis]);
    return scalar_mul(sum_axis(x, axis), inv);
}

// ---------------------------------------------------------------------------
// linear algebra

Var matmul(const Var& a, const Var& b) {
    check_2d("matmul", a);
    check_2d("matmul", b);
    std::size_t m = a.shape()[0], k = a.shape()[1], k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2) {
        throw DimensionError("matmul: inner extents differ, " + a.value().shape_string() + " vs " +
                             b.value().shape_string());
    }
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            double av = a.value().at(i, kk);
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) out.at(i, j) += av * b.value().at(kk, j);
        }
    }
    Var y(std::move(out));
    if (wants_grad({&a, &b})) {
        attach(y, {a.node_, b.node_}, [yn = y.node_.get(), an = a.node_, bn = b.node_, m, k, n] {
            const Tensor& g = yn->grad;
            if (an->requires_grad) {
                Tensor& ga = an->ensure_grad(); // dA += dC * B^T
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        double gv = g.at(i, j);
                        if (gv == 0.0) continue;
                        for (std::size_t kk = 0; kk < k; ++kk)
                            ga.at(i, kk) += gv * bn->value.at(kk, j);
                    }
            }
            if (bn->requires_grad) {
                Tensor& gb = bn->ensure_grad(); // dB += A^T * dC
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        double av = an->value.at(i, kk);
                        if (av == 0.0) continue;
                        for (std::size_t j = 0; j < n; ++j) gb.at(kk, j) += av * g.at(i, j);
                    }
            }
        });
    }
    return y;
}

Var linear(const Var& x, const Var& weight, const std::optional<Var>& bias) {
    check_2d("linear", weight);
    std::size_t cin = weight.shape()[0], cout = weight.shape()[1];
    if (x.shape().back() != cin) {
        throw DimensionError("linear: input channels " + x.value().shape_string() +
                             " incompatible with weight " + weight.value().shape_string());
    }
    if (bias && (bias->value().rank() != 1 || bias->shape()[0] != cout)) {
        throw DimensionError("linear: bias " + bias->value().shape_string() +
                             " incompatible with weight " + weight.value().shape_string());
    }
    std::size_t rows = x.numel() / cin;
    std::vector<std::size_t> out_shape = x.shape();
    out_shape.back() = cout;
    Tensor out(out_shape);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t ci = 0; ci < cin; ++ci) {
            double xv = x.value()[r * cin + ci];
            if (xv == 0.0) continue;
            for (std::size_t co = 0; co < cout; ++co)
                out[r * cout + co] += xv * weight.value().at(ci, co);
        }
        if (bias)
            for (std::size_t co = 0; co < cout; ++co) out[r * cout + co] += bias->value()[co];
    }
    Var y(std::move(out));
    bool want = bias ? wants_grad({&x, &weight, &*bias}) : wants_grad({&x, &weight});
    if (want) {
        std::vector<NodePtr> parents{x.node_, weight.node_};
        NodePtr bias_node = bias ? bias->node_ : nullptr;
        if (bias_node) parents.push_back(bias_node);
        attach(y, parents,
               [yn = y.node_.get(), xn = x.node_, wn = weight.node_, bias_node, rows, cin, cout] {
                   const Tensor& g = yn->grad;
                   if (xn->requires_grad) {
                       Tensor& gx = xn->ensure_grad();
                       for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t co = 0; co < cout; ++co) {
                               double gv = g[r * cout + co];
                               if (gv == 0.0) continue;
                               for (std::size_t ci = 0; ci < cin; ++ci)
                                   gx[r * cin + ci] += gv * wn->value.at(ci, co);
                           }
                   }
                   if (wn->requires_grad) {
                       Tensor& gw = wn->ensure_grad();
                       for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t ci = 0; ci < cin; ++ci) {
                               double xv = xn->value[r * cin + ci];
                               if (xv == 0.0) continue;
                               for (std::size_t co = 0; co < cout; ++co)
                                   gw.at(ci, co) += xv * g[r * cout + co];
                           }
                   }
                   if (bias_node && bias_node->requires_grad) {
                       Tensor& gb = bias_node->ensure_grad();
                       for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t co = 0; co < cout; ++co)
                               gb[co] += g[r * cout + co];
                   }
               });
    }
    return y;
}

Var scale_rows(const Var& x, const Var& a) {
    check_2d("scale_rows", x);
    if (a.value().rank() != 1 || a.shape()[0] != x.shape()[0]) {
        throw DimensionError("scale_rows: weights " + a.value().shape_string() +
                             " incompatible with " + x.value().shape_string());
    }
    std::size_t rows = x.shape()[0], cols = x.shape()[1];
    Tensor out({rows, cols});
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out.at(i, j) = x.value().at(i, j) * a.value()[i];
    Var y(std::move(out));
    if (wants_grad({&x, &a})) {
        attach(y, {x.node_, a.node_}, [yn = y.node_.get(), xn = x.node_, an = a.node_, rows, cols] {
            const Tensor& g = yn->grad;
            if (xn->requires_grad) {
                Tensor& gx = xn->ensure_grad();
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < cols; ++j)
                        gx.at(i, j) += g.at(i, j) * an->value[i];
            }
            if (an->requires_grad) {
                Tensor& ga = an->ensure_grad();
                for (std::size_t i = 0; i < rows; ++i) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < cols; ++j) s += g.at(i, j) * xn->value.at(i, j);
                    ga[i] += s;
                }
            }
        });
    }
    return y;
}

Var vscale(const Var& x, const Var& s) {
    if (!s.value().is_scalar()) {
        throw DimensionError("vscale: scale must be scalar, got " + s.value().shape_string());
    }
    double sv = s.value()[0];
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x.value()[i] * sv;
    Var y(std::move(out));
    if (wants_grad({&x, &s})) {
        attach(y, {x.node_, s.node_}, [yn = y.node_.get(), xn = x.node_, sn = s.node_] {
            const Tensor& g = yn->grad;
            if (xn->requires_grad) {
                Tensor& gx = xn->ensure_grad();
                double sv2 = sn->value[0];
                for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * sv2;
            }
            if (sn->requires_grad) {
                Tensor& gs = sn->ensure_grad();
                double acc = 0.0;
                for (std::size_t i = 0; i < g.numel(); ++i) acc += g[i] * xn->value[i];
                gs[0] += acc;
            }
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// nonlinear blocks

Var softmax(const Var& x, std::size_t axis) {
    AxisSplit sp = split_axis(x.shape(), axis);
    Tensor out(x.shape());
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
            double mx = -1e300;
            for (std::size_t t = 0; t < sp.n; ++t)
                mx = std::max(mx, x.value()[(o * sp.n + t) * sp.inner + i]);
            double denom = 0.0;
            for (std::size_t t = 0; t < sp.n; ++t) {
                double e = std::exp(x.value()[(o * sp.n + t) * sp.inner + i] - mx);
                out[(o * sp.n + t) * sp.inner + i] = e;
                denom += e;
            }
            for (std::size_t t = 0; t < sp.n; ++t) out[(o * sp.n + t) * sp.inner + i] /= denom;
        }
    }
    Var y(std::move(out));
    if (wants_grad({&x})) {
        attach(y, {x.node_}, [yn = y.node_.get(), xn = x.node_, sp] {
            if (!xn->requires_grad) return;
            Tensor& gx = xn->ensure_grad();
            for (std::size_t o = 0; o < sp.outer; ++o) {
                for (std::size_t i = 0; i < sp.inner; ++i) {
                    double dotv = 0.0;
                    for (std::size_t t = 0; t < sp.n; ++t) {
                        std::size_t idx = (o * sp.n + t) * sp.inner + i;
                        dotv += yn->grad[idx] * yn->value[idx];
                    }
                    for (std::size_t t = 0; t < sp.n; ++t) {
                        std::size_t idx = (o * sp.n + t) * sp.inner + i;
                        gx[idx] += yn->value[idx] * (yn->grad[idx] - dotv);
                    }
                }
            }
        });
    }
    return y;
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
    if (eps <= 0.0) throw ContractError("layer_norm: eps must be positive");
    std::size_t c = x.shape().back();
    if (gain.value().rank() != 1 || gain.shape()[0] != c || bias.value().rank() != 1 ||
        bias.shape()[0] != c) {
        throw DimensionError("layer_norm: gain " + gain.value().shape_string() + " / bias " +
                             bias.value().shape_string() + " incompatible with input " +
                             x.value().shape_string());
    }
    std::size_t rows = x.numel() / c;
    Tensor out(x.shape());
    std::vector<double> mu(rows), inv_sigma(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double m = 0.0;
        for (std::size_t j = 0; j < c; ++j) m += x.value()[r * c + j];
        m /= static_cast<double>(c);
        double v = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            double d = x.value()[r * c + j] - m;
            v += d * d;
        }
        v /= static_cast<double>(c);
        mu[r] = m;
        inv_sigma[r] = 1.0 / std::sqrt(v + eps);
        for (std::size_t j = 0; j < c; ++j) {
            double xh = (x.value()[r * c + j] - m) * inv_sigma[r];
            out[r * c + j] = gain.value()[j] * xh + bias.value()[j];
        }
    }
    Var y(std::move(out));
    if (wants_grad({&x, &gain, &bias})) {
        attach(y, {x.node_, gain.node_, bias.node_},
               [yn = y.node_.get(), xn = x.node_, gn = gain.node_, bn = bias.node_, rows, c,
                mu = std::move(mu), inv_sigma = std::move(inv_sigma)] {
                   const Tensor& g = yn->grad;
                   for (std::size_t r = 0; r < rows; ++r) {
                       double m1 = 0.0, m2 = 0.0;
                       for (std::size_t j = 0; j < c; ++j) {
                           double xh = (xn->value[r * c + j] - mu[r]) * inv_sigma[r];
                           double dxh = g[r * c + j] * gn->value[j];
                           m1 += dxh;
                           m2 += dxh * xh;
                       }
                       m1 /= static_cast<double>(c);
                       m2 /= static_cast<double>(c);
                       if (xn->requires_grad) {
                           Tensor& gx = xn->ensure_grad();
                           for (std::size_t j = 0; j < c; ++j) {
                               double xh = (xn->value[r * c + j] - mu[r]) * inv_sigma[r];
                               double dxh = g[r * c + j] * gn->value[j];
                               gx[r * c + j] += (dxh - m1 - xh * m2) * inv_sigma[r];
                           }
                       }
                       if (gn->requires_grad) {
                           Tensor& gg = gn->ensure_grad();
                           for (std::size_t j = 0; j < c; ++j) {
                               double xh = (xn->value[r * c + j] - mu[r]) * inv_sigma[r];
                               gg[j] += g[r * c + j] * xh;
                           }
                       }
                       if (bn->requires_grad) {
                           Tensor& gb = bn->ensure_grad();
                           for (std::size_t j = 0; j < c; ++j) gb[j] += g[r * c + j];
                       }
                   }
               });
    }
    return y;
}

// ---------------------------------------------------------------------------
// vector helpers

Var dot(const Var& a, const Var& b) {
    if (a.value().rank() != 1 || b.value().rank() != 1) {
        throw DimensionError("dot: expected 1-d inputs, got " + a.value().shape_string() + " and " +
                             b.value().shape_string());
    }
    check_same_shape("dot", a, b);
    return sum_all(mul(a, b));
}

Var l2_normalize(const Var& v) {
    Var n2 = dot(v, v);
    if (n2.value()[0] <= 0.0) throw ContractError("l2_normalize: zero-norm vector");
    return vscale(v, pow_scalar(n2, -0.5));
}

Var cosine_similarity(const Var& a, const Var& b) {
    Var na = dot(a, a);
    Var nb = dot(b, b);
    if (na.value()[0] <= 0.0 || nb.value()[0] <= 0.0)
        throw ContractError("cosine_similarity: zero-norm vector");
    Var inv = mul(pow_scalar(na, -0.5), pow_scalar(nb, -0.5));
    return mul(dot(a, b), inv);
}

Var cross_entropy_with_logits(const Var& logits, std::size_t label) {
    if (logits.value().rank() != 1) {
        throw DimensionError("cross_entropy_with_logits: expected 1-d logits, got " +
                             logits.value().shape_string());
    }
    std::size_t n = logits.numel();
    if (label >= n) {
        throw ContractError("cross_entropy_with_logits: label " + std::to_string(label) +
                            " out of range for " + std::to_string(n) + " classes");
    }
    double mx = -1e300;
    for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, logits.value()[i]);
    double denom = 0.0;
    for (std::size_t i = 0; i < n; ++i) denom += std::exp(logits.value()[i] - mx);
    double lse = mx + std::log(denom);
    Var y(Tensor::scalar(lse - logits.value()[label]));
    if (wants_grad({&logits})) {
        attach(y, {logits.node_}, [yn = y.node_.get(), ln = logits.node_, label, mx, denom, n] {
            if (!ln->requires_grad) return;
            Tensor& gl = ln->ensure_grad();
            double g = yn->grad[0];
            for (std::size_t i = 0; i < n; ++i) {
                double p = std::exp(ln->value[i] - mx) / denom;
                gl[i] += g * (p - (i == label ? 1.0 : 0.0));
            }
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// convolution

Var conv2d(const Var& x, const Var& kernel, const Var& bias, std::size_t stride,
           std::size_t pad) {
    if (x.value().rank() != 3 || kernel.value().rank() != 4 || bias.value().rank() != 1) {
        throw DimensionError("conv2d: expected x[HxWxCin], kernel[KHxKWxCinxCout], bias[Cout]; got " +
                             x.value().shape_string() + ", " + kernel.value().shape_string() +
                             ", " + bias.value().shape_string());
    }
    std::size_t h = x.shape()[0], w = x.shape()[1], cin = x.shape()[2];
    std::size_t kh = kernel.shape()[0], kw = kernel.shape()[1];
    if (kernel.shape()[2] != cin || bias.shape()[0] != kernel.shape()[3]) {
        throw DimensionError("conv2d: channel mismatch between x " + x.value().shape_string() +
                             " and kernel " + kernel.value().shape_string());
    }
    std::size_t cout = kernel.shape()[3];
    if (stride == 0) throw ContractError("conv2d: stride must be >= 1");
    if (h + 2 * pad < kh || w + 2 * pad < kw) {
        throw DimensionError("conv2d: kernel " + kernel.value().shape_string() +
                             " larger than padded input " + x.value().shape_string());
    }
    std::size_t ho = (h + 2 * pad - kh) / stride + 1;
    std::size_t wo = (w + 2 * pad - kw) / stride + 1;

    // flat index into the [KH,KW,Cin,Cout] kernel
    auto kidx = [kw, cin, cout](std::size_t ky, std::size_t kx, std::size_t ci, std::size_t co) {
        return ((ky * kw + kx) * cin + ci) * cout + co;
    };

    Tensor out({ho, wo, cout});
    const Tensor& xv = x.value();
    const Tensor& kv = kernel.value();
    for (std::size_t oy = 0; oy < ho; ++oy) {
        for (std::size_t ox = 0; ox < wo; ++ox) {
            for (std::size_t co = 0; co < cout; ++co) out.at(oy, ox, co) = bias.value()[co];
            for (std::size_t ky = 0; ky < kh; ++ky) {
                std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                    static_cast<std::ptrdiff_t>(pad);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t kx = 0; kx < kw; ++kx) {
                    std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                        static_cast<std::ptrdiff_t>(pad);
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                    for (std::size_t ci = 0; ci < cin; ++ci) {
                        double xvv = xv.at(static_cast<std::size_t>(iy),
                                           static_cast<std::size_t>(ix), ci);
                        if (xvv == 0.0) continue;
                        for (std::size_t co = 0; co < cout; ++co)
                            out.at(oy, ox, co) += xvv * kv[kidx(ky, kx, ci, co)];
                    }
                }
            }
        }
    }
    Var y(std::move(out));
    if (wants_grad({&x, &kernel, &bias})) {
        attach(y, {x.node_, kernel.node_, bias.node_},
               [yn = y.node_.get(), xn = x.node_, kn = kernel.node_, bn = bias.node_, h, w, cin,
                kh, kw, cout, ho, wo, stride, pad, kidx] {
                   const Tensor& g = yn->grad;
                   Tensor* gx = xn->requires_grad ? &xn->ensure_grad() : nullptr;
                   Tensor* gk = kn->requires_grad ? &kn->ensure_grad() : nullptr;
                   Tensor* gb = bn->requires_grad ? &bn->ensure_grad() : nullptr;
                   for (std::size_t oy = 0; oy < ho; ++oy) {
                       for (std::size_t ox = 0; ox < wo; ++ox) {
                           if (gb)
                               for (std::size_t co = 0; co < cout; ++co)
                                   (*gb)[co] += g.at(oy, ox, co);
                           for (std::size_t ky = 0; ky < kh; ++ky) {
                               std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                                   static_cast<std::ptrdiff_t>(pad);
                               if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                               for (std::size_t kx = 0; kx < kw; ++kx) {
                                   std::ptrdiff_t ix =
                                       static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                       static_cast<std::ptrdiff_t>(pad);
                                   if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                                   auto ia = static_cast<std::size_t>(iy);
                                   auto ib = static_cast<std::size_t>(ix);
                                   for (std::size_t ci = 0; ci < cin; ++ci) {
                                       double xvv = xn->value.at(ia, ib, ci);
                                       double acc = 0.0;
                                       for (std::size_t co = 0; co < cout; ++co) {
                                           double gv = g.at(oy, ox, co);
                                           if (gv == 0.0) continue;
                                           if (gk) (*gk)[kidx(ky, kx, ci, co)] += xvv * gv;
                                           acc += gv * kn->value[kidx(ky, kx, ci, co)];
                                       }
                                       if (gx) gx->at(ia, ib, ci) += acc;
                                   }
                               }
                           }
                       }
                   }
               });
    }
    return y;
}

} // namespace tmt
