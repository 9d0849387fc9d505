#pragma once

// Straight-line scalar-loop references, written independently of the library
// kernels (no Var graphs, different loop structure). These are the oracles
// the differentiable implementations are compared against.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "tmt/tensor.hpp"

namespace tmt::refimpl {

inline std::vector<double> ref_softmax(const std::vector<double>& z) {
    double mx = *std::max_element(z.begin(), z.end());
    std::vector<double> out(z.size());
    double den = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        out[i] = std::exp(z[i] - mx);
        den += out[i];
    }
    for (double& v : out) v /= den;
    return out;
}

// attention pooling over the frame axis: cube [T,HW,C], w [C,C] -> [HW,C]
inline Tensor ref_temporal_pool(const Tensor& cube, const Tensor& w, bool literal = false) {
    std::size_t t_n = cube.shape()[0], hw = cube.shape()[1], c = cube.shape()[2];
    Tensor out({hw, c});
    for (std::size_t i = 0; i < hw; ++i) {
        std::vector<double> f(t_n * c, 0.0);
        for (std::size_t t = 0; t < t_n; ++t)
            for (std::size_t a = 0; a < c; ++a)
                for (std::size_t b = 0; b < c; ++b)
                    f[t * c + b] += cube.at(t, i, a) * w.at(a, b);
        std::vector<double> rowsum(t_n, 0.0);
        for (std::size_t t = 0; t < t_n; ++t)
            for (std::size_t u = 0; u < t_n; ++u)
                for (std::size_t b = 0; b < c; ++b) rowsum[t] += f[t * c + b] * f[u * c + b];
        std::vector<double> att = ref_softmax(rowsum);
        for (std::size_t t = 0; t < t_n; ++t) {
            double wgt = literal ? 1.0 : att[t];
            for (std::size_t b = 0; b < c; ++b) out.at(i, b) += wgt * cube.at(t, i, b);
        }
    }
    return out;
}

// attention pooling over the location axis: cube [T,HW,C], w [C,C] -> [T,C]
inline Tensor ref_spatial_pool(const Tensor& cube, const Tensor& w, bool literal = false) {
    std::size_t t_n = cube.shape()[0], hw = cube.shape()[1], c = cube.shape()[2];
    Tensor out({t_n, c});
    for (std::size_t t = 0; t < t_n; ++t) {
        std::vector<double> f(hw * c, 0.0);
        for (std::size_t i = 0; i < hw; ++i)
            for (std::size_t a = 0; a < c; ++a)
                for (std::size_t b = 0; b < c; ++b)
                    f[i * c + b] += cube.at(t, i, a) * w.at(a, b);
        std::vector<double> rowsum(hw, 0.0);
        for (std::size_t i = 0; i < hw; ++i)
            for (std::size_t j = 0; j < hw; ++j)
                for (std::size_t b = 0; b < c; ++b) rowsum[i] += f[i * c + b] * f[j * c + b];
        std::vector<double> att = ref_softmax(rowsum);
        for (std::size_t i = 0; i < hw; ++i) {
            double wgt = literal ? 1.0 : att[i];
            for (std::size_t b = 0; b < c; ++b) out.at(t, b) += wgt * cube.at(t, i, b);
        }
    }
    return out;
}

// single attention map: queries [Lq,C] against keys/values [Lk,C] through
// per-head weights wq/wk/wv, each [heads][C*d] row-major C x d
struct RefHeadWeights {
    std::size_t heads = 1, dim = 1; // d
    std::vector<std::vector<double>> wq, wk, wv;
};

inline Tensor ref_attention(const Tensor& queries, const Tensor& keys_values,
                            const RefHeadWeights& hw) {
    std::size_t lq = queries.shape()[0], c = queries.shape()[1];
    std::size_t lk = keys_values.shape()[0];
    std::size_t d = hw.dim;
    Tensor out({lq, c});
    for (std::size_t h = 0; h < hw.heads; ++h) {
        std::vector<double> q(lq * d, 0.0), k(lk * d, 0.0), v(lk * d, 0.0);
        for (std::size_t i = 0; i < lq; ++i)
            for (std::size_t a = 0; a < c; ++a)
                for (std::size_t b = 0; b < d; ++b)
                    q[i * d + b] += queries.at(i, a) * hw.wq[h][a * d + b];
        for (std::size_t i = 0; i < lk; ++i)
            for (std::size_t a = 0; a < c; ++a)
                for (std::size_t b = 0; b < d; ++b) {
                    k[i * d + b] += keys_values.at(i, a) * hw.wk[h][a * d + b];
                    v[i * d + b] += keys_values.at(i, a) * hw.wv[h][a * d + b];
                }
        double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
        for (std::size_t i = 0; i < lq; ++i) {
            std::vector<double> logits(lk, 0.0);
            for (std::size_t j = 0; j < lk; ++j)
                for (std::size_t b = 0; b < d; ++b)
                    logits[j] += q[i * d + b] * k[j * d + b] * inv_sqrt_d;
            std::vector<double> att = ref_softmax(logits);
            for (std::size_t j = 0; j < lk; ++j)
                for (std::size_t b = 0; b < d; ++b)
                    out.at(i, h * d + b) += att[j] * v[j * d + b];
        }
    }
    return out;
}

inline void ref_layer_norm_inplace(Tensor& x, const std::vector<double>& gain,
                                   const std::vector<double>& bias, double eps = 1e-5) {
    std::size_t c = x.shape().back();
    std::size_t rows = x.numel() / c;
    for (std::size_t r = 0; r < rows; ++r) {
        double m = 0.0, v = 0.0;
        for (std::size_t j = 0; j < c; ++j) m += x[r * c + j];
        m /= static_cast<double>(c);
        for (std::size_t j = 0; j < c; ++j) {
            double dd = x[r * c + j] - m;
            v += dd * dd;
        }
        v /= static_cast<double>(c);
        double inv = 1.0 / std::sqrt(v + eps);
        for (std::size_t j = 0; j < c; ++j)
            x[r * c + j] = gain[j] * ((x[r * c + j] - m) * inv) + bias[j];
    }
}

// x [L,C] -> relu(x w1) w2, square weights [C,C]
inline Tensor ref_ffn(const Tensor& x, const Tensor& w1, const Tensor& w2) {
    std::size_t l = x.shape()[0], c = x.shape()[1];
    Tensor h({l, c});
    for (std::size_t i = 0; i < l; ++i)
        for (std::size_t a = 0; a < c; ++a)
            for (std::size_t b = 0; b < c; ++b) h.at(i, b) += x.at(i, a) * w1.at(a, b);
    for (std::size_t i = 0; i < l * c; ++i) h[i] = std::max(0.0, h[i]);
    Tensor out({l, c});
    for (std::size_t i = 0; i < l; ++i)
        for (std::size_t a = 0; a < c; ++a)
            for (std::size_t b = 0; b < c; ++b) out.at(i, b) += h.at(i, a) * w2.at(a, b);
    return out;
}

// dumbest-possible ranking evaluation: selection sort by (distance, index),
// explicit counting loops
struct RefRanking {
    std::vector<double> cmc;
    double map = 0.0;
    std::vector<double> ap; // -1 where skipped
    std::size_t skipped = 0;
};

inline RefRanking ref_ranking(const Tensor& dist, const std::vector<int>& qid,
                              const std::vector<int>& gid, const std::vector<int>& qcam,
                              const std::vector<int>& gcam, std::size_t max_rank,
                              bool cross_camera) {
    std::size_t nq = dist.shape()[0], ng = dist.shape()[1];
    RefRanking out;
    out.cmc.assign(max_rank, 0.0);
    out.ap.assign(nq, -1.0);
    std::size_t scored = 0;

    for (std::size_t q = 0; q < nq; ++q) {
        std::vector<std::size_t> pool;
        for (std::size_t j = 0; j < ng; ++j) {
            if (cross_camera && gid[j] == qid[q] && gcam[j] == qcam[q]) continue;
            pool.push_back(j);
        }
        std::vector<std::size_t> ranked;
        std::vector<bool> used(pool.size(), false);
        for (std::size_t step = 0; step < pool.size(); ++step) {
            std::size_t best = pool.size();
            for (std::size_t k = 0; k < pool.size(); ++k) {
                if (used[k]) continue;
                if (best == pool.size()) {
                    best = k;
                    continue;
                }
                double dk = dist.at(q, pool[k]), db = dist.at(q, pool[best]);
                if (dk < db || (dk == db && pool[k] < pool[best])) best = k;
            }
            used[best] = true;
            ranked.push_back(pool[best]);
        }

        std::size_t total_rel = 0;
        for (std::size_t j : ranked)
            if (gid[j] == qid[q]) ++total_rel;
        if (total_rel == 0) {
            ++out.skipped;
            continue;
        }
        ++scored;

        std::size_t seen = 0;
        double psum = 0.0;
        for (std::size_t pos = 0; pos < ranked.size(); ++pos) {
            if (gid[ranked[pos]] != qid[q]) continue;
            ++seen;
            psum += static_cast<double>(seen) / static_cast<double>(pos + 1);
            if (seen == 1) {
                for (std::size_t k = pos; k < max_rank; ++k) out.cmc[k] += 1.0;
            }
        }
        out.ap[q] = psum / static_cast<double>(total_rel);
        out.map += out.ap[q];
    }
    if (scored > 0) {
        out.map /= static_cast<double>(scored);
        for (double& v : out.cmc) v /= static_cast<double>(scored);
    }
    return out;
}

} // namespace tmt::refimpl
