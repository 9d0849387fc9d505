#include "tmt/crossview.hpp"

#include <cmath>

#include "tmt/errors.hpp"
#include "tmt/ops.hpp"

namespace tmt {

namespace {

Tensor uniform_init(Rng& rng, std::vector<std::size_t> shape, std::size_t fan_in) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

std::vector<Var> head_stack(ParamTape& tape, const std::string& prefix, const HeadConfig& cfg,
                            Rng& rng) {
    std::size_t d = cfg.head_dim();
    std::vector<Var> ws;
    for (std::size_t h = 0; h < cfg.num_heads; ++h)
        ws.push_back(tape.add(prefix + std::to_string(h),
                              uniform_init(rng, {cfg.channels, d}, cfg.channels)));
    return ws;
}

void check_tokens(const char* op, const Var& tokens, const HeadConfig& cfg) {
    if (tokens.value().rank() != 2 || tokens.shape()[1] != cfg.channels) {
        throw DimensionError(std::string(op) + ": tokens " + tokens.value().shape_string() +
                             " do not match configured channels " +
                             std::to_string(cfg.channels));
    }
}

void check_stack(const char* op, const std::vector<Var>& ws, const HeadConfig& cfg) {
    std::size_t d = cfg.head_dim();
    if (ws.size() != cfg.num_heads) {
        throw ConfigError(std::string(op) + ": head stack has " + std::to_string(ws.size()) +
                          " entries, config wants " + std::to_string(cfg.num_heads));
    }
    for (const Var& w : ws) {
        if (w.value().rank() != 2 || w.shape()[0] != cfg.channels || w.shape()[1] != d) {
            throw DimensionError(std::string(op) + ": head weight " + w.value().shape_string() +
                                 " expected " + shape_str({cfg.channels, d}));
        }
    }
}

const char* view_names[3] = {"s", "t", "st"};

} // namespace

CrossViewBlockParams make_crossview_block_params(ParamTape& tape, const std::string& prefix,
                                                 const HeadConfig& cfg, Rng& rng,
                                                 bool share_kv_across_targets) {
    std::size_t c = cfg.channels;
    CrossViewBlockParams p;

    // with sharing, one K/V stack per source view, built up-front
    std::vector<Var> shared_k[3], shared_v[3];
    if (share_kv_across_targets) {
        for (int src = 0; src < 3; ++src) {
            shared_k[src] = head_stack(tape, prefix + ".kv_" + view_names[src] + ".k", cfg, rng);
            shared_v[src] = head_stack(tape, prefix + ".kv_" + view_names[src] + ".v", cfg, rng);
        }
    }

    for (int tgt = 0; tgt < 3; ++tgt) {
        CrossViewTargetParams& tp = p.targets[tgt];
        int pair = 0;
        for (int src = 0; src < 3; ++src) {
            if (src == tgt) continue;
            std::string pp =
                prefix + "." + view_names[tgt] + ".from_" + view_names[src] + ".";
            tp.from[pair].q_weights = head_stack(tape, pp + "q", cfg, rng);
            if (share_kv_across_targets) {
                tp.from[pair].k_weights = shared_k[src];
                tp.from[pair].v_weights = shared_v[src];
            } else {
                tp.from[pair].k_weights = head_stack(tape, pp + "k", cfg, rng);
                tp.from[pair].v_weights = head_stack(tape, pp + "v", cfg, rng);
            }
            ++pair;
        }
        std::string tpfx = prefix + "." + view_names[tgt];
        tp.ffn_w3 = tape.add(tpfx + ".ffn_w3", uniform_init(rng, {c, c}, c));
        tp.ffn_w4 = tape.add(tpfx + ".ffn_w4", uniform_init(rng, {c, c}, c));
        tp.norm1_gain = tape.add(tpfx + ".norm1_gain", Tensor::full({c}, 1.0));
        tp.norm1_bias = tape.add(tpfx + ".norm1_bias", Tensor::zeros({c}));
        tp.norm2_gain = tape.add(tpfx + ".norm2_gain", Tensor::full({c}, 1.0));
        tp.norm2_bias = tape.add(tpfx + ".norm2_bias", Tensor::zeros({c}));
    }
    return p;
}

Var cross_attention(const Var& target_tokens, const Var& source_tokens,
                    const std::vector<Var>& q_weights, const std::vector<Var>& k_weights,
                    const std::vector<Var>& v_weights, const HeadConfig& cfg,
                    std::vector<Tensor>* attention_maps) {
    check_tokens("cross_attention(target)", target_tokens, cfg);
    check_tokens("cross_attention(source)", source_tokens, cfg);
    check_stack("cross_attention(q)", q_weights, cfg);
    check_stack("cross_attention(k)", k_weights, cfg);
    check_stack("cross_attention(v)", v_weights, cfg);

    std::size_t d = cfg.head_dim();
    double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    if (attention_maps) attention_maps->clear();

    std::vector<Var> heads;
    heads.reserve(cfg.num_heads);
    for (std::size_t h = 0; h < cfg.num_heads; ++h) {
        Var q = matmul(target_tokens, q_weights[h]); // [Lt, d]
        Var k = matmul(source_tokens, k_weights[h]); // [Ls, d]
        Var v = matmul(source_tokens, v_weights[h]);
        Var att = softmax(scalar_mul(matmul(q, transpose(k)), inv_sqrt_d), 1); // [Lt, Ls]
        if (attention_maps) attention_maps->push_back(att.value());
        heads.push_back(matmul(att, v)); // [Lt, d]
    }
    return concat_cols(heads);
}

ViewFeatureSet crossview_block(const ViewFeatureSet& views, const CrossViewBlockParams& params,
                               const HeadConfig& cfg, bool literal_ffn) {
    const Var* members[3] = {&views.spatial, &views.temporal, &views.spatiotemporal};
    for (const Var* m : members) check_tokens("crossview_block", *m, cfg);

    Var updated[3];
    for (int tgt = 0; tgt < 3; ++tgt) {
        const CrossViewTargetParams& tp = params.targets[tgt];
        Var x = *members[tgt];
        int pair = 0;
        for (int src = 0; src < 3; ++src) {
            if (src == tgt) continue;
            Var ca = cross_attention(*members[tgt], *members[src], tp.from[pair].q_weights,
                                     tp.from[pair].k_weights, tp.from[pair].v_weights, cfg);
            x = add(x, ca);
            ++pair;
        }
        x = layer_norm(x, tp.norm1_gain, tp.norm1_bias, kLayerNormEps);
        Var ffn = matmul(relu(matmul(x, tp.ffn_w3)), tp.ffn_w4);
        updated[tgt] = literal_ffn
                           ? ffn
                           : layer_norm(add(x, ffn), tp.norm2_gain, tp.norm2_bias, kLayerNormEps);
    }
    ViewFeatureSet out;
    out.spatial = updated[0];
    out.temporal = updated[1];
    out.spatiotemporal = updated[2];
    return out;
}

ViewFeatureSet crossview_stack(const ViewFeatureSet& views,
                               const std::vector<CrossViewBlockParams>& blocks,
                               const HeadConfig& cfg, bool literal_ffn) {
    if (blocks.empty()) throw ConfigError("crossview_stack: needs at least one block");
    ViewFeatureSet x = crossview_block(views, blocks[0], cfg, literal_ffn);
    for (std::size_t b = 1; b < blocks.size(); ++b)
        x = crossview_block(x, blocks[b], cfg, literal_ffn);
    return x;
}

} // namespace tmt
