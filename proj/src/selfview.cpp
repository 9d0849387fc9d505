#include "tmt/selfview.hpp"

#include <cmath>

#include "tmt/errors.hpp"
#include "tmt/ops.hpp"

namespace tmt {

std::size_t HeadConfig::head_dim() const {
    if (num_heads == 0 || channels == 0 || channels % num_heads != 0) {
        throw ConfigError("head config: channels " + std::to_string(channels) +
                          " not divisible into " + std::to_string(num_heads) + " heads");
    }
    return channels / num_heads;
}

namespace {

Tensor uniform_init(Rng& rng, std::vector<std::size_t> shape, std::size_t fan_in) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

void check_block(const char* op, const Var& tokens, const SelfViewBlockParams& p,
                 const HeadConfig& cfg) {
    std::size_t d = cfg.head_dim();
    if (tokens.value().rank() != 2 || tokens.shape()[1] != cfg.channels) {
        throw DimensionError(std::string(op) + ": tokens " + tokens.value().shape_string() +
                             " do not match configured channels " +
                             std::to_string(cfg.channels));
    }
    if (p.q_weights.size() != cfg.num_heads || p.k_weights.size() != cfg.num_heads ||
        p.v_weights.size() != cfg.num_heads) {
        throw ConfigError(std::string(op) + ": head stacks have " +
                          std::to_string(p.q_weights.size()) + " entries, config wants " +
                          std::to_string(cfg.num_heads));
    }
    for (std::size_t h = 0; h < cfg.num_heads; ++h) {
        for (const Var* w : {&p.q_weights[h], &p.k_weights[h], &p.v_weights[h]}) {
            if (w->value().rank() != 2 || w->shape()[0] != cfg.channels || w->shape()[1] != d) {
                throw DimensionError(std::string(op) + ": head weight " +
                                     w->value().shape_string() + " expected " +
                                     shape_str({cfg.channels, d}));
            }
        }
    }
}

} // namespace

SelfViewBlockParams make_selfview_block_params(ParamTape& tape, const std::string& prefix,
                                               const HeadConfig& cfg, Rng& rng) {
    std::size_t c = cfg.channels, d = cfg.head_dim();
    SelfViewBlockParams p;
    for (std::size_t h = 0; h < cfg.num_heads; ++h) {
        std::string hs = std::to_string(h);
        p.q_weights.push_back(tape.add(prefix + ".q" + hs, uniform_init(rng, {c, d}, c)));
        p.k_weights.push_back(tape.add(prefix + ".k" + hs, uniform_init(rng, {c, d}, c)));
        p.v_weights.push_back(tape.add(prefix + ".v" + hs, uniform_init(rng, {c, d}, c)));
    }
    p.ffn_w1 = tape.add(prefix + ".ffn_w1", uniform_init(rng, {c, c}, c));
    p.ffn_w2 = tape.add(prefix + ".ffn_w2", uniform_init(rng, {c, c}, c));
    p.norm1_gain = tape.add(prefix + ".norm1_gain", Tensor::full({c}, 1.0));
    p.norm1_bias = tape.add(prefix + ".norm1_bias", Tensor::zeros({c}));
    p.norm2_gain = tape.add(prefix + ".norm2_gain", Tensor::full({c}, 1.0));
    p.norm2_bias = tape.add(prefix + ".norm2_bias", Tensor::zeros({c}));
    return p;
}

Var multi_head_self_attention(const Var& tokens, const SelfViewBlockParams& params,
                              const HeadConfig& cfg, std::vector<Tensor>* attention_maps) {
    check_block("multi_head_self_attention", tokens, params, cfg);
    std::size_t d = cfg.head_dim();
    double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    if (attention_maps) attention_maps->clear();

    std::vector<Var> heads;
    heads.reserve(cfg.num_heads);
    for (std::size_t h = 0; h < cfg.num_heads; ++h) {
        Var q = matmul(tokens, params.q_weights[h]); // [L, d]
        Var k = matmul(tokens, params.k_weights[h]);
        Var v = matmul(tokens, params.v_weights[h]);
        Var att = softmax(scalar_mul(matmul(q, transpose(k)), inv_sqrt_d), 1); // [L, L]
        if (attention_maps) attention_maps->push_back(att.value());
        heads.push_back(matmul(att, v)); // [L, d]
    }
    return concat_cols(heads); // [L, C]
}

Var selfview_block(const Var& tokens, const SelfViewBlockParams& params, const HeadConfig& cfg,
                   const std::optional<Var>& pe, bool literal_ffn) {
    check_block("selfview_block", tokens, params, cfg);
    Var x = tokens;
    if (pe) {
        if (!pe->value().same_shape(tokens.value())) {
            throw DimensionError("selfview_block: positional table " +
                                 pe->value().shape_string() + " does not match tokens " +
                                 tokens.value().shape_string());
        }
        x = add(x, *pe);
    }
    Var att = multi_head_self_attention(x, params, cfg);
    x = layer_norm(add(x, att), params.norm1_gain, params.norm1_bias, kLayerNormEps);
    Var ffn = matmul(relu(matmul(x, params.ffn_w1)), params.ffn_w2);
    if (literal_ffn) return ffn;
    return layer_norm(add(x, ffn), params.norm2_gain, params.norm2_bias, kLayerNormEps);
}

Var selfview_stack(const Var& tokens, const std::vector<SelfViewBlockParams>& blocks,
                   const HeadConfig& cfg, const std::optional<Var>& pe, bool literal_ffn) {
    if (blocks.empty()) throw ConfigError("selfview_stack: needs at least one block");
    Var x = selfview_block(tokens, blocks[0], cfg, pe, literal_ffn);
    for (std::size_t b = 1; b < blocks.size(); ++b)
        x = selfview_block(x, blocks[b], cfg, std::nullopt, literal_ffn);
    return x;
}

} // namespace tmt
