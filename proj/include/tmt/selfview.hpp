#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tmt/autograd.hpp"
#include "tmt/rng.hpp"
#include "tmt/tensor.hpp"

namespace tmt {

inline constexpr double kLayerNormEps = 1e-5;

struct HeadConfig {
    std::size_t num_heads = 1;
    std::size_t channels = 1;
    // throws ConfigError unless channels divides evenly
    std::size_t head_dim() const;
};

// One transformer block over a single view's tokens: multi-head attention
// (heads concatenated, no output projection), then a two-layer relu FFN,
// each wrapped residual + layer_norm. literal_ffn drops the residual and
// norm around the FFN.
struct SelfViewBlockParams {
    std::vector<Var> q_weights, k_weights, v_weights; // per head, [C x d]
    Var ffn_w1, ffn_w2;                               // [C x C]
    Var norm1_gain, norm1_bias, norm2_gain, norm2_bias;
};

// Registers a block's parameters on the tape under prefix. Attention and FFN
// weights start uniform in [-1/sqrt(C), 1/sqrt(C)]; norms start at identity.
SelfViewBlockParams make_selfview_block_params(ParamTape& tape, const std::string& prefix,
                                               const HeadConfig& cfg, Rng& rng);

// tokens [L x C] -> [L x C]; attention_maps (optional) receives one [L x L]
// row-stochastic matrix per head.
Var multi_head_self_attention(const Var& tokens, const SelfViewBlockParams& params,
                              const HeadConfig& cfg,
                              std::vector<Tensor>* attention_maps = nullptr);

// pe, when present, must match tokens' shape and is added before attention.
Var selfview_block(const Var& tokens, const SelfViewBlockParams& params, const HeadConfig& cfg,
                   const std::optional<Var>& pe = std::nullopt, bool literal_ffn = false);

// Blocks applied in order; pe is added only before the first.
Var selfview_stack(const Var& tokens, const std::vector<SelfViewBlockParams>& blocks,
                   const HeadConfig& cfg, const std::optional<Var>& pe = std::nullopt,
                   bool literal_ffn = false);

} // namespace tmt
