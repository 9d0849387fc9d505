#pragma once

#include <string>
#include <vector>

#include "tmt/autograd.hpp"
#include "tmt/pooling.hpp"
#include "tmt/rng.hpp"
#include "tmt/selfview.hpp"

namespace tmt {

// Cross-attention fusion: each view queries the other two views' keys and
// values, adds both results into its residual stream, then runs its own
// (domain-wise) FFN. View order throughout: spatial, temporal, spatiotemporal.

// projections one target view applies to one source view
struct CrossPairParams {
    std::vector<Var> q_weights, k_weights, v_weights; // per head, [C x d]
};

struct CrossViewTargetParams {
    CrossPairParams from[2]; // the other two views, in ascending view order
    Var ffn_w3, ffn_w4;      // [C x C]
    Var norm1_gain, norm1_bias, norm2_gain, norm2_bias;
};

struct CrossViewBlockParams {
    CrossViewTargetParams targets[3]; // spatial, temporal, spatiotemporal
};

// share_kv_across_targets reuses one K/V stack per SOURCE view instead of
// one per (target, source) pair; queries always stay per-pair.
CrossViewBlockParams make_crossview_block_params(ParamTape& tape, const std::string& prefix,
                                                 const HeadConfig& cfg, Rng& rng,
                                                 bool share_kv_across_targets = false);

// target [Lt x C] queries source [Ls x C]; output keeps the target's token
// count. attention_maps (optional) gets one row-stochastic [Lt x Ls] per head.
Var cross_attention(const Var& target_tokens, const Var& source_tokens,
                    const std::vector<Var>& q_weights, const std::vector<Var>& k_weights,
                    const std::vector<Var>& v_weights, const HeadConfig& cfg,
                    std::vector<Tensor>* attention_maps = nullptr);

// All three updates read the same input snapshot. literal_ffn drops the
// residual + norm around the FFN.
ViewFeatureSet crossview_block(const ViewFeatureSet& views, const CrossViewBlockParams& params,
                               const HeadConfig& cfg, bool literal_ffn = false);

ViewFeatureSet crossview_stack(const ViewFeatureSet& views,
                               const std::vector<CrossViewBlockParams>& blocks,
                               const HeadConfig& cfg, bool literal_ffn = false);

} // namespace tmt
