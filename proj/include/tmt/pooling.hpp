#pragma once

#include "tmt/autograd.hpp"
#include "tmt/tensor.hpp"

namespace tmt {

// Attention pooling collapses one axis of a [T, HW, C] feature cube by
// scoring the slices along it against each other. Per independent group
// (a spatial location for temporal pooling, a frame for spatial pooling):
//   F = X * W          project each token
//   M = F * F^T        pairwise affinity
//   a = softmax(rowsum of M)
//   Xhat = rows of X scaled by a
//   g = sum of Xhat rows     (literal_summand: sum of the raw X rows instead)
//
// literal_summand reproduces the un-attended sum; it is off by default
// because that form never consumes the attention it just computed.

// Inspection copies of the stage outputs, stacked over groups.
struct PoolingIntermediates {
    Tensor projected;        // [groups, len, C]
    Tensor attention_matrix; // [groups, len, len]
    Tensor attention_vector; // [groups, len]
    Tensor attentive;        // [groups, len, C]
};

// cube [T, HW, C] -> one pooled token per location, [HW, C]
Var temporal_sa_pool(const Var& cube, const Var& projection,
                     PoolingIntermediates* inter = nullptr, bool literal_summand = false);

// cube [T, HW, C] -> one pooled token per frame, [T, C]
Var spatial_sa_pool(const Var& cube, const Var& projection,
                    PoolingIntermediates* inter = nullptr, bool literal_summand = false);

// The three token sets one tracklet contributes downstream.
struct ViewFeatureSet {
    Var spatial;        // [HW, C]
    Var temporal;       // [T, C]
    Var spatiotemporal; // [T*HW, C]
};

// Pools cube_s over time and cube_t over space; cube_st is flattened as-is.
// All cubes must share [T, HW, C].
ViewFeatureSet make_view_features(const Var& cube_s, const Var& cube_t, const Var& cube_st,
                                  const Var& proj_s, const Var& proj_t,
                                  bool literal_summand = false);

} // namespace tmt
