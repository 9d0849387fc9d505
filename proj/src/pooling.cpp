#include "tmt/pooling.hpp"

#include <algorithm>

#include "tmt/errors.hpp"
#include "tmt/ops.hpp"

namespace tmt {

namespace {

void check_cube(const char* op, const Var& cube, const Var& projection) {
    if (cube.value().rank() != 3) {
        throw DimensionError(std::string(op) + ": expected cube [T x HW x C], got " +
                             cube.value().shape_string());
    }
    std::size_t c = cube.shape()[2];
    if (projection.value().rank() != 2 || projection.shape()[0] != c ||
        projection.shape()[1] != c) {
        throw DimensionError(std::string(op) + ": projection " +
                             projection.value().shape_string() + " must be square in C for cube " +
                             cube.value().shape_string());
    }
}

// One pooled token per group. group_axis 1 groups by location (pool over
// frames); group_axis 0 groups by frame (pool over locations).
Var pool_groups(const Var& cube, const Var& projection, std::size_t group_axis,
                PoolingIntermediates* inter, bool literal_summand) {
    std::size_t groups = cube.shape()[group_axis];
    std::size_t len = cube.shape()[group_axis == 0 ? 1 : 0];
    std::size_t c = cube.shape()[2];

    if (inter) {
        inter->projected = Tensor({groups, len, c});
        inter->attention_matrix = Tensor({groups, len, len});
        inter->attention_vector = Tensor({groups, len});
        inter->attentive = Tensor({groups, len, c});
    }

    std::vector<Var> pooled;
    pooled.reserve(groups);
    for (std::size_t gi = 0; gi < groups; ++gi) {
        Var x = select(cube, group_axis, gi);            // [len, C]
        Var f = matmul(x, projection);                   // [len, C]
        Var m = matmul(f, transpose(f));                 // [len, len]
        Var a = softmax(sum_axis(m, 1), 0);              // [len]
        Var xhat = scale_rows(x, a);                     // [len, C]
        Var g = sum_axis(literal_summand ? x : xhat, 0); // [C]
        pooled.push_back(g);

        if (inter) {
            std::copy_n(f.value().data(), len * c, inter->projected.data() + gi * len * c);
            std::copy_n(m.value().data(), len * len,
                        inter->attention_matrix.data() + gi * len * len);
            std::copy_n(a.value().data(), len, inter->attention_vector.data() + gi * len);
            std::copy_n(xhat.value().data(), len * c, inter->attentive.data() + gi * len * c);
        }
    }
    return stack0(pooled); // [groups, C]
}

} // namespace

Var temporal_sa_pool(const Var& cube, const Var& projection, PoolingIntermediates* inter,
                     bool literal_summand) {
    check_cube("temporal_sa_pool", cube, projection);
    return pool_groups(cube, projection, 1, inter, literal_summand);
}

Var spatial_sa_pool(const Var& cube, const Var& projection, PoolingIntermediates* inter,
                    bool literal_summand) {
    check_cube("spatial_sa_pool", cube, projection);
    return pool_groups(cube, projection, 0, inter, literal_summand);
}

ViewFeatureSet make_view_features(const Var& cube_s, const Var& cube_t, const Var& cube_st,
                                  const Var& proj_s, const Var& proj_t, bool literal_summand) {
    if (cube_s.value().rank() != 3 || !cube_s.value().same_shape(cube_t.value()) ||
        !cube_s.value().same_shape(cube_st.value())) {
        throw DimensionError("make_view_features: cubes must share [T x HW x C], got " +
                             cube_s.value().shape_string() + ", " + cube_t.value().shape_string() +
                             ", " + cube_st.value().shape_string());
    }
    std::size_t t = cube_st.shape()[0], hw = cube_st.shape()[1], c = cube_st.shape()[2];
    ViewFeatureSet out;
    out.spatial = temporal_sa_pool(cube_s, proj_s, nullptr, literal_summand);
    out.temporal = spatial_sa_pool(cube_t, proj_t, nullptr, literal_summand);
    out.spatiotemporal = reshape(cube_st, {t * hw, c});
    return out;
}

} // namespace tmt
