#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tmt/autograd.hpp"
#include "tmt/crossview.hpp"
#include "tmt/data.hpp"
#include "tmt/pooling.hpp"
#include "tmt/rng.hpp"
#include "tmt/selfview.hpp"

namespace tmt {

// Which stages of the pipeline run. avgpool is the no-attention baseline:
// each view vector is the plain mean over its cube's tokens.
enum class Pipeline { full, selfview_only, avgpool };

struct ModelConfig {
    std::size_t channels = 64;   // C
    std::size_t num_heads = 2;   // N_h
    std::size_t depth_selfview = 2;
    std::size_t depth_crossview = 2;
    std::size_t clip_len = 8; // T
    bool use_pe = true;
    bool literal_eq5 = false;
    bool literal_eq8 = false;
    bool literal_eq12 = false;
    bool share_kv_across_targets = false;
    Pipeline pipeline = Pipeline::full;
    bool use_spatial = true, use_temporal = true, use_st = true;

    // stub-extractor geometry; features come out at a quarter of the image
    bool stub_extractor = true;
    bool hi_res = false; // 64x32 inputs -> 16x8 features
    std::size_t image_h() const { return hi_res ? 64 : 32; }
    std::size_t image_w() const { return hi_res ? 32 : 16; }
    // token grid (set explicitly for the ingest path)
    std::size_t feature_h = 8, feature_w = 4;

    std::size_t feature_hw() const { return feature_h * feature_w; }
    HeadConfig head_cfg() const { return HeadConfig{num_heads, channels}; }
    std::size_t enabled_views() const {
        return (use_spatial ? 1u : 0u) + (use_temporal ? 1u : 0u) + (use_st ? 1u : 0u);
    }
    void validate() const; // ConfigError listing every violation
};

// shared 2-conv stem (stride 2 each) + three branch convs producing C channels
struct StubExtractorParams {
    Var stem1_kernel, stem1_bias; // 3x3, 3 -> 8
    Var stem2_kernel, stem2_bias; // 3x3, 8 -> 16
    Var branch_kernel[3], branch_bias[3]; // 3x3, 16 -> C, one per view branch
};

struct OimState {
    Tensor lookup; // [num_identities x D], rows unit-norm once touched
    double gamma = 0.5;
    double temperature = 1.0 / 30.0;
};

OimState make_oim_state(std::size_t num_identities, std::size_t dim, double gamma = 0.5,
                        double temperature = 1.0 / 30.0);

// normalized feature vs the lookup table; the momentum row update is applied
// to values only and never differentiated through
Var oim_loss(const Var& feature, std::size_t label, OimState& state, bool update_table = true);

Var verification_loss(const Var& desc_a, const Var& desc_b, bool same, const Var& w,
                      const Var& b);

struct Descriptor {
    Var spatial, temporal, spatiotemporal; // [C] each, only enabled views defined
    Var concatenated;                      // enabled views in fixed order
};

struct TmtModel {
    ModelConfig cfg;
    ParamTape tape;
    std::optional<StubExtractorParams> extractor;
    Var pool_proj_s, pool_proj_t;
    std::vector<SelfViewBlockParams> selfview_s, selfview_t, selfview_st;
    Var pe_s, pe_t, pe_st;
    std::vector<CrossViewBlockParams> crossview;
    Var verif_w, verif_b;

    // supervised heads; sized lazily by the trainer via init_oim
    OimState oim_spatial, oim_temporal, oim_st, oim_concat;
    OimState oim_branch[3];
    OimState oim_framewise;

    void init_oim(std::size_t num_identities, double gamma, double temperature);
};

TmtModel build_model(const ModelConfig& cfg, std::uint64_t seed);

// three same-shape cubes [T, HW, C], one per branch
struct BranchCubes {
    Var spatial, temporal, spatiotemporal;
};

// clip frames [H, W, 3] -> branch cubes via the stub extractor
BranchCubes extract_cubes(const TmtModel& model, const std::vector<Tensor>& frames);

struct ForwardResult {
    BranchCubes cubes;      // extractor output or ingested cubes
    ViewFeatureSet pooled;  // after attention pooling (undefined for avgpool)
    ViewFeatureSet refined; // after the per-view transformer stacks
    ViewFeatureSet fused;   // final token sets (== refined without cross-view)
    Descriptor descriptor;
};

// Runs whichever path the tracklet carries. The tracklet must already be a
// sampled clip of exactly cfg.clip_len frames.
ForwardResult trigeminal_forward(const TmtModel& model, const Tracklet& clip);

struct TrainConfig {
    std::size_t epochs = 50;
    double lr = 1e-3;
    double lr_decay_factor = 10.0;
    std::size_t lr_decay_period = 15; // epochs between decays
    double weight_decay = 5e-4;
    double momentum = 0.9;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
    double oim_gamma = 0.5;
    double oim_temperature = 1.0 / 30.0;
    bool framewise_oim = false;
    std::size_t max_steps = 0; // 0 = unlimited; caps total optimizer steps

    void validate() const;
    double lr_at_epoch(std::size_t epoch) const;
};

// Nesterov momentum with weight decay folded into the gradient, matching the
// common deep-learning formulation:
//   g = grad + wd * theta;  v = mu * v + g;  theta -= lr * (g + mu * v)
struct SgdState {
    std::vector<Tensor> velocity; // parallel to the tape
};

void sgd_step(ParamTape& tape, SgdState& state, double lr, double momentum,
              double weight_decay);

// one labeled clip plus the index pairs used for verification
struct TrainBatch {
    std::vector<Tracklet> clips;             // sampled clips, identity labels set
    std::vector<std::size_t> labels;         // contiguous identity indices
    struct Pair {
        std::size_t a, b;
        bool same;
    };
    std::vector<Pair> pairs;
};

struct TrainStepStats {
    double total = 0.0;
    double oim = 0.0;
    double verification = 0.0;
    double branch = 0.0;
};

// forward + losses + backward + SGD update; throws NumericError with a
// diagnostic when the loss leaves the reals
TrainStepStats train_step(TmtModel& model, const TrainBatch& batch, const TrainConfig& tc,
                          SgdState& sgd, double lr);

} // namespace tmt
