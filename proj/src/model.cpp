#include "tmt/model.hpp"

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "tmt/errors.hpp"
#include "tmt/ops.hpp"

namespace tmt {

namespace {

Tensor uniform_init(Rng& rng, std::vector<std::size_t> shape, std::size_t fan_in) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor t = Tensor::zeros(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

constexpr const char* kViewName[3] = {"s", "t", "st"};

std::string join(const std::vector<std::string>& parts) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += "; ";
        out += parts[i];
    }
    return out;
}

} // namespace

void ModelConfig::validate() const {
    std::vector<std::string> bad;
    if (channels == 0) bad.push_back("channels must be positive");
    if (num_heads == 0) bad.push_back("num_heads must be positive");
    if (channels && num_heads && channels % num_heads != 0)
        bad.push_back("channels " + std::to_string(channels) + " not divisible by num_heads " +
                      std::to_string(num_heads));
    if (clip_len == 0) bad.push_back("clip_len must be positive");
    if (feature_h == 0 || feature_w == 0) bad.push_back("feature grid must be positive");
    if (pipeline != Pipeline::avgpool && depth_selfview == 0)
        bad.push_back("depth_selfview must be positive outside the avgpool baseline");
    if (pipeline == Pipeline::full && depth_crossview == 0)
        bad.push_back("depth_crossview must be positive for the full pipeline");
    if (enabled_views() == 0) bad.push_back("at least one view must be enabled");
    if (pipeline == Pipeline::full && enabled_views() != 3)
        bad.push_back("the full pipeline fuses all three views; use the selfview_only "
                      "pipeline to ablate views");
    if (stub_extractor && (feature_h != image_h() / 4 || feature_w != image_w() / 4))
        bad.push_back("feature grid must be a quarter of the image with the stub extractor");
    if (!bad.empty()) throw ConfigError("invalid model config: " + join(bad));
}

void TrainConfig::validate() const {
    std::vector<std::string> bad;
    // epochs == 0 is allowed on purpose: it means "write the initialization"
    if (lr <= 0) bad.push_back("lr must be positive");
    if (lr_decay_factor <= 1.0) bad.push_back("lr_decay_factor must exceed 1");
    if (lr_decay_period == 0) bad.push_back("lr_decay_period must be positive");
    if (weight_decay < 0) bad.push_back("weight_decay must be nonnegative");
    if (momentum < 0 || momentum >= 1) bad.push_back("momentum must lie in [0, 1)");
    if (batch_size < 2) bad.push_back("batch_size must be at least 2");
    if (oim_gamma <= 0 || oim_gamma >= 1) bad.push_back("oim_gamma must lie in (0, 1)");
    if (oim_temperature <= 0) bad.push_back("oim_temperature must be positive");
    if (!bad.empty()) throw ConfigError("invalid train config: " + join(bad));
}

double TrainConfig::lr_at_epoch(std::size_t epoch) const {
    return lr / std::pow(lr_decay_factor, static_cast<double>(epoch / lr_decay_period));
}

OimState make_oim_state(std::size_t num_identities, std::size_t dim, double gamma,
                        double temperature) {
    if (num_identities == 0 || dim == 0)
        throw ConfigError("oim table needs positive identity count and feature dim");
    if (gamma <= 0 || gamma >= 1) throw ConfigError("oim gamma must lie in (0, 1)");
    if (temperature <= 0) throw ConfigError("oim temperature must be positive");
    OimState s;
    s.lookup = Tensor::zeros({num_identities, dim});
    s.gamma = gamma;
    s.temperature = temperature;
    return s;
}

Var oim_loss(const Var& feature, std::size_t label, OimState& state, bool update_table) {
    if (state.lookup.shape().size() != 2)
        throw ContractError("oim table not initialized");
    if (feature.shape().size() != 1)
        throw DimensionError("oim feature must be 1-d, got " + shape_str(feature.shape()));
    const std::size_t n = state.lookup.shape()[0];
    const std::size_t d = state.lookup.shape()[1];
    if (feature.shape()[0] != d)
        throw DimensionError("oim feature dim " + std::to_string(feature.shape()[0]) +
                             " vs lookup dim " + std::to_string(d));
    if (label >= n)
        throw ContractError("oim label " + std::to_string(label) + " out of range for " +
                            std::to_string(n) + " identities");
    if (!feature.value().all_finite()) throw NumericError("oim feature is not finite");

    Var fhat = l2_normalize(feature);
    Var table(state.lookup, false); // gradient never reaches the prototypes
    Var logits = reshape(matmul(table, reshape(fhat, {d, 1})), {n});
    Var loss = cross_entropy_with_logits(scalar_mul(logits, 1.0 / state.temperature), label);

    if (update_table) {
        const Tensor& f = fhat.value();
        std::vector<double> row(d);
        double norm2 = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            row[i] = state.gamma * state.lookup.at(label, i) + (1.0 - state.gamma) * f[i];
            norm2 += row[i] * row[i];
        }
        if (norm2 <= 0.0) throw NumericError("oim prototype update collapsed to zero");
        double inv = 1.0 / std::sqrt(norm2);
        for (std::size_t i = 0; i < d; ++i) state.lookup.at(label, i) = row[i] * inv;
    }
    return loss;
}

Var verification_loss(const Var& desc_a, const Var& desc_b, bool same, const Var& w,
                      const Var& b) {
    Var z = add(mul(w, cosine_similarity(desc_a, desc_b)), b);
    // -log sigmoid(z) and -log(1 - sigmoid(z)) via softplus, safe at any z
    return same ? softplus(neg(z)) : softplus(z);
}

void TmtModel::init_oim(std::size_t num_identities, double gamma, double temperature) {
    const std::size_t c = cfg.channels;
    if (cfg.use_spatial) oim_spatial = make_oim_state(num_identities, c, gamma, temperature);
    if (cfg.use_temporal) oim_temporal = make_oim_state(num_identities, c, gamma, temperature);
    if (cfg.use_st) oim_st = make_oim_state(num_identities, c, gamma, temperature);
    oim_concat = make_oim_state(num_identities, cfg.enabled_views() * c, gamma, temperature);
    if (cfg.stub_extractor)
        for (int v = 0; v < 3; ++v) oim_branch[v] = make_oim_state(num_identities, c, gamma, temperature);
    oim_framewise = make_oim_state(num_identities, c, gamma, temperature);
}

TmtModel build_model(const ModelConfig& cfg, std::uint64_t seed) {
    ModelConfig c = cfg;
    if (c.stub_extractor) {
        c.feature_h = c.image_h() / 4;
        c.feature_w = c.image_w() / 4;
    }
    c.validate();

    TmtModel m;
    m.cfg = c;
    Rng rng(seed);
    HeadConfig hc = c.head_cfg();
    const std::size_t ch = c.channels;

    if (c.stub_extractor) {
        StubExtractorParams ex;
        ex.stem1_kernel = m.tape.add("extractor.stem1.kernel", uniform_init(rng, {3, 3, 3, 8}, 27));
        ex.stem1_bias = m.tape.add("extractor.stem1.bias", uniform_init(rng, {8}, 27));
        ex.stem2_kernel = m.tape.add("extractor.stem2.kernel", uniform_init(rng, {3, 3, 8, 16}, 72));
        ex.stem2_bias = m.tape.add("extractor.stem2.bias", uniform_init(rng, {16}, 72));
        for (int v = 0; v < 3; ++v) {
            std::string base = std::string("extractor.branch_") + kViewName[v];
            ex.branch_kernel[v] = m.tape.add(base + ".kernel", uniform_init(rng, {3, 3, 16, ch}, 144));
            ex.branch_bias[v] = m.tape.add(base + ".bias", uniform_init(rng, {ch}, 144));
        }
        m.extractor = ex;
    }

    const bool attend = c.pipeline != Pipeline::avgpool;
    if (attend) {
        m.pool_proj_s = m.tape.add("pool.proj_s", uniform_init(rng, {ch, ch}, ch));
        m.pool_proj_t = m.tape.add("pool.proj_t", uniform_init(rng, {ch, ch}, ch));
        auto stack = [&](const char* view, std::vector<SelfViewBlockParams>& out) {
            for (std::size_t i = 0; i < c.depth_selfview; ++i)
                out.push_back(make_selfview_block_params(
                    m.tape, std::string("selfview.") + view + "." + std::to_string(i), hc, rng));
        };
        if (c.use_spatial) stack("s", m.selfview_s);
        if (c.use_temporal) stack("t", m.selfview_t);
        if (c.use_st) stack("st", m.selfview_st);
        if (c.use_pe) {
            if (c.use_spatial) m.pe_s = m.tape.add("pe.s", Tensor::zeros({c.feature_hw(), ch}));
            if (c.use_temporal) m.pe_t = m.tape.add("pe.t", Tensor::zeros({c.clip_len, ch}));
            if (c.use_st)
                m.pe_st = m.tape.add("pe.st", Tensor::zeros({c.clip_len * c.feature_hw(), ch}));
        }
        if (c.pipeline == Pipeline::full)
            for (std::size_t i = 0; i < c.depth_crossview; ++i)
                m.crossview.push_back(make_crossview_block_params(
                    m.tape, "crossview." + std::to_string(i), hc, rng,
                    c.share_kv_across_targets));
    }
    m.verif_w = m.tape.add("verif.w", Tensor::full({1}, 1.0));
    m.verif_b = m.tape.add("verif.b", Tensor::zeros({1}));
    return m;
}

BranchCubes extract_cubes(const TmtModel& model, const std::vector<Tensor>& frames) {
    if (!model.extractor) throw ContractError("model was built without the stub extractor");
    const ModelConfig& c = model.cfg;
    if (frames.size() != c.clip_len)
        throw DimensionError("clip has " + std::to_string(frames.size()) + " frames, expected " +
                             std::to_string(c.clip_len));
    const StubExtractorParams& ex = *model.extractor;
    const std::vector<std::size_t> want{c.image_h(), c.image_w(), 3};
    std::vector<Var> rows[3];
    for (const Tensor& fr : frames) {
        if (fr.shape() != want)
            throw DimensionError("frame shape " + shape_str(fr.shape()) + ", expected " +
                                 shape_str(want));
        Var x(fr, false);
        Var h = relu(conv2d(x, ex.stem1_kernel, ex.stem1_bias, 2, 1));
        h = relu(conv2d(h, ex.stem2_kernel, ex.stem2_bias, 2, 1));
        for (int v = 0; v < 3; ++v) {
            Var f = relu(conv2d(h, ex.branch_kernel[v], ex.branch_bias[v], 1, 1));
            rows[v].push_back(reshape(f, {c.feature_hw(), c.channels}));
        }
    }
    return {stack0(rows[0]), stack0(rows[1]), stack0(rows[2])};
}

ForwardResult trigeminal_forward(const TmtModel& model, const Tracklet& clip) {
    const ModelConfig& c = model.cfg;
    if (clip.has_cubes && !clip.frames.empty())
        throw ContractError("tracklet carries both frames and cubes; exactly one path is allowed");

    ForwardResult r;
    if (clip.has_cubes) {
        const std::vector<std::size_t> want{c.clip_len, c.feature_hw(), c.channels};
        const Tensor* cubes[3] = {&clip.cube_s, &clip.cube_t, &clip.cube_st};
        for (int v = 0; v < 3; ++v)
            if (cubes[v]->shape() != want)
                throw DimensionError(std::string("cube ") + kViewName[v] + " shape " +
                                     shape_str(cubes[v]->shape()) + ", expected " +
                                     shape_str(want));
        r.cubes = {Var(clip.cube_s), Var(clip.cube_t), Var(clip.cube_st)};
    } else {
        if (clip.frames.empty()) throw ContractError("tracklet carries neither frames nor cubes");
        r.cubes = extract_cubes(model, clip.frames);
    }

    std::vector<Var> parts;
    if (c.pipeline == Pipeline::avgpool) {
        auto cube_mean = [](const Var& cube) { return mean_axis(mean_axis(cube, 0), 0); };
        if (c.use_spatial) parts.push_back(r.descriptor.spatial = cube_mean(r.cubes.spatial));
        if (c.use_temporal) parts.push_back(r.descriptor.temporal = cube_mean(r.cubes.temporal));
        if (c.use_st)
            parts.push_back(r.descriptor.spatiotemporal = cube_mean(r.cubes.spatiotemporal));
    } else {
        r.pooled = make_view_features(r.cubes.spatial, r.cubes.temporal, r.cubes.spatiotemporal,
                                      model.pool_proj_s, model.pool_proj_t, c.literal_eq5);
        HeadConfig hc = c.head_cfg();
        auto pe = [&](const Var& table) -> std::optional<Var> {
            if (c.use_pe) return table;
            return std::nullopt;
        };
        if (c.use_spatial)
            r.refined.spatial =
                selfview_stack(r.pooled.spatial, model.selfview_s, hc, pe(model.pe_s), c.literal_eq8);
        if (c.use_temporal)
            r.refined.temporal = selfview_stack(r.pooled.temporal, model.selfview_t, hc,
                                                pe(model.pe_t), c.literal_eq8);
        if (c.use_st)
            r.refined.spatiotemporal = selfview_stack(r.pooled.spatiotemporal, model.selfview_st,
                                                      hc, pe(model.pe_st), c.literal_eq8);
        r.fused = r.refined;
        if (c.pipeline == Pipeline::full)
            r.fused = crossview_stack(r.refined, model.crossview, hc, c.literal_eq12);
        if (c.use_spatial) parts.push_back(r.descriptor.spatial = mean_axis(r.fused.spatial, 0));
        if (c.use_temporal) parts.push_back(r.descriptor.temporal = mean_axis(r.fused.temporal, 0));
        if (c.use_st)
            parts.push_back(r.descriptor.spatiotemporal = mean_axis(r.fused.spatiotemporal, 0));
    }
    r.descriptor.concatenated = parts.size() == 1 ? parts[0] : concat_vec(parts);
    return r;
}

void sgd_step(ParamTape& tape, SgdState& state, double lr, double momentum,
              double weight_decay) {
    if (state.velocity.empty()) {
        state.velocity.reserve(tape.size());
        for (std::size_t i = 0; i < tape.size(); ++i)
            state.velocity.push_back(Tensor::zeros(tape.param(i).shape()));
    }
    if (state.velocity.size() != tape.size())
        throw ContractError("optimizer state does not match the parameter tape");
    for (std::size_t i = 0; i < tape.size(); ++i) {
        Var p = tape.param(i);
        Tensor& theta = p.node_->value;
        const Tensor& grad = p.grad();
        Tensor& v = state.velocity[i];
        for (std::size_t j = 0; j < theta.numel(); ++j) {
            double g = grad[j] + weight_decay * theta[j];
            v[j] = momentum * v[j] + g;
            theta[j] -= lr * (g + momentum * v[j]);
        }
    }
}

TrainStepStats train_step(TmtModel& model, const TrainBatch& batch, const TrainConfig& tc,
                          SgdState& sgd, double lr) {
    if (batch.clips.empty()) throw ContractError("empty training batch");
    if (batch.clips.size() != batch.labels.size())
        throw ContractError("batch labels do not line up with clips");

    model.tape.zero_grad();
    const ModelConfig& c = model.cfg;
    std::vector<ForwardResult> fw;
    fw.reserve(batch.clips.size());

    Var oim_sum, branch_sum;
    std::size_t branch_terms = 0;
    auto accumulate = [](Var& acc, const Var& term) {
        acc = acc.defined() ? add(acc, term) : term;
    };
    for (std::size_t i = 0; i < batch.clips.size(); ++i) {
        fw.push_back(trigeminal_forward(model, batch.clips[i]));
        const ForwardResult& r = fw.back();
        const std::size_t y = batch.labels[i];
        if (c.use_spatial) accumulate(oim_sum, oim_loss(r.descriptor.spatial, y, model.oim_spatial));
        if (c.use_temporal)
            accumulate(oim_sum, oim_loss(r.descriptor.temporal, y, model.oim_temporal));
        if (c.use_st)
            accumulate(oim_sum, oim_loss(r.descriptor.spatiotemporal, y, model.oim_st));
        accumulate(oim_sum, oim_loss(r.descriptor.concatenated, y, model.oim_concat));
        if (tc.framewise_oim && c.pipeline != Pipeline::avgpool && c.use_temporal) {
            const Var& tokens = r.refined.temporal;
            for (std::size_t t = 0; t < tokens.shape()[0]; ++t)
                accumulate(oim_sum, scalar_mul(oim_loss(select(tokens, 0, t), y,
                                                        model.oim_framewise),
                                               1.0 / static_cast<double>(tokens.shape()[0])));
        }
        if (c.stub_extractor && !batch.clips[i].has_cubes) {
            const Var* cubes[3] = {&r.cubes.spatial, &r.cubes.temporal, &r.cubes.spatiotemporal};
            for (int v = 0; v < 3; ++v) {
                Var pooled = mean_axis(mean_axis(*cubes[v], 0), 0);
                accumulate(branch_sum, oim_loss(pooled, y, model.oim_branch[v]));
                ++branch_terms;
            }
        }
    }

    const double inv_clips = 1.0 / static_cast<double>(batch.clips.size());
    Var total = scalar_mul(oim_sum, inv_clips);
    TrainStepStats stats;
    stats.oim = total.value()[0];

    if (branch_terms) {
        Var branch_mean = scalar_mul(branch_sum, inv_clips);
        stats.branch = branch_mean.value()[0];
        total = add(total, branch_mean);
    }

    if (!batch.pairs.empty()) {
        Var verif_sum;
        for (const TrainBatch::Pair& p : batch.pairs) {
            if (p.a >= fw.size() || p.b >= fw.size())
                throw ContractError("verification pair index out of range");
            accumulate(verif_sum,
                       verification_loss(fw[p.a].descriptor.concatenated,
                                         fw[p.b].descriptor.concatenated, p.same, model.verif_w,
                                         model.verif_b));
        }
        Var verif_mean = scalar_mul(verif_sum, 1.0 / static_cast<double>(batch.pairs.size()));
        stats.verification = verif_mean.value()[0];
        total = add(total, verif_mean);
    }

    stats.total = total.value()[0];
    if (!std::isfinite(stats.total)) {
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "non-finite training loss %.17g (oim %.17g, verification %.17g, branch %.17g)",
                      stats.total, stats.oim, stats.verification, stats.branch);
        throw NumericError(buf);
    }
    backward(total);
    for (std::size_t i = 0; i < model.tape.size(); ++i)
        if (!model.tape.param(i).grad().all_finite())
            throw NumericError("non-finite gradient in parameter " + model.tape.name(i));
    sgd_step(model.tape, sgd, lr, tc.momentum, tc.weight_decay);
    return stats;
}

} // namespace tmt
