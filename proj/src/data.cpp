#include "tmt/data.hpp"

#include <algorithm>

#include "tmt/errors.hpp"

namespace tmt {

void SynthSpec::validate() const {
    if (num_identities == 0 || tracklets_per_id == 0 || frames_per_tracklet == 0 ||
        image_h == 0 || image_w == 0) {
        throw ConfigError("synth spec: all counts and image extents must be positive");
    }
    if (noise_std < 0.0) throw ConfigError("synth spec: noise_std must be >= 0");
}

std::vector<Tracklet> synth_generate(const SynthSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    std::vector<Tracklet> out;
    out.reserve(spec.num_identities * spec.tracklets_per_id);

    for (std::size_t id = 0; id < spec.num_identities; ++id) {
        Tensor tmpl({spec.image_h, spec.image_w, 3});
        for (std::size_t i = 0; i < tmpl.numel(); ++i) tmpl[i] = rng.uniform();

        for (std::size_t tk = 0; tk < spec.tracklets_per_id; ++tk) {
            Tracklet tr;
            tr.identity = static_cast<int>(id);
            tr.camera = static_cast<int>(tk % 2);
            double brightness = spec.noise_std * rng.uniform(-1.0, 1.0);
            for (std::size_t f = 0; f < spec.frames_per_tracklet; ++f) {
                Tensor img({spec.image_h, spec.image_w, 3});
                for (std::size_t i = 0; i < img.numel(); ++i) {
                    double v = tmpl[i] + brightness + rng.normal(0.0, 1.0) * spec.noise_std;
                    img[i] = std::clamp(v, 0.0, 1.0);
                }
                tr.frames.push_back(std::move(img));
            }
            out.push_back(std::move(tr));
        }
    }
    return out;
}

std::vector<std::size_t> rrs_indices(std::size_t t_total, std::size_t t, bool train, Rng& rng) {
    if (t_total == 0) throw ContractError("rrs: empty tracklet");
    if (t == 0) throw ContractError("rrs: clip length must be >= 1");

    std::size_t len = std::max(t_total, t); // virtual list, cyclic past t_total
    std::size_t base = len / t;
    std::vector<std::size_t> picks(t);
    for (std::size_t k = 0; k < t; ++k) {
        std::size_t start = k * base;
        std::size_t chunk = (k + 1 == t) ? len - start : base;
        std::size_t pos = train ? start + rng.index(chunk) : start;
        picks[k] = pos % t_total;
    }
    return picks;
}

Tracklet rrs_sample(const Tracklet& tracklet, std::size_t t, bool train, Rng& rng) {
    std::vector<std::size_t> picks = rrs_indices(tracklet.length(), t, train, rng);
    Tracklet clip;
    clip.identity = tracklet.identity;
    clip.camera = tracklet.camera;
    clip.has_cubes = tracklet.has_cubes;
    if (tracklet.has_cubes) {
        std::size_t hw = tracklet.cube_s.shape()[1], c = tracklet.cube_s.shape()[2];
        const Tensor* src[3] = {&tracklet.cube_s, &tracklet.cube_t, &tracklet.cube_st};
        Tensor* dst[3] = {&clip.cube_s, &clip.cube_t, &clip.cube_st};
        for (int m = 0; m < 3; ++m) {
            *dst[m] = Tensor({t, hw, c});
            for (std::size_t k = 0; k < t; ++k)
                std::copy_n(src[m]->data() + picks[k] * hw * c, hw * c,
                            dst[m]->data() + k * hw * c);
        }
    } else {
        for (std::size_t k = 0; k < t; ++k) clip.frames.push_back(tracklet.frames[picks[k]]);
    }
    return clip;
}

} // namespace tmt
