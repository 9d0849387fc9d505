#pragma once

#include <cstdint>
#include <vector>

#include "tmt/rng.hpp"
#include "tmt/tensor.hpp"

namespace tmt {

// One person-camera video segment. Carries either raw frames ([H, W, 3]
// images in [0,1]) for the built-in extractor path, or three precomputed
// feature cubes ([T, HW, C]) ingested from cube files. Never both.
struct Tracklet {
    int identity = 0;
    int camera = 0;
    std::vector<Tensor> frames;
    bool has_cubes = false;
    Tensor cube_s, cube_t, cube_st;

    std::size_t length() const { return has_cubes ? cube_s.shape()[0] : frames.size(); }
};

struct SynthSpec {
    std::size_t num_identities = 16;
    std::size_t tracklets_per_id = 4;
    std::size_t frames_per_tracklet = 16;
    std::size_t image_h = 32;
    std::size_t image_w = 16;
    double noise_std = 0.05;
    std::uint64_t seed = 0;

    void validate() const; // ConfigError on nonpositive counts or negative noise
};

// Each identity gets a random appearance template; each tracklet shifts its
// brightness slightly and each frame adds Gaussian pixel noise, both scaled
// by noise_std (so noise_std = 0 reproduces the template exactly). Cameras
// alternate 0/1 by tracklet index. Pure function of spec.
std::vector<Tracklet> synth_generate(const SynthSpec& spec);

// Restricted random sampling: the frame list (cyclically extended to at
// least t entries when shorter) is split into t chunks, the last absorbing
// the remainder. Train mode draws one frame uniformly per chunk; test mode
// takes each chunk's first frame.
std::vector<std::size_t> rrs_indices(std::size_t t_total, std::size_t t, bool train, Rng& rng);

// Applies rrs_indices to whichever payload the tracklet carries.
Tracklet rrs_sample(const Tracklet& tracklet, std::size_t t, bool train, Rng& rng);

} // namespace tmt
