#pragma once

#include <cstdint>
#include <string>

#include "tmt/data.hpp"
#include "tmt/tensor.hpp"

namespace tmt {

// On-disk record of one tracklet's precomputed features: three views of
// identical shape, stored [t][h][w][c] as 32-bit little-endian floats after
// a "TMTC" magic, a 16-bit version (1), and five 32-bit fields
// (T, H, W, C, view count = 3). Labels travel in a JSON sidecar at
// path + ".json" with identity, camera, and a free-form source note.
struct CubeRecord {
    std::uint32_t t = 0, h = 0, w = 0, c = 0;
    Tensor spatial, temporal, spatiotemporal; // each [T, H*W, C]
    int identity = 0;
    int camera = 0;
    std::string source;
};

void write_cube(const std::string& path, const CubeRecord& rec);

// FormatError (with byte offset) on bad magic/version/truncation; IoError on
// unreadable file or missing/invalid sidecar.
CubeRecord read_cube(const std::string& path);

Tracklet cube_to_tracklet(const CubeRecord& rec);

} // namespace tmt
