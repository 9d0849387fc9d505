#include "tmt/cube_io.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "json.hpp"

#include "tmt/errors.hpp"

namespace tmt {

namespace {

constexpr char kMagic[4] = {'T', 'M', 'T', 'C'};
constexpr std::uint16_t kVersion = 1;

void put_u16(std::string& buf, std::uint16_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& buf, double v) {
    float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(buf, bits);
}

struct ByteReader {
    const std::string& buf;
    const std::string& path;
    std::size_t offset = 0;

    void need(std::size_t n, const char* what) {
        if (offset + n > buf.size()) {
            throw FormatError(path + ": truncated while reading " + what + " at byte " +
                              std::to_string(offset) + " (file has " +
                              std::to_string(buf.size()) + " bytes)");
        }
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        auto b0 = static_cast<std::uint8_t>(buf[offset]), b1 = static_cast<std::uint8_t>(buf[offset + 1]);
        offset += 2;
        return static_cast<std::uint16_t>(b0 | (b1 << 8));
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[offset + i])) << (8 * i);
        offset += 4;
        return v;
    }
    double f32(const char* what) {
        std::uint32_t bits = u32(what);
        float f;
        std::memcpy(&f, &bits, 4);
        return static_cast<double>(f);
    }
};

} // namespace

void write_cube(const std::string& path, const CubeRecord& rec) {
    std::size_t hw = static_cast<std::size_t>(rec.h) * rec.w;
    std::vector<std::size_t> want{rec.t, hw, rec.c};
    for (const Tensor* view : {&rec.spatial, &rec.temporal, &rec.spatiotemporal}) {
        if (view->shape() != want) {
            throw DimensionError("write_cube: view " + view->shape_string() +
                                 " does not match header " + shape_str(want));
        }
    }

    std::string buf;
    buf.append(kMagic, 4);
    put_u16(buf, kVersion);
    put_u32(buf, rec.t);
    put_u32(buf, rec.h);
    put_u32(buf, rec.w);
    put_u32(buf, rec.c);
    put_u32(buf, 3);
    for (const Tensor* view : {&rec.spatial, &rec.temporal, &rec.spatiotemporal})
        for (std::size_t i = 0; i < view->numel(); ++i) put_f32(buf, (*view)[i]);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("write_cube: cannot open " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write_cube: write failed for " + path);

    nlohmann::json side{{"identity", rec.identity}, {"camera", rec.camera}, {"source", rec.source}};
    std::ofstream meta(path + ".json", std::ios::trunc);
    if (!meta) throw IoError("write_cube: cannot open " + path + ".json");
    meta << side.dump(2) << "\n";
    if (!meta) throw IoError("write_cube: write failed for " + path + ".json");
}

CubeRecord read_cube(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_cube: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    ByteReader r{buf, path};
    r.need(4, "magic");
    if (std::memcmp(buf.data(), kMagic, 4) != 0) {
        throw FormatError(path + ": bad magic at byte 0, expected \"TMTC\"");
    }
    r.offset = 4;
    std::uint16_t version = r.u16("version");
    if (version != kVersion) {
        throw FormatError(path + ": unsupported version " + std::to_string(version) +
                          " at byte 4");
    }
    CubeRecord rec;
    rec.t = r.u32("frame count");
    rec.h = r.u32("height");
    rec.w = r.u32("width");
    rec.c = r.u32("channel count");
    std::uint32_t views = r.u32("view count");
    if (rec.t == 0 || rec.h == 0 || rec.w == 0 || rec.c == 0 || views != 3) {
        throw FormatError(path + ": invalid header fields at byte 6 (t=" + std::to_string(rec.t) +
                          " h=" + std::to_string(rec.h) + " w=" + std::to_string(rec.w) + " c=" +
                          std::to_string(rec.c) + " views=" + std::to_string(views) + ")");
    }

    std::size_t hw = static_cast<std::size_t>(rec.h) * rec.w;
    std::size_t n = static_cast<std::size_t>(rec.t) * hw * rec.c;
    Tensor* dst[3] = {&rec.spatial, &rec.temporal, &rec.spatiotemporal};
    const char* names[3] = {"spatial payload", "temporal payload", "spatiotemporal payload"};
    for (int m = 0; m < 3; ++m) {
        r.need(n * 4, names[m]);
        *dst[m] = Tensor({rec.t, hw, rec.c});
        for (std::size_t i = 0; i < n; ++i) (*dst[m])[i] = r.f32(names[m]);
    }
    if (r.offset != buf.size()) {
        throw FormatError(path + ": " + std::to_string(buf.size() - r.offset) +
                          " unexpected trailing bytes at byte " + std::to_string(r.offset));
    }

    std::ifstream meta(path + ".json");
    if (!meta) throw IoError("read_cube: missing sidecar " + path + ".json");
    nlohmann::json side;
    try {
        meta >> side;
        rec.identity = side.at("identity").get<int>();
        rec.camera = side.at("camera").get<int>();
        rec.source = side.value("source", "");
    } catch (const nlohmann::json::exception& e) {
        throw IoError("read_cube: invalid sidecar " + path + ".json: " + e.what());
    }
    return rec;
}

Tracklet cube_to_tracklet(const CubeRecord& rec) {
    Tracklet tr;
    tr.identity = rec.identity;
    tr.camera = rec.camera;
    tr.has_cubes = true;
    tr.cube_s = rec.spatial;
    tr.cube_t = rec.temporal;
    tr.cube_st = rec.spatiotemporal;
    return tr;
}

} // namespace tmt
