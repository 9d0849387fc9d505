#include "tmt/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <utility>
#include <vector>

#include "tmt/errors.hpp"

namespace tmt {

namespace {

constexpr char kMagic[4] = {'T', 'M', 'T', 'K'};
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

    void need(std::size_t n, const std::string& what) {
        if (offset + n > buf.size()) {
            throw FormatError(path + ": truncated while reading " + what + " at byte " +
                              std::to_string(offset) + " (file has " +
                              std::to_string(buf.size()) + " bytes)");
        }
    }
    std::uint16_t u16(const std::string& what) {
        need(2, what);
        auto b0 = static_cast<std::uint8_t>(buf[offset]);
        auto b1 = static_cast<std::uint8_t>(buf[offset + 1]);
        offset += 2;
        return static_cast<std::uint16_t>(b0 | (b1 << 8));
    }
    std::uint32_t u32(const std::string& what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[offset + i])) << (8 * i);
        offset += 4;
        return v;
    }
    double f32(const std::string& what) {
        std::uint32_t bits = u32(what);
        float f;
        std::memcpy(&f, &bits, 4);
        return static_cast<double>(f);
    }
    std::string bytes(std::size_t n, const std::string& what) {
        need(n, what);
        std::string s = buf.substr(offset, n);
        offset += n;
        return s;
    }
};

// tape entries first (registration order), then whichever prototype tables
// the model carries
std::vector<std::pair<std::string, Tensor*>> manifest(TmtModel& m) {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (std::size_t i = 0; i < m.tape.size(); ++i) {
        Var p = m.tape.param(i);
        out.emplace_back(m.tape.name(i), &p.node_->value);
    }
    auto table = [&](const char* name, OimState& s) {
        if (s.lookup.numel()) out.emplace_back(name, &s.lookup);
    };
    table("oim.spatial.lookup", m.oim_spatial);
    table("oim.temporal.lookup", m.oim_temporal);
    table("oim.st.lookup", m.oim_st);
    table("oim.concat.lookup", m.oim_concat);
    table("oim.branch_s.lookup", m.oim_branch[0]);
    table("oim.branch_t.lookup", m.oim_branch[1]);
    table("oim.branch_st.lookup", m.oim_branch[2]);
    table("oim.framewise.lookup", m.oim_framewise);
    return out;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return buf;
}

ByteReader open_header(const std::string& buf, const std::string& path) {
    ByteReader r{buf, path};
    r.need(4, "magic");
    if (std::memcmp(buf.data(), kMagic, 4) != 0)
        throw FormatError(path + ": bad magic, not a checkpoint file");
    r.offset = 4;
    std::uint16_t version = r.u16("version");
    if (version != kVersion)
        throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
    return r;
}

} // namespace

void save_checkpoint(const std::string& path, const TmtModel& model,
                     const std::string& config_json) {
    auto tensors = manifest(const_cast<TmtModel&>(model)); // read-only walk
    std::string buf;
    buf.append(kMagic, 4);
    put_u16(buf, kVersion);
    put_u32(buf, static_cast<std::uint32_t>(config_json.size()));
    buf += config_json;
    put_u32(buf, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, tensor] : tensors) {
        put_u16(buf, static_cast<std::uint16_t>(name.size()));
        buf += name;
        const auto& shape = tensor->shape();
        buf.push_back(static_cast<char>(shape.size()));
        for (std::size_t d : shape) put_u32(buf, static_cast<std::uint32_t>(d));
    }
    for (const auto& [name, tensor] : tensors)
        for (std::size_t i = 0; i < tensor->numel(); ++i) put_f32(buf, (*tensor)[i]);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("short write to " + path);
}

std::string read_checkpoint_config(const std::string& path) {
    std::string buf = slurp(path);
    ByteReader r = open_header(buf, path);
    std::uint32_t len = r.u32("config length");
    return r.bytes(len, "config json");
}

void load_checkpoint(const std::string& path, TmtModel& model) {
    std::string buf = slurp(path);
    ByteReader r = open_header(buf, path);
    std::uint32_t config_len = r.u32("config length");
    r.bytes(config_len, "config json");

    // Prototype tables may be absent or sized for any identity count; the
    // manifest decides. Everything else must match the built model exactly.
    struct OimSlot {
        const char* name;
        OimState* state;
        std::size_t dim; // required column width, 0 when the head cannot exist
    };
    const ModelConfig& c = model.cfg;
    const OimSlot slots[] = {
        {"oim.spatial.lookup", &model.oim_spatial, c.use_spatial ? c.channels : 0},
        {"oim.temporal.lookup", &model.oim_temporal, c.use_temporal ? c.channels : 0},
        {"oim.st.lookup", &model.oim_st, c.use_st ? c.channels : 0},
        {"oim.concat.lookup", &model.oim_concat, c.enabled_views() * c.channels},
        {"oim.branch_s.lookup", &model.oim_branch[0], c.stub_extractor ? c.channels : 0},
        {"oim.branch_t.lookup", &model.oim_branch[1], c.stub_extractor ? c.channels : 0},
        {"oim.branch_st.lookup", &model.oim_branch[2], c.stub_extractor ? c.channels : 0},
        {"oim.framewise.lookup", &model.oim_framewise, c.channels},
    };

    std::uint32_t count = r.u32("tensor count");
    if (count < model.tape.size())
        throw FormatError(path + ": checkpoint holds " + std::to_string(count) +
                          " tensors, model expects at least " +
                          std::to_string(model.tape.size()));

    std::vector<std::pair<std::string, Tensor*>> targets;
    std::size_t next_slot = 0;
    for (std::uint32_t idx = 0; idx < count; ++idx) {
        std::uint16_t name_len = r.u16("tensor name length");
        std::string name = r.bytes(name_len, "tensor name");
        r.need(1, "tensor rank");
        auto rank = static_cast<std::uint8_t>(buf[r.offset++]);
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) d = r.u32("tensor extent");

        Tensor* target = nullptr;
        if (idx < model.tape.size()) {
            if (name != model.tape.name(idx))
                throw FormatError(path + ": tensor \"" + name + "\" where \"" +
                                  model.tape.name(idx) + "\" was expected");
            Var p = model.tape.param(idx);
            target = &p.node_->value;
            if (shape != target->shape())
                throw FormatError(path + ": tensor \"" + name + "\" has shape " +
                                  shape_str(shape) + ", model expects " +
                                  shape_str(target->shape()));
        } else {
            while (next_slot < std::size(slots) && slots[next_slot].name != name) ++next_slot;
            if (next_slot >= std::size(slots))
                throw FormatError(path + ": unexpected tensor \"" + name + "\"");
            const OimSlot& slot = slots[next_slot++];
            if (slot.dim == 0 || shape.size() != 2 || shape[0] == 0 || shape[1] != slot.dim)
                throw FormatError(path + ": tensor \"" + name + "\" has shape " +
                                  shape_str(shape) + ", incompatible with this model");
            if (slot.state->lookup.numel() == 0) slot.state->lookup = Tensor::zeros(shape);
            else if (shape != slot.state->lookup.shape())
                throw FormatError(path + ": tensor \"" + name + "\" has shape " +
                                  shape_str(shape) + ", model expects " +
                                  shape_str(slot.state->lookup.shape()));
            target = &slot.state->lookup;
        }
        targets.emplace_back(name, target);
    }
    for (auto& [name, tensor] : targets)
        for (std::size_t i = 0; i < tensor->numel(); ++i) (*tensor)[i] = r.f32(name);
    if (r.offset != buf.size())
        throw FormatError(path + ": " + std::to_string(buf.size() - r.offset) +
                          " trailing bytes after the last tensor");
}

} // namespace tmt
