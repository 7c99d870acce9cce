#include "asvlab/neural/checkpoint.hpp"

#include "asvlab/error.hpp"
#include "asvlab/io.hpp"

namespace asvlab::nn {

namespace {

const auto kMagic = io::make_magic("ASVCKPT\0");

std::filesystem::path manifest_path(const std::filesystem::path& path) {
    return std::filesystem::path(path.string() + ".json");
}

}  // namespace

void save_checkpoint(const ParamStore& store, const std::filesystem::path& path, const nlohmann::json& meta) {
    io::BinaryWriter w;
    const auto params = store.all();
    w.header({kMagic, kCheckpointVersion, static_cast<std::uint32_t>(params.size()), 0});
    nlohmann::json tensors = nlohmann::json::array();
    for (const Parameter* p : params) {
        w.u32(static_cast<std::uint32_t>(p->name.size()));
        w.bytes(p->name);
        w.u32(static_cast<std::uint32_t>(p->value.rank()));
        for (std::size_t d : p->value.shape) {
            w.u32(static_cast<std::uint32_t>(d));
        }
        for (double v : p->value.data) {
            w.f64(v);
        }
        tensors.push_back({{"name", p->name}, {"shape", p->value.shape}});
    }
    w.save(path);
    io::write_json(manifest_path(path), {{"format", "asvlab-checkpoint"},
                                         {"version", kCheckpointVersion},
                                         {"adam_steps", store.adam_steps},
                                         {"tensors", tensors},
                                         {"meta", meta}});
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    io::BinaryReader r(path);
    const auto h = r.header(kMagic, kCheckpointVersion);
    Checkpoint ck;
    for (std::uint32_t i = 0; i < h.rows; ++i) {
        const std::string name = r.string(r.u32());
        const std::uint32_t rank = r.u32();
        Shape shape;
        for (std::uint32_t d = 0; d < rank; ++d) {
            shape.push_back(r.u32());
        }
        Parameter& p = ck.params.add(name, shape);
        for (double& v : p.value.data) {
            v = r.f64();
        }
    }
    if (r.remaining() != 0) {
        throw LoadError(path.string() + ": trailing bytes after last tensor record");
    }
    const auto manifest = manifest_path(path);
    if (std::filesystem::exists(manifest)) {
        const auto j = io::read_json(manifest);
        ck.meta = j.value("meta", nlohmann::json::object());
        ck.params.adam_steps = j.value("adam_steps", std::int64_t{0});
    }
    return ck;
}

void copy_parameters(const ParamStore& src, const std::string& src_prefix, ParamStore& dst,
                     const std::string& dst_prefix) {
    for (Parameter* p : dst.with_prefix(dst_prefix)) {
        const std::string name = src_prefix + p->name.substr(dst_prefix.size());
        if (!src.contains(name)) {
            throw LoadError("checkpoint has no parameter '" + name + "'");
        }
        const Parameter& s = src.get(name);
        if (s.value.shape != p->value.shape) {
            throw LoadError("parameter '" + name + "' has shape " + shape_string(s.value.shape) + ", expected " +
                            shape_string(p->value.shape));
        }
        p->value = s.value;
    }
}

std::string parameter_hash(const ParamStore& store, const std::string& prefix) {
    io::BinaryWriter w;
    for (const Parameter* p : store.all()) {
        if (p->name.rfind(prefix, 0) != 0) {
            continue;
        }
        w.bytes(p->name);
        for (std::size_t d : p->value.shape) {
            w.u32(static_cast<std::uint32_t>(d));
        }
        for (double v : p->value.data) {
            w.f64(v);
        }
    }
    return io::sha256_hex(w.buffer());
}

}  // namespace asvlab::nn
