#include "thzdiff/checkpoint.hpp"

#include "binary_io.hpp"
#include "thzdiff/errors.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace thz {

namespace {

constexpr char kMagic[4] = {'T', 'H', 'Z', 'W'};
constexpr std::uint32_t kVersion = 1;
const char* const kPrefixes[4] = {"raw/", "ema/", "adam_m/", "adam_v/"};

void write_store(detail::ByteWriter& w, const ParameterStore& store, const std::string& prefix) {
    for (const Tensor& t : store) {
        const std::string name = prefix + t.name;
        w.u32(static_cast<std::uint32_t>(name.size()));
        w.bytes(name);
        w.u32(static_cast<std::uint32_t>(t.shape.size()));
        for (int d : t.shape) w.u64(static_cast<std::uint64_t>(d));
        for (double v : t.values) w.f32(static_cast<float>(v));
    }
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    const ParameterStore layout = DitModel::parameter_layout(ckpt.config);
    const ParameterStore* stores[4] = {&ckpt.params, &ckpt.ema, &ckpt.adam.m, &ckpt.adam.v};
    for (const ParameterStore* s : stores) {
        if (!s->same_layout(layout)) throw std::invalid_argument("serialize_checkpoint: parameter layout mismatch");
    }
    detail::ByteWriter w;
    w.bytes({kMagic, 4});
    w.u32(kVersion);
    const DitConfig& c = ckpt.config;
    for (int v : {c.n_rx, c.n_tx, c.patch_size, c.embed_dim, c.depth, c.n_heads}) w.u32(static_cast<std::uint32_t>(v));
    w.f64(c.mlp_ratio);
    w.f64(c.sigma_data);
    const CheckpointMeta& m = ckpt.meta;
    w.u32(m.k_rx);
    w.u32(m.k_tx);
    w.f64(m.normalization_scalar);
    w.f64(m.schedule.horizon);
    w.f64(m.schedule.sigma_min);
    w.u32(static_cast<std::uint32_t>(m.schedule.n_steps));
    for (int i = 0; i < 3; ++i) w.f64(m.tx_origin[i]);
    w.u64(ckpt.adam.step);
    w.u32(static_cast<std::uint32_t>(4 * layout.count()));
    for (int k = 0; k < 4; ++k) write_store(w, *stores[k], kPrefixes[k]);
    return w.take();
}

Checkpoint parse_checkpoint(std::string_view bytes) {
    detail::ByteReader r(bytes, "checkpoint");
    if (r.bytes(4) != std::string_view(kMagic, 4)) throw FormatError("checkpoint: bad magic (expected THZW)");
    const std::uint32_t version = r.u32();
    if (version != kVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));

    Checkpoint ckpt;
    DitConfig& c = ckpt.config;
    for (int* field : {&c.n_rx, &c.n_tx, &c.patch_size, &c.embed_dim, &c.depth, &c.n_heads}) {
        *field = static_cast<int>(r.u32());
    }
    c.mlp_ratio = r.f64();
    c.sigma_data = r.f64();
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    }
    CheckpointMeta& m = ckpt.meta;
    m.k_rx = r.u32();
    m.k_tx = r.u32();
    m.normalization_scalar = r.f64();
    m.schedule.horizon = r.f64();
    m.schedule.sigma_min = r.f64();
    m.schedule.n_steps = static_cast<int>(r.u32());
    for (int i = 0; i < 3; ++i) m.tx_origin[i] = r.f64();
    if (!(m.normalization_scalar > 0.0) || !std::isfinite(m.normalization_scalar)) {
        throw FormatError("checkpoint: normalization scalar must be positive");
    }
    try {
        m.schedule.validate();
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    }
    ckpt.adam.step = r.u64();

    const ParameterStore layout = DitModel::parameter_layout(c);
    ParameterStore* stores[4] = {&ckpt.params, &ckpt.ema, &ckpt.adam.m, &ckpt.adam.v};
    for (ParameterStore* s : stores) *s = layout.zeros_like();
    const std::uint32_t records = r.u32();
    if (records != 4 * layout.count()) {
        throw FormatError("checkpoint: expected " + std::to_string(4 * layout.count()) + " records, found " +
                          std::to_string(records));
    }
    std::map<std::string, bool> seen;
    for (std::uint32_t i = 0; i < records; ++i) {
        const std::string name(r.bytes(r.u32()));
        int store = -1;
        std::string base;
        for (int k = 0; k < 4; ++k) {
            const std::string prefix = kPrefixes[k];
            if (name.rfind(prefix, 0) == 0) {
                store = k;
                base = name.substr(prefix.size());
            }
        }
        if (store < 0) throw FormatError("checkpoint: unknown record " + name);
        if (seen[name]) throw FormatError("checkpoint: duplicate record " + name);
        seen[name] = true;
        Tensor* t;
        try {
            t = &stores[store]->at(base);
        } catch (const std::out_of_range&) {
            throw FormatError("checkpoint: record " + name + " is not part of the configured model");
        }
        const std::uint32_t rank = r.u32();
        std::vector<int> shape(rank);
        for (auto& d : shape) d = static_cast<int>(r.u64());
        if (shape != t->shape) throw FormatError("checkpoint: record " + name + " has a shape that disagrees with the config");
        r.need(4 * static_cast<std::size_t>(t->size()));
        for (Eigen::Index k = 0; k < t->size(); ++k) t->values[k] = r.f32();
        if (!t->values.allFinite()) throw FormatError("checkpoint: record " + name + " holds non-finite values");
    }
    if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes after the last record");
    return ckpt;
}

void write_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    detail::write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::string& path) { return parse_checkpoint(detail::read_file(path)); }

}  // namespace thz
