#include "thzdiff/dataset.hpp"

#include "binary_io.hpp"
#include "thzdiff/errors.hpp"
#include "thzdiff/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <stdexcept>

namespace thz {

namespace detail {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path + " for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write to " + path + " failed");
}

}  // namespace detail

namespace {

constexpr char kMagic[4] = {'T', 'H', 'Z', 'C'};
constexpr std::uint64_t kSplitStream = 0xC0FFEEull << 32;

}  // namespace

Eigen::VectorXd stack_channel(const CMatrix& h) {
    const Eigen::Index plane = h.rows() * h.cols();
    Eigen::VectorXd t(2 * plane);
    for (Eigen::Index r = 0; r < h.rows(); ++r) {
        for (Eigen::Index c = 0; c < h.cols(); ++c) {
            t[r * h.cols() + c] = h(r, c).real();
            t[plane + r * h.cols() + c] = h(r, c).imag();
        }
    }
    return t;
}

CMatrix unstack_channel(const Eigen::VectorXd& tensor, int n_rx, int n_tx) {
    const Eigen::Index plane = static_cast<Eigen::Index>(n_rx) * n_tx;
    if (tensor.size() != 2 * plane) throw std::invalid_argument("unstack_channel: tensor size mismatch");
    CMatrix h(n_rx, n_tx);
    for (int r = 0; r < n_rx; ++r) {
        for (int c = 0; c < n_tx; ++c) h(r, c) = {tensor[r * n_tx + c], tensor[plane + r * n_tx + c]};
    }
    return h;
}

void PositionRegion::validate() const {
    for (int i = 0; i < 3; ++i) {
        if (!(lo[i] <= hi[i])) throw std::invalid_argument("PositionRegion: lo must not exceed hi");
    }
    if (!((hi - lo).maxCoeff() > 0.0)) throw std::invalid_argument("PositionRegion: region is a single point");
}

Dataset build_dataset(std::uint64_t master_seed, const ArrayGeometry& geometry, const GscmConfig& gscm,
                      const PositionRegion& region, std::size_t n) {
    if (n < 1) throw std::invalid_argument("build_dataset: n must be >= 1");
    region.validate();
    gscm.validate();

    Dataset ds;
    ds.header.n_rx = static_cast<std::uint32_t>(geometry.n_rx());
    ds.header.n_tx = static_cast<std::uint32_t>(geometry.n_tx());
    ds.header.k_rx = static_cast<std::uint32_t>(geometry.k_rx());
    ds.header.k_tx = static_cast<std::uint32_t>(geometry.k_tx());
    ds.header.sample_count = n;
    ds.header.master_seed = master_seed;
    ds.samples.resize(n);

    const BeamDictionary rx_dict = rx_dictionary(geometry);
    const BeamDictionary tx_dict = tx_dictionary(geometry);
    const Vec3 tx = geometry.origin(Side::tx);

    parallel_for(n, [&](std::size_t i) {
        Rng rng = stream_rng(master_seed, i);
        Vec3 rx;
        for (int a = 0; a < 3; ++a) rx[a] = uniform(rng, region.lo[a], region.hi[a]);
        try {
            ArrayGeometry placed = geometry.with_rx_origin(rx);
            PathSet paths = draw_paths(rng, gscm, placed);
            ChannelMatrix h = swm_channel(paths, placed);
            ChannelMatrix hb = to_beamspace(h, rx_dict, tx_dict);
            ds.samples[i] = {condition_vector(tx, rx), stack_channel(hb.entries)};
        } catch (const DegenerateGeometryError& e) {
            throw DegenerateGeometryError("sample " + std::to_string(i) + ": " + e.what());
        }
    });
    return ds;
}

double normalize(Dataset& dataset) {
    if (dataset.samples.empty()) throw std::invalid_argument("normalize: empty dataset");
    double sum = 0.0;
    for (const auto& s : dataset.samples) sum += s.tensor.norm() / std::sqrt(static_cast<double>(s.tensor.size()));
    const double scale = sum / static_cast<double>(dataset.samples.size());
    if (!(scale > 0.0) || !std::isfinite(scale)) throw std::invalid_argument("normalize: dataset has zero energy");
    for (auto& s : dataset.samples) s.tensor /= scale;
    dataset.header.normalization_scalar *= scale;
    return scale;
}

std::array<long long, 3> position_cell(const GeometryCondition& c, double cell_edge) {
    const Vec3 rel = c.relative_position();
    return {static_cast<long long>(std::floor(rel.x() / cell_edge)),
            static_cast<long long>(std::floor(rel.y() / cell_edge)),
            static_cast<long long>(std::floor(rel.z() / cell_edge))};
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, double test_fraction, double cell_edge) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw std::invalid_argument("split: test_fraction must lie in (0, 1)");
    }
    if (!(cell_edge > 0.0)) throw std::invalid_argument("split: cell_edge must be positive");
    const std::size_t n = dataset.samples.size();

    std::map<std::array<long long, 3>, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < n; ++i) cells[position_cell(dataset.samples[i].condition, cell_edge)].push_back(i);
    if (cells.size() < 2) {
        throw InsufficientDataError("split: need at least 2 position cells, found " + std::to_string(cells.size()));
    }

    std::vector<const std::vector<std::size_t>*> order;
    for (const auto& [key, members] : cells) order.push_back(&members);
    Rng rng = stream_rng(dataset.header.master_seed, kSplitStream);
    std::shuffle(order.begin(), order.end(), rng);

    const double target = test_fraction * static_cast<double>(n);
    const double tolerance = 0.02 * static_cast<double>(n);
    std::vector<bool> in_test(n, false);
    std::size_t test_count = 0;
    for (const auto* members : order) {
        if (static_cast<double>(test_count) >= target) break;
        if (static_cast<double>(test_count + members->size()) > target + tolerance) continue;
        for (std::size_t i : *members) in_test[i] = true;
        test_count += members->size();
    }
    if (static_cast<double>(test_count) < target - tolerance || test_count == 0 || test_count == n) {
        throw InsufficientDataError("split: position cells too coarse to reach test fraction " +
                                    std::to_string(test_fraction));
    }

    Dataset train, test;
    train.header = test.header = dataset.header;
    for (std::size_t i = 0; i < n; ++i) (in_test[i] ? test : train).samples.push_back(dataset.samples[i]);
    train.header.sample_count = train.samples.size();
    test.header.sample_count = test.samples.size();
    return {std::move(train), std::move(test)};
}

std::string serialize_dataset(const Dataset& dataset) {
    const DatasetHeader& h = dataset.header;
    if (h.sample_count != dataset.samples.size()) {
        throw std::invalid_argument("serialize_dataset: header sample_count does not match samples");
    }
    detail::ByteWriter w;
    w.bytes(std::string_view(kMagic, 4));
    w.u32(h.version);
    w.u32(h.n_rx);
    w.u32(h.n_tx);
    w.u32(h.k_rx);
    w.u32(h.k_tx);
    w.u32(h.condition_dim);
    w.u64(h.sample_count);
    w.f64(h.normalization_scalar);
    w.u64(h.master_seed);
    for (const auto& s : dataset.samples) {
        if (static_cast<std::size_t>(s.tensor.size()) != h.tensor_size()) {
            throw std::invalid_argument("serialize_dataset: tensor size does not match header");
        }
        for (double v : s.condition.p) w.f32(static_cast<float>(v));
        for (double v : s.tensor) w.f32(static_cast<float>(v));
    }
    return w.take();
}

Dataset parse_dataset(std::string_view bytes) {
    detail::ByteReader r(bytes, "dataset");
    if (r.bytes(4) != std::string_view(kMagic, 4)) throw FormatError("dataset: bad magic (expected THZC)");
    Dataset ds;
    DatasetHeader& h = ds.header;
    h.version = r.u32();
    if (h.version != 1) throw FormatError("dataset: unsupported version " + std::to_string(h.version));
    h.n_rx = r.u32();
    h.n_tx = r.u32();
    h.k_rx = r.u32();
    h.k_tx = r.u32();
    h.condition_dim = r.u32();
    h.sample_count = r.u64();
    h.normalization_scalar = r.f64();
    h.master_seed = r.u64();
    if (h.condition_dim != kConditionDim) {
        throw FormatError("dataset: condition_dim " + std::to_string(h.condition_dim) + " != 8");
    }
    if (h.n_rx == 0 || h.n_tx == 0 || h.k_rx == 0 || h.k_tx == 0 || h.n_rx % h.k_rx || h.n_tx % h.k_tx) {
        throw FormatError("dataset: inconsistent array dimensions in header");
    }
    if (h.sample_count < 1) throw FormatError("dataset: sample_count must be >= 1");
    if (!(h.normalization_scalar > 0.0)) throw FormatError("dataset: normalization scalar must be positive");
    const std::size_t record = 4 * (kConditionDim + h.tensor_size());
    if (r.remaining() != record * h.sample_count) {
        throw FormatError("dataset: payload size does not match header sample_count");
    }
    ds.samples.resize(h.sample_count);
    for (auto& s : ds.samples) {
        for (double& v : s.condition.p) v = r.f32();
        s.tensor.resize(static_cast<Eigen::Index>(h.tensor_size()));
        for (double& v : s.tensor) v = r.f32();
        if (!s.tensor.allFinite()) throw FormatError("dataset: non-finite tensor entry");
    }
    return ds;
}

void write_dataset(const Dataset& dataset, const std::string& path) {
    detail::write_file(path, serialize_dataset(dataset));
}

Dataset read_dataset(const std::string& path) {
    return parse_dataset(detail::read_file(path));
}

}  // namespace thz
