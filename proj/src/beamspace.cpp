#include "thzdiff/beamspace.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace thz {

BeamDictionary dft_dictionary(int n) {
    if (n < 1) throw std::invalid_argument("dft_dictionary: n must be >= 1");
    BeamDictionary dict{CMatrix(n, n), {n}};
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            // reduce a*b mod n first so the phase argument stays small
            long long ab = (static_cast<long long>(a) * b) % n;
            dict.matrix(a, b) = std::polar(scale, -2.0 * kPi * static_cast<double>(ab) / n);
        }
    }
    return dict;
}

BeamDictionary block_dictionary(int k, int n_sub) {
    if (k < 1 || n_sub < 1) throw std::invalid_argument("block_dictionary: k and n_sub must be >= 1");
    const BeamDictionary block = dft_dictionary(n_sub);
    BeamDictionary dict{CMatrix::Zero(k * n_sub, k * n_sub), std::vector<int>(k, n_sub)};
    for (int i = 0; i < k; ++i) dict.matrix.block(i * n_sub, i * n_sub, n_sub, n_sub) = block.matrix;
    return dict;
}

BeamDictionary rx_dictionary(const ArrayGeometry& geometry) {
    return block_dictionary(geometry.k_rx(), geometry.subarray_size(Side::rx));
}

BeamDictionary tx_dictionary(const ArrayGeometry& geometry) {
    return block_dictionary(geometry.k_tx(), geometry.subarray_size(Side::tx));
}

namespace {

void check(const ChannelMatrix& h, Domain expected, const BeamDictionary& rx, const BeamDictionary& tx,
           const char* op) {
    if (h.domain != expected) {
        throw std::invalid_argument(std::string(op) + ": input has the wrong domain tag");
    }
    if (h.entries.rows() != rx.size() || h.entries.cols() != tx.size()) {
        throw std::invalid_argument(std::string(op) + ": channel is " + std::to_string(h.entries.rows()) + "x" +
                                    std::to_string(h.entries.cols()) + " but dictionaries are " +
                                    std::to_string(rx.size()) + "x" + std::to_string(tx.size()));
    }
}

// Multiplies by a block-diagonal dictionary one block at a time.
CMatrix left_adjoint(const BeamDictionary& d, const CMatrix& m) {
    CMatrix out(m.rows(), m.cols());
    int offset = 0;
    for (int n : d.block_sizes) {
        out.middleRows(offset, n).noalias() = d.matrix.block(offset, offset, n, n).adjoint() * m.middleRows(offset, n);
        offset += n;
    }
    return out;
}

CMatrix left(const BeamDictionary& d, const CMatrix& m) {
    CMatrix out(m.rows(), m.cols());
    int offset = 0;
    for (int n : d.block_sizes) {
        out.middleRows(offset, n).noalias() = d.matrix.block(offset, offset, n, n) * m.middleRows(offset, n);
        offset += n;
    }
    return out;
}

CMatrix right(const CMatrix& m, const BeamDictionary& d) {
    CMatrix out(m.rows(), m.cols());
    int offset = 0;
    for (int n : d.block_sizes) {
        out.middleCols(offset, n).noalias() = m.middleCols(offset, n) * d.matrix.block(offset, offset, n, n);
        offset += n;
    }
    return out;
}

CMatrix right_adjoint(const CMatrix& m, const BeamDictionary& d) {
    CMatrix out(m.rows(), m.cols());
    int offset = 0;
    for (int n : d.block_sizes) {
        out.middleCols(offset, n).noalias() = m.middleCols(offset, n) * d.matrix.block(offset, offset, n, n).adjoint();
        offset += n;
    }
    return out;
}

}  // namespace

ChannelMatrix to_beamspace(const ChannelMatrix& h, const BeamDictionary& rx, const BeamDictionary& tx) {
    check(h, Domain::spatial, rx, tx, "to_beamspace");
    return {right(left_adjoint(rx, h.entries), tx), Domain::beamspace};
}

ChannelMatrix from_beamspace(const ChannelMatrix& hb, const BeamDictionary& rx, const BeamDictionary& tx) {
    check(hb, Domain::beamspace, rx, tx, "from_beamspace");
    return {right_adjoint(left(rx, hb.entries), tx), Domain::spatial};
}

}  // namespace thz
