#pragma once

#include "thzdiff/channel.hpp"

#include <vector>

namespace thz {

// Unitary block-diagonal DFT dictionary.
struct BeamDictionary {
    CMatrix matrix;
    std::vector<int> block_sizes;

    int size() const noexcept { return static_cast<int>(matrix.rows()); }
};

// Entry (a, b) = exp(-j 2 pi a b / n) / sqrt(n).
BeamDictionary dft_dictionary(int n);

// blkdiag of k copies of dft_dictionary(n_sub).
BeamDictionary block_dictionary(int k, int n_sub);

// Dictionaries matching the subarray partition of each side of the geometry.
BeamDictionary rx_dictionary(const ArrayGeometry& geometry);
BeamDictionary tx_dictionary(const ArrayGeometry& geometry);

// A_R^H H A_T. Throws std::invalid_argument on size or domain mismatch.
ChannelMatrix to_beamspace(const ChannelMatrix& h, const BeamDictionary& rx, const BeamDictionary& tx);

// A_R Hb A_T^H.
ChannelMatrix from_beamspace(const ChannelMatrix& hb, const BeamDictionary& rx, const BeamDictionary& tx);

}  // namespace thz
