#pragma once

#include "thzdiff/channel.hpp"
#include "thzdiff/geometry.hpp"
#include "thzdiff/random.hpp"

#include <cstdlib>
#include <filesystem>
#include <string>

namespace thz::test {

inline ArrayLayout small_layout(int n_tx, int n_rx, int k_tx = 1, int k_rx = 1) {
    ArrayLayout l;
    l.n_tx = n_tx;
    l.n_rx = n_rx;
    l.k_tx = k_tx;
    l.k_rx = k_rx;
    return l;
}

inline CMatrix random_cmatrix(int rows, int cols, Rng& rng) {
    CMatrix m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = Complex(standard_normal(rng), standard_normal(rng));
    return m;
}

inline double correlation(const CMatrix& a, const CMatrix& b) {
    return std::abs((a.conjugate().cwiseProduct(b)).sum()) / (a.norm() * b.norm());
}

// Scratch directory for file-writing tests.
inline std::filesystem::path temp_dir(const std::string& name) {
    const char* env = std::getenv("THZ_TEST_TMP");
    std::filesystem::path base = env ? env : std::filesystem::temp_directory_path() / "thzdiff_tests";
    std::filesystem::path dir = base / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace thz::test
