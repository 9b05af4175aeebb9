#pragma once

// Straightforward reference hashes for 32x32 images, written directly from
// the textbook formulas with no shared code from the metrics module.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "common/image.hpp"

namespace crg::oracle {

inline double gray(const ImageTensor& img, int y, int x) { return (static_cast<double>(img.at(y, x)) + 1.0) * 0.5; }

inline double grid30(double v) { return std::nearbyint(v * 1073741824.0) / 1073741824.0; }

inline std::uint64_t bits_from(const std::array<double, 64>& c, double threshold) {
    std::uint64_t out = 0;
    for (int i = 0; i < 64; ++i) {
        out <<= 1;
        if (c[static_cast<std::size_t>(i)] > threshold) out |= 1;
    }
    return out;
}

inline std::uint64_t phash32(const ImageTensor& img) {
    const double pi = std::acos(-1.0);
    std::array<double, 64> c{};
    for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 8; ++v) {
            long double s = 0;
            for (int y = 0; y < 32; ++y)
                for (int x = 0; x < 32; ++x)
                    s += static_cast<long double>(gray(img, y, x)) * std::cos(pi * (2 * y + 1) * u / 64.0) *
                         std::cos(pi * (2 * x + 1) * v / 64.0);
            const double au = u == 0 ? std::sqrt(1.0 / 32) : std::sqrt(2.0 / 32);
            const double av = v == 0 ? std::sqrt(1.0 / 32) : std::sqrt(2.0 / 32);
            c[static_cast<std::size_t>(u * 8 + v)] = grid30(au * av * static_cast<double>(s));
        }
    std::vector<double> ac(c.begin() + 1, c.end());
    std::nth_element(ac.begin(), ac.begin() + 31, ac.end());
    return bits_from(c, ac[31]);
}

inline std::uint64_t whash32(const ImageTensor& img) {
    std::array<double, 64> c{};
    for (int r = 0; r < 8; ++r)
        for (int k = 0; k < 8; ++k) {
            long double s = 0;
            for (int y = 0; y < 4; ++y)
                for (int x = 0; x < 4; ++x) s += gray(img, 4 * r + y, 4 * k + x);
            c[static_cast<std::size_t>(r * 8 + k)] = grid30(static_cast<double>(s / 4));
        }
    std::vector<double> sorted(c.begin(), c.end());
    std::sort(sorted.begin(), sorted.end());
    return bits_from(c, (sorted[31] + sorted[32]) / 2);
}

}  // namespace crg::oracle
