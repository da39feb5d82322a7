#include "unisolver/fft.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace unisolver {

bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

void fft_inplace(cdouble* data, std::size_t n, bool inverse) {
    if (!is_power_of_two(n)) {
        throw std::invalid_argument("fft: length must be a power of two, got " +
                                    std::to_string(n));
    }
    // Bit-reversal permutation.
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(data[i], data[j]);
    }
    const double pi = 3.14159265358979323846;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * pi / static_cast<double>(len);
        const cdouble wlen(std::cos(ang), std::sin(ang));
        for (std::size_t base = 0; base < n; base += len) {
            cdouble w(1.0, 0.0);
            for (std::size_t j = 0; j < len / 2; ++j) {
                const cdouble u = data[base + j];
                const cdouble v = data[base + j + len / 2] * w;
                data[base + j] = u + v;
                data[base + j + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse) {
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) data[i] *= inv_n;
    }
}

void fft_inplace(std::vector<cdouble>& data, bool inverse) {
    fft_inplace(data.data(), data.size(), inverse);
}

void fft2_inplace(std::vector<cdouble>& data, std::size_t ny, std::size_t nx,
                  bool inverse) {
    if (data.size() != ny * nx) {
        throw std::invalid_argument("fft2: buffer size does not match ny*nx");
    }
    for (std::size_t y = 0; y < ny; ++y) {
        fft_inplace(data.data() + y * nx, nx, inverse);
    }
    std::vector<cdouble> column(ny);
    for (std::size_t x = 0; x < nx; ++x) {
        for (std::size_t y = 0; y < ny; ++y) column[y] = data[y * nx + x];
        fft_inplace(column.data(), ny, inverse);
        for (std::size_t y = 0; y < ny; ++y) data[y * nx + x] = column[y];
    }
}

int fft_wavenumber(std::size_t i, std::size_t n) {
    const int ni = static_cast<int>(n);
    const int ii = static_cast<int>(i);
    return ii < (ni + 1) / 2 ? ii : ii - ni;
}

}  // namespace unisolver
