#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace unisolver {

using cdouble = std::complex<double>;

bool is_power_of_two(std::size_t n);

// In-place iterative radix-2 FFT over `n` contiguous values; `n` must be a
// power of two. The forward transform uses the e^{-2 pi i k n / N} kernel;
// the inverse conjugates the kernel and divides by n, so
// ifft(fft(x)) == x up to rounding.
void fft_inplace(cdouble* data, std::size_t n, bool inverse);
void fft_inplace(std::vector<cdouble>& data, bool inverse);

// 2-D transform of a row-major [ny][nx] buffer: rows first, then columns.
void fft2_inplace(std::vector<cdouble>& data, std::size_t ny, std::size_t nx,
                  bool inverse);

// Signed integer wavenumber of bin i for an n-point transform:
// 0, 1, ..., n/2-1, -n/2, ..., -1 (the Nyquist bin maps to -n/2).
int fft_wavenumber(std::size_t i, std::size_t n);

}  // namespace unisolver
