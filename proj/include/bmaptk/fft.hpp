#pragma once

#include "bmaptk/core.hpp"

namespace bmaptk {

namespace detail {

// In-place radix-2 Cooley-Tukey, no normalization. sign = -1 forward, +1 inverse.
inline void fft1d(cplx* x, int n, int stride, int sign) {
    // bit-reversal permutation
    for (int i = 1, j = 0; i < n; ++i) {
        int bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(x[size_t(i) * stride], x[size_t(j) * stride]);
    }
    for (int len = 2; len <= n; len <<= 1) {
        double ang = sign * 2.0 * pi / len;
        cplx wlen = std::polar(1.0, ang);
        for (int i = 0; i < n; i += len) {
            cplx w(1, 0);
            for (int k = 0; k < len / 2; ++k) {
                cplx u = x[size_t(i + k) * stride];
                cplx v = x[size_t(i + k + len / 2) * stride] * w;
                x[size_t(i + k) * stride] = u + v;
                x[size_t(i + k + len / 2) * stride] = u - v;
                w *= wlen;
            }
        }
    }
}

inline void fft2_impl(grid<cplx>& m, int sign) {
    if (!is_pow2(m.nx) || !is_pow2(m.ny))
        throw invalid_argument_error(
            "fft2: dimensions must be powers of two (pad the matrix first)");
    for (int y = 0; y < m.ny; ++y) fft1d(&m.v[size_t(y) * m.nx], m.nx, 1, sign);
    for (int x = 0; x < m.nx; ++x) fft1d(&m.v[x], m.ny, m.nx, sign);
    double scale = 1.0 / std::sqrt(double(m.nx) * double(m.ny));
    for (auto& v : m.v) v *= scale;
}

} // namespace detail

// Unitary 2D FFT pair: 1/sqrt(N) each way, so Parseval holds exactly and
// ifft2(fft2(x)) == x to rounding.
inline grid<cplx> fft2(grid<cplx> m) {
    detail::fft2_impl(m, -1);
    return m;
}

inline grid<cplx> ifft2(grid<cplx> m) {
    detail::fft2_impl(m, +1);
    return m;
}

// Swap quadrants so the DC sample moves between matrix center and index 0.
// For the even dimensions enforced above, fftshift and ifftshift coincide.
inline grid<cplx> fftshift2(const grid<cplx>& m) {
    grid<cplx> out(m.nx, m.ny);
    for (int y = 0; y < m.ny; ++y)
        for (int x = 0; x < m.nx; ++x)
            out((y + m.ny / 2) % m.ny, (x + m.nx / 2) % m.nx) = m(y, x);
    return out;
}

} // namespace bmaptk
