#pragma once

#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace bmaptk {

using cplx = std::complex<double>;

constexpr double pi = 3.14159265358979323846;

// Thrown for malformed files, bad magic, truncation, out-of-range payloads.
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown for shape/precondition violations (dimension mismatch, bad flags).
struct invalid_argument_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown when a computation produces non-finite values.
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense row-major 2D array.
template <typename T>
struct grid {
    int nx = 0, ny = 0;
    std::vector<T> v;

    grid() = default;
    grid(int nx_, int ny_, T fill = T{}) : nx(nx_), ny(ny_), v(size_t(nx_) * size_t(ny_), fill) {}

    T& operator()(int y, int x) { return v[size_t(y) * nx + x]; }
    const T& operator()(int y, int x) const { return v[size_t(y) * nx + x]; }
    size_t size() const { return v.size(); }
};

inline bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Uniform double in [0,1) from the top 53 bits of a mt19937_64 draw.
// std::uniform_real_distribution is implementation-defined; this is not.
inline double uniform01(std::mt19937_64& rng) {
    return double(rng() >> 11) * 0x1p-53;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

} // namespace bmaptk
