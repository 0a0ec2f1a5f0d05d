#pragma once

#include <random>

#include "bmaptk/epg.hpp"
#include "bmaptk/phantom.hpp"

namespace testutil {

using namespace bmaptk;

inline cplx rand_cplx(std::mt19937_64& rng) {
    return {uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0)};
}

// Random EPG state; ignores the physical f_minus[0]==conj(f_plus[0]) pairing
// on purpose, since linearity/adjoint checks hold for arbitrary vectors.
inline epg::State rand_state(std::mt19937_64& rng, int capacity, double m0 = 1.0) {
    epg::State s = epg::equilibrium(m0, capacity);
    for (int n = 0; n <= capacity; ++n) {
        s.f_plus[n] = rand_cplx(rng);
        s.f_minus[n] = rand_cplx(rng);
        s.z[n] = rand_cplx(rng);
    }
    s.active = capacity + 1;
    return s;
}

inline ProbabilityMaps rand_maps(std::mt19937_64& rng, int w, int h) {
    ProbabilityMaps m(w, h);
    for (size_t i = 0; i < m.npix(); ++i) {
        // random point in the simplex so sums stay <= 1
        double a = uniform01(rng), b = uniform01(rng);
        if (a + b > 1) {
            a = 1 - a;
            b = 1 - b;
        }
        m.csf[i] = a;
        m.gm[i] = b;
        m.wm[i] = uniform01(rng) * (1 - a - b);
    }
    return m;
}

inline double state_dist(const epg::State& a, const epg::State& b) {
    double d = 0;
    for (size_t n = 0; n < a.f_plus.size(); ++n) {
        d = std::max(d, std::abs(a.f_plus[n] - b.f_plus[n]));
        d = std::max(d, std::abs(a.f_minus[n] - b.f_minus[n]));
        d = std::max(d, std::abs(a.z[n] - b.z[n]));
    }
    return d;
}

} // namespace testutil
