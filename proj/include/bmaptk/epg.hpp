#pragma once

#include <array>
#include <cmath>

#include "bmaptk/core.hpp"

namespace bmaptk::epg {

// Extended-phase-graph state of one voxel.
//
// Scaling convention (tested against the isochromat oracle): f_plus[n] is the
// n-th Fourier coefficient of Mxy(z) over one dephasing cycle, f_minus[n] the
// n-th coefficient of conj(Mxy)(z) (equivalently conj of the -n state), z[n]
// the n-th coefficient of Mz. In this basis |signal| after a 90deg pulse on
// equilibrium equals m0, and the conserved quantity under RF rotation is
// |F+|^2/2 + |F-|^2/2 + |Z|^2 per order.
//
// `active` is the number of orders that may be nonzero (top occupied order
// plus one); operators touch only that prefix, which changes nothing
// numerically and keeps long spoiled sequences cheap.
struct State {
    std::vector<cplx> f_plus, f_minus, z;
    double m0 = 0;
    int active = 1;
    long dropped = 0; // states shifted past capacity, counted not raised

    int capacity() const { return int(f_plus.size()) - 1; } // max order K
};

// Thermal equilibrium: all magnetization longitudinal in the 0th order.
inline State equilibrium(double m0, int capacity) {
    if (m0 < 0) throw invalid_argument_error("equilibrium: m0 must be >= 0");
    if (capacity < 1) throw invalid_argument_error("equilibrium: capacity must be >= 1");
    State s;
    s.f_plus.assign(size_t(capacity) + 1, cplx(0, 0));
    s.f_minus.assign(size_t(capacity) + 1, cplx(0, 0));
    s.z.assign(size_t(capacity) + 1, cplx(0, 0));
    s.z[0] = m0;
    s.m0 = m0;
    s.active = 1;
    return s;
}

// Detectable signal: the fully rephased transverse state.
inline cplx signal(const State& s) { return s.f_plus[0]; }

// 3x3 mixing matrix of an RF pulse with flip alpha and phase phi, applied to
// each (F+_n, F-_n, Z_n) triple. Top rows follow the printed EPG convention;
// the bottom row is the standard -(i/2)e^{-ip}sin(a), +(i/2)e^{ip}sin(a),
// cos(a), which the isochromat oracle confirms.
inline std::array<std::array<cplx, 3>, 3> rf_matrix(double alpha, double phi) {
    const cplx i(0, 1);
    double ca = std::cos(alpha), sa = std::sin(alpha);
    double ch = std::cos(alpha / 2), sh = std::sin(alpha / 2);
    cplx eip = std::polar(1.0, phi), eim = std::polar(1.0, -phi);
    cplx e2ip = std::polar(1.0, 2 * phi), e2im = std::polar(1.0, -2 * phi);
    return {{{ch * ch, e2ip * (sh * sh), -i * eip * sa},
             {e2im * (sh * sh), ch * ch, i * eim * sa},
             {-0.5 * i * eim * sa, 0.5 * i * eip * sa, ca}}};
}

inline void rf_pulse(State& s, double alpha, double phi) {
    if (!std::isfinite(alpha) || !std::isfinite(phi))
        throw invalid_argument_error("rf_pulse: angles must be finite");
    auto T = rf_matrix(alpha, phi);
    for (int n = 0; n < s.active; ++n) {
        cplx fp = s.f_plus[n], fm = s.f_minus[n], zz = s.z[n];
        s.f_plus[n] = T[0][0] * fp + T[0][1] * fm + T[0][2] * zz;
        s.f_minus[n] = T[1][0] * fp + T[1][1] * fm + T[1][2] * zz;
        s.z[n] = T[2][0] * fp + T[2][1] * fm + T[2][2] * zz;
    }
}

// F+_n picks up e^{+i theta}, F-_n (coefficients of conj Mxy) e^{-i theta}.
inline void precess(State& s, double theta) {
    if (!std::isfinite(theta)) throw invalid_argument_error("precess: theta must be finite");
    cplx ep = std::polar(1.0, theta), em = std::conj(ep);
    for (int n = 0; n < s.active; ++n) {
        s.f_plus[n] *= ep;
        s.f_minus[n] *= em;
    }
}

// F_n *= e^{-t/T2}; Z_n *= e^{-t/T1} for n>0; Z_0 additionally recovers
// toward m0. Affine in the state, with the constant term only in Z_0.
inline void relax(State& s, double t, double t1, double t2) {
    if (t < 0) throw invalid_argument_error("relax: t must be >= 0");
    if (!(t1 > 0) || !(t2 > 0)) throw invalid_argument_error("relax: t1,t2 must be > 0");
    double e1 = std::exp(-t / t1), e2 = std::exp(-t / t2);
    for (int n = 0; n < s.active; ++n) {
        s.f_plus[n] *= e2;
        s.f_minus[n] *= e2;
        s.z[n] *= e1;
    }
    s.z[0] += s.m0 * (1.0 - e1);
}

// Integer gradient shift of the transverse configuration orders; Z untouched.
// Orders crossing n=0 swap family with conjugation; orders pushed past the
// capacity are dropped and counted.
inline void grad_shift(State& s, int delta_n) {
    if (delta_n == 0) return;
    const int K = s.capacity();
    const int d = std::abs(delta_n);
    const int hi = std::min(s.active - 1 + d, K); // top order that may now be occupied
    std::vector<cplx>& up = delta_n > 0 ? s.f_plus : s.f_minus;
    std::vector<cplx>& dn = delta_n > 0 ? s.f_minus : s.f_plus;

    // `up` shifts away from zero by d, `dn` toward zero; the first d entries
    // of the new `up` are conjugated arrivals from old `dn` orders crossing
    // the origin, so those must be copied out before `dn` is shifted.
    std::vector<cplx> crossing(size_t(std::min(d, K)) + 1, cplx(0, 0));
    for (int j = 1; j <= d && j <= K; ++j) {
        crossing[j] = dn[j];
        if (d - j > K && dn[j] != cplx(0, 0)) ++s.dropped; // crossed and overshot capacity
    }

    for (int n = s.active - 1; n >= 0; --n) {
        if (n + d <= K)
            up[n + d] = up[n];
        else if (up[n] != cplx(0, 0))
            ++s.dropped;
    }
    for (int n = 0; n <= hi; ++n) dn[n] = n + d <= K ? dn[n + d] : cplx(0, 0);
    for (int n = 0; n < d && n <= K; ++n)
        up[n] = d - n <= K ? std::conj(crossing[d - n]) : cplx(0, 0);
    s.active = hi + 1;
}

// Ideal gradient spoiler: every transverse configuration is crushed,
// longitudinal states survive.
inline void spoil(State& s) {
    for (int n = 0; n < s.active; ++n) {
        s.f_plus[n] = 0;
        s.f_minus[n] = 0;
    }
}

// Zero every order whose combined magnitude falls below epsilon. Returns the
// total magnitude removed (a bound on the induced signal change).
inline double prune(State& s, double epsilon) {
    if (epsilon < 0) throw invalid_argument_error("prune: epsilon must be >= 0");
    if (epsilon == 0) return 0;
    double removed = 0;
    int top = 0;
    for (int n = 0; n < s.active; ++n) {
        double mag = std::abs(s.f_plus[n]) + std::abs(s.f_minus[n]) + std::abs(s.z[n]);
        if (mag < epsilon) {
            removed += mag;
            s.f_plus[n] = 0;
            s.f_minus[n] = 0;
            s.z[n] = 0;
        } else {
            top = n;
        }
    }
    s.active = top + 1;
    return removed;
}

} // namespace bmaptk::epg
