#pragma once

#include "bmaptk/epg.hpp"
#include "bmaptk/sequence.hpp"

namespace bmaptk::epg {

// Brute-force Bloch ensemble: n spins uniformly spanning one dephasing cycle,
// rotated per event, averaged at each adc. The EPG engine is the Fourier
// transform of exactly this ensemble, so for integer gradient moments below n
// the two must agree to rounding. Verification oracle; not a fast path.
//
// The RF rotation uses the same Cayley-Klein form as the EPG mixing matrix:
//   Mxy' = cos^2(a/2) Mxy + e^{2ip} sin^2(a/2) conj(Mxy) - i e^{ip} sin(a) Mz
//   Mz'  = sin(a) Im(e^{-ip} Mxy) + cos(a) Mz
inline std::vector<cplx> isochromat_oracle(const std::vector<seq::Event>& events,
                                           int n_isochromats, double t1, double t2, double m0) {
    if (n_isochromats < 64)
        throw invalid_argument_error("isochromat_oracle: need at least 64 isochromats");
    std::vector<cplx> mxy(n_isochromats, cplx(0, 0));
    std::vector<double> mz(n_isochromats, m0);

    std::vector<cplx> out;
    for (const auto& e : events) {
        std::visit(
            [&](auto&& ev) {
                using E = std::decay_t<decltype(ev)>;
                if constexpr (std::is_same_v<E, seq::Pulse>) {
                    cplx eip = std::polar(1.0, ev.phi), eim = std::conj(eip);
                    double ca = std::cos(ev.alpha), sa = std::sin(ev.alpha);
                    double ch2 = std::cos(ev.alpha / 2) * std::cos(ev.alpha / 2);
                    double sh2 = std::sin(ev.alpha / 2) * std::sin(ev.alpha / 2);
                    cplx e2ip = eip * eip;
                    for (int j = 0; j < n_isochromats; ++j) {
                        cplx t = ch2 * mxy[j] + e2ip * sh2 * std::conj(mxy[j]) -
                                 cplx(0, 1) * eip * sa * mz[j];
                        mz[j] = sa * std::imag(eim * mxy[j]) + ca * mz[j];
                        mxy[j] = t;
                    }
                } else if constexpr (std::is_same_v<E, seq::Wait>) {
                    double e1 = std::exp(-ev.t / t1), e2 = std::exp(-ev.t / t2);
                    for (int j = 0; j < n_isochromats; ++j) {
                        mxy[j] *= e2;
                        mz[j] = m0 * (1.0 - e1) + mz[j] * e1;
                    }
                } else if constexpr (std::is_same_v<E, seq::Grad>) {
                    for (int j = 0; j < n_isochromats; ++j)
                        mxy[j] *= std::polar(1.0, 2.0 * pi * ev.delta_n * double(j) / n_isochromats);
                } else if constexpr (std::is_same_v<E, seq::Spoil>) {
                    for (auto& m : mxy) m = 0;
                } else if constexpr (std::is_same_v<E, seq::Adc>) {
                    cplx sum(0, 0);
                    for (const auto& m : mxy) sum += m;
                    out.push_back(sum / double(n_isochromats));
                } else if constexpr (std::is_same_v<E, seq::Diffuse>) {
                    throw invalid_argument_error(
                        "isochromat_oracle: diffusion events are voxel-level, not spin-level");
                }
            },
            e);
    }
    return out;
}

// Precession has no Event carrier (sequences express it through Waits and
// gradients); expose a paired op for direct EPG-vs-ensemble checks.
inline void isochromat_precess(std::vector<cplx>& mxy, double theta) {
    cplx f = std::polar(1.0, theta);
    for (auto& m : mxy) m *= f;
}

// Drive an EPG state through the same event alphabet and collect the raw
// signal at each adc, for comparison against the oracle.
inline std::vector<cplx> run_epg(const std::vector<seq::Event>& events, int capacity, double t1,
                                 double t2, double m0, double prune_eps = 0.0) {
    State s = equilibrium(m0, capacity);
    std::vector<cplx> out;
    for (const auto& e : events) {
        std::visit(
            [&](auto&& ev) {
                using E = std::decay_t<decltype(ev)>;
                if constexpr (std::is_same_v<E, seq::Pulse>)
                    rf_pulse(s, ev.alpha, ev.phi);
                else if constexpr (std::is_same_v<E, seq::Wait>)
                    relax(s, ev.t, t1, t2);
                else if constexpr (std::is_same_v<E, seq::Grad>)
                    grad_shift(s, ev.delta_n);
                else if constexpr (std::is_same_v<E, seq::Spoil>)
                    spoil(s);
                else if constexpr (std::is_same_v<E, seq::Adc>)
                    out.push_back(signal(s));
                else if constexpr (std::is_same_v<E, seq::Diffuse>) {
                    // treated as identity here: D belongs to the voxel layer
                }
            },
            e);
        if (prune_eps > 0) prune(s, prune_eps);
    }
    return out;
}

} // namespace bmaptk::epg
