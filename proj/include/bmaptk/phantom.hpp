#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "bmaptk/core.hpp"

namespace bmaptk {

// Relaxation/density parameters of one tissue class. Times in ms, d in mm^2/s.
struct TissueParams {
    double t1 = 0;       // longitudinal relaxation
    double t2 = 0;       // transverse relaxation
    double t2_prime = 0; // reversible (static-field) dephasing
    double pd = 0;       // relative proton density in [0,1]
    double d = 0;        // apparent diffusion coefficient

    void validate(const char* name) const {
        if (!(t1 > 0) || !(t2 > 0) || !(t2_prime > 0))
            throw invalid_argument_error(std::string(name) + ": relaxation times must be > 0");
        if (t2 > t1)
            throw invalid_argument_error(std::string(name) + ": t2 must not exceed t1");
        if (pd < 0 || pd > 1)
            throw invalid_argument_error(std::string(name) + ": pd outside [0,1]");
        if (d < 0)
            throw invalid_argument_error(std::string(name) + ": d must be >= 0");
    }
};

// 1.5T defaults; every value can be overridden via config file.
struct TissueTable {
    TissueParams csf{4000.0, 2000.0, 3000.0, 1.00, 3.0e-3};
    TissueParams gm{1100.0, 95.0, 70.0, 0.85, 0.8e-3};
    TissueParams wm{650.0, 75.0, 60.0, 0.70, 0.7e-3};

    void validate() const {
        csf.validate("csf");
        gm.validate("gm");
        wm.validate("wm");
    }
    double max_t1() const { return std::max({csf.t1, gm.t1, wm.t1}); }
};

// Per-pixel CSF/GM/WM fractions on a 2D grid; the optimization variable.
struct ProbabilityMaps {
    int width = 0, height = 0;
    std::vector<double> csf, gm, wm; // row-major, length width*height

    ProbabilityMaps() = default;
    ProbabilityMaps(int w, int h)
        : width(w), height(h), csf(size_t(w) * h, 0.0), gm(size_t(w) * h, 0.0),
          wm(size_t(w) * h, 0.0) {}

    size_t npix() const { return size_t(width) * height; }

    const std::vector<double>& channel(int c) const {
        return c == 0 ? csf : (c == 1 ? gm : wm);
    }
    std::vector<double>& channel(int c) { return c == 0 ? csf : (c == 1 ? gm : wm); }

    void validate() const {
        if (csf.size() != npix() || gm.size() != npix() || wm.size() != npix())
            throw invalid_argument_error("probability maps: channel size mismatch");
        for (int c = 0; c < 3; ++c)
            for (size_t i = 0; i < npix(); ++i) {
                double x = channel(c)[i];
                if (!std::isfinite(x))
                    throw invalid_argument_error("probability maps: non-finite value at pixel " +
                                                 std::to_string(i));
                if (x < 0.0 || x > 1.0)
                    throw io_error("probability maps: value " + std::to_string(x) +
                                   " outside [0,1] at pixel index " + std::to_string(i));
            }
    }

    // Soft constraint: ground-truth phantoms should satisfy csf+gm+wm <= 1.
    // Reported, never enforced.
    size_t simplex_violations(double tol = 1e-6) const {
        size_t n = 0;
        for (size_t i = 0; i < npix(); ++i)
            if (csf[i] + gm[i] + wm[i] > 1.0 + tol) ++n;
        return n;
    }
};

// Voxelwise quantitative parameters derived from probability maps.
struct QuantitativeMaps {
    int width = 0, height = 0;
    std::vector<double> qt1, qt2, qt2_prime, pd, d;
    std::vector<uint8_t> background; // 1 where pd < pd_floor; excluded from simulation

    size_t npix() const { return size_t(width) * height; }
};

constexpr double default_pd_floor = 1e-3;

// The fixed linear transform f: probability maps -> quantitative maps.
// Each output channel mixes the per-tissue constant linearly, so the adjoint
// with respect to each probability channel is that constant.
inline QuantitativeMaps mix(const ProbabilityMaps& maps, const TissueTable& table,
                            double pd_floor = default_pd_floor) {
    if (maps.csf.size() != maps.npix() || maps.gm.size() != maps.npix() ||
        maps.wm.size() != maps.npix())
        throw invalid_argument_error("mix: channel dimensions disagree");
    QuantitativeMaps q;
    q.width = maps.width;
    q.height = maps.height;
    size_t n = maps.npix();
    q.qt1.resize(n);
    q.qt2.resize(n);
    q.qt2_prime.resize(n);
    q.pd.resize(n);
    q.d.resize(n);
    q.background.resize(n);
    for (size_t i = 0; i < n; ++i) {
        double c = maps.csf[i], g = maps.gm[i], w = maps.wm[i];
        q.qt1[i] = c * table.csf.t1 + g * table.gm.t1 + w * table.wm.t1;
        q.qt2[i] = c * table.csf.t2 + g * table.gm.t2 + w * table.wm.t2;
        q.qt2_prime[i] = c * table.csf.t2_prime + g * table.gm.t2_prime + w * table.wm.t2_prime;
        q.pd[i] = c * table.csf.pd + g * table.gm.pd + w * table.wm.pd;
        q.d[i] = c * table.csf.d + g * table.gm.d + w * table.wm.d;
        q.background[i] = q.pd[i] < pd_floor ? 1 : 0;
    }
    return q;
}

namespace detail {
inline double smoothstep(double x, double lo, double hi) {
    double t = std::clamp((x - lo) / (hi - lo), 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}
} // namespace detail

// Synthetic brain-like phantom: concentric wobbled bands (ventricle CSF, WM
// core, GM ribbon, outer CSF rim) with smooth partial-volume boundaries.
// Deterministic in (seed, size); per-pixel channel sum <= 1 by construction.
inline ProbabilityMaps synth_phantom(uint64_t seed, int size) {
    if (size < 8) throw invalid_argument_error("synth_phantom: size must be >= 8");
    std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + 0x3c6ef372fe94f82aULL);

    // Angular wobble of the band radii, a few low-order harmonics.
    const int nharm = 3;
    double amp[nharm], pha[nharm];
    for (int k = 0; k < nharm; ++k) {
        amp[k] = uniform(rng, 0.01, 0.045);
        pha[k] = uniform(rng, 0.0, 2.0 * pi);
    }
    double cx = 0.5 * (size - 1) + uniform(rng, -0.02, 0.02) * size;
    double cy = 0.5 * (size - 1) + uniform(rng, -0.02, 0.02) * size;
    double ecc = uniform(rng, 0.9, 1.1); // mild ellipticity
    double rmax = 0.48 * size;

    ProbabilityMaps maps(size, size);
    using detail::smoothstep;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            double dx = (x - cx) / rmax, dy = (y - cy) * ecc / rmax;
            double r = std::sqrt(dx * dx + dy * dy);
            double th = std::atan2(dy, dx);
            double wob = 1.0;
            for (int k = 0; k < nharm; ++k) wob += amp[k] * std::cos((k + 2) * th + pha[k]);
            r /= wob;

            double vent = 1.0 - smoothstep(r, 0.14, 0.22);               // ventricular CSF
            double wmc = smoothstep(r, 0.14, 0.22) * (1.0 - smoothstep(r, 0.50, 0.58));
            double gmr = smoothstep(r, 0.50, 0.58) * (1.0 - smoothstep(r, 0.78, 0.84));
            double rim = smoothstep(r, 0.78, 0.84) * (1.0 - smoothstep(r, 0.93, 0.99));

            size_t i = size_t(y) * size + x;
            maps.csf[i] = vent + rim;
            maps.wm[i] = wmc;
            maps.gm[i] = gmr;
        }
    return maps;
}

} // namespace bmaptk
