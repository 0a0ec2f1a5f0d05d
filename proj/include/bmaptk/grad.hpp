#pragma once

#include <functional>

#include "bmaptk/simulator.hpp"

namespace bmaptk::grad {

enum class LossDomain { image, kspace };

// d(loss)/d(pixel) for each probability channel.
struct GradientMaps {
    int width = 0, height = 0;
    std::vector<double> d_csf, d_gm, d_wm;

    GradientMaps() = default;
    GradientMaps(int w, int h)
        : width(w), height(h), d_csf(size_t(w) * h, 0.0), d_gm(size_t(w) * h, 0.0),
          d_wm(size_t(w) * h, 0.0) {}
};

// Weighted sum-of-squares data term and its cotangent with respect to every
// k-space sample. Image domain: residuals on magnitude images, with the
// complex image recovered by redoing the (cheap) reconstruction; magnitude at
// zero uses subgradient 0. K-space domain: residuals on the complex samples.
inline double loss_and_kspace_cotangent(const sim::ContrastStack& sim_stack,
                                        const sim::ContrastStack& obs_stack, LossDomain domain,
                                        const std::vector<double>& weights,
                                        std::vector<grid<cplx>>* kgrad_out) {
    if (!sim_stack.congruent(obs_stack))
        throw invalid_argument_error("loss: contrast stacks are not congruent");
    if (weights.size() != sim_stack.count())
        throw invalid_argument_error("loss: weight count does not match contrast count");
    double total = 0;
    if (kgrad_out) kgrad_out->assign(sim_stack.count(), grid<cplx>(sim_stack.nx, sim_stack.ny));

    for (size_t c = 0; c < sim_stack.count(); ++c) {
        double w = weights[c];
        if (domain == LossDomain::kspace) {
            const auto& ks = sim_stack.kspace[c];
            const auto& ko = obs_stack.kspace[c];
            for (size_t i = 0; i < ks.v.size(); ++i) {
                cplx r = ks.v[i] - ko.v[i];
                total += w * std::norm(r);
                if (kgrad_out) (*kgrad_out)[c].v[i] = 2.0 * w * r;
            }
        } else {
            grid<cplx> z = ifft2(fftshift2(sim_stack.kspace[c]));
            const auto& obs = obs_stack.images[c];
            grid<cplx> gz(z.nx, z.ny);
            for (size_t i = 0; i < z.v.size(); ++i) {
                double mag = std::abs(z.v[i]);
                double r = mag - obs.v[i];
                total += w * r * r;
                if (kgrad_out && mag > 0) gz.v[i] = 2.0 * w * r * z.v[i] / mag;
            }
            if (kgrad_out) (*kgrad_out)[c] = fftshift2(fft2(gz));
        }
    }
    return total;
}

namespace detail {

using sim::detail::VoxelTape;

// Cotangents of one voxel's EPG state, in the gradient-pair convention
// (d/dRe + i d/dIm). For complex-linear forward maps the adjoint is the
// conjugate transpose; the dot-product tests in the suite pin this down.
struct Cotangent {
    std::vector<cplx> fp, fm, zz;
    int act = 1; // upper bound on nonzero orders

    explicit Cotangent(int capacity)
        : fp(size_t(capacity) + 1, cplx(0, 0)), fm(size_t(capacity) + 1, cplx(0, 0)),
          zz(size_t(capacity) + 1, cplx(0, 0)) {}
    int capacity() const { return int(fp.size()) - 1; }
};

inline void adjoint_rf_pulse(Cotangent& c, double alpha, double phi) {
    auto T = epg::rf_matrix(alpha, phi);
    for (int n = 0; n < c.act; ++n) {
        cplx a = c.fp[n], b = c.fm[n], z = c.zz[n];
        c.fp[n] = std::conj(T[0][0]) * a + std::conj(T[1][0]) * b + std::conj(T[2][0]) * z;
        c.fm[n] = std::conj(T[0][1]) * a + std::conj(T[1][1]) * b + std::conj(T[2][1]) * z;
        c.zz[n] = std::conj(T[0][2]) * a + std::conj(T[1][2]) * b + std::conj(T[2][2]) * z;
    }
}

inline void adjoint_precess(Cotangent& c, double theta) {
    cplx em = std::polar(1.0, -theta), ep = std::conj(em);
    for (int n = 0; n < c.act; ++n) {
        c.fp[n] *= em;
        c.fm[n] *= ep;
    }
}

// Transpose of the shift routing: the away-from-zero family's cotangents move
// back toward zero; cotangents of the conjugated zero-crossing arrivals flow
// (conjugated) into the pre-shift toward-zero family. Cotangents of dropped
// orders vanish, and the never-read dn[0] gets zero.
inline void adjoint_grad_shift(Cotangent& c, int delta_n) {
    if (delta_n == 0) return;
    const int K = c.capacity();
    const int d = std::abs(delta_n);
    std::vector<cplx>& up = delta_n > 0 ? c.fp : c.fm;
    std::vector<cplx>& dn = delta_n > 0 ? c.fm : c.fp;

    std::vector<cplx> cross(size_t(std::min(d, K + 1)), cplx(0, 0));
    for (int n = 0; n < d && n <= K; ++n) cross[n] = up[n];
    for (int n = 0; n + d <= K; ++n) up[n] = up[n + d];
    for (int n = std::max(0, K - d + 1); n <= K; ++n) up[n] = 0;
    for (int m = std::min(K, c.act - 1 + d); m >= 0; --m) {
        cplx v = m >= d ? dn[m - d] : cplx(0, 0);
        if (m >= 1 && m <= d && d - m < int(cross.size())) v += std::conj(cross[d - m]);
        dn[m] = v;
    }
    c.act = std::min(c.act + d, K + 1);
}

inline void adjoint_spoil(Cotangent& c) {
    for (int n = 0; n < c.act; ++n) c.fp[n] = c.fm[n] = 0;
}

// Linear part of the relax adjoint (shared scaling); parameter partials are
// taken where the saved forward input is at hand.
inline void adjoint_relax_scale(Cotangent& c, double e1, double e2) {
    for (int n = 0; n < c.act; ++n) {
        c.fp[n] *= e2;
        c.fm[n] *= e2;
        c.zz[n] *= e1;
    }
}

struct AdcInfo {
    int contrast, line, sample;
    double t, rx_phase;
};

// Event metadata shared by every voxel of one sequence.
struct SequencePlan {
    const seq::Sequence* s = nullptr;
    std::vector<AdcInfo> adcs; // in event order

    explicit SequencePlan(const seq::Sequence& sq) : s(&sq) {
        double rx = 0;
        for (const auto& e : sq.events) {
            if (const seq::Pulse* p = std::get_if<seq::Pulse>(&e)) rx = p->phi;
            if (const seq::Adc* a = std::get_if<seq::Adc>(&e))
                adcs.push_back({a->contrast, a->line, a->sample, a->t_since_excitation, rx});
        }
    }
};

struct VoxelParamGrads {
    double t1 = 0, t2 = 0, t2p = 0, pd = 0, d = 0;
};

// Adjoint sweep over one voxel's recorded trajectory: events walked in
// reverse, pruning replayed from the tape, parameter partials accumulated at
// the relax/diffuse/adc records that introduced them.
inline VoxelParamGrads backward_voxel(const SequencePlan& plan, const sim::SimOptions& opt,
                                      int vx, int vy, double t1, double t2, double t2p, double pd,
                                      double dcoef, const std::vector<grid<cplx>>& kgrad,
                                      const VoxelTape& tape) {
    const seq::Sequence& s = *plan.s;
    const int capacity = opt.capacity > 0 ? opt.capacity : s.default_capacity();
    const double r2star = 1.0 / t2 + 1.0 / t2p;
    const double enc_scale = 1.0 / std::sqrt(double(s.nx) * double(s.ny));

    Cotangent c(capacity);
    VoxelParamGrads g;
    double g_m0 = 0;

    size_t next_saved = tape.relax_inputs.size();
    size_t next_adc = tape.adc_f0.size();
    size_t next_prune = tape.pruned.size();
    size_t adc_cursor = plan.adcs.size();

    for (size_t ei = s.events.size(); ei-- > 0;) {
        // the forward pass pruned right after this event; undo that first
        while (next_prune > 0 && tape.pruned[next_prune - 1].first == ei) {
            int n = tape.pruned[--next_prune].second;
            c.fp[n] = c.fm[n] = c.zz[n] = 0;
        }
        const auto& e = s.events[ei];
        std::visit(
            [&](auto&& ev) {
                using E = std::decay_t<decltype(ev)>;
                if constexpr (std::is_same_v<E, seq::Pulse>) {
                    adjoint_rf_pulse(c, ev.alpha, ev.phi);
                } else if constexpr (std::is_same_v<E, seq::Wait>) {
                    // forward: F' = E2 F, Z'_n = E1 Z_n, Z'_0 = E1 Z_0 + m0(1-E1)
                    const epg::State& in = tape.relax_inputs[--next_saved];
                    double e1 = std::exp(-ev.t / t1), e2 = std::exp(-ev.t / t2);
                    double g_e1 = -std::real(c.zz[0]) * pd; // dZ'_0/dE1 = Z_0 - m0
                    double g_e2 = 0;
                    g_m0 += std::real(c.zz[0]) * (1.0 - e1);
                    for (int n = 0; n < c.act; ++n) {
                        g_e2 += std::real(std::conj(c.fp[n]) * in.f_plus[n]) +
                                std::real(std::conj(c.fm[n]) * in.f_minus[n]);
                        g_e1 += std::real(std::conj(c.zz[n]) * in.z[n]);
                    }
                    adjoint_relax_scale(c, e1, e2);
                    g.t1 += g_e1 * e1 * ev.t / (t1 * t1);
                    g.t2 += g_e2 * e2 * ev.t / (t2 * t2);
                } else if constexpr (std::is_same_v<E, seq::Grad>) {
                    adjoint_grad_shift(c, ev.delta_n);
                } else if constexpr (std::is_same_v<E, seq::Spoil>) {
                    adjoint_spoil(c);
                } else if constexpr (std::is_same_v<E, seq::Diffuse>) {
                    const epg::State& in = tape.relax_inputs[--next_saved];
                    double f = std::exp(-ev.b * dcoef);
                    double g_f = 0;
                    for (int n = 0; n < c.act; ++n) {
                        g_f += std::real(std::conj(c.fp[n]) * in.f_plus[n]) +
                               std::real(std::conj(c.fm[n]) * in.f_minus[n]) +
                               std::real(std::conj(c.zz[n]) * in.z[n]);
                        c.fp[n] *= f;
                        c.fm[n] *= f;
                        c.zz[n] *= f;
                    }
                    g.d += g_f * (-ev.b) * f;
                } else if constexpr (std::is_same_v<E, seq::Adc>) {
                    const AdcInfo& a = plan.adcs[--adc_cursor];
                    cplx f0 = tape.adc_f0[--next_adc];
                    cplx gc = kgrad[a.contrast](a.line, a.sample);
                    double decay =
                        opt.mode == sim::Mode::intra_readout_decay ? std::exp(-a.t * r2star) : 1.0;
                    double ph = -2.0 * pi *
                                    (double(a.sample - s.nx / 2) * vx / s.nx +
                                     double(a.line - s.ny / 2) * vy / s.ny) -
                                a.rx_phase;
                    cplx u = std::polar(decay * enc_scale, ph);
                    c.fp[0] += std::conj(u) * gc;
                    if (opt.mode == sim::Mode::intra_readout_decay) {
                        double g_decay = std::real(std::conj(gc) * f0 * std::polar(enc_scale, ph));
                        double g_r2s = g_decay * (-a.t) * decay;
                        g.t2 += g_r2s * (-1.0 / (t2 * t2));
                        g.t2p += g_r2s * (-1.0 / (t2p * t2p));
                    }
                }
            },
            e);
    }
    g_m0 += std::real(c.zz[0]); // equilibrium seeded z[0] = m0
    g.pd = g_m0;
    return g;
}

} // namespace detail

// Reverse-mode gradient of the scalar loss with respect to the probability
// maps, given the loss cotangent of every k-space sample (kgrad, in
// simulate_stack contrast order). Voxels own disjoint output pixels, so the
// voxel loop parallelizes with no reduction-order concerns.
inline GradientMaps backward_stack(const ProbabilityMaps& maps, const TissueTable& table,
                                   const std::vector<seq::Sequence>& sequences,
                                   const sim::SimOptions& opt,
                                   const std::vector<grid<cplx>>& kgrad) {
    QuantitativeMaps q = mix(maps, table);
    size_t npix = q.npix();
    std::vector<double> g_t1(npix, 0), g_t2(npix, 0), g_t2p(npix, 0), g_pd(npix, 0), g_d(npix, 0);

    size_t contrast_base = 0;
    for (const auto& s : sequences) {
        detail::SequencePlan plan(s);
        std::vector<grid<cplx>> kg(kgrad.begin() + contrast_base,
                                   kgrad.begin() + contrast_base + s.contrasts());
        contrast_base += s.contrasts();

        sim::detail::parallel_chunks(npix, opt.threads, [&](size_t chunk) {
            size_t lo = chunk * sim::detail::chunk_voxels,
                   hi = std::min(npix, lo + sim::detail::chunk_voxels);
            std::vector<grid<cplx>> scratch(s.contrasts(), grid<cplx>(s.nx, s.ny));
            for (size_t i = lo; i < hi; ++i) {
                if (q.background[i]) continue;
                sim::detail::VoxelTape tape;
                int vx = int(i % q.width), vy = int(i / q.width);
                sim::detail::run_voxel(s, opt, vx, vy, q.qt1[i], q.qt2[i], q.qt2_prime[i],
                                       q.pd[i], q.d[i], scratch, &tape);
                auto g = detail::backward_voxel(plan, opt, vx, vy, q.qt1[i], q.qt2[i],
                                                q.qt2_prime[i], q.pd[i], q.d[i], kg, tape);
                g_t1[i] += g.t1;
                g_t2[i] += g.t2;
                g_t2p[i] += g.t2p;
                g_pd[i] += g.pd;
                g_d[i] += g.d;
            }
        });
    }

    GradientMaps out(maps.width, maps.height);
    auto chain = [&](const TissueParams& p, std::vector<double>& dst) {
        for (size_t i = 0; i < npix; ++i)
            dst[i] = g_t1[i] * p.t1 + g_t2[i] * p.t2 + g_t2p[i] * p.t2_prime + g_pd[i] * p.pd +
                     g_d[i] * p.d;
    };
    chain(table.csf, out.d_csf);
    chain(table.gm, out.d_gm);
    chain(table.wm, out.d_wm);
    for (size_t i = 0; i < npix; ++i)
        if (!std::isfinite(out.d_csf[i]) || !std::isfinite(out.d_gm[i]) ||
            !std::isfinite(out.d_wm[i]))
            throw numeric_error("backward: non-finite gradient at pixel " + std::to_string(i));
    return out;
}

struct GradcheckRow {
    size_t coord;
    double analytic, numeric, rel_err;
};

struct GradcheckReport {
    std::vector<GradcheckRow> rows;
    double max_rel_err = 0;

    std::string to_text() const {
        std::string out = "coord analytic numeric rel_err\n";
        char buf[160];
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof buf, "%zu % .12e % .12e %.3e\n", r.coord, r.analytic,
                          r.numeric, r.rel_err);
            out += buf;
        }
        std::snprintf(buf, sizeof buf, "max_rel_err %.6e\n", max_rel_err);
        out += buf;
        return out;
    }
};

// Central-difference check of an analytic gradient on a random coordinate
// subsample. rel_err = |a-n| / max(|a|,|n|,1e-8).
inline GradcheckReport gradcheck(const std::function<double(const std::vector<double>&)>& f,
                                 const std::vector<double>& params,
                                 const std::vector<double>& analytic, double eps = 1e-4,
                                 size_t n_coords = 48, uint64_t seed = 0) {
    if (analytic.size() != params.size())
        throw invalid_argument_error("gradcheck: gradient size mismatch");
    std::vector<size_t> coords(params.size());
    for (size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (coords.size() > n_coords) {
        std::mt19937_64 rng(seed + 0x51ab5eed);
        for (size_t i = 0; i < n_coords; ++i) {
            size_t j = i + size_t(uniform01(rng) * double(coords.size() - i));
            std::swap(coords[i], coords[j]);
        }
        coords.resize(n_coords);
    }
    GradcheckReport rep;
    std::vector<double> p = params;
    for (size_t c : coords) {
        double keep = p[c];
        p[c] = keep + eps;
        double fp_val = f(p);
        p[c] = keep - eps;
        double fm_val = f(p);
        p[c] = keep;
        double numeric = (fp_val - fm_val) / (2 * eps);
        double a = analytic[c];
        double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
        rep.rows.push_back({c, a, numeric, rel});
        rep.max_rel_err = std::max(rep.max_rel_err, rel);
    }
    return rep;
}

} // namespace bmaptk::grad
