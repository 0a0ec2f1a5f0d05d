#pragma once

#include <atomic>
#include <thread>

#include "bmaptk/fft.hpp"
#include "bmaptk/isochromat.hpp"
#include "bmaptk/phantom.hpp"
#include "bmaptk/sequence.hpp"

namespace bmaptk::sim {

// Complex k-space matrices, one per contrast. Stored centered: the DC sample
// sits at matrix index (ny/2, nx/2).
struct KSpace {
    int nx = 0, ny = 0;
    std::vector<grid<cplx>> contrasts;
};

// Magnitude images, one per contrast.
struct Image {
    int nx = 0, ny = 0;
    std::vector<grid<double>> contrasts;
};

struct ContrastLabel {
    std::string sequence;
    int echo = 0;
};

// Simulated or observed contrasts across all sequences, (sequence, echo)
// ordered; k-space and magnitude images side by side.
struct ContrastStack {
    int nx = 0, ny = 0;
    std::vector<grid<cplx>> kspace;
    std::vector<grid<double>> images;
    std::vector<ContrastLabel> labels;

    size_t count() const { return kspace.size(); }
    bool congruent(const ContrastStack& o) const {
        return nx == o.nx && ny == o.ny && kspace.size() == o.kspace.size();
    }
};

enum class Mode { idealized, intra_readout_decay };

struct SimOptions {
    Mode mode = Mode::intra_readout_decay;
    int threads = 1;
    double prune_eps_rel = 1e-6; // in units of m0; 0 disables pruning
    int capacity = 0;            // 0: sequence default (grad events + 2)
};

namespace detail {

// Saved values a reverse pass needs; forward-only runs pass nullptr.
struct VoxelTape {
    std::vector<epg::State> relax_inputs;  // input state per relax/diffuse event
    std::vector<cplx> adc_f0;              // raw F+_0 at each adc
    std::vector<std::pair<size_t, int>> pruned; // (event index, zeroed order)
};

// Per-voxel forward pass. Accumulates encoded adc contributions into k and,
// when taping, saves what the adjoint sweep will need.
inline void run_voxel(const seq::Sequence& s, const SimOptions& opt, int vx, int vy, double t1,
                      double t2, double t2p, double pd, double dcoef,
                      std::vector<grid<cplx>>& k, VoxelTape* tape) {
    int capacity = opt.capacity > 0 ? opt.capacity : s.default_capacity();
    epg::State st = epg::equilibrium(pd, capacity);
    const double prune_eps = opt.prune_eps_rel > 0 ? opt.prune_eps_rel * pd : 0.0;
    const double r2star = 1.0 / t2 + 1.0 / t2p;
    const double enc_scale = 1.0 / std::sqrt(double(s.nx) * double(s.ny));
    double rx_phase = 0.0;

    size_t ei = 0;
    for (const auto& e : s.events) {
        bool state_changed = false;
        std::visit(
            [&](auto&& ev) {
                using E = std::decay_t<decltype(ev)>;
                if constexpr (std::is_same_v<E, seq::Pulse>) {
                    epg::rf_pulse(st, ev.alpha, ev.phi);
                    rx_phase = ev.phi;
                    state_changed = true;
                } else if constexpr (std::is_same_v<E, seq::Wait>) {
                    if (tape) tape->relax_inputs.push_back(st);
                    epg::relax(st, ev.t, t1, t2);
                    state_changed = true;
                } else if constexpr (std::is_same_v<E, seq::Grad>) {
                    epg::grad_shift(st, ev.delta_n);
                    state_changed = true;
                } else if constexpr (std::is_same_v<E, seq::Spoil>) {
                    epg::spoil(st);
                    state_changed = true;
                } else if constexpr (std::is_same_v<E, seq::Diffuse>) {
                    if (tape) tape->relax_inputs.push_back(st);
                    double f = std::exp(-ev.b * dcoef);
                    for (int n = 0; n < st.active; ++n) {
                        st.f_plus[n] *= f;
                        st.f_minus[n] *= f;
                        st.z[n] *= f;
                    }
                    state_changed = true;
                } else if constexpr (std::is_same_v<E, seq::Adc>) {
                    cplx f0 = epg::signal(st);
                    if (tape) tape->adc_f0.push_back(f0);
                    double decay = opt.mode == Mode::intra_readout_decay
                                       ? std::exp(-ev.t_since_excitation * r2star)
                                       : 1.0;
                    double ph = -2.0 * pi *
                                    (double(ev.sample - s.nx / 2) * vx / s.nx +
                                     double(ev.line - s.ny / 2) * vy / s.ny) -
                                rx_phase;
                    k[ev.contrast](ev.line, ev.sample) +=
                        f0 * std::polar(decay * enc_scale, ph);
                }
            },
            e);
        if (state_changed && prune_eps > 0) {
            // record zeroed orders so the adjoint can replay the projection
            for (int n = 0; n < st.active; ++n) {
                double mag = std::abs(st.f_plus[n]) + std::abs(st.f_minus[n]) + std::abs(st.z[n]);
                if (mag != 0.0 && mag < prune_eps) {
                    if (tape) tape->pruned.push_back({ei, n});
                    st.f_plus[n] = 0;
                    st.f_minus[n] = 0;
                    st.z[n] = 0;
                }
            }
            int top = 0;
            for (int n = 0; n < st.active; ++n)
                if (st.f_plus[n] != cplx(0, 0) || st.f_minus[n] != cplx(0, 0) ||
                    st.z[n] != cplx(0, 0))
                    top = n;
            st.active = top + 1;
        }
        ++ei;
    }
}

// Deterministic parallel map over fixed voxel chunks: the reduction tree
// depends only on the chunk size, never on the thread count.
constexpr int chunk_voxels = 128;

template <typename Fn>
inline void parallel_chunks(size_t n_items, int threads, Fn&& per_chunk) {
    size_t n_chunks = (n_items + chunk_voxels - 1) / chunk_voxels;
    if (threads <= 1) {
        for (size_t c = 0; c < n_chunks; ++c) per_chunk(c);
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (size_t c = next.fetch_add(1); c < n_chunks; c = next.fetch_add(1)) per_chunk(c);
        });
    for (auto& th : pool) th.join();
}

} // namespace detail

// Forward model: every non-background voxel drives an independent EPG state
// through the event program; adc taps are phase-encoded into k-space with the
// voxel's Cartesian phase and a per-sample T2* envelope (decay mode). The
// k-space produced is the unitary DFT of the per-voxel echo-amplitude image,
// so reconstruct() inverts it exactly.
inline KSpace simulate(const QuantitativeMaps& q, const seq::Sequence& s,
                       const SimOptions& opt = {}) {
    if (q.width != s.nx || q.height != s.ny)
        throw invalid_argument_error("simulate: phantom dims do not match sequence matrix");
    for (size_t i = 0; i < q.npix(); ++i)
        if (!std::isfinite(q.qt1[i]) || !std::isfinite(q.qt2[i]) || !std::isfinite(q.pd[i]))
            throw numeric_error("simulate: non-finite quantitative map value at pixel " +
                                std::to_string(i));

    size_t npix = q.npix();
    size_t n_chunks = (npix + detail::chunk_voxels - 1) / detail::chunk_voxels;
    std::vector<std::vector<grid<cplx>>> partials(n_chunks);

    detail::parallel_chunks(npix, opt.threads, [&](size_t c) {
        auto& part = partials[c];
        part.assign(s.contrasts(), grid<cplx>(s.nx, s.ny));
        size_t lo = c * detail::chunk_voxels, hi = std::min(npix, lo + detail::chunk_voxels);
        for (size_t i = lo; i < hi; ++i) {
            if (q.background[i]) continue;
            detail::run_voxel(s, opt, int(i % q.width), int(i / q.width), q.qt1[i], q.qt2[i],
                              q.qt2_prime[i], q.pd[i], q.d[i], part, nullptr);
        }
    });

    KSpace k;
    k.nx = s.nx;
    k.ny = s.ny;
    k.contrasts.assign(s.contrasts(), grid<cplx>(s.nx, s.ny));
    for (size_t c = 0; c < n_chunks; ++c)
        for (int ct = 0; ct < s.contrasts(); ++ct)
            for (size_t i = 0; i < k.contrasts[ct].v.size(); ++i)
                k.contrasts[ct].v[i] += partials[c][ct].v[i];
    return k;
}

// Magnitude of the unitary inverse FFT of each contrast (k-space is stored
// centered, so it is unshifted first).
inline Image reconstruct(const KSpace& k) {
    if (!is_pow2(k.nx) || !is_pow2(k.ny))
        throw invalid_argument_error("reconstruct: dims must be powers of two (pad first)");
    Image img;
    img.nx = k.nx;
    img.ny = k.ny;
    for (const auto& contrast : k.contrasts) {
        grid<cplx> z = ifft2(fftshift2(contrast));
        grid<double> m(k.nx, k.ny);
        for (size_t i = 0; i < z.v.size(); ++i) m.v[i] = std::abs(z.v[i]);
        img.contrasts.push_back(std::move(m));
    }
    return img;
}

// mix + simulate + reconstruct over an ordered sequence list; contrasts are
// appended (sequence, echo)-lexicographically.
inline ContrastStack simulate_stack(const ProbabilityMaps& maps, const TissueTable& table,
                                    const std::vector<seq::Sequence>& sequences,
                                    const SimOptions& opt = {}) {
    if (sequences.empty()) throw invalid_argument_error("simulate_stack: no sequences");
    QuantitativeMaps q = mix(maps, table);
    ContrastStack stack;
    stack.nx = maps.width;
    stack.ny = maps.height;
    for (const auto& s : sequences) {
        KSpace k = simulate(q, s, opt);
        Image img = reconstruct(k);
        for (int c = 0; c < s.contrasts(); ++c) {
            stack.kspace.push_back(std::move(k.contrasts[c]));
            stack.images.push_back(std::move(img.contrasts[c]));
            stack.labels.push_back({s.name, c});
        }
    }
    return stack;
}

} // namespace bmaptk::sim
