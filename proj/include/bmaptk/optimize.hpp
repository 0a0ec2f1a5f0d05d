#pragma once

#include "bmaptk/grad.hpp"
#include "bmaptk/metrics.hpp"

namespace bmaptk::opt {

using grad::LossDomain;

struct LossSpec {
    LossDomain domain = LossDomain::image;
    std::vector<double> weights; // per contrast; empty = all ones

    std::vector<double> resolved_weights(size_t n) const {
        std::vector<double> w = weights.empty() ? std::vector<double>(n, 1.0) : weights;
        if (w.size() != n)
            throw invalid_argument_error("loss: weight count does not match contrast count");
        bool any = false;
        for (double x : w) {
            if (x < 0) throw invalid_argument_error("loss: weights must be >= 0");
            any = any || x > 0;
        }
        if (!any) throw invalid_argument_error("loss: weights must not all be zero");
        return w;
    }
};

inline double loss(const sim::ContrastStack& sim_stack, const sim::ContrastStack& obs_stack,
                   const LossSpec& spec) {
    return grad::loss_and_kspace_cotangent(sim_stack, obs_stack, spec.domain,
                                           spec.resolved_weights(sim_stack.count()), nullptr);
}

enum FreeMaps : unsigned { free_csf = 1, free_gm = 2, free_wm = 4, free_all = 7 };

struct OptimConfig {
    int epochs = 501;
    double lr = 0.01;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    uint64_t seed = 0;
    unsigned free_maps = free_all;
    bool plain_sgd = false; // Adam is the default optimizer
};

// --- parameterizations -----------------------------------------------------

struct DirectPixel {};

// Realized value per pixel/map: clamp01( sum_s coeff[s,pixel,map] * basis_s ).
struct LinearAtlas {
    std::vector<ProbabilityMaps> basis;
};

// Realized value per pixel/map: clamp01( coeff[map] * reference ).
struct ScalarPerMap {
    ProbabilityMaps reference;
};

using Parameterization = std::variant<DirectPixel, LinearAtlas, ScalarPerMap>;

namespace detail {

inline std::vector<int> free_channel_list(unsigned mask) {
    std::vector<int> out;
    for (int c = 0; c < 3; ++c)
        if (mask & (1u << c)) out.push_back(c);
    if (out.empty()) throw invalid_argument_error("optimize: free_maps must not be empty");
    return out;
}

// Binds a parameterization to a flat parameter vector plus realize/backprop.
struct ParamBinding {
    const Parameterization* kind;
    std::vector<int> free_ch;
    ProbabilityMaps init; // provides frozen channels and the starting point
    size_t npix;

    std::vector<double> x; // flat parameters, free channels only

    ParamBinding(const Parameterization& k, unsigned free_mask, const ProbabilityMaps& init_maps)
        : kind(&k), free_ch(free_channel_list(free_mask)), init(init_maps),
          npix(init_maps.npix()) {
        std::visit(
            [&](auto&& p) {
                using P = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<P, DirectPixel>) {
                    for (int c : free_ch)
                        x.insert(x.end(), init.channel(c).begin(), init.channel(c).end());
                } else if constexpr (std::is_same_v<P, LinearAtlas>) {
                    if (p.basis.empty())
                        throw invalid_argument_error("linear atlas: basis must be nonempty");
                    for (const auto& b : p.basis)
                        if (b.npix() != npix)
                            throw invalid_argument_error("linear atlas: basis dims mismatch");
                    x.assign(free_ch.size() * p.basis.size() * npix, 1.0 / double(p.basis.size()));
                } else if constexpr (std::is_same_v<P, ScalarPerMap>) {
                    if (p.reference.npix() != npix)
                        throw invalid_argument_error("scalar map: reference dims mismatch");
                    x.assign(free_ch.size(), 1.0);
                }
            },
            k);
    }

    ProbabilityMaps realize() const {
        ProbabilityMaps maps = init; // frozen channels pass through untouched
        std::visit(
            [&](auto&& p) {
                using P = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<P, DirectPixel>) {
                    for (size_t f = 0; f < free_ch.size(); ++f)
                        std::copy(x.begin() + f * npix, x.begin() + (f + 1) * npix,
                                  maps.channel(free_ch[f]).begin());
                } else if constexpr (std::is_same_v<P, LinearAtlas>) {
                    size_t nb = p.basis.size();
                    for (size_t f = 0; f < free_ch.size(); ++f) {
                        int c = free_ch[f];
                        auto& dst = maps.channel(c);
                        std::fill(dst.begin(), dst.end(), 0.0);
                        for (size_t s = 0; s < nb; ++s) {
                            const auto& b = p.basis[s].channel(c);
                            const double* coeff = &x[(f * nb + s) * npix];
                            for (size_t i = 0; i < npix; ++i) dst[i] += coeff[i] * b[i];
                        }
                        for (auto& v : dst) v = std::clamp(v, 0.0, 1.0);
                    }
                } else if constexpr (std::is_same_v<P, ScalarPerMap>) {
                    for (size_t f = 0; f < free_ch.size(); ++f) {
                        int c = free_ch[f];
                        const auto& r = p.reference.channel(c);
                        auto& dst = maps.channel(c);
                        for (size_t i = 0; i < npix; ++i)
                            dst[i] = std::clamp(x[f] * r[i], 0.0, 1.0);
                    }
                }
            },
            *kind);
        return maps;
    }

    // Chain d(loss)/d(realized maps) back to the flat parameters. Clamped
    // pixels pass zero (box projection subgradient).
    std::vector<double> backprop(const grad::GradientMaps& gm) const {
        std::vector<double> gx(x.size(), 0.0);
        auto channel_grad = [&](int c) -> const std::vector<double>& {
            return c == 0 ? gm.d_csf : (c == 1 ? gm.d_gm : gm.d_wm);
        };
        std::visit(
            [&](auto&& p) {
                using P = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<P, DirectPixel>) {
                    for (size_t f = 0; f < free_ch.size(); ++f) {
                        const auto& g = channel_grad(free_ch[f]);
                        std::copy(g.begin(), g.end(), gx.begin() + f * npix);
                    }
                } else if constexpr (std::is_same_v<P, LinearAtlas>) {
                    size_t nb = p.basis.size();
                    for (size_t f = 0; f < free_ch.size(); ++f) {
                        int c = free_ch[f];
                        const auto& g = channel_grad(c);
                        // recompute the raw combination to find clamped pixels
                        std::vector<double> raw(npix, 0.0);
                        for (size_t s = 0; s < nb; ++s) {
                            const auto& b = p.basis[s].channel(c);
                            const double* coeff = &x[(f * nb + s) * npix];
                            for (size_t i = 0; i < npix; ++i) raw[i] += coeff[i] * b[i];
                        }
                        for (size_t s = 0; s < nb; ++s) {
                            const auto& b = p.basis[s].channel(c);
                            double* dst = &gx[(f * nb + s) * npix];
                            for (size_t i = 0; i < npix; ++i)
                                if (raw[i] > 0.0 && raw[i] < 1.0) dst[i] = g[i] * b[i];
                        }
                    }
                } else if constexpr (std::is_same_v<P, ScalarPerMap>) {
                    for (size_t f = 0; f < free_ch.size(); ++f) {
                        int c = free_ch[f];
                        const auto& g = channel_grad(c);
                        const auto& r = p.reference.channel(c);
                        for (size_t i = 0; i < npix; ++i) {
                            double raw = x[f] * r[i];
                            if (raw > 0.0 && raw < 1.0) gx[f] += g[i] * r[i];
                        }
                    }
                }
            },
            *kind);
        return gx;
    }

    // Box projection applies to parameters that are probabilities themselves.
    void project() {
        if (std::holds_alternative<DirectPixel>(*kind))
            for (auto& v : x) v = std::clamp(v, 0.0, 1.0);
    }
};

} // namespace detail

struct AdamState {
    std::vector<double> m, v;
    long t = 0;
};

// One bias-corrected Adam step (or plain SGD when configured), followed by
// the caller's projection.
inline void adam_step(std::vector<double>& x, const std::vector<double>& g, AdamState& st,
                      const OptimConfig& cfg) {
    if (x.size() != g.size()) throw invalid_argument_error("adam: shape mismatch");
    if (st.m.empty()) {
        st.m.assign(x.size(), 0.0);
        st.v.assign(x.size(), 0.0);
    }
    for (size_t i = 0; i < g.size(); ++i)
        if (!std::isfinite(g[i]))
            throw numeric_error("adam: non-finite gradient at coordinate " + std::to_string(i));
    ++st.t;
    if (cfg.plain_sgd) {
        for (size_t i = 0; i < x.size(); ++i) x[i] -= cfg.lr * g[i];
        return;
    }
    double bc1 = 1.0 - std::pow(cfg.beta1, double(st.t));
    double bc2 = 1.0 - std::pow(cfg.beta2, double(st.t));
    for (size_t i = 0; i < x.size(); ++i) {
        st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * g[i];
        st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        double mhat = st.m[i] / bc1, vhat = st.v[i] / bc2;
        x[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

struct EstimateResult {
    ProbabilityMaps maps;
    std::vector<double> history; // loss before each step
};

inline ProbabilityMaps constant_third_maps(int w, int h) {
    ProbabilityMaps m(w, h);
    for (int c = 0; c < 3; ++c) std::fill(m.channel(c).begin(), m.channel(c).end(), 1.0 / 3.0);
    return m;
}

// Gradient-descent inversion of the forward model: realize maps from the
// parameterization, simulate every sequence, compare against the observed
// stack, and push the loss gradient back to the parameters.
inline EstimateResult estimate(const sim::ContrastStack& observed,
                               const std::vector<seq::Sequence>& sequences,
                               const TissueTable& table, const Parameterization& param,
                               const LossSpec& lossspec, const OptimConfig& cfg,
                               const sim::SimOptions& simopt = {},
                               const ProbabilityMaps* init = nullptr) {
    if (cfg.epochs < 0) throw invalid_argument_error("estimate: epochs must be >= 0");
    if (!(cfg.lr > 0)) throw invalid_argument_error("estimate: lr must be > 0");
    size_t expected = 0;
    for (const auto& s : sequences) expected += s.contrasts();
    if (observed.count() != expected || observed.nx != sequences.front().nx ||
        observed.ny != sequences.front().ny)
        throw invalid_argument_error("estimate: observed stack is not congruent with sequences");

    ProbabilityMaps init_maps = init ? *init : constant_third_maps(observed.nx, observed.ny);
    detail::ParamBinding binding(param, cfg.free_maps, init_maps);
    AdamState adam;
    std::vector<double> weights = lossspec.resolved_weights(expected);

    EstimateResult res;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        ProbabilityMaps maps = binding.realize();
        sim::ContrastStack stack = sim::simulate_stack(maps, table, sequences, simopt);
        std::vector<grid<cplx>> kgrad;
        double L =
            grad::loss_and_kspace_cotangent(stack, observed, lossspec.domain, weights, &kgrad);
        if (!std::isfinite(L))
            throw numeric_error("estimate: non-finite loss at epoch " + std::to_string(epoch));
        res.history.push_back(L);
        grad::GradientMaps gm = grad::backward_stack(maps, table, sequences, simopt, kgrad);
        std::vector<double> gx = binding.backprop(gm);
        try {
            adam_step(binding.x, gx, adam, cfg);
        } catch (const numeric_error& e) {
            throw numeric_error(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ")");
        }
        binding.project();
    }
    res.maps = binding.realize();
    return res;
}

// --- experiment harness -----------------------------------------------------

struct AblationRow {
    std::string config;
    std::string tissue;
    metrics::AggregateCell dice, psnr, ssim;
};

struct AblationSetup {
    int size = 16;
    std::vector<uint64_t> subject_seeds = {1, 2, 3};
    TissueTable table;
    OptimConfig optim;
    LossSpec lossspec;
    sim::SimOptions simopt;
    seq::PresetTiming timing;
};

namespace detail {

inline std::vector<seq::Sequence> preset_list(const std::vector<std::string>& names, int size,
                                              const TissueTable& table,
                                              const seq::PresetTiming& timing) {
    std::vector<seq::Sequence> out;
    for (const auto& n : names) out.push_back(seq::preset(n, size, size, table, timing));
    return out;
}

struct SubjectScore {
    std::vector<double> dice[3], psnr[3], ssim[3];

    void add(const ProbabilityMaps& pred, const ProbabilityMaps& gt) {
        for (int c = 0; c < 3; ++c) {
            dice[c].push_back(metrics::dice(pred.channel(c), gt.channel(c)));
            psnr[c].push_back(metrics::psnr(pred.channel(c), gt.channel(c)));
            ssim[c].push_back(
                metrics::ssim(pred.channel(c), gt.channel(c), pred.width, pred.height));
        }
    }

    void emit(const std::string& config, std::vector<AblationRow>& rows) const {
        const char* names[3] = {"csf", "gm", "wm"};
        for (int c = 0; c < 3; ++c)
            rows.push_back({config, names[c], metrics::aggregate(dice[c]),
                            metrics::aggregate(psnr[c]), metrics::aggregate(ssim[c])});
    }
};

} // namespace detail

enum class AblationKind { contrast_sweep, param_sweep, single_map, loss_domain };

inline AblationKind ablation_kind_from_string(const std::string& s) {
    if (s == "contrast_sweep") return AblationKind::contrast_sweep;
    if (s == "param_sweep") return AblationKind::param_sweep;
    if (s == "single_map") return AblationKind::single_map;
    if (s == "loss_domain") return AblationKind::loss_domain;
    throw invalid_argument_error(
        "ablate: unknown kind '" + s +
        "' (valid: contrast_sweep param_sweep single_map loss_domain)");
}

// Re-runs the estimation under one family of configurations and tabulates
// DICE/PSNR/SSIM per tissue, mean +/- std across the synthetic subjects.
inline std::vector<AblationRow> run_ablation(AblationKind kind, const AblationSetup& setup) {
    if (setup.subject_seeds.empty()) throw invalid_argument_error("ablate: empty subject set");
    std::vector<AblationRow> rows;

    auto observe = [&](const ProbabilityMaps& gt, const std::vector<seq::Sequence>& seqs) {
        return sim::simulate_stack(gt, setup.table, seqs, setup.simopt);
    };

    auto estimate_with = [&](const ProbabilityMaps& gt, const std::vector<seq::Sequence>& seqs,
                             const Parameterization& param, const LossSpec& ls,
                             const OptimConfig& cfg, const ProbabilityMaps* init) {
        sim::ContrastStack obs = observe(gt, seqs);
        return estimate(obs, seqs, setup.table, param, ls, cfg, setup.simopt, init).maps;
    };

    if (kind == AblationKind::contrast_sweep) {
        seq::PresetTiming t1 = setup.timing;
        t1.echo_times = {setup.timing.echo_times.front()};
        std::vector<std::pair<std::string, seq::PresetTiming>> cfgs = {
            {"t1ir_1_contrast", t1}, {"t1ir_4_contrasts", setup.timing}};
        for (auto& [name, timing] : cfgs) {
            detail::SubjectScore score;
            for (uint64_t seed : setup.subject_seeds) {
                ProbabilityMaps gt = synth_phantom(seed, setup.size);
                auto seqs = detail::preset_list({"t1ir"}, setup.size, setup.table, timing);
                score.add(estimate_with(gt, seqs, DirectPixel{}, setup.lossspec, setup.optim,
                                        nullptr),
                          gt);
            }
            score.emit(name, rows);
        }
        detail::SubjectScore score;
        for (uint64_t seed : setup.subject_seeds) {
            ProbabilityMaps gt = synth_phantom(seed, setup.size);
            auto seqs =
                detail::preset_list(seq::preset_names(), setup.size, setup.table, setup.timing);
            score.add(
                estimate_with(gt, seqs, DirectPixel{}, setup.lossspec, setup.optim, nullptr), gt);
        }
        score.emit("all_sequences_24_contrasts", rows);
    } else if (kind == AblationKind::param_sweep) {
        auto seqs_for = [&] {
            return detail::preset_list(seq::preset_names(), setup.size, setup.table,
                                       setup.timing);
        };
        for (const std::string mode : {"direct_pixel", "linear_coefficients", "scalar_coefficient"}) {
            detail::SubjectScore score;
            for (uint64_t seed : setup.subject_seeds) {
                ProbabilityMaps gt = synth_phantom(seed, setup.size);
                Parameterization param = DirectPixel{};
                if (mode != "direct_pixel") {
                    // leave-one-out basis from the other subjects
                    LinearAtlas atlas;
                    for (uint64_t other : setup.subject_seeds)
                        if (other != seed) atlas.basis.push_back(synth_phantom(other, setup.size));
                    if (atlas.basis.empty())
                        atlas.basis.push_back(synth_phantom(seed + 1, setup.size));
                    if (mode == "linear_coefficients") {
                        param = std::move(atlas);
                    } else {
                        ScalarPerMap scalar;
                        scalar.reference = ProbabilityMaps(setup.size, setup.size);
                        for (int c = 0; c < 3; ++c)
                            for (size_t i = 0; i < scalar.reference.npix(); ++i) {
                                double acc = 0;
                                for (const auto& b : atlas.basis) acc += b.channel(c)[i];
                                scalar.reference.channel(c)[i] = acc / double(atlas.basis.size());
                            }
                        param = std::move(scalar);
                    }
                }
                score.add(
                    estimate_with(gt, seqs_for(), param, setup.lossspec, setup.optim, nullptr),
                    gt);
            }
            score.emit(mode, rows);
        }
    } else if (kind == AblationKind::single_map) {
        auto seqs =
            detail::preset_list(seq::preset_names(), setup.size, setup.table, setup.timing);
        struct Cfg {
            std::string name;
            unsigned mask;
        };
        for (Cfg cfg : {Cfg{"all_three", free_all}, Cfg{"csf_only", free_csf},
                        Cfg{"gm_only", free_gm}, Cfg{"wm_only", free_wm}}) {
            detail::SubjectScore score;
            for (uint64_t seed : setup.subject_seeds) {
                ProbabilityMaps gt = synth_phantom(seed, setup.size);
                OptimConfig oc = setup.optim;
                oc.free_maps = cfg.mask;
                const ProbabilityMaps* init = nullptr;
                ProbabilityMaps mixed_init;
                if (cfg.mask != free_all) {
                    // frozen channels are fixed to ground truth; the free one
                    // starts at the flat 1/3 initialization
                    mixed_init = gt;
                    for (int c = 0; c < 3; ++c)
                        if (cfg.mask & (1u << c))
                            std::fill(mixed_init.channel(c).begin(),
                                      mixed_init.channel(c).end(), 1.0 / 3.0);
                    init = &mixed_init;
                }
                score.add(
                    estimate_with(gt, seqs, DirectPixel{}, setup.lossspec, oc, init), gt);
            }
            score.emit(cfg.name, rows);
        }
    } else { // loss_domain
        auto seqs =
            detail::preset_list(seq::preset_names(), setup.size, setup.table, setup.timing);
        for (LossDomain domain : {LossDomain::image, LossDomain::kspace}) {
            detail::SubjectScore score;
            LossSpec ls = setup.lossspec;
            ls.domain = domain;
            for (uint64_t seed : setup.subject_seeds) {
                ProbabilityMaps gt = synth_phantom(seed, setup.size);
                score.add(estimate_with(gt, seqs, DirectPixel{}, ls, setup.optim, nullptr), gt);
            }
            score.emit(domain == LossDomain::image ? "image_space" : "k_space", rows);
        }
    }
    return rows;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::string out = "config,tissue,dice,psnr,ssim\n";
    for (const auto& r : rows)
        out += r.config + "," + r.tissue + "," + r.dice.format() + "," + r.psnr.format() + "," +
               r.ssim.format() + "\n";
    return out;
}

} // namespace bmaptk::opt
