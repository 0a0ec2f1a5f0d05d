#pragma once

#include <cmath>
#include <numeric>
#include <optional>
#include <sstream>
#include <variant>

#include "bmaptk/phantom.hpp"

namespace bmaptk::seq {

enum class GradAxis { readout, phase };

struct Pulse {
    double alpha = 0; // flip, rad
    double phi = 0;   // RF phase, rad
};
struct Wait {
    double t = 0; // ms
};
struct Grad {
    int delta_n = 0;
    GradAxis axis = GradAxis::phase;
};
struct Spoil {};
// One k-space sample. line/sample are matrix indices (DC at nx/2, ny/2),
// contrast selects the output image, t_since_excitation drives the T2*
// envelope in intra-readout-decay mode.
struct Adc {
    int line = 0;
    int sample = 0;
    int contrast = 0;
    double t_since_excitation = 0; // ms
};
// Scalar diffusion attenuation e^{-b D} of the whole voxel state.
struct Diffuse {
    double b = 0; // s/mm^2
};

using Event = std::variant<Pulse, Wait, Grad, Spoil, Adc, Diffuse>;

struct PrepNone {};
struct PrepInversion {
    double ti = 0; // ms
};
struct PrepDoubleInversion {
    double ti1 = 0, ti2 = 0; // first/second inversion to excitation, ms
};
struct PrepT2 {
    double tau = 0; // ms
};
struct PrepDiffusion {
    double b = 0; // s/mm^2
};
using PrepModule =
    std::variant<PrepNone, PrepInversion, PrepDoubleInversion, PrepT2, PrepDiffusion>;

struct Sequence {
    std::string name;
    int nx = 0, ny = 0;
    std::vector<Event> events;
    std::vector<double> echo_times; // per contrast, ms, strictly increasing
    double tr = 0;                  // ms
    double flip = 0;                // rad
    PrepModule prep = PrepNone{};

    int contrasts() const { return int(echo_times.size()); }
    size_t adc_count() const {
        size_t n = 0;
        for (const auto& e : events)
            if (std::holds_alternative<Adc>(e)) ++n;
        return n;
    }
    int grad_event_count() const {
        int n = 0;
        for (const auto& e : events)
            if (std::holds_alternative<Grad>(e)) ++n;
        return n;
    }
    // Maximal reachable configuration order plus margin.
    int default_capacity() const { return grad_event_count() + 2; }

    void validate() const {
        if (nx < 1 || ny < 1) throw invalid_argument_error("sequence: bad matrix size");
        for (size_t i = 1; i < echo_times.size(); ++i)
            if (!(echo_times[i] > echo_times[i - 1]))
                throw invalid_argument_error("sequence: echo times must be strictly increasing");
        std::vector<size_t> per_contrast(echo_times.size(), 0);
        for (const auto& e : events)
            if (const Adc* a = std::get_if<Adc>(&e)) {
                if (a->line < 0 || a->line >= ny || a->sample < 0 || a->sample >= nx)
                    throw invalid_argument_error("sequence: adc index outside matrix");
                if (a->contrast < 0 || a->contrast >= contrasts())
                    throw invalid_argument_error("sequence: adc contrast out of range");
                ++per_contrast[a->contrast];
            }
        for (size_t c = 0; c < per_contrast.size(); ++c)
            if (per_contrast[c] != size_t(nx) * ny)
                throw invalid_argument_error("sequence: contrast " + std::to_string(c) + " has " +
                                             std::to_string(per_contrast[c]) + " adc samples, want " +
                                             std::to_string(size_t(nx) * ny));
    }
};

enum class PhaseOrder { linear, centric };

struct BuildOptions {
    double adc_dwell = 0.01;             // ms per readout sample
    double rf_spoil_increment = 117.0 * pi / 180.0;
    PhaseOrder phase_order = PhaseOrder::linear;
    int dummy_repetitions = -1;          // -1: ceil(5*maxT1/TR) for unprepped sequences
    // Recovery between prepped shots. 25*maxT1 leaves every shot's starting
    // longitudinal state within ~1e-11 of equilibrium, so each line sees the
    // same contrast; a Wait costs one relax call regardless of duration.
    double recovery = -1;                // ms; -1: 25*maxT1
    double max_t1 = 4000.0;              // drives the two defaults above
};

namespace detail {

inline int centric_line(int i, int ny) {
    // 0 -> ny/2, then alternate outward: ny/2-1, ny/2+1, ...
    int c = ny / 2;
    int off = (i + 1) / 2;
    return i % 2 == 0 ? std::min(c + off, ny - 1) : std::max(c - off, 0);
}

// Quadratic RF spoiling phase for the j-th excitation.
inline double rf_spoil_phase(long j, double increment) {
    double p = std::fmod(0.5 * double(j) * double(j + 1) * increment, 2 * pi);
    return p;
}

struct ShotEmitter {
    Sequence& s;
    const BuildOptions& opt;
    long excitation_count = 0;

    // One excitation followed by one readout row per listed echo.
    void excite_and_read(double flip, const std::vector<std::pair<int, double>>& contrast_te,
                         int line) {
        double phi = rf_spoil_phase(excitation_count++, opt.rf_spoil_increment);
        s.events.push_back(Pulse{flip, phi});
        for (auto [contrast, te] : contrast_te)
            for (int x = 0; x < s.nx; ++x)
                s.events.push_back(Adc{line, x, contrast, te + (x - s.nx / 2) * opt.adc_dwell});
        s.events.push_back(Grad{1, GradAxis::phase});
        s.events.push_back(Spoil{});
    }
};

} // namespace detail

// Spoiled gradient-echo (FLASH) with optional preparation. Unprepped
// sequences run dummy repetitions into steady state and then acquire one
// line per TR, all echoes per excitation. Prepped sequences play the
// preparation before every line and wait out a full recovery period after
// it, so each line sees an identical, freshly prepared magnetization.
inline Sequence build_flash(int nx, int ny, double flip, double tr,
                            std::vector<double> echo_times, PrepModule prep,
                            const BuildOptions& opt = {}) {
    if (echo_times.empty() || echo_times.size() > 8)
        throw invalid_argument_error("build_flash: need 1..8 echo times");
    for (double te : echo_times)
        if (!(te < tr))
            throw invalid_argument_error("build_flash: echo time " + std::to_string(te) +
                                         " ms does not fit inside tr " + std::to_string(tr));
    Sequence s;
    s.nx = nx;
    s.ny = ny;
    s.flip = flip;
    s.tr = tr;
    s.echo_times = std::move(echo_times);
    s.prep = prep;
    s.name = "flash";

    const bool prepped = !std::holds_alternative<PrepNone>(prep);
    const double recovery = opt.recovery >= 0 ? opt.recovery : 25.0 * opt.max_t1;
    detail::ShotEmitter emit{s, opt};

    std::vector<std::pair<int, double>> all_echoes;
    for (int c = 0; c < int(s.echo_times.size()); ++c) all_echoes.push_back({c, s.echo_times[c]});

    auto emit_prep = [&](int contrast) {
        std::visit(
            [&](auto&& p) {
                using P = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<P, PrepInversion>) {
                    s.events.push_back(Pulse{pi, 0.0});
                    s.events.push_back(Wait{p.ti});
                } else if constexpr (std::is_same_v<P, PrepDoubleInversion>) {
                    if (!(p.ti1 > p.ti2))
                        throw invalid_argument_error("build_flash: need ti1 > ti2");
                    s.events.push_back(Pulse{pi, 0.0});
                    s.events.push_back(Wait{p.ti1 - p.ti2});
                    s.events.push_back(Pulse{pi, 0.0});
                    s.events.push_back(Wait{p.ti2});
                } else if constexpr (std::is_same_v<P, PrepT2>) {
                    // tau scales with contrast index: tau, 2tau, 3tau, ...
                    s.events.push_back(Pulse{pi / 2, 0.0});
                    s.events.push_back(Wait{p.tau * (contrast + 1)});
                    s.events.push_back(Pulse{-pi / 2, 0.0});
                    s.events.push_back(Spoil{});
                } else if constexpr (std::is_same_v<P, PrepDiffusion>) {
                    s.events.push_back(Diffuse{p.b});
                }
            },
            prep);
    };

    if (!prepped) {
        int dummies = opt.dummy_repetitions >= 0 ? opt.dummy_repetitions
                                                 : int(std::ceil(5.0 * opt.max_t1 / tr));
        for (int i = 0; i < dummies; ++i) {
            double phi = detail::rf_spoil_phase(emit.excitation_count++, opt.rf_spoil_increment);
            s.events.push_back(Pulse{flip, phi});
            s.events.push_back(Spoil{});
            s.events.push_back(Wait{tr});
        }
        for (int i = 0; i < ny; ++i) {
            int line = opt.phase_order == PhaseOrder::linear ? i : detail::centric_line(i, ny);
            emit.excite_and_read(flip, all_echoes, line);
            s.events.push_back(Wait{tr});
        }
    } else if (std::holds_alternative<PrepT2>(prep)) {
        // One acquisition block per contrast: each uses its own prep delay
        // and reads only its own echo.
        for (int c = 0; c < int(s.echo_times.size()); ++c)
            for (int i = 0; i < ny; ++i) {
                int line = opt.phase_order == PhaseOrder::linear ? i : detail::centric_line(i, ny);
                emit_prep(c);
                emit.excite_and_read(flip, {{c, s.echo_times[c]}}, line);
                s.events.push_back(Wait{recovery});
            }
    } else {
        for (int i = 0; i < ny; ++i) {
            int line = opt.phase_order == PhaseOrder::linear ? i : detail::centric_line(i, ny);
            emit_prep(0);
            emit.excite_and_read(flip, all_echoes, line);
            s.events.push_back(Wait{recovery});
        }
    }

    s.validate();
    return s;
}

// Longitudinal magnetization (units of m0) at excitation after a double
// inversion with full recovery beforehand.
inline double double_ir_mz(double ti1, double ti2, double t1) {
    return 1.0 - 2.0 * std::exp(-ti2 / t1) + 2.0 * std::exp(-ti1 / t1);
}

// Solve (ti1, ti2) so that the double-inversion recovery nulls both tissues.
// Inner closed form gives the ti1 nulling one tissue for a trial ti2; outer
// bisection on ti2 aligns the two tissues' ti1 to 0.1 ms.
inline std::pair<double, double> solve_dir_ti(double t1_a, double t1_b, double tol = 0.1) {
    if (t1_a == t1_b) throw invalid_argument_error("solve_dir_ti: tissues must differ");
    double tshort = std::min(t1_a, t1_b), tlong = std::max(t1_a, t1_b);
    auto ti1_for = [](double ti2, double t1) {
        double u = std::exp(-ti2 / t1) - 0.5; // need e^{-ti1/t1} = -(1/2) + e^{-ti2/t1} ... > 0
        return u > 0 ? -t1 * std::log(u) : std::numeric_limits<double>::infinity();
    };
    // mismatch(ti2) = ti1 demanded by the short-T1 tissue minus by the long one
    auto mismatch = [&](double ti2) { return ti1_for(ti2, tshort) - ti1_for(ti2, tlong); };

    double lo = 1e-3, hi = tshort * std::log(2.0) - 1e-3;
    double flo = mismatch(lo), fhi = mismatch(hi);
    if (!(flo < 0) || !(fhi > 0))
        throw numeric_error("solve_dir_ti: no bracketed double-inversion null");
    while (hi - lo > tol) {
        double mid = 0.5 * (lo + hi);
        (mismatch(mid) < 0 ? lo : hi) = mid;
    }
    double ti2 = 0.5 * (lo + hi);
    double ti1 = ti1_for(ti2, tlong);
    return {ti1, ti2};
}

struct PresetTiming {
    double flip = 15.0 * pi / 180.0;
    double tr = 20.0;
    std::vector<double> echo_times = {4.0, 9.0, 14.0, 19.0};
    double ti_t1ir = 800.0;
    double t2prep_tau = 40.0; // contrast c uses (c+1)*tau: 40/80/120/160
    double dwi_b = 1000.0;
};

// The six clinical FLASH variants, four contrasts each. FLAIR's TI nulls the
// table's CSF; DIR's two TIs null CSF and WM jointly.
inline Sequence preset(const std::string& name, int nx, int ny, const TissueTable& table,
                       const PresetTiming& timing = {}, BuildOptions opt = {}) {
    opt.max_t1 = table.max_t1();
    Sequence s;
    if (name == "me_flash") {
        s = build_flash(nx, ny, timing.flip, timing.tr, timing.echo_times, PrepNone{}, opt);
    } else if (name == "t1ir") {
        s = build_flash(nx, ny, timing.flip, timing.tr, timing.echo_times,
                        PrepInversion{timing.ti_t1ir}, opt);
    } else if (name == "flair") {
        s = build_flash(nx, ny, timing.flip, timing.tr, timing.echo_times,
                        PrepInversion{std::log(2.0) * table.csf.t1}, opt);
    } else if (name == "dir") {
        auto [ti1, ti2] = solve_dir_ti(table.csf.t1, table.wm.t1);
        s = build_flash(nx, ny, timing.flip, timing.tr, timing.echo_times,
                        PrepDoubleInversion{ti1, ti2}, opt);
    } else if (name == "t2prep") {
        s = build_flash(nx, ny, timing.flip, timing.tr, timing.echo_times,
                        PrepT2{timing.t2prep_tau}, opt);
    } else if (name == "dwi") {
        s = build_flash(nx, ny, timing.flip, timing.tr, timing.echo_times,
                        PrepDiffusion{timing.dwi_b}, opt);
    } else {
        throw invalid_argument_error("preset: unknown sequence '" + name +
                                     "' (valid: t1ir me_flash t2prep dir flair dwi)");
    }
    s.name = name;
    return s;
}

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names = {"t1ir", "me_flash", "t2prep",
                                                   "dir", "flair", "dwi"};
    return names;
}

// Line-oriented text form, one event per line; for inspection and golden tests.
inline std::string serialize(const Sequence& s) {
    std::ostringstream os;
    char buf[160];
    os << "sequence " << s.name << "\n";
    os << "matrix " << s.nx << " " << s.ny << "\n";
    std::snprintf(buf, sizeof buf, "tr %.6g\nflip %.6g\n", s.tr, s.flip);
    os << buf;
    os << "echoes";
    for (double te : s.echo_times) {
        std::snprintf(buf, sizeof buf, " %.6g", te);
        os << buf;
    }
    os << "\n";
    for (const auto& e : s.events) {
        std::visit(
            [&](auto&& ev) {
                using E = std::decay_t<decltype(ev)>;
                if constexpr (std::is_same_v<E, Pulse>)
                    std::snprintf(buf, sizeof buf, "pulse %.9g %.9g\n", ev.alpha, ev.phi);
                else if constexpr (std::is_same_v<E, Wait>)
                    std::snprintf(buf, sizeof buf, "wait %.9g\n", ev.t);
                else if constexpr (std::is_same_v<E, Grad>)
                    std::snprintf(buf, sizeof buf, "grad %d %s\n", ev.delta_n,
                                  ev.axis == GradAxis::phase ? "phase" : "readout");
                else if constexpr (std::is_same_v<E, Spoil>)
                    std::snprintf(buf, sizeof buf, "spoil\n");
                else if constexpr (std::is_same_v<E, Adc>)
                    std::snprintf(buf, sizeof buf, "adc %d %d %d %.9g\n", ev.line, ev.sample,
                                  ev.contrast, ev.t_since_excitation);
                else if constexpr (std::is_same_v<E, Diffuse>)
                    std::snprintf(buf, sizeof buf, "diffuse %.9g\n", ev.b);
                os << buf;
            },
            e);
    }
    return os.str();
}

} // namespace bmaptk::seq
