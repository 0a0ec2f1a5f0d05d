#include <catch_amalgamated.hpp>

#include "bmaptk/sequence.hpp"
#include "bmaptk/simulator.hpp"

using namespace bmaptk;
using namespace bmaptk::seq;

TEST_CASE("adc counting contract", "[sequence]") {
    TissueTable table;
    Sequence s = preset("me_flash", 8, 8, table);
    CHECK(s.adc_count() == 8 * 8 * 4);
    CHECK(s.contrasts() == 4);

    // every preset provides nx*ny samples per contrast
    for (const auto& name : preset_names()) {
        Sequence p = preset(name, 4, 4, table);
        CHECK(p.adc_count() == size_t(4 * 4 * p.contrasts()));
        CHECK_NOTHROW(p.validate());
    }
}

TEST_CASE("me_flash ships four echoes", "[sequence]") {
    Sequence s = preset("me_flash", 8, 8, TissueTable{});
    CHECK(s.echo_times.size() == 4);
    CHECK(s.echo_times == std::vector<double>{4.0, 9.0, 14.0, 19.0});
}

TEST_CASE("presets are pure functions of their inputs", "[sequence]") {
    TissueTable table;
    for (const auto& name : preset_names())
        CHECK(serialize(preset(name, 8, 8, table)) == serialize(preset(name, 8, 8, table)));
}

TEST_CASE("unknown preset lists the valid names", "[sequence]") {
    CHECK_THROWS_WITH(preset("t9000", 8, 8, TissueTable{}),
                      Catch::Matchers::ContainsSubstring("t1ir me_flash t2prep dir flair dwi"));
}

TEST_CASE("echoes must fit inside tr", "[sequence]") {
    CHECK_THROWS_AS(build_flash(8, 8, 0.3, 20.0, {4.0, 25.0}, PrepNone{}),
                    invalid_argument_error);
    CHECK_THROWS_AS(build_flash(8, 8, 0.3, 20.0, {}, PrepNone{}), invalid_argument_error);
}

TEST_CASE("flair TI nulls the table CSF, DIR nulls CSF and WM", "[sequence]") {
    TissueTable table;
    Sequence flair = preset("flair", 4, 4, table);
    const auto* inv = std::get_if<PrepInversion>(&flair.prep);
    REQUIRE(inv);
    CHECK(inv->ti == Catch::Approx(std::log(2.0) * table.csf.t1));
    CHECK(1.0 - 2.0 * std::exp(-inv->ti / table.csf.t1) == Catch::Approx(0.0).margin(1e-12));

    auto [ti1, ti2] = solve_dir_ti(table.csf.t1, table.wm.t1);
    CHECK(std::abs(double_ir_mz(ti1, ti2, table.csf.t1)) < 2e-4);
    CHECK(std::abs(double_ir_mz(ti1, ti2, table.wm.t1)) < 2e-4);
    CHECK(ti1 > ti2);
}

TEST_CASE("dwi preset carries the diffusion prep", "[sequence]") {
    Sequence s = preset("dwi", 4, 4, TissueTable{});
    int diffuse_events = 0;
    for (const auto& e : s.events)
        if (std::holds_alternative<Diffuse>(e)) ++diffuse_events;
    CHECK(diffuse_events == 4); // one per line
    const auto* prep = std::get_if<PrepDiffusion>(&s.prep);
    REQUIRE(prep);
    CHECK(prep->b == 1000.0);
}

TEST_CASE("phase ordering flag permutes adc lines", "[sequence]") {
    BuildOptions lin, cen;
    cen.phase_order = PhaseOrder::centric;
    Sequence a = build_flash(4, 4, 0.3, 20.0, {4.0}, PrepInversion{800.0}, lin);
    Sequence b = build_flash(4, 4, 0.3, 20.0, {4.0}, PrepInversion{800.0}, cen);
    auto first_line = [](const Sequence& s) {
        for (const auto& e : s.events)
            if (const Adc* adc = std::get_if<Adc>(&e)) return adc->line;
        return -1;
    };
    CHECK(first_line(a) == 0);
    CHECK(first_line(b) == 2); // center-out starts at ny/2
    CHECK_NOTHROW(b.validate());
}

TEST_CASE("adc sample timing brackets the echo", "[sequence]") {
    Sequence s = preset("me_flash", 8, 8, TissueTable{});
    for (const auto& e : s.events)
        if (const Adc* a = std::get_if<Adc>(&e)) {
            double te = s.echo_times[a->contrast];
            CHECK(a->t_since_excitation == Catch::Approx(te + (a->sample - 4) * 0.01));
        }
}

TEST_CASE("serialized form is line oriented and parseable", "[sequence]") {
    Sequence s = preset("t1ir", 2, 2, TissueTable{});
    std::string text = serialize(s);
    std::istringstream ss(text);
    std::string line;
    size_t pulses = 0, adcs = 0, waits = 0;
    while (std::getline(ss, line)) {
        REQUIRE(!line.empty());
        std::string word = line.substr(0, line.find(' '));
        bool known = word == "sequence" || word == "matrix" || word == "tr" || word == "flip" ||
                     word == "echoes" || word == "pulse" || word == "wait" || word == "grad" ||
                     word == "spoil" || word == "adc" || word == "diffuse";
        REQUIRE(known);
        if (word == "pulse") ++pulses;
        if (word == "adc") ++adcs;
        if (word == "wait") ++waits;
    }
    CHECK(pulses == 2 * 2); // inversion + excitation per line
    CHECK(adcs == s.adc_count());
    CHECK(waits == 2 * 2); // TI wait + recovery per line
}

// IR null behavior through the simulator: the DC sample of a single-tissue
// phantom flips sign across TI = T1 ln2 and crosses zero there.
namespace {

double dc_signed_signal(double ti, double t1, int matrix = 2) {
    TissueTable table;
    table.gm.t1 = t1; // single-tissue phantom built from gm
    ProbabilityMaps maps(matrix, matrix);
    std::fill(maps.gm.begin(), maps.gm.end(), 1.0);
    QuantitativeMaps q = mix(maps, table);
    seq::BuildOptions opt;
    opt.max_t1 = table.max_t1();
    Sequence s = build_flash(matrix, matrix, 15.0 * pi / 180.0, 20.0, {4.0},
                             PrepInversion{ti}, opt);
    sim::SimOptions so;
    so.mode = sim::Mode::idealized;
    sim::KSpace k = sim::simulate(q, s, so);
    // rotate the demodulated -i phase away: real part carries the sign of Mz
    cplx dc = k.contrasts[0](matrix / 2, matrix / 2);
    return std::real(cplx(0, 1) * dc);
}

} // namespace

TEST_CASE("inversion recovery null sits at T1 ln2", "[sequence][slow]") {
    double t1 = 1000.0;
    CHECK(dc_signed_signal(0.5 * t1, t1) < 0.0);
    CHECK(dc_signed_signal(1.4 * t1, t1) > 0.0);

    double lo = 0.5 * t1, hi = 1.4 * t1;
    while (hi - lo > 1.0) {
        double mid = 0.5 * (lo + hi);
        (dc_signed_signal(mid, t1) < 0 ? lo : hi) = mid;
    }
    double null_ti = 0.5 * (lo + hi);
    CHECK(std::abs(null_ti - t1 * std::log(2.0)) <= 1.0);
}
