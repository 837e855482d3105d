#include "ftdrive/analysis.hpp"
#include "ftdrive/scenario.hpp"
#include "ftdrive/simulator.hpp"
#include "ftdrive/trace.hpp"

#include "../oracles/dft.hpp"
#include "../support/gen.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

using namespace ftdrive;
using namespace ftdrive::sim;

namespace {

constexpr double kPi = std::numbers::pi;
const std::filesystem::path kScenarios = std::filesystem::path(FTDRIVE_SOURCE_DIR) / "scenarios";

std::string csv_of(const Trace& t) {
    std::ostringstream out;
    write_trace_csv(out, t);
    return out.str();
}

Trace rotating_trace(double f, double amp, double duration, double dt) {
    Trace tr;
    for (int k = 0; k * dt <= duration; ++k) {
        TraceRecord r;
        r.t = k * dt;
        const double th = 2 * kPi * f * r.t;
        r.ia = amp * std::cos(th);
        r.ib = amp * std::cos(th - 2 * kPi / 3);
        r.ic = amp * std::cos(th + 2 * kPi / 3);
        r.psis_alpha = 0.6 * std::cos(th);
        r.psis_beta = 0.6 * std::sin(th);
        tr.push_back(r);
    }
    return tr;
}

} // namespace

TEST_CASE("scenario parsing and validation") {
    const Scenario s = parse_scenario(R"({"schema": 1, "name": "x", "profiles": {"speed_ref": 50}})");
    CHECK(s.name == "x");
    CHECK(s.speed_ref.at(3.0) == 50.0);
    CHECK(s.control_ratio() == 4);
    CHECK_THROWS_AS(parse_scenario(R"({"schema": 2})"), InvalidConfiguration);
    CHECK_THROWS_AS(parse_scenario(R"({"schema": 1, "bogus": 1})"), InvalidConfiguration);
    CHECK_THROWS_AS(parse_scenario(R"({"schema": 1, "sim": {"dt": 7e-6}})"), InvalidConfiguration);
    CHECK_THROWS_AS(parse_scenario("{"), InvalidConfiguration);
    CHECK_THROWS_AS(
        parse_scenario(R"({"schema": 1, "faults": [{"time": 1, "target": "leg_a", "kind": "open_circuit"}]})"),
        InvalidConfiguration);

    for (const auto& entry : std::filesystem::directory_iterator(kScenarios)) {
        CAPTURE(entry.path().string());
        const Scenario a = load_scenario(entry.path());
        CHECK_NOTHROW(a.validate());
        const std::string once = scenario_to_json(a);
        CHECK(scenario_to_json(parse_scenario(once)) == once);
    }
}

TEST_CASE("profiles interpolate and hold") {
    Profile p{{{0.5, 0.0}, {0.7, 10.0}}};
    CHECK(p.at(0.0) == 0.0);
    CHECK(p.at(0.6) == doctest::Approx(5.0));
    CHECK(p.at(9.0) == 10.0);
}

TEST_CASE("trace CSV round trip") {
    ftest::Gen g(701);
    Trace tr;
    for (int k = 0; k < 50; ++k) {
        TraceRecord r;
        r.t = k * 5e-5;
        r.ia = g.uniform(-10, 10);
        r.ib = g.uniform(-10, 10) * 1e-17;
        r.ic = 1.0 / 3.0;
        r.i_mid = -0.0;
        r.v_dc1 = g.uniform(140, 160);
        r.psis_alpha = g.uniform(-1, 1);
        r.te = 1e300;
        r.vector_index = g.integer(-1, 9);
        r.mode = k < 25 ? "Normal" : "PostFault";
        r.health = "HHHHHHHH";
        tr.push_back(r);
    }
    const auto path = std::filesystem::temp_directory_path() / "ftdrive_trace_roundtrip.csv";
    write_trace_csv(path, tr);
    const Trace back = read_trace_csv(path);
    std::filesystem::remove(path);
    CHECK(csv_of(back) == csv_of(tr));
    REQUIRE(back.size() == tr.size());
    CHECK(back[7].ia == tr[7].ia);
    CHECK(back[7].ib == tr[7].ib);
    CHECK(back[30].mode == "PostFault");

    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(1.0 / 3.0) == "0.3333333333333333");
    CHECK(std::stod(format_double(2.0 / 7.0)) == 2.0 / 7.0);
    CHECK(trace_columns().front() == "t");

    const auto bad = std::filesystem::temp_directory_path() / "ftdrive_trace_bad.csv";
    {
        std::ofstream out(bad);
        out << "t,nope\n0,1\n";
    }
    CHECK_THROWS_AS(read_trace_csv(bad), InvalidArgument);
    std::filesystem::remove(bad);
}

TEST_CASE("fundamental phasor agrees with the dense transform") {
    ftest::Gen g(702);
    for (int i = 0; i < 100; ++i) {
        const std::size_t n = static_cast<std::size_t>(g.integer(16, 256));
        std::vector<double> x(n, g.uniform(-2, 2));
        for (int k = 1; k <= 7; ++k) {
            const double a = g.uniform(0, 5);
            const double ph = g.uniform(-kPi, kPi);
            for (std::size_t j = 0; j < n; ++j) x[j] += a * std::cos(2 * kPi * k * static_cast<double>(j) / n - ph);
        }
        const Phasor p = fundamental_phasor(x);
        const oracle::Bin b = oracle::fundamental(x);
        CHECK(std::fabs(p.amplitude - b.amplitude) < 1e-9);
        CHECK(std::abs(p.complex() - std::polar(b.amplitude, -b.phase)) < 1e-9);
    }
    CHECK_THROWS(fundamental_phasor(std::vector<double>(8, 1.0)));
}

TEST_CASE("symmetrical components") {
    const Complex a = std::polar(1.0, 2 * kPi / 3);
    const SequenceComponents bal = sequence_components({Complex{5, 0}, 5.0 * a * a, 5.0 * a});
    CHECK(std::abs(bal.positive - Complex{5, 0}) < 1e-12);
    CHECK(std::abs(bal.negative) < 1e-12);
    CHECK(std::abs(bal.zero) < 1e-12);

    const SequenceComponents swapped = sequence_components({Complex{5, 0}, 5.0 * a, 5.0 * a * a});
    CHECK(std::abs(swapped.negative - Complex{5, 0}) < 1e-12);
    CHECK(std::abs(swapped.positive) < 1e-12);

    // Two equal and opposite phases (one phase open): |I+| = |I-| = I/sqrt(3).
    const SequenceComponents open = sequence_components({Complex{0, 0}, Complex{1, 0}, Complex{-1, 0}});
    CHECK(std::abs(open.positive) == doctest::Approx(1 / std::sqrt(3.0)).epsilon(1e-12));
    CHECK(std::abs(open.negative) == doctest::Approx(1 / std::sqrt(3.0)).epsilon(1e-12));

    ftest::Gen g(703);
    for (int i = 0; i < 1000; ++i) {
        std::array<Complex, 3> x;
        for (auto& c : x) c = Complex{g.uniform(-10, 10), g.uniform(-10, 10)};
        const auto y = from_sequence(sequence_components(x));
        for (int k = 0; k < 3; ++k) CHECK(std::abs(y[static_cast<std::size_t>(k)] - x[static_cast<std::size_t>(k)]) < 1e-12);
    }
}

TEST_CASE("flux locus circularity") {
    std::vector<AlphaBeta> circle, ellipse;
    for (int k = 0; k <= 720; ++k) {
        const double th = 2 * kPi * k / 720.0;
        circle.push_back({0.6 * std::cos(th), 0.6 * std::sin(th)});
        ellipse.push_back({0.9 * std::cos(th), 0.5 * std::sin(th)});
    }
    CHECK(flux_locus_circularity(circle) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(flux_locus_circularity(ellipse) == doctest::Approx(0.9 / 0.5).epsilon(1e-9));
    const std::vector<AlphaBeta> arc(circle.begin(), circle.begin() + 300);
    CHECK_THROWS_AS(flux_locus_circularity(arc), InsufficientData);
}

TEST_CASE("fundamental frequency estimate") {
    const Trace tr = rotating_trace(37.0, 5.0, 0.5, 5e-5);
    CHECK(estimate_f1(tr, 0.1, 0.4) == doctest::Approx(37.0).epsilon(1e-6));
    Trace no_flux = tr;
    for (auto& r : no_flux) r.psis_alpha = r.psis_beta = 0.0;
    CHECK(estimate_f1(no_flux, 0.1, 0.4) == doctest::Approx(37.0).epsilon(1e-3));

    const WindowAnalysis w = analyze_window(tr, 0.1, 0.4, 0.6);
    CHECK(w.negative_ratio < 1e-6);
    CHECK(w.flux_error_mean < 1e-12);
    CHECK(w.amplitude[0] == doctest::Approx(5.0).epsilon(1e-4));
    REQUIRE(w.circularity);
    CHECK(*w.circularity == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("zero-length run") {
    Scenario s;
    s.sim.duration = 0.0;
    const RunResult r = run_scenario(s);
    CHECK(r.trace.size() <= 1);
    CHECK_FALSE(r.summary.aborted);
}

TEST_CASE("runs are bit-deterministic") {
    Scenario s = load_scenario(kScenarios / "leg_a_strategy.json");
    s.sim.duration = 0.3;
    s.sim.analysis = {};
    s.faults[0].time = 0.2;
    const RunResult a = run_scenario(s);
    const RunResult b = run_scenario(s);
    CHECK_FALSE(a.summary.aborted);
    CHECK(csv_of(a.trace) == csv_of(b.trace));
    CHECK(summary_to_json(a.summary) == summary_to_json(b.summary));
}

TEST_CASE("Kirchhoff at the machine terminals") {
    Scenario s = load_scenario(kScenarios / "leg_a_strategy.json");
    s.sim.duration = 0.6;
    s.sim.analysis = {};
    s.faults[0].time = 0.4;
    const RunResult r = run_scenario(s);
    REQUIRE_FALSE(r.summary.aborted);
    int normal = 0;
    int post = 0;
    double worst_sum = 0.0;
    double worst_mid = 0.0;
    for (const auto& rec : r.trace) {
        if (rec.mode == "Normal") {
            ++normal;
            worst_sum = std::max(worst_sum, std::fabs(rec.ia + rec.ib + rec.ic));
        } else if (rec.mode == "PostFault") {
            ++post;
            worst_mid = std::max(worst_mid, std::fabs(rec.i_mid + rec.ib + rec.ic));
            CHECK(std::fabs(rec.ia) < 1e-9);
        }
    }
    CHECK(normal > 1000);
    CHECK(post > 1000);
    CHECK(worst_sum < 1e-9);
    CHECK(worst_mid < 1e-9);
}

TEST_CASE("fault events reach the devices at the first step after their time") {
    Scenario s = load_scenario(kScenarios / "oc_S1.json");
    s.sim.duration = 0.3;
    s.sim.decimation = 1;
    s.faults[0].time = 0.2000025;
    const RunResult r = run_scenario(s);
    REQUIRE_FALSE(r.summary.aborted);
    for (const auto& rec : r.trace) {
        if (rec.t < s.faults[0].time) CHECK(rec.health[0] == 'H');
        if (rec.t >= 0.200005) CHECK(rec.health[0] != 'H');
    }
}

TEST_CASE("healthy drive reaches its speed reference") {
    Scenario s = load_scenario(kScenarios / "healthy_100.json");
    s.sim.duration = 1.0;
    s.sim.analysis.prefault = {{0.7, 1.0}};
    s.sim.analysis.postfault = {{0.7, 1.0}};
    const RunResult r = run_scenario(s);
    REQUIRE_FALSE(r.summary.aborted);
    REQUIRE(r.summary.settling_time);
    CHECK(*r.summary.settling_time < 0.7);
    CHECK(r.summary.final_speed == doctest::Approx(100.0).epsilon(0.02));
    CHECK(r.summary.false_positives == 0);
    REQUIRE(r.summary.analysis);
    CHECK(r.summary.analysis->prefault.negative_ratio < 0.01);
    CHECK(r.summary.analysis->prefault.flux_error_mean < 0.02 * 0.6);
}

TEST_CASE("delay compensation keeps the long control period usable") {
    Scenario base = load_scenario(kScenarios / "experimental_100us.json");
    base.faults.clear();
    base.sim.duration = 1.2;
    base.sim.analysis = {};
    base.controller.computation_delay = true;
    auto ripple = [](const Trace& tr) {
        double s = 0.0, s2 = 0.0;
        int n = 0;
        for (const auto& r : tr)
            if (r.t >= 0.9) {
                s += r.te;
                s2 += r.te * r.te;
                ++n;
            }
        const double m = s / n;
        return std::sqrt(std::max(0.0, s2 / n - m * m));
    };
    Scenario compensated = base;
    compensated.controller.mpc.delay_compensation = true;
    Scenario uncompensated = base;
    uncompensated.controller.mpc.delay_compensation = false;
    const RunResult a = run_scenario(compensated);
    const RunResult b = run_scenario(uncompensated);
    REQUIRE_FALSE(a.summary.aborted);
    REQUIRE_FALSE(b.summary.aborted);
    CHECK(ripple(a.trace) < ripple(b.trace));
}
