#include "ftdrive/fault.hpp"

#include "../oracles/dft.hpp"
#include "../support/gen.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>
#include <vector>

using namespace ftdrive;
using namespace ftdrive::fault;
using converter::Device;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> sampled(std::size_t n, auto f) {
    std::vector<double> x(n);
    for (std::size_t j = 0; j < n; ++j) x[j] = f(2 * kPi * static_cast<double>(j) / static_cast<double>(n));
    return x;
}

PhaseChi chi_of(double c, double avg) {
    PhaseChi p;
    p.chi = c;
    p.avg = avg;
    p.amplitude = 1.0;
    return p;
}

bool has_action(const FsmResult& r, ActionKind k, Target t) {
    for (const auto& a : r.actions)
        if (a.kind == k && a.target == t) return true;
    return false;
}

} // namespace

TEST_CASE("target and kind names round trip") {
    for (int i = 0; i <= static_cast<int>(Target::leg_c); ++i) {
        const auto t = static_cast<Target>(i);
        CHECK(parse_target(target_name(t)) == t);
    }
    for (auto k : {FaultKind::open_circuit, FaultKind::short_circuit, FaultKind::leg_open})
        CHECK(parse_kind(kind_name(k)) == k);
    CHECK_THROWS_AS(parse_target("S7"), InvalidArgument);
    CHECK_THROWS_AS(parse_kind("melted"), InvalidArgument);
    CHECK(as_device(Target::S5) == Device::S5);
    CHECK_THROWS_AS(as_device(Target::Q1), InvalidArgument);
    CHECK(target_leg(Target::S4) == Leg::a);
    CHECK(target_leg(Target::leg_c) == Leg::c);
    CHECK_THROWS_AS(target_leg(Target::Q2), InvalidArgument);
}

TEST_CASE("fault schedules are validated") {
    std::vector<FaultEvent> ok{{1.0, Target::S1, FaultKind::open_circuit}, {2.0, Target::Q1, FaultKind::short_circuit},
                               {2.5, Target::leg_b, FaultKind::leg_open}};
    CHECK_NOTHROW(validate_schedule(ok));
    std::vector<FaultEvent> negative{{-0.1, Target::S1, FaultKind::open_circuit}};
    CHECK_THROWS_AS(validate_schedule(negative), InvalidArgument);
    std::vector<FaultEvent> twice{{1.0, Target::S2, FaultKind::open_circuit}, {2.0, Target::S2, FaultKind::short_circuit}};
    CHECK_THROWS_AS(validate_schedule(twice), InvalidArgument);
    std::vector<FaultEvent> bad_leg{{1.0, Target::leg_a, FaultKind::open_circuit}};
    CHECK_THROWS_AS(validate_schedule(bad_leg), InvalidArgument);
    std::vector<FaultEvent> bad_dev{{1.0, Target::S3, FaultKind::leg_open}};
    CHECK_THROWS_AS(validate_schedule(bad_dev), InvalidArgument);
}

TEST_CASE("short-circuit detection event") {
    const FaultEvent f{1.5, Target::S4, FaultKind::short_circuit};
    CHECK(sc_detection_event(f, 0.0) == 1.5);
    CHECK(sc_detection_event(f, 2e-6) == doctest::Approx(1.500002).epsilon(1e-15));
    CHECK_THROWS_AS(sc_detection_event(f, -1e-6), InvalidArgument);
}

TEST_CASE("normalized DC current of reference waveforms") {
    ftest::Gen g(501);
    for (int i = 0; i < 200; ++i) {
        const std::size_t n = 2 * static_cast<std::size_t>(g.integer(8, 128));
        const double a = g.uniform(0.5, 20);
        const double ph = g.uniform(-kPi, kPi);

        const auto sine = sampled(n, [&](double th) { return a * std::sin(th + ph); });
        const PhaseChi s = normalized_dc_current(sine, 1e-3);
        CHECK_FALSE(s.indeterminate);
        CHECK(std::fabs(s.chi) < 1e-10);
        CHECK(s.amplitude == doctest::Approx(a).epsilon(1e-12));

        // Half-wave rectified: mean cot(pi/n)/n, fundamental amplitude 1/2.
        const double expect = 2.0 / std::tan(kPi / static_cast<double>(n)) / static_cast<double>(n);
        const auto pos = sampled(n, [&](double th) { return a * std::max(std::sin(th), 0.0); });
        const PhaseChi p = normalized_dc_current(pos, 1e-3);
        CHECK(p.chi == doctest::Approx(expect).epsilon(1e-10));
        const oracle::Bin b = oracle::fundamental(pos);
        CHECK(p.amplitude == doctest::Approx(b.amplitude).epsilon(1e-10));

        const auto neg = sampled(n, [&](double th) { return a * std::min(std::sin(th), 0.0); });
        CHECK(normalized_dc_current(neg, 1e-3).chi == doctest::Approx(-expect).epsilon(1e-10));
    }
    CHECK(2.0 / std::tan(kPi / 4096) / 4096 == doctest::Approx(2 / kPi).epsilon(1e-6));

    const std::vector<double> dc(64, 3.0);
    const PhaseChi d = normalized_dc_current(dc, 0.05);
    CHECK(d.indeterminate);
    CHECK(d.avg == doctest::Approx(3.0));
    const std::vector<double> zero(64, 0.0);
    CHECK(normalized_dc_current(zero, 0.05).indeterminate);
}

TEST_CASE("detector window must be full") {
    DetectorWindow w;
    w.n = 8;
    for (auto& p : w.phase) p.assign(8, 0.0);
    CHECK_THROWS_AS(normalized_dc_current(w, 0.1), InvalidArgument);
    w.n = 32;
    for (auto& p : w.phase) p.assign(32, 1.0);
    w.phase[2].resize(31);
    CHECK_THROWS_AS(normalized_dc_current(w, 0.1), InvalidArgument);
}

TEST_CASE("open-switch classification examples") {
    Classification c = classify_open_switch({chi_of(-0.6, -1), chi_of(0.1, 1), chi_of(0.2, 1)}, 0.45);
    REQUIRE(c.device);
    CHECK(*c.device == Device::S1);
    c = classify_open_switch({chi_of(0.1, 1), chi_of(0.6, 2), chi_of(-0.2, -1)}, 0.45);
    REQUIRE(c.device);
    CHECK(*c.device == Device::S5);
    c = classify_open_switch({chi_of(0.3, 1), chi_of(-0.3, -1), chi_of(0.0, 0)}, 0.45);
    CHECK_FALSE(c.device);
    CHECK_FALSE(c.multi_fault);
    c = classify_open_switch({chi_of(0.6, 1), chi_of(-0.7, -1), chi_of(0.0, 0)}, 0.45);
    CHECK_FALSE(c.device);
    CHECK(c.multi_fault);
    PhaseChi ind = chi_of(5.0, 1.0);
    ind.indeterminate = true;
    c = classify_open_switch({ind, chi_of(0, 0), chi_of(0, 0)}, 0.45);
    CHECK_FALSE(c.device);
}

TEST_CASE("classification maps the sign of the mean to the open device") {
    ftest::Gen g(502);
    for (int i = 0; i < 1000; ++i) {
        const int k = g.integer(0, 2);
        const double mag = g.uniform(0.46, 3);
        const bool negative = g.coin();
        std::array<PhaseChi, 3> chis;
        for (int q = 0; q < 3; ++q) {
            const double small = g.uniform(-0.44, 0.44);
            chis[static_cast<std::size_t>(q)] = chi_of(small, small);
        }
        const double c = negative ? -mag : mag;
        chis[static_cast<std::size_t>(k)] = chi_of(c, c);
        const Classification r = classify_open_switch(chis, 0.45);
        REQUIRE(r.device);
        const Leg leg = static_cast<Leg>(k);
        CHECK(*r.device == (negative ? converter::upper_device(leg) : converter::lower_device(leg)));
        CHECK(converter::leg_of(*r.device) == leg);
    }
}

TEST_CASE("detector on synthetic currents") {
    const double f = 50.0;
    const double w = 2 * kPi * f;
    const double ts = 1e-4;
    const double amp = 8.0;
    const double t_fault = 0.2;
    DetectorConfig cfg;
    OpenSwitchDetector det(cfg, 0.2);
    std::optional<double> found;
    int false_positives = 0;
    for (int k = 0; k * ts < t_fault + 0.1; ++k) {
        const double t = k * ts;
        Abc i{amp * std::sin(w * t), amp * std::sin(w * t - 2 * kPi / 3), amp * std::sin(w * t + 2 * kPi / 3)};
        i[0] += 0.3 * std::sin(5 * w * t);
        if (t >= t_fault) i[0] = std::min(i[0], 0.0);
        det.push(t, i, w);
        const auto c = det.evaluate(t);
        if (!c) continue;
        if (t < t_fault) {
            if (c->device || c->multi_fault) ++false_positives;
        } else if (!found && c->device) {
            CHECK(*c->device == Device::S1);
            found = t;
        }
    }
    CHECK(det.frequency_estimate() == doctest::Approx(f).epsilon(1e-9));
    CHECK(false_positives == 0);
    REQUIRE(found);
    CHECK(*found - t_fault < 1.5 / f);

    det.reset(1.0);
    CHECK_FALSE(det.evaluate(1.0));
    DetectorConfig bad;
    bad.window_samples = 8;
    CHECK_THROWS_AS(OpenSwitchDetector(bad, 0.1), InvalidArgument);
}

TEST_CASE("detector stays silent below the minimum frequency and before arming") {
    DetectorConfig cfg;
    cfg.arm_time = 0.5;
    OpenSwitchDetector det(cfg, 0.1);
    for (int k = 0; k < 4000; ++k) {
        const double t = k * 1e-4;
        det.push(t, {std::min(std::sin(100 * t), 0.0), 0, 0}, 100.0);
        CHECK_FALSE(det.evaluate(t));
    }
    OpenSwitchDetector slow(DetectorConfig{}, 0.1);
    for (int k = 0; k < 20000; ++k) {
        const double t = k * 1e-4;
        slow.push(t, {std::sin(6 * t), 0, 0}, 6.0);
        CHECK_FALSE(slow.evaluate(t));
    }
}

TEST_CASE("first-stage slope check") {
    CHECK(dcdc_slope_check(100, true, 10) == SlopeVerdict::consistent);
    CHECK(dcdc_slope_check(-100, true, 10) == SlopeVerdict::open_suspect);
    CHECK(dcdc_slope_check(100, false, 10) == SlopeVerdict::short_suspect);
    CHECK(dcdc_slope_check(-100, false, 10) == SlopeVerdict::consistent);
    CHECK(dcdc_slope_check(-5, true, 10) == SlopeVerdict::consistent);
    CHECK(dcdc_slope_check(5, false, 10) == SlopeVerdict::consistent);
    CHECK(verdict_name(SlopeVerdict::open_suspect) == "open_suspect");
}

TEST_CASE("least-squares slope recovers lines exactly") {
    ftest::Gen g(503);
    for (int i = 0; i < 200; ++i) {
        const std::size_t n = static_cast<std::size_t>(g.integer(3, 50));
        const double dt = g.uniform(1e-6, 1e-3);
        const double m = g.uniform(-1e4, 1e4);
        const double c = g.uniform(-10, 10);
        std::vector<double> y(n);
        for (std::size_t k = 0; k < n; ++k) y[k] = c + m * dt * static_cast<double>(k);
        CHECK(estimate_slope(y, dt) == doctest::Approx(m).epsilon(1e-7).scale(1.0));
    }
    CHECK_THROWS_AS(estimate_slope(std::vector<double>{1, 2}, 1e-3), InvalidArgument);
    CHECK_THROWS_AS(estimate_slope(std::vector<double>{1, 2, 3}, 0), InvalidArgument);
}

TEST_CASE("slope monitor needs one full switching period") {
    const double period = 50e-6;
    SlopeMonitor mon(period, 1.0);
    CHECK(mon.update(0.0, -100, true) == SlopeVerdict::consistent);
    CHECK(mon.update(20e-6, 100, false) == SlopeVerdict::consistent);
    CHECK(mon.update(49e-6, -100, true) == SlopeVerdict::consistent);
    CHECK(mon.update(50e-6, -100, true) == SlopeVerdict::open_suspect);
    CHECK(mon.update(60e-6, 100, true) == SlopeVerdict::consistent);

    SlopeMonitor sc(period, 1.0);
    CHECK(sc.update(0.0, 100, false) == SlopeVerdict::consistent);
    CHECK(sc.update(30e-6, 100, true) == SlopeVerdict::consistent);
    CHECK(sc.update(60e-6, 100, false) == SlopeVerdict::short_suspect);
    CHECK_THROWS_AS(SlopeMonitor(0, 1), InvalidArgument);
    CHECK_THROWS_AS(SlopeMonitor(1e-5, -1), InvalidArgument);
}

TEST_CASE("synthesized inductor waveform") {
    InductorWaveform w{20e3, 0.25, 1e4, 2e4};
    CHECK(gate_command(w, 0.0));
    CHECK(gate_command(w, 12e-6));
    CHECK_FALSE(gate_command(w, 13e-6));
    CHECK(gate_command(w, 50e-6 + 1e-9));
    using converter::DeviceHealth;
    CHECK(inductor_slope(w, true, DeviceHealth::healthy) == 1e4);
    CHECK(inductor_slope(w, false, DeviceHealth::healthy) == -2e4);
    CHECK(inductor_slope(w, true, DeviceHealth::open_fault) == -2e4);
    CHECK(inductor_slope(w, false, DeviceHealth::short_fault) == 1e4);
    SlopeMonitor mon(1 / w.switching_frequency, 1e3);
    SlopeVerdict v = SlopeVerdict::consistent;
    for (int k = 0; k < 200 && v == SlopeVerdict::consistent; ++k) {
        const double t = k * 1e-6;
        const bool gate = gate_command(w, t);
        v = mon.update(t, inductor_slope(w, gate, DeviceHealth::open_fault), gate);
    }
    CHECK(v == SlopeVerdict::open_suspect);
}

TEST_CASE("state machine: open circuit goes to postfault") {
    const FsmEvent e{EventKind::open_circuit_detected, Target::S1};
    const FsmResult r = fsm_step(FsmState{}, std::span(&e, 1), 2.0);
    CHECK(r.state.mode.kind == ModeKind::postfault);
    REQUIRE(r.state.mode.leg);
    CHECK(*r.state.mode.leg == Leg::a);
    CHECK(r.state.rn_closed);
    CHECK(has_action(r, ActionKind::gate_block, Target::S4));
    CHECK(has_action(r, ActionKind::close_rn, Target::leg_a));
    CHECK(has_action(r, ActionKind::set_postfault_table, Target::leg_a));
    REQUIRE(r.log.size() == 3);
    CHECK(r.log[0].mode == ModeKind::fault_detected);
    CHECK(r.log[1].mode == ModeKind::isolating);
    CHECK(r.log[2].mode == ModeKind::postfault);

    const FsmEvent second{EventKind::open_circuit_detected, Target::S2};
    const FsmResult s = fsm_step(r.state, std::span(&second, 1), 2.1);
    CHECK(s.state.mode.kind == ModeKind::shutdown);
    CHECK(has_action(s, ActionKind::stop, Target::S1));

    const FsmEvent same{EventKind::open_circuit_detected, Target::S4};
    CHECK_THROWS_AS(fsm_step(r.state, std::span(&same, 1), 2.1), InvalidTransition);
    CHECK_THROWS_AS(fsm_step(r.state, std::span(&second, 1), 1.0), InvalidTransition);
}

TEST_CASE("state machine: short circuit waits for the fuse") {
    const FsmEvent e{EventKind::short_circuit_detected, Target::S4};
    const FsmResult r = fsm_step(FsmState{}, std::span(&e, 1), 1.0);
    CHECK(r.state.mode.kind == ModeKind::isolating);
    CHECK(has_action(r, ActionKind::gate_on, Target::S1));
    CHECK_FALSE(r.state.rn_closed);

    const FsmEvent fuse{EventKind::fuse_blown, Target::leg_a};
    const FsmResult p = fsm_step(r.state, std::span(&fuse, 1), 1.001);
    CHECK(p.state.mode.kind == ModeKind::postfault);
    CHECK(has_action(p, ActionKind::gate_block, Target::S1));
    CHECK(has_action(p, ActionKind::close_rn, Target::leg_a));

    // Both in one instant: the detection is handled first.
    const std::vector<FsmEvent> both{fuse, e};
    const FsmResult q = fsm_step(FsmState{}, both, 1.0);
    CHECK(q.state.mode.kind == ModeKind::postfault);
}

TEST_CASE("state machine: first-stage faults use the redundant switch") {
    const FsmEvent e{EventKind::dcdc_fault_detected, Target::Q1};
    const FsmResult r = fsm_step(FsmState{}, std::span(&e, 1), 1.0);
    CHECK(r.state.mode.kind == ModeKind::normal);
    CHECK(r.state.redundant_in_use[0]);
    CHECK_FALSE(r.state.redundant_in_use[1]);
    CHECK(has_action(r, ActionKind::open_isolation_relay, Target::Q1));
    CHECK(has_action(r, ActionKind::enable_redundant, Target::Q1));
    const FsmResult s = fsm_step(r.state, std::span(&e, 1), 1.5);
    CHECK(s.state.mode.kind == ModeKind::shutdown);
    const FsmEvent bad{EventKind::dcdc_fault_detected, Target::S1};
    CHECK_THROWS_AS(fsm_step(FsmState{}, std::span(&bad, 1), 1.0), InvalidArgument);
}

TEST_CASE("state machine invariants over all three-event sequences") {
    std::vector<FsmEvent> alphabet;
    for (int d = 0; d < 6; ++d) {
        alphabet.push_back({EventKind::open_circuit_detected, static_cast<Target>(d)});
        alphabet.push_back({EventKind::short_circuit_detected, static_cast<Target>(d)});
    }
    alphabet.push_back({EventKind::dcdc_fault_detected, Target::Q1});
    alphabet.push_back({EventKind::dcdc_fault_detected, Target::Q2});
    for (auto leg : {Target::leg_a, Target::leg_b, Target::leg_c}) {
        alphabet.push_back({EventKind::fuse_blown, leg});
        alphabet.push_back({EventKind::leg_lost, leg});
    }
    REQUIRE(alphabet.size() == 20);

    const std::set<std::pair<ModeKind, ModeKind>> edges{
        {ModeKind::normal, ModeKind::fault_detected},   {ModeKind::fault_detected, ModeKind::isolating},
        {ModeKind::isolating, ModeKind::postfault},     {ModeKind::normal, ModeKind::shutdown},
        {ModeKind::isolating, ModeKind::shutdown},      {ModeKind::postfault, ModeKind::shutdown}};

    int sequences = 0;
    int violations = 0;
    const std::size_t n = alphabet.size();
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t c = 0; c < n; ++c) {
                ++sequences;
                FsmState st;
                std::set<Target> blocked;
                int rn_closes = 0;
                const std::size_t seq[3] = {a, b, c};
                for (int k = 0; k < 3; ++k) {
                    const FsmEvent& e = alphabet[seq[k]];
                    const ModeKind before = st.mode.kind;
                    FsmResult r;
                    try {
                        r = fsm_step(st, std::span(&e, 1), 1.0 + k);
                    } catch (const InvalidTransition&) {
                        continue;
                    }
                    ModeKind prev = before;
                    for (const auto& m : r.log) {
                        if (m.mode != prev && !edges.count({prev, m.mode})) ++violations;
                        prev = m.mode;
                    }
                    if (before == ModeKind::shutdown && (!r.actions.empty() || !r.log.empty())) ++violations;
                    for (const auto& act : r.actions) {
                        if (act.kind == ActionKind::gate_on && (blocked.count(act.target) || before != ModeKind::normal))
                            ++violations;
                        if (act.kind == ActionKind::gate_block) blocked.insert(act.target);
                        if (act.kind == ActionKind::close_rn) ++rn_closes;
                        if (act.kind == ActionKind::stop && r.state.mode.kind != ModeKind::shutdown) ++violations;
                    }
                    st = r.state;
                }
                if (rn_closes > 1) ++violations;
            }
    CHECK(sequences == 8000);
    CHECK(violations == 0);
}
