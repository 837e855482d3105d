#include "ftdrive/converter.hpp"

#include <algorithm>
#include <cmath>

namespace ftdrive::converter {

std::string device_name(Device d) { return "S" + std::to_string(static_cast<int>(d) + 1); }

PoleVoltages pole_voltages(const SwitchingState& sw, const DcLinkState& dc) {
    PoleVoltages poles;
    for (int i = 0; i < 3; ++i) {
        if (sw.isolated[i]) continue;
        poles[i] = sw.leg[i] ? dc.v_dc1 : -dc.v_dc2;
    }
    return poles;
}

Abc machine_phase_voltages(const PoleVoltages& poles, Relay rn) {
    Abc v;
    if (rn == Relay::closed) {
        for (int i = 0; i < 3; ++i) v[i] = poles[i].value_or(0.0);
        return v;
    }
    for (const auto& p : poles)
        if (!p) throw InvalidConfiguration("isolated leg with R_N open: no current path defined");
    const double mean = (*poles[0] + *poles[1] + *poles[2]) / 3.0;
    for (int i = 0; i < 3; ++i) v[i] = *poles[i] - mean;
    return v;
}

AlphaBeta clarke(const Abc& v) {
    return {(2.0 / 3.0) * (v.a - 0.5 * v.b - 0.5 * v.c), (v.b - v.c) / std::numbers::sqrt3};
}

Abc inverse_clarke(const AlphaBeta& v) {
    const double h = std::numbers::sqrt3 / 2.0;
    return {v.alpha, -0.5 * v.alpha + h * v.beta, -0.5 * v.alpha - h * v.beta};
}

TableMode postfault_mode(Leg isolated) {
    switch (isolated) {
    case Leg::a: return TableMode::postfault_a;
    case Leg::b: return TableMode::postfault_b;
    case Leg::c: return TableMode::postfault_c;
    }
    return TableMode::normal;
}

std::optional<Leg> isolated_leg(TableMode mode) {
    switch (mode) {
    case TableMode::postfault_a: return Leg::a;
    case TableMode::postfault_b: return Leg::b;
    case TableMode::postfault_c: return Leg::c;
    case TableMode::normal: break;
    }
    return std::nullopt;
}

std::vector<VoltageVector> voltage_vector_table(TableMode mode, const DcLinkState& dc) {
    std::vector<VoltageVector> table;
    SwitchingState sw;
    const auto lost = isolated_leg(mode);
    if (!lost) {
        table.reserve(8);
        for (int s = 0; s < 8; ++s) {
            sw.leg = {(s >> 2) & 1, (s >> 1) & 1, s & 1};
            table.push_back({sw.leg, clarke(machine_phase_voltages(pole_voltages(sw, dc), Relay::open))});
        }
        return table;
    }
    sw.rn = Relay::closed;
    sw.isolated[index(*lost)] = true;
    int first = -1;
    int second = -1;
    for (int i = 0; i < 3; ++i) {
        if (i == index(*lost)) continue;
        (first < 0 ? first : second) = i;
    }
    table.reserve(4);
    for (int s = 0; s < 4; ++s) {
        sw.leg = {0, 0, 0};
        sw.leg[first] = (s >> 1) & 1;
        sw.leg[second] = s & 1;
        table.push_back({sw.leg, clarke(machine_phase_voltages(pole_voltages(sw, dc), Relay::closed))});
    }
    return table;
}

DcLinkStep dc_link_step(const DcLinkState& dc, double i_upper_rail, double i_lower_rail, double i_mid,
                        const SourceCurrents& source, double dt) {
    if (!(dt > 0)) throw InvalidArgument("dc_link_step: dt must be positive");
    DcLinkStep out;
    out.state = dc;
    out.state.v_dc1 += (source.upper - i_upper_rail) * dt / dc.c1;
    out.state.v_dc2 += (source.lower - i_lower_rail) * dt / dc.c2;
    out.state.i_mid = i_mid;
    if (out.state.v_dc1 < 0) {
        out.state.v_dc1 = 0;
        out.clamped = true;
    }
    if (out.state.v_dc2 < 0) {
        out.state.v_dc2 = 0;
        out.clamped = true;
    }
    return out;
}

SourceCurrents dcdc_balancer_step(const DcLinkState& dc, const DcdcBalancerConfig& cfg, double dt) {
    if (!(dt > 0)) throw InvalidArgument("dcdc_balancer_step: dt must be positive");
    const double half = cfg.v_ref_total / 2.0;
    // Charge that removes the fraction (1 - e^{-bw dt}) of the error in one step.
    const double k = -std::expm1(-cfg.bandwidth * dt) / dt;
    const double lim = cfg.max_source_current;
    return {std::clamp(dc.c1 * k * (half - dc.v_dc1), -lim, lim),
            std::clamp(dc.c2 * k * (half - dc.v_dc2), -lim, lim)};
}

FuseElement fuse_step(const FuseElement& f, double i, double dt) {
    if (!(dt > 0)) throw InvalidArgument("fuse_step: dt must be positive");
    if (f.state == FuseState::blown) return f;
    FuseElement next = f;
    next.accumulated_i2t += i * i * dt;
    if (next.accumulated_i2t >= next.rated_i2t) next.state = FuseState::blown;
    return next;
}

// --- terminal network ---------------------------------------------------------

namespace {

int first_open(const TerminalNetwork& net, int skip = -1) {
    for (int i = 0; i < 3; ++i)
        if (i != skip && !net.poles[i]) return i;
    return -1;
}

int open_count(const TerminalNetwork& net) {
    return static_cast<int>(std::count_if(net.poles.begin(), net.poles.end(), [](const auto& p) { return !p; }));
}

} // namespace

AlphaBeta terminal_voltage(const TerminalNetwork& net) {
    Abc v;
    for (int i = 0; i < 3; ++i) v[i] = net.poles[i].value_or(0.0);
    return clarke(v);
}

machine::CurrentConstraint terminal_constraint(const TerminalNetwork& net) {
    machine::CurrentConstraint c;
    const int n_open = open_count(net);
    const int x = first_open(net);
    if (net.rn == Relay::open) {
        if (n_open == 1) {
            c.count = 1;
            c.dirs[0] = phase_axis(static_cast<Leg>(x));
        } else if (n_open >= 2) {
            c.count = 2;
        }
        return c;
    }
    // Neutral tied to the midpoint: one open phase is absorbed by the zero sequence.
    if (n_open == 2) {
        const int y = first_open(net, x);
        c.count = 1;
        c.dirs[0] = phase_axis(static_cast<Leg>(x)) - phase_axis(static_cast<Leg>(y));
    } else if (n_open == 3) {
        c.count = 2;
    }
    return c;
}

AlphaBeta phase_current_direction(Leg leg, const TerminalNetwork& net) {
    const int i = index(leg);
    if (!net.poles[i]) return {};
    if (net.rn == Relay::open) return phase_axis(leg);
    const int y = first_open(net);
    if (y < 0) return phase_axis(leg);
    return phase_axis(leg) - phase_axis(static_cast<Leg>(y));
}

Abc phase_currents(const AlphaBeta& is, const TerminalNetwork& net) {
    Abc i;
    for (int k = 0; k < 3; ++k) {
        const Leg leg = static_cast<Leg>(k);
        i[k] = net.poles[k] ? dot(phase_current_direction(leg, net), is) : 0.0;
    }
    return i;
}

} // namespace ftdrive::converter
