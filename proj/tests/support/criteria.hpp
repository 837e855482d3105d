#pragma once

// Numeric checks shared by the unit tests and the acceptance report. Each
// returns the measured quantity; callers apply the tolerance.

#include "ftdrive/converter.hpp"
#include "ftdrive/design.hpp"
#include "ftdrive/mpc.hpp"

#include "../oracles/machine_ode.hpp"
#include "../oracles/mpc_bruteforce.hpp"
#include "gen.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace criteria {

using ftdrive::AlphaBeta;
using C = std::complex<double>;
constexpr double kPi = std::numbers::pi;

inline ftdrive::converter::DcLinkState bus(double v1, double v2) { return {v1, v2, 3600e-6, 3600e-6, 0.0}; }

// --- postfault vectors -------------------------------------------------------------

/// Closed-form postfault vectors with leg a lost, switching state (b, c) = bits of `state`.
inline C postfault_a_vector(int state, double v1, double v2) {
    const double r3 = std::sqrt(3.0);
    switch (state) {
    case 0: return {2.0 * v2 / 3.0, 0.0};
    case 1: return {(v2 - v1) / 3.0, -(v2 + v1) / r3};
    case 2: return {(v2 - v1) / 3.0, (v2 + v1) / r3};
    default: return {-2.0 * v1 / 3.0, 0.0};
    }
}

/// Worst relative error of the leg-a postfault table over random bus splits.
inline double postfault_table_worst(std::uint64_t seed, int pairs = 100) {
    using namespace ftdrive::converter;
    ftest::Gen g(seed);
    double worst = 0.0;
    for (int i = 0; i < pairs; ++i) {
        const double v1 = g.uniform(1.0, 400.0);
        const double v2 = g.uniform(1.0, 400.0);
        const auto table = voltage_vector_table(TableMode::postfault_a, bus(v1, v2));
        if (table.size() != 4) return INFINITY;
        for (int s = 0; s < 4; ++s) {
            const C want = postfault_a_vector(s, v1, v2);
            const C got(table[static_cast<std::size_t>(s)].v.alpha, table[static_cast<std::size_t>(s)].v.beta);
            worst = std::max(worst, std::abs(got - want) / std::abs(want));
        }
    }
    return worst;
}

// --- predictive controller ---------------------------------------------------------

/// Instances where select_vector disagrees with exhaustive enumeration.
inline int selection_mismatches(std::uint64_t seed, bool two_step, int instances = 1000) {
    using namespace ftdrive;
    using namespace ftdrive::mpc;
    const machine::MachineParams proto = machine::prototype_machine();
    const converter::TableMode modes[] = {converter::TableMode::normal, converter::TableMode::postfault_a,
                                          converter::TableMode::postfault_b, converter::TableMode::postfault_c};
    ftest::Gen g(seed);
    int mismatches = 0;
    for (int i = 0; i < instances; ++i) {
        const machine::MachineParams m = g.integer(0, 3) == 0 ? g.machine() : proto;
        const machine::DerivedParams d = machine::derive_params(m);
        MpcConfig cfg;
        cfg.Ts = g.coin() ? 20e-6 : g.uniform(5e-6, 200e-6);
        cfg.lambda = g.uniform(0.0, 60.0);
        cfg.flux_term_multiplier = g.coin() ? 1.0 : 3.0;
        cfg.delay_compensation = two_step;
        const auto table =
            converter::voltage_vector_table(modes[g.integer(0, 3)], bus(g.uniform(50, 250), g.uniform(50, 250)));
        const AlphaBeta psi = g.polar(0.0, 1.0);
        const Measurements meas{g.vec(20.0), g.uniform(-200, 200)};
        const References refs{g.uniform(-30, 30), g.uniform(0.2, 1.0)};
        const int committed = g.integer(0, static_cast<int>(table.size()) - 1);

        const Selection s = select_vector(
            psi, meas, refs, table, two_step ? std::optional<AlphaBeta>(table[static_cast<std::size_t>(committed)].v) : std::nullopt,
            cfg, m, d);
        const auto costs = oracle::cost_matrix({psi, meas.is}, meas.omega_m, refs, table, two_step, cfg, m, d);
        const int want = oracle::argmin_lowest(costs[two_step ? static_cast<std::size_t>(committed) : 0]);
        if (s.index != want) ++mismatches;
    }
    return mismatches;
}

/// Max current error of the iterated one-step predictor over `span` with a
/// held voltage; rotor flux and speed come from the reference trajectory.
inline double iterated_prediction_error(double Ts, double span) {
    using namespace ftdrive;
    const machine::MachineParams m = machine::prototype_machine();
    const machine::DerivedParams d = machine::derive_params(m);
    const AlphaBeta is0{4.0, -3.0};
    const AlphaBeta pr0{0.5, 0.25};
    const AlphaBeta vs{180.0, 90.0};
    auto x = oracle::from_current_and_rotor_flux(is0.alpha, is0.beta, pr0.alpha, pr0.beta, 70.0, m);
    AlphaBeta pred = is0;
    const int n = static_cast<int>(std::lround(span / Ts));
    const int sub = 50;
    double worst = 0.0;
    for (int k = 0; k < n; ++k) {
        pred = mpc::predict_current(pred, {x.pr_a, x.pr_b}, vs, m.p * x.wm, d, Ts);
        for (int j = 0; j < sub; ++j) x = oracle::rk4(x, vs.alpha, vs.beta, 0.0, Ts / sub, m);
        const auto c = oracle::currents(x, m);
        worst = std::max(worst, norm(pred - AlphaBeta{c.is_a, c.is_b}));
    }
    return worst;
}

/// Error ratio of the iterated predictor at 20 us and 10 us over 1 ms.
inline double predictor_convergence_ratio() {
    return iterated_prediction_error(20e-6, 1e-3) / iterated_prediction_error(10e-6, 1e-3);
}

// --- controller network and margins --------------------------------------------------

inline C parallel(C a, C b) { return a * b / (a + b); }

/// Zf = (1/sC2) || (R2 + 1/sC1); Zi = h11 + R1 || (R3 + 1/sC3).
inline C impedance_ratio(const ftdrive::design::ControllerComponents& c, double w) {
    const C s{0.0, w};
    const C zf = parallel(1.0 / (s * c.C2), c.R2 + 1.0 / (s * c.C1));
    const double h11 = c.RA * c.RB / (c.RA + c.RB);
    const C zi = h11 + parallel(C{c.R1, 0.0}, c.R3 + 1.0 / (s * c.C3));
    return zf / zi;
}

inline ftdrive::design::ControllerComponents random_components(ftest::Gen& g) {
    auto lg = [&](double lo, double hi) { return std::exp(g.uniform(std::log(lo), std::log(hi))); };
    ftdrive::design::ControllerComponents c;
    c.R1 = lg(1e2, 1e6);
    c.R2 = lg(1e2, 1e6);
    c.R3 = lg(1e1, 1e5);
    c.RA = lg(1e2, 1e6);
    c.RB = lg(1e2, 1e6);
    c.C1 = lg(1e-11, 1e-6);
    c.C2 = lg(1e-12, 1e-7);
    c.C3 = lg(1e-11, 1e-6);
    return c;
}

/// Worst relative gap between the factored controller and impedance arithmetic
/// over 100 random component sets and 50 log-spaced frequencies.
inline double controller_tf_worst(std::uint64_t seed) {
    ftest::Gen g(seed);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const auto c = random_components(g);
        const auto tf = ftdrive::design::controller_tf(c).tf;
        for (int k = 0; k < 50; ++k) {
            const double w = 2 * kPi * std::pow(10.0, -1.0 + 8.0 * k / 49.0);
            const C want = impedance_ratio(c, w);
            worst = std::max(worst, std::abs(tf.at(w) - want) / std::abs(want));
        }
    }
    return worst;
}

inline ftdrive::design::RationalTransferFunction tf_of(double gain, std::vector<C> zeros, std::vector<C> poles) {
    ftdrive::design::RationalTransferFunction t;
    t.gain = gain;
    t.zeros = std::move(zeros);
    t.poles = std::move(poles);
    return t;
}

/// Root of a sign-changing function on [lo, hi] by plain bisection.
template <class F>
double bisect(F f, double lo, double hi) {
    const bool up = f(lo) < 0;
    for (int i = 0; i < 300; ++i) {
        const double mid = 0.5 * (lo + hi);
        if ((f(mid) < 0) == up)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

struct MarginCase {
    std::string name;
    double pm_expected = 0.0;
    double pm_got = 0.0;
    double gm_expected = INFINITY; ///< dB; infinite when no phase crossover
    double gm_got = INFINITY;

    bool within(double deg_tol, double db_tol) const {
        const bool gm_ok = std::isinf(gm_expected) ? std::isinf(gm_got) : std::fabs(gm_got - gm_expected) <= db_tol;
        return std::fabs(pm_got - pm_expected) <= deg_tol && gm_ok;
    }
};

/// Margins of the synthetic suite with analytic expectations.
inline std::vector<MarginCase> margin_suite() {
    using ftdrive::design::margins;
    std::vector<MarginCase> out;
    auto add = [&](std::string name, const ftdrive::design::RationalTransferFunction& tf, double pm, double gm) {
        const auto r = margins(tf);
        out.push_back({std::move(name), pm, r.phase_margin_deg, gm, r.gain_margin_db});
    };
    const double deg = 180.0 / kPi;

    add("integrator", tf_of(100.0, {}, {C{}}), 90.0, INFINITY);
    add("double integrator", tf_of(400.0, {}, {C{}, C{}}), 0.0, INFINITY);
    {
        const double wp = 2 * kPi * 1e3;
        const double wc = bisect([&](double w) { return wp / (w * std::sqrt(1 + (w / wp) * (w / wp))) - 1.0; }, 1.0,
                                 1e3 * wp);
        add("integrator with first-order pole", tf_of(wp * wp, {}, {C{}, C{-wp, 0.0}}), 90.0 - std::atan(wc / wp) * deg,
            INFINITY);
    }
    {
        const double w0 = 2 * kPi * 500;
        const double zeta = 0.2;
        const double K = 5.0;
        const double im = w0 * std::sqrt(1 - zeta * zeta);
        auto mag = [&](double w) {
            const double u = w / w0;
            return K / std::hypot(1 - u * u, 2 * zeta * u);
        };
        const double wc = bisect([&](double w) { return mag(w) - 1.0; }, w0, 1e3 * w0);
        const double u = wc / w0;
        add("underdamped second order", tf_of(K * w0 * w0, {}, {C{-zeta * w0, im}, C{-zeta * w0, -im}}),
            180.0 - std::atan2(2 * zeta * u, 1 - u * u) * deg, INFINITY);
    }
    {
        const double a = 2 * kPi * 100;
        const double b = 2 * kPi * 1000;
        const double K = 0.1 * a * b * (a + b);
        auto mag = [&](double w) { return K / (w * std::hypot(w, a) * std::hypot(w, b)); };
        const double wc = bisect([&](double w) { return mag(w) - 1.0; }, 1.0, 1e8);
        const double w180 = std::sqrt(a * b);
        add("integrator with two poles", tf_of(K, {}, {C{}, C{-a, 0.0}, C{-b, 0.0}}),
            90.0 - std::atan(wc / a) * deg - std::atan(wc / b) * deg, -20 * std::log10(mag(w180)));
    }
    return out;
}

// --- fuse ---------------------------------------------------------------------------

inline ftdrive::design::FuseDesignParams fuse(double Vdc, double Rf, double alpha, double wd) {
    ftdrive::design::FuseDesignParams p;
    p.Vdc = Vdc;
    p.Rf = Rf;
    p.alpha = alpha;
    p.omega_d = wd;
    return p;
}

inline double quadrature_joule(double t, const ftdrive::design::FuseDesignParams& p) {
    auto f = [&](double x) {
        const double i = ftdrive::design::fault_current(x, p);
        return i * i;
    };
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, t, 20, 1e-14);
}

/// Worst relative gap between the closed-form Joule integral and adaptive
/// quadrature on a 10 x 10 grid over two decades of alpha and omega_d.
inline double joule_grid_worst(std::uint64_t seed) {
    ftest::Gen g(seed);
    double worst = 0.0;
    for (int i = 0; i < 10; ++i)
        for (int k = 0; k < 10; ++k) {
            const double alpha = 10.0 * std::pow(10.0, 2.0 * i / 9.0);
            const double wd = 100.0 * std::pow(10.0, 2.0 * k / 9.0);
            const auto q = fuse(g.uniform(100, 600), g.uniform(0.1, 2), alpha, wd);
            const double t = g.uniform(1e-4, 0.05);
            worst = std::max(worst, ftest::rel_err(ftdrive::design::joule_integral(t, q), quadrature_joule(t, q)));
        }
    return worst;
}

/// |blow time - Joule-integral inversion| / h for the runtime fuse element
/// driven by the shoot-through waveform, worst over several ratings.
inline double fuse_blow_error_steps(double h) {
    using namespace ftdrive::converter;
    const auto p = fuse(300.0, 0.5, 50.0, 1000.0);
    double worst = 0.0;
    for (double rated : {5.0, 20.0, 60.0}) {
        FuseElement e{rated, 0.0, FuseState::intact};
        double t = 0.0;
        while (e.state == FuseState::intact && t < 1.0) {
            e = fuse_step(e, ftdrive::design::fault_current(t + 0.5 * h, p), h);
            t += h;
        }
        worst = std::max(worst, std::fabs(t - ftdrive::design::joule_inversion(rated, p)) / h);
    }
    return worst;
}

/// Random nominal values where select_fuse is not the largest entry not above it.
inline int fuse_selection_violations(std::uint64_t seed, const std::vector<double>& catalog) {
    ftest::Gen g(seed);
    int bad = 0;
    for (int i = 0; i < 1000; ++i) {
        const double x = g.uniform(catalog.front(), 2 * catalog.back());
        const double s = ftdrive::design::select_fuse(x, catalog);
        double want = catalog.front();
        for (double c : catalog)
            if (c <= x) want = c;
        if (s != want) ++bad;
    }
    return bad;
}

} // namespace criteria
