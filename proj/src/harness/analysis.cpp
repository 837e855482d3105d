#include "ftdrive/analysis.hpp"

#include "ftdrive/fourier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace ftdrive::sim {

namespace {

constexpr std::size_t kSamplesPerPeriod = 256;

double phase_current(const TraceRecord& r, int k) { return k == 0 ? r.ia : (k == 1 ? r.ib : r.ic); }

std::pair<std::size_t, std::size_t> window_rows(const Trace& trace, double t0, double t1) {
    auto lo = std::lower_bound(trace.begin(), trace.end(), t0, [](const TraceRecord& r, double t) { return r.t < t; });
    auto hi = std::upper_bound(trace.begin(), trace.end(), t1, [](double t, const TraceRecord& r) { return t < r.t; });
    return {static_cast<std::size_t>(lo - trace.begin()), static_cast<std::size_t>(hi - trace.begin())};
}

/// Linear interpolation of a trace column; `hint` advances monotonically.
double interpolate(const Trace& trace, double t, int phase, std::size_t& hint) {
    while (hint + 2 < trace.size() && trace[hint + 1].t <= t) ++hint;
    const TraceRecord& a = trace[hint];
    const TraceRecord& b = trace[std::min(hint + 1, trace.size() - 1)];
    if (b.t <= a.t) return phase_current(a, phase);
    const double w = std::clamp((t - a.t) / (b.t - a.t), 0.0, 1.0);
    return phase_current(a, phase) + w * (phase_current(b, phase) - phase_current(a, phase));
}

double wrap(double x) { return std::remainder(x, 2.0 * std::numbers::pi); }

} // namespace

Phasor fundamental_phasor(std::span<const double> one_period) {
    if (one_period.size() < 16) throw InvalidArgument("fundamental_phasor: need >= 16 samples per period");
    const FundamentalFit fit = fundamental_fit(one_period);
    return {fit.amplitude(), fit.phase()};
}

SequenceComponents sequence_components(const std::array<Complex, 3>& x) {
    const Complex a = std::polar(1.0, 2.0 * std::numbers::pi / 3.0);
    const Complex a2 = a * a;
    return {(x[0] + a * x[1] + a2 * x[2]) / 3.0, (x[0] + a2 * x[1] + a * x[2]) / 3.0, (x[0] + x[1] + x[2]) / 3.0};
}

std::array<Complex, 3> from_sequence(const SequenceComponents& s) {
    const Complex a = std::polar(1.0, 2.0 * std::numbers::pi / 3.0);
    const Complex a2 = a * a;
    return {s.zero + s.positive + s.negative, s.zero + a2 * s.positive + a * s.negative,
            s.zero + a * s.positive + a2 * s.negative};
}

double estimate_f1(const Trace& trace, double t0, double t1) {
    const auto [lo, hi] = window_rows(trace, t0, t1);
    if (hi - lo < 8) throw InsufficientData("estimate_f1: too few samples in window");

    // Flux rotation is immune to switching ripple on the currents.
    double rmin = std::numeric_limits<double>::infinity();
    double swept = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
        rmin = std::min(rmin, std::hypot(trace[i].psis_alpha, trace[i].psis_beta));
        if (i > lo)
            swept += wrap(std::atan2(trace[i].psis_beta, trace[i].psis_alpha) -
                          std::atan2(trace[i - 1].psis_beta, trace[i - 1].psis_alpha));
    }
    const double span = trace[hi - 1].t - trace[lo].t;
    if (rmin > 1e-3 && std::fabs(swept) >= 2.0 * std::numbers::pi && span > 0)
        return std::fabs(swept) / (2.0 * std::numbers::pi * span);
    if (rmin > 1e-3) throw InsufficientData("estimate_f1: stator flux does not complete a turn in window");

    int best = 0;
    double best_rms = -1.0;
    std::array<double, 3> mean{};
    for (int k = 0; k < 3; ++k) {
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += phase_current(trace[i], k);
        mean[static_cast<std::size_t>(k)] = s / static_cast<double>(hi - lo);
        double ss = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            const double d = phase_current(trace[i], k) - mean[static_cast<std::size_t>(k)];
            ss += d * d;
        }
        const double rms = std::sqrt(ss / static_cast<double>(hi - lo));
        if (rms > best_rms) {
            best_rms = rms;
            best = k;
        }
    }
    if (!(best_rms > 0)) throw InsufficientData("estimate_f1: no AC current in window");
    // Hysteresis against switching ripple near the zero crossing.
    const double h = 0.2 * std::numbers::sqrt2 * best_rms;
    std::vector<double> rising;
    bool armed = false;
    for (std::size_t i = lo; i + 1 < hi; ++i) {
        const double x0 = phase_current(trace[i], best) - mean[static_cast<std::size_t>(best)];
        const double x1 = phase_current(trace[i + 1], best) - mean[static_cast<std::size_t>(best)];
        if (x0 < -h) armed = true;
        if (armed && x0 < 0 && x1 >= 0) {
            const double w = -x0 / (x1 - x0);
            rising.push_back(trace[i].t + w * (trace[i + 1].t - trace[i].t));
            armed = false;
        }
    }
    if (rising.size() < 2) throw InsufficientData("estimate_f1: fewer than two full periods in window");
    return static_cast<double>(rising.size() - 1) / (rising.back() - rising.front());
}

double flux_locus_circularity(std::span<const AlphaBeta> locus) {
    if (locus.size() < 3) throw InsufficientData("flux locus: too few points");
    double swept = 0.0;
    double rmax = 0.0;
    double rmin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < locus.size(); ++i) {
        const double r = norm(locus[i]);
        rmax = std::max(rmax, r);
        rmin = std::min(rmin, r);
        if (i > 0) {
            const double a0 = std::atan2(locus[i - 1].beta, locus[i - 1].alpha);
            const double a1 = std::atan2(locus[i].beta, locus[i].alpha);
            swept += wrap(a1 - a0);
        }
    }
    if (std::fabs(swept) < 2.0 * std::numbers::pi * (1.0 - 1e-9))
        throw InsufficientData("flux locus covers less than one electrical period");
    if (!(rmin > 0)) return std::numeric_limits<double>::infinity();
    return rmax / rmin;
}

double flux_locus_circularity(const Trace& trace, double t0, double t1) {
    const auto [lo, hi] = window_rows(trace, t0, t1);
    std::vector<AlphaBeta> locus;
    locus.reserve(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) locus.push_back({trace[i].psis_alpha, trace[i].psis_beta});
    return flux_locus_circularity(locus);
}

WindowAnalysis analyze_window(const Trace& trace, double t0, double t1, double flux_ref, std::optional<double> f1) {
    if (!(t1 > t0)) throw InvalidArgument("analysis window end must follow its start");
    const auto [lo, hi] = window_rows(trace, t0, t1);
    if (hi - lo < 8) throw InsufficientData("analysis window holds too few trace samples");

    WindowAnalysis w;
    w.t0 = t0;
    w.t1 = t1;
    w.f1 = f1 ? *f1 : estimate_f1(trace, t0, t1);
    if (!(w.f1 > 0)) throw InvalidArgument("fundamental frequency must be positive");
    const double period = 1.0 / w.f1;
    w.periods = static_cast<int>(std::floor((t1 - t0) / period + 1e-9));
    if (w.periods < 1) throw InsufficientData("analysis window shorter than one fundamental period");

    std::array<Complex, 3> rel_sum{};
    std::size_t hint = lo;
    std::array<std::vector<double>, 3> buf;
    for (auto& b : buf) b.resize(kSamplesPerPeriod);
    for (int k = 0; k < w.periods; ++k) {
        const double start = t0 + k * period;
        std::array<Phasor, 3> ph;
        for (int p = 0; p < 3; ++p) {
            std::size_t h = hint;
            for (std::size_t j = 0; j < kSamplesPerPeriod; ++j) {
                const double t = start + period * static_cast<double>(j) / static_cast<double>(kSamplesPerPeriod);
                buf[static_cast<std::size_t>(p)][j] = interpolate(trace, t, p, h);
            }
            ph[static_cast<std::size_t>(p)] = fundamental_phasor(buf[static_cast<std::size_t>(p)]);
        }
        while (hint + 2 < trace.size() && trace[hint + 1].t <= start + period) ++hint;

        const SequenceComponents s =
            sequence_components({ph[0].complex(), ph[1].complex(), ph[2].complex()});
        w.positive += std::abs(s.positive);
        w.negative += std::abs(s.negative);
        w.zero += std::abs(s.zero);
        const double amax = std::max({ph[0].amplitude, ph[1].amplitude, ph[2].amplitude});
        int ref = 0;
        while (ref < 2 && ph[static_cast<std::size_t>(ref)].amplitude < 1e-3 * amax) ++ref;
        for (std::size_t p = 0; p < 3; ++p) {
            w.amplitude[p] += ph[p].amplitude;
            rel_sum[p] += std::polar(1.0, wrap(ph[p].phase - ph[static_cast<std::size_t>(ref)].phase));
        }
    }
    const double np = w.periods;
    w.positive /= np;
    w.negative /= np;
    w.zero /= np;
    for (std::size_t p = 0; p < 3; ++p) {
        w.amplitude[p] /= np;
        w.relative_phase[p] = std::arg(rel_sum[p]);
    }
    w.negative_ratio = w.positive > 0 ? w.negative / w.positive : std::numeric_limits<double>::infinity();

    double err = 0.0;
    double tsum = 0.0;
    double tsq = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
        const auto& r = trace[i];
        err += std::fabs(std::hypot(r.psis_alpha, r.psis_beta) - flux_ref);
        tsum += r.te;
        tsq += r.te * r.te;
    }
    const double n = static_cast<double>(hi - lo);
    w.flux_error_mean = err / n;
    w.torque_mean = tsum / n;
    w.torque_std = std::sqrt(std::max(0.0, tsq / n - w.torque_mean * w.torque_mean));
    try {
        w.circularity = flux_locus_circularity(trace, t0, t1);
    } catch (const InsufficientData&) {
        w.circularity.reset();
    }
    return w;
}

NegativeSequenceReport negative_sequence_report(const Trace& trace, std::pair<double, double> prefault,
                                                std::pair<double, double> postfault, double flux_ref,
                                                std::optional<double> f1) {
    NegativeSequenceReport r;
    r.prefault = analyze_window(trace, prefault.first, prefault.second, flux_ref, f1);
    r.postfault = analyze_window(trace, postfault.first, postfault.second, flux_ref, f1);
    const double pre_max = std::max({r.prefault.amplitude[0], r.prefault.amplitude[1], r.prefault.amplitude[2]});
    double sum = 0.0;
    int count = 0;
    for (std::size_t p = 0; p < 3; ++p) {
        const double pre = r.prefault.amplitude[p];
        const double post = r.postfault.amplitude[p];
        if (pre < 1e-3 * pre_max || post < 0.05 * pre) continue;
        r.phase_ratio[p] = post / pre;
        sum += post / pre;
        ++count;
    }
    r.current_ratio = count ? sum / count : 0.0;
    return r;
}

double negative_sequence_improvement(const WindowAnalysis& without_strategy, const WindowAnalysis& with_strategy) {
    if (!(with_strategy.negative > 0)) return std::numeric_limits<double>::infinity();
    return without_strategy.negative / with_strategy.negative;
}

} // namespace ftdrive::sim
