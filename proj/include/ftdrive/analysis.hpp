#pragma once

// Post-run analysis: fundamental phasors, symmetrical components, flux locus.

#include "ftdrive/common.hpp"
#include "ftdrive/trace.hpp"

#include <array>
#include <complex>
#include <optional>
#include <span>

namespace ftdrive::sim {

using Complex = std::complex<double>;

struct InsufficientData : Error {
    using Error::Error;
};

/// x(t) ~ amplitude cos(w t - phase); complex form amplitude e^{-j phase}.
struct Phasor {
    double amplitude = 0.0;
    double phase = 0.0; ///< [rad]

    Complex complex() const { return std::polar(amplitude, -phase); }
};

/// Samples must cover exactly one period, uniformly spaced, n >= 16.
Phasor fundamental_phasor(std::span<const double> one_period);

struct SequenceComponents {
    Complex positive;
    Complex negative;
    Complex zero;
};

/// Fortescue decomposition with a = e^{j 2 pi/3}.
SequenceComponents sequence_components(const std::array<Complex, 3>& abc);
std::array<Complex, 3> from_sequence(const SequenceComponents& s);

/// Fundamental frequency in [t0, t1]: mean rotation rate of the stator flux
/// vector when the trace carries one, else rising zero crossings of the phase
/// with the largest RMS.
double estimate_f1(const Trace& trace, double t0, double t1);

/// Max/min radius of the locus; throws InsufficientData when the locus does
/// not sweep a full turn.
double flux_locus_circularity(std::span<const AlphaBeta> locus);
double flux_locus_circularity(const Trace& trace, double t0, double t1);

struct WindowAnalysis {
    double t0 = 0.0, t1 = 0.0;
    double f1 = 0.0;
    int periods = 0;
    std::array<double, 3> amplitude{};      ///< mean fundamental amplitude per phase [A]
    std::array<double, 3> relative_phase{}; ///< phase w.r.t. the first conducting phase [rad]
    double positive = 0.0;                  ///< mean |I+| [A]
    double negative = 0.0;                  ///< mean |I-| [A]
    double zero = 0.0;                      ///< mean |I0| [A]
    double negative_ratio = 0.0;            ///< negative / positive
    double flux_error_mean = 0.0;           ///< mean ||psi_s| - flux_ref| [Wb]
    std::optional<double> circularity;
    double torque_mean = 0.0;
    double torque_std = 0.0;
};

/// Whole periods of the window are analysed one by one and averaged.
WindowAnalysis analyze_window(const Trace& trace, double t0, double t1, double flux_ref,
                              std::optional<double> f1 = std::nullopt);

struct NegativeSequenceReport {
    WindowAnalysis prefault;
    WindowAnalysis postfault;
    std::array<std::optional<double>, 3> phase_ratio; ///< post/pre amplitude for conducting phases
    double current_ratio = 0.0;                       ///< mean over phases still conducting
};

NegativeSequenceReport negative_sequence_report(const Trace& trace, std::pair<double, double> prefault,
                                                std::pair<double, double> postfault, double flux_ref,
                                                std::optional<double> f1 = std::nullopt);

/// Ratio of negative-sequence amplitudes without and with the postfault strategy.
double negative_sequence_improvement(const WindowAnalysis& without_strategy, const WindowAnalysis& with_strategy);

} // namespace ftdrive::sim
