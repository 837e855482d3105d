#pragma once

// Offline design calculators: integral-double-lead controller network and
// loop-gain margins, short-circuit fuse sizing, and the normalized
// overrating factor of a device rating sheet.

#include "ftdrive/common.hpp"

#include <complex>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace ftdrive::design {

using Complex = std::complex<double>;

struct Infeasible : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};
struct NoCrossover : Error {
    using Error::Error;
};
struct UnsupportedRegime : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};
struct OutOfDomain : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};
struct NoFeasibleFuse : Error {
    using Error::Error;
};

// --- transfer functions ------------------------------------------------------------

/// gain * prod(s - z) / prod(s - p); roots in rad/s.
struct RationalTransferFunction {
    double gain = 0.0;
    std::vector<Complex> zeros;
    std::vector<Complex> poles;

    Complex eval(Complex s) const;
    Complex at(double omega) const { return eval({0.0, omega}); }
    /// Continuous phase [deg]: sum of the factor angles (no wrapping).
    double unwrapped_phase_deg(double omega) const;
    /// Throws InvalidArgument when a complex root lacks its conjugate.
    void validate() const;
};

struct ControllerComponents {
    double R1 = 0.0, R2 = 0.0, R3 = 0.0, RA = 0.0, RB = 0.0; ///< [ohm]
    double C1 = 0.0, C2 = 0.0, C3 = 0.0;                      ///< [F]

    /// RA || RB [ohm]
    double h11() const { return RA * RB / (RA + RB); }
};

struct ControllerCorners {
    double F = 0.0;    ///< [rad/s]
    double wzc1 = 0.0; ///< [rad/s]
    double wzc2 = 0.0;
    double wpc1 = 0.0;
    double wpc2 = 0.0;
};

struct ControllerDesign {
    RationalTransferFunction tf;
    ControllerCorners corners;
};

/// Zf/Zi of the three-capacitor error amplifier: F (s+wzc1)(s+wzc2) / [s (s+wpc1)(s+wpc2)].
ControllerDesign controller_tf(const ControllerComponents& c);

/// Inverse of controller_tf for a chosen R1. Splits h11 at half of its
/// admissible range and returns RA = RB = 2 h11. Throws Infeasible unless
/// every pole lies above its zero and all targets are positive.
ControllerComponents synthesize_components(double F, double zc1, double zc2, double pc1, double pc2,
                                           double R1_seed);

struct LoopGainParams {
    double beta = 0.125;       ///< feedback ratio
    double F = 2.708e6;        ///< controller gain [rad/s]
    double f_zc = 330.851;     ///< controller double zero [Hz]
    double f_pc = 12.09e3;     ///< controller double pole [Hz]
    double f_zn = 21.09e3;     ///< plant LHP zero [Hz]
    double f_zp = 9.88e3;      ///< plant RHP zero [Hz]
    double zeta = 0.261;
    double omega_0 = 0.0;      ///< plant resonance [rad/s], required
    double Tm = 0.2;           ///< modulator gain [1/V]
    double plant_gain = 1.0;   ///< unpublished plant constants folded into one scalar
    double dc_gain_sign = -1.0;
};

/// T = sign K (s+wzc)^2 (s+wzn)(s-wzp) / [s (s+wpc)^2 (s^2 + 2 zeta w0 s + w0^2)],
/// K = beta F Tm plant_gain.
RationalTransferFunction loop_gain(const LoopGainParams& p);

struct MarginReport {
    double gain_margin_db = std::numeric_limits<double>::infinity();
    double phase_margin_deg = 0.0;
    std::vector<double> gain_crossovers_hz;
    std::vector<double> phase_crossovers_hz;
    bool multiple_gain_crossovers = false;
    bool multiple_phase_crossovers = false;
};

/// Phase normalized so that it lies in (-180, 180] at f_lo. Crossovers are
/// bracketed on a 64 points/decade log grid and refined by bisection. The
/// phase margin 180 + phase is wrapped into [-180, 180]. With
/// several crossovers the smallest margin is reported. Throws NoCrossover
/// when |T| never crosses 1 in [f_lo, f_hi].
MarginReport margins(const RationalTransferFunction& tf, double f_lo = 1.0, double f_hi = 1e6);

struct BodePoint {
    double f_hz = 0.0;
    double mag_db = 0.0;
    double phase_deg = 0.0;
};

std::vector<BodePoint> bode(const RationalTransferFunction& tf, double f_lo, double f_hi,
                            int points_per_decade = 64);

// --- fuse sizing ------------------------------------------------------------------------

struct FuseDesignParams {
    double Vdc = 0.0;     ///< [V]
    double Rf = 0.0;      ///< fault-loop resistance [ohm]
    double alpha = 0.0;   ///< damping [1/s]
    double omega_d = 0.0; ///< damped angular frequency [rad/s]
    std::vector<double> catalog; ///< standard I^2t ratings, ascending [A^2 s]

    /// Literal printed parameterization: alpha = 1/(4 Rf) taken numerically
    /// as 1/s although it carries 1/ohm, omega_0 = 1/sqrt(LC),
    /// omega_d = sqrt(omega_0^2 - alpha^2). Throws UnsupportedRegime if not underdamped.
    static FuseDesignParams from_printed_formula(double Vdc, double Rf, double L, double C,
                                                 std::vector<double> catalog = {});
};

/// e^{-alpha t} [ Vdc/(2Rf) cos(wd t) + alpha Vdc/(2 Rf wd) sin(wd t) ]
double fault_current(double t, const FuseDesignParams& p);

/// Closed-form integral of fault_current^2 from 0 to t [A^2 s].
double joule_integral(double t, const FuseDesignParams& p);

/// Time at which joule_integral reaches `energy`, or +inf if never.
double joule_inversion(double energy, const FuseDesignParams& p, double t_max = 1.0);

/// Withstand factor F_w(t), interpolated linearly in log time.
class WithstandCurve {
public:
    struct Point {
        double t = 0.0;
        double fw = 1.0;
    };
    explicit WithstandCurve(std::vector<Point> pts);
    /// Non-normative placeholder: (1 ms, 4.0), (10 ms, 2.0), (0.1 s, 1.3), (1 s, 1.0).
    static WithstandCurve placeholder();

    double at(double t) const;
    double t_min() const { return pts_.front().t; }
    double t_max() const { return pts_.back().t; }
    const std::vector<Point>& points() const { return pts_; }

private:
    std::vector<Point> pts_;
};

/// I^2t = J(t0) / F_w(t0).
double nominal_melt_energy(double t0, const FuseDesignParams& p, const WithstandCurve& w);

/// Largest catalog entry not above i2t_nominal.
double select_fuse(double i2t_nominal, std::span<const double> catalog);

// --- overrating factor ----------------------------------------------------------------------

enum class DeviceKind { switch_device, diode };

struct DeviceRating {
    DeviceKind kind = DeviceKind::switch_device;
    double blocking_v = 0.0;
    double peak_a = 0.0;
    double count = 0.0;
};

using DeviceRatingSheet = std::vector<DeviceRating>;

/// Total kVA; diodes count half.
double total_kva(const DeviceRatingSheet& sheet);
double nof(const DeviceRatingSheet& sheet, const DeviceRatingSheet& baseline);
/// Six switches blocking v_bus and carrying the peak phase current.
DeviceRatingSheet six_switch_baseline(double v_bus, double i_peak);

// --- data files ---------------------------------------------------------------------------

/// Columns time_s, fw.
WithstandCurve read_withstand_csv(const std::filesystem::path& path);
/// One column i2t (header optional); sorted on return.
std::vector<double> read_catalog_csv(const std::filesystem::path& path);
/// Columns kind, blocking_v, peak_a, count; kind is "switch" or "diode".
DeviceRatingSheet read_rating_sheet_csv(const std::filesystem::path& path);

} // namespace ftdrive::design
