#pragma once

// Fault injection records, open-switch detection from the normalized DC
// current of the phase currents, first-stage inductor slope check, and the
// reconfiguration state machine.

#include "ftdrive/common.hpp"
#include "ftdrive/converter.hpp"

#include <array>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ftdrive::fault {

// --- fault records ---------------------------------------------------------------

/// Fault locations: inverter devices, first-stage switches, or a whole leg
/// disconnected from the machine.
enum class Target : int { S1 = 0, S2, S3, S4, S5, S6, Q1, Q2, leg_a, leg_b, leg_c };
enum class FaultKind { open_circuit, short_circuit, leg_open };

std::string_view target_name(Target t);
/// Throws InvalidArgument on unknown names.
Target parse_target(std::string_view name);
std::string_view kind_name(FaultKind k);
FaultKind parse_kind(std::string_view name);

bool is_inverter_device(Target t);
bool is_dcdc_switch(Target t);
converter::Device as_device(Target t);
Leg target_leg(Target t);

struct FaultEvent {
    double time = 0.0;
    Target target = Target::S1;
    FaultKind kind = FaultKind::open_circuit;
};

/// Checks time >= 0, one fault per target, and kind/target compatibility.
void validate_schedule(std::span<const FaultEvent> faults);

/// Detection time of a short-circuit fault by the gate-voltage comparator.
double sc_detection_event(const FaultEvent& fault, double latency);

// --- normalized DC current ---------------------------------------------------------

/// One fundamental period of phase-current samples, n per phase.
struct DetectorWindow {
    std::array<std::vector<double>, 3> phase;
    std::size_t n = 0;

    bool full() const;
};

struct PhaseChi {
    double chi = 0.0;
    double avg = 0.0;       ///< [A]
    double amplitude = 0.0; ///< fundamental amplitude [A]
    bool indeterminate = false;
};

/// chi = mean / fundamental amplitude. Indeterminate when the amplitude is
/// below eps_amp (zero current, DC-only window).
PhaseChi normalized_dc_current(std::span<const double> one_period, double eps_amp);
std::array<PhaseChi, 3> normalized_dc_current(const DetectorWindow& w, double eps_amp);

struct Classification {
    std::optional<converter::Device> device;
    bool multi_fault = false;
};

/// Phase with |chi| > threshold: avg <= 0 names the upper device, avg > 0 the
/// lower one. More than one such phase yields no device and the multi-fault flag.
Classification classify_open_switch(const std::array<PhaseChi, 3>& chis, double threshold);

struct DetectorConfig {
    double threshold = 0.45;
    std::size_t window_samples = 64;
    double eps_amp = 0.0;          ///< [A]; 0 selects 2% of the rated peak current
    double arm_time = 0.0;         ///< classification suppressed before this time [s]
    double min_frequency = 2.0;    ///< below this fundamental [Hz] nothing is classified
    double frequency_filter = 50.0; ///< low-pass corner of the frequency estimate [rad/s]
    double sc_latency = 2e-6;      ///< [s]
    double slope_deadband = 0.0;   ///< [A/s]; 0 selects 10% of the healthy rising slope
};

/// Sliding one-period open-switch detector fed at the control rate. The
/// fundamental is a low-passed synchronous speed supplied by the caller;
/// the last period of history is resampled to n points.
class OpenSwitchDetector {
public:
    OpenSwitchDetector(DetectorConfig cfg, double eps_amp);

    /// omega_e: synchronous electrical speed estimate [rad/s].
    void push(double t, const Abc& i, double omega_e);
    /// Classification over the most recent period, or nullopt while the
    /// window is not yet valid.
    std::optional<Classification> evaluate(double t);
    /// Last evaluated chi values (diagnostics).
    const std::array<PhaseChi, 3>& last_chis() const { return last_; }
    double frequency_estimate() const { return freq_hz_; }
    /// Restarts the window, e.g. after a reconfiguration.
    void reset(double t);

private:
    struct Sample {
        double t;
        Abc i;
    };
    DetectorConfig cfg_;
    double eps_amp_;
    std::deque<Sample> history_;
    bool primed_ = false;
    double last_t_ = 0.0;
    double omega_ = 0.0;
    double freq_hz_ = 0.0;
    double valid_from_ = 0.0;
    std::array<PhaseChi, 3> last_{};
    DetectorWindow window_;
};

// --- first-stage slope check ---------------------------------------------------------

enum class SlopeVerdict { consistent, open_suspect, short_suspect };
std::string_view verdict_name(SlopeVerdict v);

/// Instantaneous comparison of the inductor slope with the gate command.
SlopeVerdict dcdc_slope_check(double iL_slope, bool gate_on, double deadband);

/// Least-squares slope of uniformly spaced samples. Needs >= 3 samples.
double estimate_slope(std::span<const double> samples, double dt);

/// Requires an inconsistency to persist for one full switching period: only
/// a consistent sample taken under the same gate state clears it.
class SlopeMonitor {
public:
    SlopeMonitor(double switching_period, double deadband);
    SlopeVerdict update(double t, double iL_slope, bool gate_on);

private:
    double period_;
    double deadband_;
    std::optional<double> open_since_;
    std::optional<double> short_since_;
};

/// Synthesized first-stage inductor current: rising while the switch
/// conducts, falling otherwise.
struct InductorWaveform {
    double switching_frequency = 20e3; ///< [Hz]
    double duty = 0.5;
    double rise_slope = 0.0; ///< [A/s] while the switch conducts
    double fall_slope = 0.0; ///< [A/s] magnitude while it does not
};

bool gate_command(const InductorWaveform& w, double t);
/// Slope of the inductor current for a switch of the given health.
double inductor_slope(const InductorWaveform& w, bool gate_on, converter::DeviceHealth health);

// --- reconfiguration state machine ------------------------------------------------------

enum class ModeKind { normal, fault_detected, isolating, postfault, shutdown };
std::string_view mode_name(ModeKind m);

struct DriveMode {
    ModeKind kind = ModeKind::normal;
    std::optional<converter::Device> device; ///< faulted device (fault_detected, isolating)
    std::optional<Leg> leg;                   ///< affected leg (all but normal)
    double entered_at = 0.0;
};

enum class EventKind { open_circuit_detected, short_circuit_detected, dcdc_fault_detected, fuse_blown, leg_lost };

struct FsmEvent {
    EventKind kind = EventKind::open_circuit_detected;
    Target target = Target::S1; ///< device, Q switch, or leg_x for fuse/leg events
};

enum class ActionKind {
    gate_block,           ///< permanently turn off a device
    gate_on,              ///< permanently turn on a device (shoot-through)
    close_rn,
    set_postfault_table,
    open_isolation_relay, ///< disconnect a first-stage switch
    enable_redundant,     ///< switch in the redundant first-stage device
    stop                  ///< all gates off, drive stopped
};

struct FsmAction {
    ActionKind kind = ActionKind::stop;
    Target target = Target::S1;
};

std::string_view action_name(ActionKind a);

struct ModeChange {
    double t = 0.0;
    ModeKind mode = ModeKind::normal;
    std::string detail;
};

struct FsmState {
    DriveMode mode;
    bool rn_closed = false;
    std::array<bool, 2> redundant_in_use{false, false};
};

struct FsmResult {
    FsmState state;
    std::vector<FsmAction> actions;
    std::vector<ModeChange> log;
};

/// Processes the events of one instant. Detections are handled before
/// fuse/relay status events. Throws InvalidTransition for an event that
/// targets an already isolated leg or a time earlier than the current mode.
FsmResult fsm_step(const FsmState& state, std::span<const FsmEvent> events, double t);

} // namespace ftdrive::fault
