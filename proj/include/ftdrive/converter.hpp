#pragma once

// Two-stage converter: split DC link with midpoint, six-switch inverter with
// per-device health, neutral relay R_N, series fuses, and an averaged DC-DC
// balancer for the two half-bus voltages.

#include "ftdrive/common.hpp"
#include "ftdrive/machine.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace ftdrive::converter {

/// Inverter devices. S1..S3 are the upper switches of legs a..c, S4..S6 the lower ones.
enum class Device : int { S1 = 0, S2, S3, S4, S5, S6 };

constexpr Leg leg_of(Device d) { return static_cast<Leg>(static_cast<int>(d) % 3); }
constexpr bool is_upper(Device d) { return static_cast<int>(d) < 3; }
constexpr Device upper_device(Leg l) { return static_cast<Device>(index(l)); }
constexpr Device lower_device(Leg l) { return static_cast<Device>(index(l) + 3); }
constexpr Device complementary(Device d) { return static_cast<Device>((static_cast<int>(d) + 3) % 6); }
std::string device_name(Device d);

enum class DeviceHealth { healthy, open_fault, short_fault, gate_blocked };
enum class Relay { open, closed };

struct SwitchingState {
    std::array<int, 3> leg{0, 0, 0}; ///< logic level per leg, 1 = upper device commanded on
    std::array<DeviceHealth, 6> health{DeviceHealth::healthy, DeviceHealth::healthy, DeviceHealth::healthy,
                                       DeviceHealth::healthy, DeviceHealth::healthy, DeviceHealth::healthy};
    std::array<bool, 3> isolated{false, false, false}; ///< fuse blown or leg disconnected
    Relay rn = Relay::open;
};

struct DcLinkState {
    double v_dc1 = 0.0; ///< upper capacitor voltage [V]
    double v_dc2 = 0.0; ///< lower capacitor voltage [V]
    double c1 = 0.0;    ///< [F]
    double c2 = 0.0;    ///< [F]
    double i_mid = 0.0; ///< midpoint current, positive from midpoint towards the machine neutral [A]
};

enum class FuseState { intact, blown };

struct FuseElement {
    double rated_i2t = 0.0;
    double accumulated_i2t = 0.0;
    FuseState state = FuseState::intact;
};

struct DcdcBalancerConfig {
    double v_ref_total = 300.0;      ///< target bus voltage [V]
    double bandwidth = 500.0;        ///< closed-loop corner [rad/s]
    double max_source_current = 40.0; ///< [A]
    double duty = 0.5;               ///< first-stage duty, informational
    double switching_frequency = 20e3; ///< [Hz], informational
};

// --- inverter voltages ------------------------------------------------------

/// Leg voltages w.r.t. the DC-bus midpoint; nullopt marks an isolated (floating) leg.
using PoleVoltages = std::array<std::optional<double>, 3>;

PoleVoltages pole_voltages(const SwitchingState& sw, const DcLinkState& dc);

/// Phase voltages at the machine terminals w.r.t. the machine neutral.
/// R_N closed: isolated phases are clamped to 0. R_N open: common mode removed.
/// Throws InvalidConfiguration for an isolated leg with R_N open.
Abc machine_phase_voltages(const PoleVoltages& poles, Relay rn);

/// Amplitude-invariant Clarke transform.
AlphaBeta clarke(const Abc& v);
/// Zero-sequence-free inverse.
Abc inverse_clarke(const AlphaBeta& v);

// --- voltage vector table ----------------------------------------------------

enum class TableMode { normal, postfault_a, postfault_b, postfault_c };

TableMode postfault_mode(Leg isolated);
std::optional<Leg> isolated_leg(TableMode mode);

struct VoltageVector {
    std::array<int, 3> levels{0, 0, 0};
    AlphaBeta v;
};

/// Normal mode: 8 entries ordered by (Sa Sb Sc) as a binary number.
/// Postfault: 4 entries ordered by the two remaining legs' levels (00, 01, 10, 11).
std::vector<VoltageVector> voltage_vector_table(TableMode mode, const DcLinkState& dc);

// --- DC link ----------------------------------------------------------------

struct SourceCurrents {
    double upper = 0.0; ///< into C1 [A]
    double lower = 0.0; ///< into C2 [A]
};

struct DcLinkStep {
    DcLinkState state;
    bool clamped = false; ///< a capacitor voltage went negative and was clamped to 0
};

/// Charge balance on C1 and C2 over dt (rectangle rule).
/// i_upper_rail: current drawn from the + rail by the inverter legs.
/// i_lower_rail: current returned into the - rail by the inverter legs.
DcLinkStep dc_link_step(const DcLinkState& dc, double i_upper_rail, double i_lower_rail, double i_mid,
                        const SourceCurrents& source, double dt);

/// Averaged first-stage regulator: each half relaxes to v_ref_total/2 as
/// exp(-bandwidth t) over one step, subject to the source current bound.
SourceCurrents dcdc_balancer_step(const DcLinkState& dc, const DcdcBalancerConfig& cfg, double dt);

FuseElement fuse_step(const FuseElement& f, double i, double dt);

// --- plant-side terminal network ------------------------------------------------

/// Electrical connection of the machine at one instant: per-leg pole voltage
/// (nullopt when the leg carries no current) and the neutral relay.
struct TerminalNetwork {
    PoleVoltages poles;
    Relay rn = Relay::open;
};

/// Alpha-beta stator voltage seen by the machine. Non-conducting phases
/// contribute 0; their unknown terminal voltage acts only along constrained
/// current directions.
AlphaBeta terminal_voltage(const TerminalNetwork& net);

/// Current directions fixed by non-conducting phases.
machine::CurrentConstraint terminal_constraint(const TerminalNetwork& net);

/// Phase currents including the zero-sequence component carried by R_N.
Abc phase_currents(const AlphaBeta& is, const TerminalNetwork& net);

/// Current of phase `leg` as a linear functional of is (direction vector).
AlphaBeta phase_current_direction(Leg leg, const TerminalNetwork& net);

} // namespace ftdrive::converter
