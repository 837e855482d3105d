#pragma once

// Scenario description and its JSON form ("schema": 1).

#include "ftdrive/converter.hpp"
#include "ftdrive/fault.hpp"
#include "ftdrive/machine.hpp"
#include "ftdrive/mpc.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ftdrive::sim {

/// Piecewise-linear profile, held constant outside its breakpoints.
struct Profile {
    std::vector<std::pair<double, double>> points;

    double at(double t) const;
    static Profile constant(double v) { return {{{0.0, v}}}; }
};

struct FuseConfig {
    double rated_i2t = 20.0; ///< [A^2 s]
    double Rf = 0.5;         ///< shoot-through loop resistance [ohm]
    double alpha = 50.0;     ///< [1/s]
    double omega_d = 1000.0; ///< [rad/s]
};

struct DcLinkConfig {
    double v_total = 300.0;
    double c1 = 3600e-6;
    double c2 = 3600e-6;
    std::optional<double> v_dc1_init; ///< defaults to v_total/2
    std::optional<double> v_dc2_init;
    double inductance = 5e-3; ///< first-stage inductor, sets the synthesized slope [H]
    converter::DcdcBalancerConfig balancer;
    FuseConfig fuse;
};

struct NoiseConfig {
    double current_std = 0.0; ///< [A]
    double speed_std = 0.0;   ///< [rad/s]
    std::uint64_t seed = 1;
};

struct ControllerConfig {
    mpc::MpcConfig mpc; ///< Ts is taken from SimConfig
    double pi_bandwidth = 20.0;
    std::optional<mpc::PiConfig> pi; ///< explicit gains; defaults from the machine and bandwidth
    bool postfault_strategy = true;
    bool computation_delay = false; ///< chosen vector applied one control period late
    int torque_ramp_periods = 10;
    NoiseConfig noise;
};

struct AnalysisWindows {
    std::optional<std::pair<double, double>> prefault;
    std::optional<std::pair<double, double>> postfault;
    std::optional<double> f1; ///< fundamental override [Hz]
};

struct SimConfig {
    double dt = 5e-6;
    double Ts = 20e-6;
    double duration = 4.0;
    int decimation = 10;
    machine::Integrator integrator = machine::Integrator::rk4;
    AnalysisWindows analysis;
};

struct Scenario {
    std::string name = "scenario";
    machine::MachineParams machine = machine::prototype_machine();
    DcLinkConfig dc;
    ControllerConfig controller;
    fault::DetectorConfig detector;
    std::vector<fault::FaultEvent> faults;
    Profile speed_ref = Profile::constant(0.0);
    Profile load_torque = Profile::constant(0.0);
    SimConfig sim;

    /// Control-to-simulation step ratio; throws InvalidConfiguration when not integral.
    int control_ratio() const;
    /// Throws InvalidConfiguration on any violated invariant.
    void validate() const;
};

/// Throws InvalidConfiguration with the offending key on malformed input.
Scenario parse_scenario(const std::string& json_text);
Scenario load_scenario(const std::filesystem::path& path);
std::string scenario_to_json(const Scenario& s);

} // namespace ftdrive::sim
