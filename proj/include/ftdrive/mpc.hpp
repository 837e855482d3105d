#pragma once

// Finite-control-set predictive torque and flux control with an outer PI speed loop.

#include "ftdrive/common.hpp"
#include "ftdrive/converter.hpp"
#include "ftdrive/machine.hpp"

#include <optional>
#include <span>
#include <vector>

namespace ftdrive::mpc {

struct MpcConfig {
    double Ts = 20e-6;             ///< control period [s]
    double lambda = 25.0;          ///< flux weighting [N m/Wb]
    double flux_ref = 0.6;         ///< stator flux magnitude reference [Wb]
    bool delay_compensation = false;
    double flux_term_multiplier = 3.0; ///< 3*lambda as in the single-step cost; 1 gives the delay-compensated form
};

/// lambda = Tn / psi_n.
double nominal_weighting(const machine::MachineParams& m);

struct EstimatorState {
    AlphaBeta psis_hat; ///< stator flux estimate [Wb]
    AlphaBeta last_vs;  ///< voltage applied over the last control period [V]
};

struct PiConfig {
    double kp = 0.0;    ///< [N m s/rad]
    double ki = 0.0;    ///< [N m/rad]
    double t_max = 0.0; ///< torque saturation [N m]
};

/// kp = 4 J bw, ki = J bw^2, saturation 1.5 Tn.
PiConfig default_pi(const machine::MachineParams& m, double bandwidth = 20.0);

struct PiState {
    double integral = 0.0; ///< integrated speed error [rad]
};

struct PiStep {
    double torque_ref = 0.0;
    PiState state;
};

/// psi(k) = psi(k-1) + Ts vs - Rs Ts is(k).
AlphaBeta estimate_stator_flux(const EstimatorState& est, const AlphaBeta& vs, const AlphaBeta& is, double Rs,
                               double Ts);

AlphaBeta predict_stator_flux(const AlphaBeta& psis_k, const AlphaBeta& vs, const AlphaBeta& is_k, double Rs,
                              double Ts);

/// Semi-implicit discretization of the stator current dynamics.
AlphaBeta predict_current(const AlphaBeta& is_k, const AlphaBeta& psir_k, const AlphaBeta& vs, double omega_e,
                          const machine::DerivedParams& d, double Ts);

double predict_torque(const AlphaBeta& psis_k1, const AlphaBeta& is_k1, int p);

/// g = |Te* - Te| + m lambda ||psi*| - |psi||.
double cost(double te_ref, double te_pred, double flux_ref, double flux_pred_mag, const MpcConfig& cfg);

struct Measurements {
    AlphaBeta is;          ///< stator current at the control instant [A]
    double omega_m = 0.0;  ///< mechanical speed [rad/s]
};

struct References {
    double torque = 0.0; ///< [N m]
    double flux = 0.0;   ///< [Wb]
};

struct Selection {
    int index = -1;
    std::vector<double> costs;
};

/// Minimizes the cost over the candidate table. Without delay compensation the
/// horizon is k+1; with it, the committed vector first advances the state one
/// period and the candidates are scored at k+2. Ties go to the lowest index.
/// `psis` is the stator flux estimate at k.
Selection select_vector(const AlphaBeta& psis, const Measurements& meas, const References& refs,
                        std::span<const converter::VoltageVector> table,
                        const std::optional<AlphaBeta>& committed, const MpcConfig& cfg,
                        const machine::MachineParams& m, const machine::DerivedParams& d);

PiStep pi_speed_step(double omega_ref, double omega_m, const PiState& state, const PiConfig& cfg, double dt);

} // namespace ftdrive::mpc
