#pragma once

// Squirrel-cage induction machine in the stationary alpha-beta frame.
// State: stator current, rotor flux, mechanical speed. Stator flux is derived.

#include "ftdrive/common.hpp"

#include <span>

namespace ftdrive::machine {

struct MachineParams {
    double Rs = 0.0;    ///< stator resistance [ohm]
    double Rr = 0.0;    ///< rotor resistance [ohm]
    double Ls = 0.0;    ///< stator inductance [H]
    double Lr = 0.0;    ///< rotor inductance [H]
    double Lm = 0.0;    ///< magnetizing inductance [H]
    int p = 1;          ///< pole pairs
    double J = 0.0;     ///< total inertia [kg m^2]
    double Tn = 0.0;    ///< nominal torque [N m]
    double psi_n = 0.0; ///< nominal stator flux [Wb]
};

/// 1.5 kW prototype machine.
MachineParams prototype_machine();

struct DerivedParams {
    double kr = 0.0;        ///< rotor coupling factor Lm/Lr
    double R_sigma = 0.0;   ///< Rs + Rr kr^2
    double tau_r = 0.0;     ///< Lr/Rr
    double sigma = 0.0;     ///< 1 - Lm^2/(Ls Lr)
    double tau_sigma = 0.0; ///< sigma Ls / R_sigma
};

/// Validates params and computes the derived constants. Throws InvalidArgument
/// on non-physical input, including the leakage-free boundary Lm^2 >= Ls Lr.
DerivedParams derive_params(const MachineParams& params);

struct MachineState {
    AlphaBeta is;        ///< stator current [A]
    AlphaBeta psir;      ///< rotor flux [Wb]
    double omega_m = 0.0; ///< mechanical speed [rad/s]
};

struct MachineInputs {
    AlphaBeta vs;         ///< stator voltage [V]
    double T_load = 0.0;  ///< load torque [N m]
};

struct MachineDerivative {
    AlphaBeta dis;
    AlphaBeta dpsir;
    double domega_m = 0.0;
};

AlphaBeta stator_flux_from(const AlphaBeta& is, const AlphaBeta& psir, const DerivedParams& d,
                           const MachineParams& params);

/// Exact inverse of stator_flux_from.
AlphaBeta rotor_flux_from(const AlphaBeta& psis, const AlphaBeta& is, const MachineParams& params);

/// Te = 1.5 p (psi_alpha i_beta - psi_beta i_alpha).
double torque(const AlphaBeta& psis, const AlphaBeta& is, int p);

MachineDerivative derivatives(const MachineState& x, const MachineInputs& u, const MachineParams& params,
                              const DerivedParams& d);

enum class Integrator { euler, rk4 };

/// Directions along which the stator current is held fixed (open phase windings).
/// Components of d(is)/dt along each direction are removed; two independent
/// directions freeze the stator current entirely.
struct CurrentConstraint {
    int count = 0;
    AlphaBeta dirs[2];
};

/// Removes the constrained components from a current derivative (or current).
AlphaBeta project_free(const AlphaBeta& v, const CurrentConstraint& c);

/// One explicit step. Throws IntegrationDiverged on a non-finite result.
MachineState integrate_step(const MachineState& x, const MachineInputs& u, double dt, Integrator method,
                            const MachineParams& params, const DerivedParams& d,
                            const CurrentConstraint& constraint = {});

} // namespace ftdrive::machine
