#include "ftdrive/machine.hpp"

#include <cmath>

namespace ftdrive::machine {

MachineParams prototype_machine() {
    MachineParams m;
    m.Rs = 1.4;
    m.Rr = 1.1;
    m.Ls = 0.175;
    m.Lr = 0.175;
    m.Lm = 0.170;
    m.p = 2;
    m.J = 0.06;
    m.Tn = 15.0;
    m.psi_n = 0.6;
    return m;
}

DerivedParams derive_params(const MachineParams& m) {
    if (!(m.Rs > 0 && m.Rr > 0 && m.Ls > 0 && m.Lr > 0 && m.Lm > 0))
        throw InvalidArgument("machine resistances and inductances must be positive");
    if (m.p < 1) throw InvalidArgument("pole pairs must be >= 1");
    if (!(m.J > 0)) throw InvalidArgument("inertia must be positive");
    if (!(m.Lm * m.Lm < m.Ls * m.Lr))
        throw InvalidArgument("Lm^2 >= Ls*Lr: leakage-free machine is singular (sigma <= 0)");

    DerivedParams d;
    d.kr = m.Lm / m.Lr;
    d.R_sigma = m.Rs + m.Rr * d.kr * d.kr;
    d.tau_r = m.Lr / m.Rr;
    d.sigma = 1.0 - (m.Lm * m.Lm) / (m.Ls * m.Lr);
    d.tau_sigma = d.sigma * m.Ls / d.R_sigma;
    return d;
}

AlphaBeta stator_flux_from(const AlphaBeta& is, const AlphaBeta& psir, const DerivedParams& d,
                           const MachineParams& m) {
    return d.kr * psir + (d.sigma * m.Ls) * is;
}

AlphaBeta rotor_flux_from(const AlphaBeta& psis, const AlphaBeta& is, const MachineParams& m) {
    return (m.Lr / m.Lm) * psis + (m.Lm - m.Lr * m.Ls / m.Lm) * is;
}

double torque(const AlphaBeta& psis, const AlphaBeta& is, int p) { return (1.5 * p) * cross(psis, is); }

MachineDerivative derivatives(const MachineState& x, const MachineInputs& u, const MachineParams& m,
                              const DerivedParams& d) {
    const double omega = m.p * x.omega_m;

    // tau_sigma dis/dt = -is + kr/R_sigma (1/tau_r - j omega) psir + vs/R_sigma
    const AlphaBeta rotor_emf = (1.0 / d.tau_r) * x.psir - omega * rotate_j(x.psir);
    const AlphaBeta forcing = (d.kr / d.R_sigma) * rotor_emf + (1.0 / d.R_sigma) * u.vs;

    MachineDerivative dx;
    dx.dis = (1.0 / d.tau_sigma) * (forcing - x.is);
    // tau_r dpsir/dt = -psir + j omega tau_r psir + Lm is
    dx.dpsir = (1.0 / d.tau_r) * (m.Lm * x.is - x.psir) + omega * rotate_j(x.psir);

    const AlphaBeta psis = stator_flux_from(x.is, x.psir, d, m);
    dx.domega_m = (torque(psis, x.is, m.p) - u.T_load) / m.J;
    return dx;
}

AlphaBeta project_free(const AlphaBeta& v, const CurrentConstraint& c) {
    if (c.count <= 0) return v;
    if (c.count == 1) {
        const AlphaBeta& n = c.dirs[0];
        const double nn = dot(n, n);
        return v - (dot(v, n) / nn) * n;
    }
    return {};
}

namespace {

MachineState advance(const MachineState& x, const MachineDerivative& k, double h) {
    return {x.is + h * k.dis, x.psir + h * k.dpsir, x.omega_m + h * k.domega_m};
}

MachineDerivative constrained(const MachineState& x, const MachineInputs& u, const MachineParams& m,
                              const DerivedParams& d, const CurrentConstraint& c) {
    MachineDerivative k = derivatives(x, u, m, d);
    k.dis = project_free(k.dis, c);
    return k;
}

bool finite(const MachineState& x) {
    return std::isfinite(x.is.alpha) && std::isfinite(x.is.beta) && std::isfinite(x.psir.alpha) &&
           std::isfinite(x.psir.beta) && std::isfinite(x.omega_m);
}

} // namespace

MachineState integrate_step(const MachineState& x, const MachineInputs& u, double dt, Integrator method,
                            const MachineParams& m, const DerivedParams& d, const CurrentConstraint& c) {
    if (!(dt >= 0)) throw InvalidArgument("integrate_step: dt must be >= 0");
    if (dt == 0) return x;

    MachineState next;
    if (method == Integrator::euler) {
        next = advance(x, constrained(x, u, m, d, c), dt);
    } else {
        const MachineDerivative k1 = constrained(x, u, m, d, c);
        const MachineDerivative k2 = constrained(advance(x, k1, dt / 2), u, m, d, c);
        const MachineDerivative k3 = constrained(advance(x, k2, dt / 2), u, m, d, c);
        const MachineDerivative k4 = constrained(advance(x, k3, dt), u, m, d, c);
        const double w = dt / 6.0;
        next.is = x.is + w * (k1.dis + 2.0 * k2.dis + 2.0 * k3.dis + k4.dis);
        next.psir = x.psir + w * (k1.dpsir + 2.0 * k2.dpsir + 2.0 * k3.dpsir + k4.dpsir);
        next.omega_m = x.omega_m + w * (k1.domega_m + 2.0 * k2.domega_m + 2.0 * k3.domega_m + k4.domega_m);
    }
    if (!finite(next)) throw IntegrationDiverged("machine integration produced a non-finite state");
    return next;
}

} // namespace ftdrive::machine
