#pragma once

// Induction machine written directly in flux linkages (psi_s, psi_r) with the
// currents recovered from the 2x2 inductance matrix, plus its own RK4. Shares
// no code with the library model, which uses (i_s, psi_r) and sigma/tau forms.

#include "ftdrive/machine.hpp"

#include <array>

namespace oracle {

struct FluxState {
    double ps_a, ps_b, pr_a, pr_b, wm;
};

struct Currents {
    double is_a, is_b, ir_a, ir_b;
};

inline Currents currents(const FluxState& x, const ftdrive::machine::MachineParams& m) {
    const double det = m.Ls * m.Lr - m.Lm * m.Lm;
    return {(m.Lr * x.ps_a - m.Lm * x.pr_a) / det, (m.Lr * x.ps_b - m.Lm * x.pr_b) / det,
            (m.Ls * x.pr_a - m.Lm * x.ps_a) / det, (m.Ls * x.pr_b - m.Lm * x.ps_b) / det};
}

inline FluxState from_current_and_rotor_flux(double is_a, double is_b, double pr_a, double pr_b, double wm,
                                             const ftdrive::machine::MachineParams& m) {
    // ir = (psi_r - Lm is)/Lr, psi_s = Ls is + Lm ir
    const double ir_a = (pr_a - m.Lm * is_a) / m.Lr;
    const double ir_b = (pr_b - m.Lm * is_b) / m.Lr;
    return {m.Ls * is_a + m.Lm * ir_a, m.Ls * is_b + m.Lm * ir_b, pr_a, pr_b, wm};
}

inline FluxState rhs(const FluxState& x, double va, double vb, double T_load,
                     const ftdrive::machine::MachineParams& m) {
    const Currents c = currents(x, m);
    const double we = m.p * x.wm;
    const double te = 1.5 * m.p * (x.ps_a * c.is_b - x.ps_b * c.is_a);
    // Rotor cage in the stationary frame: 0 = Rr ir + dpsi_r/dt - j we psi_r.
    return {va - m.Rs * c.is_a, vb - m.Rs * c.is_b, -m.Rr * c.ir_a - we * x.pr_b, -m.Rr * c.ir_b + we * x.pr_a,
            (te - T_load) / m.J};
}

inline FluxState axpy(const FluxState& x, double h, const FluxState& k) {
    return {x.ps_a + h * k.ps_a, x.ps_b + h * k.ps_b, x.pr_a + h * k.pr_a, x.pr_b + h * k.pr_b, x.wm + h * k.wm};
}

inline FluxState rk4(const FluxState& x, double va, double vb, double T_load, double h,
                     const ftdrive::machine::MachineParams& m) {
    const FluxState k1 = rhs(x, va, vb, T_load, m);
    const FluxState k2 = rhs(axpy(x, h / 2, k1), va, vb, T_load, m);
    const FluxState k3 = rhs(axpy(x, h / 2, k2), va, vb, T_load, m);
    const FluxState k4 = rhs(axpy(x, h, k3), va, vb, T_load, m);
    return {x.ps_a + h / 6 * (k1.ps_a + 2 * k2.ps_a + 2 * k3.ps_a + k4.ps_a),
            x.ps_b + h / 6 * (k1.ps_b + 2 * k2.ps_b + 2 * k3.ps_b + k4.ps_b),
            x.pr_a + h / 6 * (k1.pr_a + 2 * k2.pr_a + 2 * k3.pr_a + k4.pr_a),
            x.pr_b + h / 6 * (k1.pr_b + 2 * k2.pr_b + 2 * k3.pr_b + k4.pr_b),
            x.wm + h / 6 * (k1.wm + 2 * k2.wm + 2 * k3.wm + k4.wm)};
}

} // namespace oracle
