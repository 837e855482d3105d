#include "ftdrive/mpc.hpp"

#include "ftdrive/kernels.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace ftdrive::mpc {

double nominal_weighting(const machine::MachineParams& m) { return m.Tn / m.psi_n; }

PiConfig default_pi(const machine::MachineParams& m, double bandwidth) {
    return {4.0 * m.J * bandwidth, m.J * bandwidth * bandwidth, 1.5 * m.Tn};
}

AlphaBeta estimate_stator_flux(const EstimatorState& est, const AlphaBeta& vs, const AlphaBeta& is, double Rs,
                               double Ts) {
    if (!(Ts > 0)) throw InvalidArgument("estimate_stator_flux: Ts must be positive");
    return est.psis_hat + Ts * vs - (Rs * Ts) * is;
}

AlphaBeta predict_stator_flux(const AlphaBeta& psis_k, const AlphaBeta& vs, const AlphaBeta& is_k, double Rs,
                              double Ts) {
    if (!(Ts > 0)) throw InvalidArgument("predict_stator_flux: Ts must be positive");
    return psis_k + Ts * vs - (Rs * Ts) * is_k;
}

namespace {

struct CurrentMap {
    AlphaBeta base; ///< prediction for vs = 0
    double gain;    ///< d is(k+1) / d vs
};

CurrentMap current_map(const AlphaBeta& is_k, const AlphaBeta& psir_k, double omega_e,
                       const machine::DerivedParams& d, double Ts) {
    const double a = 1.0 / (1.0 + Ts / d.tau_sigma);
    const double b = Ts / (d.tau_sigma * d.R_sigma);
    const AlphaBeta emf = (1.0 / d.tau_r) * psir_k - omega_e * rotate_j(psir_k);
    return {a * (is_k + b * (d.kr * emf)), a * b};
}

} // namespace

AlphaBeta predict_current(const AlphaBeta& is_k, const AlphaBeta& psir_k, const AlphaBeta& vs, double omega_e,
                          const machine::DerivedParams& d, double Ts) {
    if (!(Ts > 0)) throw InvalidArgument("predict_current: Ts must be positive");
    const double a = 1.0 / (1.0 + Ts / d.tau_sigma);
    const double b = Ts / (d.tau_sigma * d.R_sigma);
    const AlphaBeta emf = (1.0 / d.tau_r) * psir_k - omega_e * rotate_j(psir_k);
    return a * (is_k + b * (d.kr * emf + vs));
}

double predict_torque(const AlphaBeta& psis_k1, const AlphaBeta& is_k1, int p) {
    return machine::torque(psis_k1, is_k1, p);
}

double cost(double te_ref, double te_pred, double flux_ref, double flux_pred_mag, const MpcConfig& cfg) {
    const double w = cfg.flux_term_multiplier * cfg.lambda;
    return std::fabs(te_ref - te_pred) + w * std::fabs(flux_ref - flux_pred_mag);
}

Selection select_vector(const AlphaBeta& psis, const Measurements& meas, const References& refs,
                        std::span<const converter::VoltageVector> table,
                        const std::optional<AlphaBeta>& committed, const MpcConfig& cfg,
                        const machine::MachineParams& m, const machine::DerivedParams& d) {
    if (table.empty()) throw InvalidArgument("select_vector: empty vector table");
    if (!(cfg.Ts > 0)) throw InvalidArgument("select_vector: Ts must be positive");
    const double omega_e = m.p * meas.omega_m;

    AlphaBeta psi0 = psis;
    AlphaBeta is0 = meas.is;
    if (cfg.delay_compensation) {
        const AlphaBeta v = committed.value_or(AlphaBeta{});
        const AlphaBeta psir = machine::rotor_flux_from(psi0, is0, m);
        const AlphaBeta psi1 = predict_stator_flux(psi0, v, is0, m.Rs, cfg.Ts);
        is0 = predict_current(is0, psir, v, omega_e, d, cfg.Ts);
        psi0 = psi1;
    }

    const AlphaBeta psir0 = machine::rotor_flux_from(psi0, is0, m);
    const CurrentMap cur = current_map(is0, psir0, omega_e, d, cfg.Ts);
    const AlphaBeta flux_base = psi0 - (m.Rs * cfg.Ts) * is0;

    kernels::CandidateBatch batch;
    batch.flux_base_alpha = flux_base.alpha;
    batch.flux_base_beta = flux_base.beta;
    batch.current_base_alpha = cur.base.alpha;
    batch.current_base_beta = cur.base.beta;
    batch.ts = cfg.Ts;
    batch.current_gain = cur.gain;
    batch.torque_coeff = 1.5 * m.p;
    batch.te_ref = refs.torque;
    batch.flux_ref = refs.flux;
    batch.flux_weight = cfg.flux_term_multiplier * cfg.lambda;

    constexpr std::size_t kMax = 8;
    std::array<double, kMax> va{};
    std::array<double, kMax> vb{};
    Selection sel;
    sel.costs.resize(table.size());
    for (std::size_t off = 0; off < table.size(); off += kMax) {
        const std::size_t n = std::min(kMax, table.size() - off);
        for (std::size_t i = 0; i < n; ++i) {
            va[i] = table[off + i].v.alpha;
            vb[i] = table[off + i].v.beta;
        }
        kernels::candidate_costs(batch, std::span<const double>(va.data(), n), std::span<const double>(vb.data(), n),
                                 std::span<double>(sel.costs.data() + off, n));
    }

    sel.index = 0;
    for (std::size_t i = 1; i < sel.costs.size(); ++i)
        if (sel.costs[i] < sel.costs[static_cast<std::size_t>(sel.index)]) sel.index = static_cast<int>(i);
    return sel;
}

PiStep pi_speed_step(double omega_ref, double omega_m, const PiState& state, const PiConfig& cfg, double dt) {
    if (!(dt > 0)) throw InvalidArgument("pi_speed_step: dt must be positive");
    const double e = omega_ref - omega_m;
    PiStep out;
    out.state = state;
    const double candidate = cfg.kp * e + cfg.ki * (state.integral + e * dt);
    if (std::fabs(candidate) <= cfg.t_max) {
        out.state.integral = state.integral + e * dt;
        out.torque_ref = candidate;
    } else {
        // Saturated: integrator frozen.
        out.torque_ref = std::clamp(cfg.kp * e + cfg.ki * state.integral, -cfg.t_max, cfg.t_max);
    }
    return out;
}

} // namespace ftdrive::mpc
