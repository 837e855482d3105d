#include "ftdrive/simulator.hpp"

#include "ftdrive/design.hpp"
#include "ftdrive/kernels.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace ftdrive::sim {

using converter::Device;
using converter::DeviceHealth;
using converter::Relay;
using fault::ModeKind;

double rated_peak_current(const machine::MachineParams& m) {
    const double iq = m.Tn / (1.5 * m.p * m.psi_n);
    const double id = m.psi_n / m.Ls;
    return std::hypot(iq, id);
}

namespace {

enum class LegState { upper, lower, shoot_through, diode_upper, diode_lower, open };

struct Pending {
    double t;
    fault::FsmEvent event;
};

class Simulator {
public:
    explicit Simulator(const Scenario& s)
        : sc_(s),
          m_(s.machine),
          d_(machine::derive_params(s.machine)),
          ratio_(s.control_ratio()),
          eps_amp_(s.detector.eps_amp > 0 ? s.detector.eps_amp : 0.02 * rated_peak_current(s.machine)),
          detector_(s.detector, eps_amp_),
          rng_(s.controller.noise.seed) {
        dc_.c1 = s.dc.c1;
        dc_.c2 = s.dc.c2;
        dc_.v_dc1 = s.dc.v_dc1_init.value_or(0.5 * s.dc.v_total);
        dc_.v_dc2 = s.dc.v_dc2_init.value_or(0.5 * s.dc.v_total);
        for (auto& f : fuses_) f.rated_i2t = s.dc.fuse.rated_i2t;
        fuse_params_.Vdc = s.dc.v_total;
        fuse_params_.Rf = s.dc.fuse.Rf;
        fuse_params_.alpha = s.dc.fuse.alpha;
        fuse_params_.omega_d = s.dc.fuse.omega_d;
        pi_cfg_ = s.controller.pi.value_or(mpc::default_pi(m_, s.controller.pi_bandwidth));
        mpc_cfg_ = s.controller.mpc;
        mpc_cfg_.Ts = s.sim.Ts;

        // Averaged first stage seen from the inductor: rising at V/(2L) while the switch conducts.
        wave_.switching_frequency = s.dc.balancer.switching_frequency;
        wave_.duty = s.dc.balancer.duty;
        wave_.rise_slope = 0.5 * s.dc.v_total / s.dc.inductance;
        wave_.fall_slope = wave_.rise_slope;
        const double deadband = s.detector.slope_deadband > 0 ? s.detector.slope_deadband : 0.1 * wave_.rise_slope;
        for (auto& q : q_) {
            q.monitor.emplace(1.0 / wave_.switching_frequency, deadband);
            q.iL = 10.0;
        }

        faults_ = s.faults;
        std::stable_sort(faults_.begin(), faults_.end(),
                         [](const fault::FaultEvent& a, const fault::FaultEvent& b) { return a.time < b.time; });
        for (const auto& f : faults_) {
            DetectionRecord r;
            r.target = std::string(fault::target_name(f.target));
            r.kind = std::string(fault::kind_name(f.kind));
            r.fault_time = f.time;
            sum_.detections.push_back(r);
            if (!first_fault_) first_fault_ = f.time;
        }
        table_ = converter::voltage_vector_table(table_mode_, dc_);
    }

    RunResult run() {
        sum_.scenario = sc_.name;
        sum_.backend = std::string(kernels::backend_name(kernels::active_backend()));
        sum_.dt = sc_.sim.dt;
        sum_.duration = sc_.sim.duration;
        const long steps = std::lround(sc_.sim.duration / sc_.sim.dt);
        long n = 0;
        try {
            for (; n < steps; ++n) step(n);
        } catch (const Error& e) {
            std::ostringstream os;
            os << "step " << n << " (t=" << format_double(static_cast<double>(n) * sc_.sim.dt) << "): " << e.what()
               << "; is=(" << format_double(x_.is.alpha) << "," << format_double(x_.is.beta)
               << ") omega_m=" << format_double(x_.omega_m);
            sum_.aborted = true;
            sum_.abort_diagnostic = os.str();
        }
        sum_.steps = n;
        sum_.final_speed = x_.omega_m;
        finish();
        return {std::move(trace_), std::move(sum_)};
    }

private:
    // --- helpers -------------------------------------------------------------

    double time(long n) const { return static_cast<double>(n) * sc_.sim.dt; }

    void warn(const std::string& w) { ++sum_.warnings[w]; }

    bool device_on(Device dev) const {
        const int k = static_cast<int>(dev);
        const DeviceHealth h = health_[static_cast<std::size_t>(k)];
        if (h == DeviceHealth::short_fault) return true;
        if (h == DeviceHealth::open_fault) return false;
        if (forced_off_[static_cast<std::size_t>(k)]) return false;
        if (forced_on_[static_cast<std::size_t>(k)]) return true;
        const int leg = index(converter::leg_of(dev));
        return converter::is_upper(dev) ? leg_cmd_[static_cast<std::size_t>(leg)] == 1
                                        : leg_cmd_[static_cast<std::size_t>(leg)] == 0;
    }

    converter::TerminalNetwork network_from(const std::array<LegState, 3>& st) const {
        converter::TerminalNetwork net;
        net.rn = rn_;
        for (int k = 0; k < 3; ++k) {
            switch (st[static_cast<std::size_t>(k)]) {
            case LegState::upper:
            case LegState::diode_upper: net.poles[k] = dc_.v_dc1; break;
            case LegState::lower:
            case LegState::diode_lower: net.poles[k] = -dc_.v_dc2; break;
            case LegState::shoot_through: net.poles[k] = 0.5 * (dc_.v_dc1 - dc_.v_dc2); break;
            case LegState::open: net.poles[k].reset(); break;
            }
        }
        return net;
    }

    double phase_current_rate(const converter::TerminalNetwork& net, Leg leg, double T_load) const {
        machine::MachineDerivative dx = machine::derivatives(x_, {converter::terminal_voltage(net), T_load}, m_, d_);
        const AlphaBeta dis = machine::project_free(dx.dis, converter::terminal_constraint(net));
        return dot(converter::phase_current_direction(leg, net), dis);
    }

    /// Conduction state of every leg for the coming step.
    std::array<LegState, 3> resolve_legs(double T_load) {
        std::array<LegState, 3> st{};
        std::array<bool, 3> diode{};
        for (int k = 0; k < 3; ++k) {
            const auto K = static_cast<std::size_t>(k);
            const Leg leg = static_cast<Leg>(k);
            if (disconnected_[K]) {
                st[K] = LegState::open;
                continue;
            }
            const bool up = device_on(converter::upper_device(leg));
            const bool lo = device_on(converter::lower_device(leg));
            if (up && lo)
                st[K] = LegState::shoot_through;
            else if (up)
                st[K] = LegState::upper;
            else if (lo)
                st[K] = LegState::lower;
            else {
                diode[K] = true;
                st[K] = diode_open_[K] ? LegState::open : LegState::diode_lower; // placeholder pole
            }
        }
        // Freewheeling legs follow their current; open ones reconnect when the
        // terminal would be driven past a rail.
        for (int k = 0; k < 3; ++k) {
            const auto K = static_cast<std::size_t>(k);
            if (!diode[K]) continue;
            const Leg leg = static_cast<Leg>(k);
            if (!diode_open_[K]) {
                const double i = dot(converter::phase_current_direction(leg, network_from(st)), x_.is);
                if (i > 0)
                    st[K] = LegState::diode_lower;
                else if (i < 0)
                    st[K] = LegState::diode_upper;
                else {
                    st[K] = LegState::open;
                    diode_open_[K] = true;
                }
            }
            // With R_N closed the open phase sits at the midpoint, inside both rails.
            if (rn_ == Relay::closed) {
                st[K] = LegState::open;
                diode_open_[K] = true;
                continue;
            }
            if (diode_open_[K]) {
                auto trial = st;
                trial[K] = LegState::diode_upper;
                if (phase_current_rate(network_from(trial), leg, T_load) < 0) {
                    st[K] = LegState::diode_upper;
                    diode_open_[K] = false;
                    continue;
                }
                trial[K] = LegState::diode_lower;
                if (phase_current_rate(network_from(trial), leg, T_load) > 0) {
                    st[K] = LegState::diode_lower;
                    diode_open_[K] = false;
                    continue;
                }
                st[K] = LegState::open;
            }
        }
        return st;
    }

    std::string health_string() const {
        std::string h(8, 'H');
        for (int k = 0; k < 6; ++k) {
            const auto K = static_cast<std::size_t>(k);
            const Leg leg = converter::leg_of(static_cast<Device>(k));
            if (disconnected_[static_cast<std::size_t>(index(leg))])
                h[K] = 'X';
            else if (health_[K] == DeviceHealth::short_fault)
                h[K] = 'S';
            else if (health_[K] == DeviceHealth::open_fault)
                h[K] = 'O';
            else if (forced_off_[K])
                h[K] = 'B';
        }
        for (std::size_t q = 0; q < 2; ++q) {
            if (q_[q].health == DeviceHealth::short_fault) h[6 + q] = 'S';
            if (q_[q].health == DeviceHealth::open_fault) h[6 + q] = 'O';
        }
        return h;
    }

    DetectionRecord* record_for(fault::Target t) {
        for (auto& r : sum_.detections)
            if (r.target == fault::target_name(t)) return &r;
        return nullptr;
    }

    // --- events ------------------------------------------------------------------

    void apply_due_faults(double t) {
        while (next_fault_ < faults_.size() && faults_[next_fault_].time <= t) {
            const fault::FaultEvent f = faults_[next_fault_++];
            if (fault::is_inverter_device(f.target)) {
                const auto k = static_cast<std::size_t>(fault::as_device(f.target));
                health_[k] = f.kind == fault::FaultKind::short_circuit ? DeviceHealth::short_fault
                                                                      : DeviceHealth::open_fault;
                if (f.kind == fault::FaultKind::short_circuit)
                    queue(fault::sc_detection_event(f, sc_.detector.sc_latency),
                          {fault::EventKind::short_circuit_detected, f.target});
            } else if (fault::is_dcdc_switch(f.target)) {
                q_[f.target == fault::Target::Q1 ? 0 : 1].health =
                    f.kind == fault::FaultKind::short_circuit ? DeviceHealth::short_fault : DeviceHealth::open_fault;
            } else {
                const Leg leg = fault::target_leg(f.target);
                disconnected_[static_cast<std::size_t>(index(leg))] = true;
                if (sc_.controller.postfault_strategy)
                    queue(t, {fault::EventKind::leg_lost, f.target});
                else
                    warn("leg " + std::string(1, leg_name(leg)) + " lost without postfault strategy: two-wire operation");
            }
        }
    }

    void queue(double t, fault::FsmEvent e) {
        pending_.push_back({t, e});
        std::stable_sort(pending_.begin(), pending_.end(), [](const Pending& a, const Pending& b) { return a.t < b.t; });
    }

    void note_detection(const fault::FsmEvent& e, double t) {
        fault::Target key = e.target;
        if (e.kind == fault::EventKind::fuse_blown) return;
        DetectionRecord* r = record_for(key);
        if (e.kind == fault::EventKind::open_circuit_detected) {
            // The classifier names a device; attribute it to the device fault on that leg, if any.
            r = nullptr;
            for (std::size_t i = 0; i < faults_.size(); ++i) {
                const auto& f = faults_[i];
                if (fault::is_inverter_device(f.target) && f.time <= t &&
                    converter::leg_of(fault::as_device(f.target)) == fault::target_leg(e.target) &&
                    !sum_.detections[i].detection_time) {
                    r = &sum_.detections[i];
                    break;
                }
            }
        }
        if (r && !r->detection_time) {
            r->detection_time = t;
            r->detected_as = std::string(fault::target_name(e.target));
            r->fundamental_hz = detector_.frequency_estimate();
        }
    }

    void process_events(double t) {
        std::vector<fault::FsmEvent> due;
        while (!pending_.empty() && pending_.front().t <= t + 1e-12) {
            due.push_back(pending_.front().event);
            pending_.erase(pending_.begin());
        }
        if (due.empty()) return;
        for (const auto& e : due) note_detection(e, t);
        if (!sc_.controller.postfault_strategy) {
            warn("detection without postfault strategy: no reconfiguration");
            return;
        }
        const ModeKind before = fsm_.mode.kind;
        const fault::FsmResult r = fault::fsm_step(fsm_, due, t);
        fsm_ = r.state;
        for (const auto& c : r.log) sum_.mode_log.push_back(c);
        for (const auto& a : r.actions) apply_action(a, t);
        if (fsm_.mode.kind != before && fsm_.mode.kind == ModeKind::postfault) detector_.reset(t);
    }

    void apply_action(const fault::FsmAction& a, double t) {
        switch (a.kind) {
        case fault::ActionKind::gate_block: {
            const auto k = static_cast<std::size_t>(fault::as_device(a.target));
            forced_off_[k] = true;
            forced_on_[k] = false;
            break;
        }
        case fault::ActionKind::gate_on: {
            const auto k = static_cast<std::size_t>(fault::as_device(a.target));
            if (health_[k] == DeviceHealth::open_fault) warn("gate-on requested for an open device");
            forced_on_[k] = true;
            break;
        }
        case fault::ActionKind::close_rn: rn_ = Relay::closed; break;
        case fault::ActionKind::set_postfault_table:
            table_mode_ = converter::postfault_mode(fault::target_leg(a.target));
            pending_index_.reset();
            break;
        case fault::ActionKind::open_isolation_relay: break;
        case fault::ActionKind::enable_redundant: {
            auto& q = q_[a.target == fault::Target::Q1 ? 0 : 1];
            q.health = DeviceHealth::healthy;
            q.replaced = true;
            break;
        }
        case fault::ActionKind::stop:
            forced_off_.fill(true);
            forced_on_.fill(false);
            warn("drive stopped at t=" + format_double(t));
            break;
        }
    }

    // --- first stage ------------------------------------------------------------

    void first_stage(long n, double t) {
        for (std::size_t k = 0; k < 2; ++k) {
            auto& q = q_[k];
            const bool gate = fault::gate_command(wave_, t);
            q.iL += fault::inductor_slope(wave_, gate, q.health) * sc_.sim.dt;
            q.samples[static_cast<std::size_t>(n % 3)] = q.iL;
            if (n < 2 || q.reported) continue;
            // Oldest to newest.
            const std::array<double, 3> s{q.samples[static_cast<std::size_t>((n + 1) % 3)],
                                          q.samples[static_cast<std::size_t>((n + 2) % 3)],
                                          q.samples[static_cast<std::size_t>(n % 3)]};
            const double slope = fault::estimate_slope(s, sc_.sim.dt);
            const fault::SlopeVerdict v = q.monitor->update(t, slope, gate);
            if (v != fault::SlopeVerdict::consistent) {
                q.reported = true;
                queue(t + sc_.sim.dt, {fault::EventKind::dcdc_fault_detected, k == 0 ? fault::Target::Q1 : fault::Target::Q2});
                if (q.health == DeviceHealth::healthy) warn("first-stage slope check fired on a healthy switch");
            }
        }
    }

    /// p omega_m plus the slip implied by the estimated torque and rotor flux.
    double synchronous_speed(const AlphaBeta& is, double omega_m) const {
        const double psir = norm(machine::rotor_flux_from(est_.psis_hat, is, m_));
        double slip = 0.0;
        if (psir > 0.05 * mpc_cfg_.flux_ref)
            slip = m_.Rr * machine::torque(est_.psis_hat, is, m_.p) / (1.5 * m_.p * psir * psir);
        return m_.p * omega_m + slip;
    }

    // --- controller ------------------------------------------------------------------

    void control(long n, double t) {
        const long k = n / ratio_;
        Abc phases = converter::phase_currents(x_.is, network_from(leg_state_));
        AlphaBeta is_meas = x_.is;
        double omega_meas = x_.omega_m;
        if (sc_.controller.noise.current_std > 0) {
            std::normal_distribution<double> nd(0.0, sc_.controller.noise.current_std);
            const Abc noise{nd(rng_), nd(rng_), nd(rng_)};
            for (int p = 0; p < 3; ++p) phases[p] += noise[p];
            is_meas += converter::clarke(noise);
        }
        if (sc_.controller.noise.speed_std > 0) {
            std::normal_distribution<double> nd(0.0, sc_.controller.noise.speed_std);
            omega_meas += nd(rng_);
        }

        // Terminal voltage is sensed: the estimator integrates the measured
        // volt-seconds of the last period, not the commanded vector.
        est_.last_vs = (1.0 / sc_.sim.Ts) * volt_seconds_;
        volt_seconds_ = {};
        if (k > 0) est_.psis_hat = mpc::estimate_stator_flux(est_, est_.last_vs, is_meas, m_.Rs, sc_.sim.Ts);

        detector_.push(t, phases, synchronous_speed(is_meas, omega_meas));
        if (fsm_.mode.kind == ModeKind::normal || fsm_.mode.kind == ModeKind::postfault) {
            if (auto c = detector_.evaluate(t)) {
                if (c->multi_fault) warn("detector: several phases above threshold");
                if (c->device) {
                    const std::string name = converter::device_name(*c->device);
                    sum_.classifications.emplace_back(t, name);
                    if (!first_fault_ || t < *first_fault_) ++sum_.false_positives;
                    queue(t, {fault::EventKind::open_circuit_detected, static_cast<fault::Target>(static_cast<int>(*c->device))});
                    process_events(t);
                }
            }
        }

        omega_ref_ = sc_.speed_ref.at(t);
        if (fsm_.mode.kind == ModeKind::shutdown) {
            te_ref_ = 0.0;
            applied_index_ = -1;
            return;
        }

        const mpc::PiStep pi = mpc::pi_speed_step(omega_ref_, omega_meas, pi_state_, pi_cfg_, sc_.sim.Ts);
        pi_state_ = pi.state;
        const double ramp = sc_.controller.torque_ramp_periods > 0
                                ? std::min(1.0, static_cast<double>(k + 1) / sc_.controller.torque_ramp_periods)
                                : 1.0;
        te_ref_ = ramp * pi.torque_ref;

        table_ = converter::voltage_vector_table(table_mode_, dc_);
        std::optional<AlphaBeta> committed;
        const int committed_index = sc_.controller.computation_delay && pending_index_ ? *pending_index_ : applied_index_;
        if (committed_index >= 0 && committed_index < static_cast<int>(table_.size()))
            committed = table_[static_cast<std::size_t>(committed_index)].v;

        const mpc::Selection sel = mpc::select_vector(est_.psis_hat, {is_meas, omega_meas}, {te_ref_, mpc_cfg_.flux_ref},
                                                      table_, committed, mpc_cfg_, m_, d_);
        if (sc_.controller.computation_delay) {
            applied_index_ = pending_index_.value_or(sel.index);
            pending_index_ = sel.index;
        } else {
            applied_index_ = sel.index;
        }
        const auto& v = table_[static_cast<std::size_t>(applied_index_)];
        leg_cmd_ = v.levels;
    }

    // --- plant ----------------------------------------------------------------------

    void step(long n) {
        const double t = time(n);
        const double dt = sc_.sim.dt;
        apply_due_faults(t);
        process_events(t);
        if (n % ratio_ == 0) {
            leg_state_ = resolve_legs(sc_.load_torque.at(t));
            control(n, t);
        }
        const double T_load = sc_.load_torque.at(t);
        leg_state_ = resolve_legs(T_load);
        const converter::TerminalNetwork net = network_from(leg_state_);
        const machine::CurrentConstraint cons = converter::terminal_constraint(net);
        x_.is = machine::project_free(x_.is, cons);
        const Abc phases = converter::phase_currents(x_.is, net);
        const double i_mid = rn_ == Relay::closed ? -(phases.a + phases.b + phases.c) : 0.0;

        if (n % sc_.sim.decimation == 0) record(t, phases, i_mid);

        // DC link: rail currents of the legs sitting on each rail.
        double i_up = 0.0;
        double i_low = 0.0;
        for (int k = 0; k < 3; ++k) {
            const LegState st = leg_state_[static_cast<std::size_t>(k)];
            if (st == LegState::upper || st == LegState::diode_upper) i_up += phases[k];
            if (st == LegState::lower || st == LegState::diode_lower) i_low -= phases[k];
        }
        converter::SourceCurrents src = converter::dcdc_balancer_step(dc_, sc_.dc.balancer, dt);
        if (q_[0].health != DeviceHealth::healthy) src.upper = 0.0;
        if (q_[1].health != DeviceHealth::healthy) src.lower = 0.0;
        first_stage(n, t);

        const machine::MachineState next =
            machine::integrate_step(x_, {converter::terminal_voltage(net), T_load}, dt, sc_.sim.integrator, m_, d_, cons);
        const converter::DcLinkStep dcs = converter::dc_link_step(dc_, i_up, i_low, i_mid, src, dt);
        if (dcs.clamped) warn("dc-link capacitor voltage clamped at 0");
        dc_ = dcs.state;
        const machine::MachineState prev = x_;
        x_ = next;

        shoot_through(n, t);
        diode_commutation(net);
        volt_seconds_ += machine::stator_flux_from(x_.is, x_.psir, d_, m_) -
                         machine::stator_flux_from(prev.is, prev.psir, d_, m_) + (0.5 * m_.Rs * dt) * (prev.is + x_.is);
    }

    void shoot_through(long n, double t) {
        for (int k = 0; k < 3; ++k) {
            const auto K = static_cast<std::size_t>(k);
            if (leg_state_[K] != LegState::shoot_through || fuses_[K].state == converter::FuseState::blown) {
                st_start_[K].reset();
                continue;
            }
            if (!st_start_[K]) st_start_[K] = n;
            const double tau = (static_cast<double>(n - *st_start_[K]) + 0.5) * sc_.sim.dt;
            fuses_[K] = converter::fuse_step(fuses_[K], design::fault_current(tau, fuse_params_), sc_.sim.dt);
            if (fuses_[K].state == converter::FuseState::blown) {
                disconnected_[K] = true;
                const double t_blow = t + sc_.sim.dt;
                sum_.fuses.push_back({leg_name(static_cast<Leg>(k)), time(*st_start_[K]), t_blow, fuses_[K].accumulated_i2t});
                queue(t_blow, {fault::EventKind::fuse_blown, static_cast<fault::Target>(static_cast<int>(fault::Target::leg_a) + k)});
            }
        }
    }

    void diode_commutation(const converter::TerminalNetwork& net) {
        bool changed = false;
        for (int k = 0; k < 3; ++k) {
            const auto K = static_cast<std::size_t>(k);
            const LegState st = leg_state_[K];
            if (st != LegState::diode_upper && st != LegState::diode_lower) continue;
            const double i = dot(converter::phase_current_direction(static_cast<Leg>(k), net), x_.is);
            if ((st == LegState::diode_lower && i <= 0) || (st == LegState::diode_upper && i >= 0)) {
                leg_state_[K] = LegState::open;
                diode_open_[K] = true;
                changed = true;
            }
        }
        if (changed) {
            converter::TerminalNetwork after = net;
            for (int k = 0; k < 3; ++k)
                if (leg_state_[static_cast<std::size_t>(k)] == LegState::open) after.poles[k].reset();
            x_.is = machine::project_free(x_.is, converter::terminal_constraint(after));
        }
    }

    void record(double t, const Abc& phases, double i_mid) {
        TraceRecord r;
        r.t = t;
        r.ia = phases.a;
        r.ib = phases.b;
        r.ic = phases.c;
        r.i_mid = i_mid;
        r.v_dc1 = dc_.v_dc1;
        r.v_dc2 = dc_.v_dc2;
        const AlphaBeta psis = machine::stator_flux_from(x_.is, x_.psir, d_, m_);
        r.psis_alpha = psis.alpha;
        r.psis_beta = psis.beta;
        r.psis_alpha_est = est_.psis_hat.alpha;
        r.psis_beta_est = est_.psis_hat.beta;
        r.te = machine::torque(psis, x_.is, m_.p);
        r.te_ref = te_ref_;
        r.omega_m = x_.omega_m;
        r.omega_ref = omega_ref_;
        r.vector_index = applied_index_;
        r.mode = std::string(fault::mode_name(fsm_.mode.kind));
        r.health = health_string();
        trace_.push_back(std::move(r));
    }

    // --- summary ------------------------------------------------------------------------

    void finish() {
        const double horizon = faults_.empty() ? std::numeric_limits<double>::infinity() : faults_.front().time;
        std::optional<double> settle;
        for (const auto& r : trace_) {
            if (r.t > horizon) break;
            const double tol = 0.05 * std::max(std::fabs(r.omega_ref), 1e-9);
            if (std::fabs(r.omega_m - r.omega_ref) <= tol) {
                if (!settle) settle = r.t;
            } else {
                settle.reset();
            }
        }
        sum_.settling_time = settle;

        const auto& an = sc_.sim.analysis;
        if (an.prefault && an.postfault && !trace_.empty()) {
            try {
                sum_.analysis = negative_sequence_report(trace_, *an.prefault, *an.postfault, mpc_cfg_.flux_ref, an.f1);
            } catch (const Error& e) {
                sum_.analysis_error = e.what();
            }
        }
    }

    // --- state ----------------------------------------------------------------------

    struct FirstStageSwitch {
        DeviceHealth health = DeviceHealth::healthy;
        bool replaced = false;
        bool reported = false;
        double iL = 0.0;
        std::array<double, 3> samples{};
        std::optional<fault::SlopeMonitor> monitor;
    };

    const Scenario& sc_;
    machine::MachineParams m_;
    machine::DerivedParams d_;
    int ratio_;
    double eps_amp_;
    fault::OpenSwitchDetector detector_;
    std::mt19937_64 rng_;

    machine::MachineState x_;
    converter::DcLinkState dc_;
    std::array<DeviceHealth, 6> health_{DeviceHealth::healthy, DeviceHealth::healthy, DeviceHealth::healthy,
                                        DeviceHealth::healthy, DeviceHealth::healthy, DeviceHealth::healthy};
    std::array<bool, 6> forced_off_{};
    std::array<bool, 6> forced_on_{};
    std::array<bool, 3> disconnected_{};
    std::array<bool, 3> diode_open_{};
    std::array<LegState, 3> leg_state_{LegState::lower, LegState::lower, LegState::lower};
    std::array<converter::FuseElement, 3> fuses_{};
    std::array<std::optional<long>, 3> st_start_{};
    design::FuseDesignParams fuse_params_;
    Relay rn_ = Relay::open;
    std::array<FirstStageSwitch, 2> q_{};
    fault::InductorWaveform wave_;

    converter::TableMode table_mode_ = converter::TableMode::normal;
    std::vector<converter::VoltageVector> table_;
    std::array<int, 3> leg_cmd_{0, 0, 0};
    int applied_index_ = -1;
    std::optional<int> pending_index_;
    mpc::MpcConfig mpc_cfg_;
    mpc::PiConfig pi_cfg_;
    mpc::PiState pi_state_;
    mpc::EstimatorState est_;
    AlphaBeta volt_seconds_;
    double te_ref_ = 0.0;
    double omega_ref_ = 0.0;

    fault::FsmState fsm_;
    std::vector<fault::FaultEvent> faults_;
    std::size_t next_fault_ = 0;
    std::optional<double> first_fault_;
    std::vector<Pending> pending_;

    Trace trace_;
    Summary sum_;
};

} // namespace

RunResult run_scenario(const Scenario& s) {
    s.validate();
    Simulator sim(s);
    return sim.run();
}

// --- summary JSON -------------------------------------------------------------------------

namespace {

using nlohmann::json;

json window_json(const WindowAnalysis& w) {
    json j = {{"t0", w.t0},
              {"t1", w.t1},
              {"f1_hz", w.f1},
              {"periods", w.periods},
              {"amplitude", {w.amplitude[0], w.amplitude[1], w.amplitude[2]}},
              {"relative_phase_rad", {w.relative_phase[0], w.relative_phase[1], w.relative_phase[2]}},
              {"positive", w.positive},
              {"negative", w.negative},
              {"zero", w.zero},
              {"negative_ratio", w.negative_ratio},
              {"flux_error_mean", w.flux_error_mean},
              {"torque_mean", w.torque_mean},
              {"torque_std", w.torque_std}};
    j["circularity"] = w.circularity ? json(*w.circularity) : json(nullptr);
    return j;
}

template <class T>
json opt(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

} // namespace

std::string analysis_to_json(const NegativeSequenceReport& a) {
    json ratios = json::array();
    for (const auto& r : a.phase_ratio) ratios.push_back(opt(r));
    const json j = {{"prefault", window_json(a.prefault)},
                    {"postfault", window_json(a.postfault)},
                    {"phase_current_ratio", ratios},
                    {"current_ratio", a.current_ratio}};
    return j.dump(2);
}

std::string summary_to_json(const Summary& s) {
    json j;
    j["scenario"] = s.scenario;
    j["backend"] = s.backend;
    j["steps"] = s.steps;
    j["dt"] = s.dt;
    j["duration"] = s.duration;
    j["aborted"] = s.aborted;
    if (s.aborted) j["abort_diagnostic"] = s.abort_diagnostic;
    j["settling"] = {{"speed_within_5pct_from", opt(s.settling_time)}, {"final_speed", s.final_speed}};
    j["mode_log"] = json::array();
    for (const auto& m : s.mode_log)
        j["mode_log"].push_back({{"t", m.t}, {"mode", std::string(fault::mode_name(m.mode))}, {"detail", m.detail}});
    j["detections"] = json::array();
    for (const auto& d : s.detections) {
        json r = {{"target", d.target},
                  {"kind", d.kind},
                  {"fault_time", d.fault_time},
                  {"detection_time", opt(d.detection_time)},
                  {"detected_as", opt(d.detected_as)},
                  {"fundamental_hz", opt(d.fundamental_hz)}};
        r["latency"] = d.detection_time ? json(*d.detection_time - d.fault_time) : json(nullptr);
        j["detections"].push_back(r);
    }
    j["classifications"] = json::array();
    for (const auto& [t, dev] : s.classifications) j["classifications"].push_back({{"t", t}, {"device", dev}});
    j["false_positives"] = s.false_positives;
    j["fuses"] = json::array();
    for (const auto& f : s.fuses)
        j["fuses"].push_back({{"leg", std::string(1, f.leg)},
                              {"shoot_through_start", f.shoot_through_start},
                              {"blow_time", f.blow_time},
                              {"accumulated_i2t", f.accumulated_i2t}});
    j["warnings"] = json::object();
    for (const auto& [w, n] : s.warnings) j["warnings"][w] = n;
    if (s.analysis) {
        j["analysis"] = json::parse(analysis_to_json(*s.analysis));
    } else {
        j["analysis"] = nullptr;
    }
    if (s.analysis_error) j["analysis_error"] = *s.analysis_error;
    return j.dump(2);
}

std::vector<CheckItem> check_run(const Scenario& s, const Summary& sum) {
    std::vector<CheckItem> out;
    out.push_back({"run completed", !sum.aborted, sum.aborted ? sum.abort_diagnostic : "ok"});
    out.push_back({"no false detections before the first fault", sum.false_positives == 0,
                   std::to_string(sum.false_positives) + " false positives"});
    for (const auto& d : sum.detections) {
        if (d.kind != "open_circuit" || d.target.rfind("S", 0) != 0) continue;
        bool ok = d.detection_time && d.detected_as == d.target;
        std::string detail = "not detected";
        if (d.detection_time) {
            const double f1 = d.fundamental_hz.value_or(0.0);
            const double periods = (*d.detection_time - d.fault_time) * f1;
            ok = ok && periods <= 1.5;
            detail = "named " + d.detected_as.value_or("?") + " after " + format_double(periods) + " periods";
        }
        out.push_back({"open-circuit " + d.target + " identified", ok, detail});
    }
    if (sum.analysis) {
        const auto& a = *sum.analysis;
        const double ref = s.controller.mpc.flux_ref;
        out.push_back({"prefault flux error <= 2%", a.prefault.flux_error_mean <= 0.02 * ref,
                       format_double(a.prefault.flux_error_mean / ref * 100) + "%"});
        const bool lost_leg = std::any_of(s.faults.begin(), s.faults.end(), [](const fault::FaultEvent& f) {
            return f.kind == fault::FaultKind::leg_open || fault::is_inverter_device(f.target);
        });
        if (s.controller.postfault_strategy) {
            out.push_back({"postfault flux error <= 2%", a.postfault.flux_error_mean <= 0.02 * ref,
                           format_double(a.postfault.flux_error_mean / ref * 100) + "%"});
            const double circ = a.postfault.circularity.value_or(std::numeric_limits<double>::infinity());
            out.push_back({"postfault flux circularity <= 1.10", circ <= 1.10, format_double(circ)});
            out.push_back({"postfault negative sequence <= 5%", a.postfault.negative_ratio <= 0.05,
                           format_double(a.postfault.negative_ratio * 100) + "%"});
            if (lost_leg)
                out.push_back({"remaining-phase current ratio in [1.64, 1.78]",
                               a.current_ratio >= 1.64 && a.current_ratio <= 1.78, format_double(a.current_ratio)});
        }
    } else if (sum.analysis_error) {
        out.push_back({"analysis", false, *sum.analysis_error});
    }
    return out;
}

} // namespace ftdrive::sim
