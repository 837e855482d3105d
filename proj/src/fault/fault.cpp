#include "ftdrive/fault.hpp"

#include "ftdrive/fourier.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace ftdrive::fault {

using converter::Device;

namespace {

constexpr std::array<std::string_view, 11> kTargetNames{"S1", "S2", "S3", "S4", "S5", "S6",
                                                        "Q1", "Q2", "leg_a", "leg_b", "leg_c"};
constexpr std::array<std::string_view, 3> kKindNames{"open_circuit", "short_circuit", "leg_open"};

} // namespace

std::string_view target_name(Target t) { return kTargetNames[static_cast<std::size_t>(t)]; }

Target parse_target(std::string_view name) {
    for (std::size_t i = 0; i < kTargetNames.size(); ++i)
        if (kTargetNames[i] == name) return static_cast<Target>(i);
    throw InvalidArgument("unknown fault target '" + std::string(name) + "'");
}

std::string_view kind_name(FaultKind k) { return kKindNames[static_cast<std::size_t>(k)]; }

FaultKind parse_kind(std::string_view name) {
    for (std::size_t i = 0; i < kKindNames.size(); ++i)
        if (kKindNames[i] == name) return static_cast<FaultKind>(i);
    throw InvalidArgument("unknown fault kind '" + std::string(name) + "'");
}

bool is_inverter_device(Target t) { return static_cast<int>(t) <= static_cast<int>(Target::S6); }
bool is_dcdc_switch(Target t) { return t == Target::Q1 || t == Target::Q2; }

Device as_device(Target t) {
    if (!is_inverter_device(t)) throw InvalidArgument("not an inverter device: " + std::string(target_name(t)));
    return static_cast<Device>(static_cast<int>(t));
}

Leg target_leg(Target t) {
    if (is_inverter_device(t)) return converter::leg_of(as_device(t));
    switch (t) {
    case Target::leg_a: return Leg::a;
    case Target::leg_b: return Leg::b;
    case Target::leg_c: return Leg::c;
    default: break;
    }
    throw InvalidArgument("target has no inverter leg: " + std::string(target_name(t)));
}

static Target leg_target(Leg l) { return static_cast<Target>(static_cast<int>(Target::leg_a) + index(l)); }
static Target device_target(Device d) { return static_cast<Target>(static_cast<int>(d)); }

void validate_schedule(std::span<const FaultEvent> faults) {
    std::set<Target> seen;
    for (const auto& f : faults) {
        if (!(f.time >= 0) || !std::isfinite(f.time)) throw InvalidArgument("fault time must be finite and >= 0");
        if (!seen.insert(f.target).second)
            throw InvalidArgument("more than one fault scheduled for " + std::string(target_name(f.target)));
        const bool leg = f.target >= Target::leg_a;
        if (leg != (f.kind == FaultKind::leg_open))
            throw InvalidArgument("fault kind " + std::string(kind_name(f.kind)) + " not applicable to " +
                                  std::string(target_name(f.target)));
    }
}

double sc_detection_event(const FaultEvent& fault, double latency) {
    if (!(latency >= 0)) throw InvalidArgument("detection latency must be >= 0");
    return fault.time + latency;
}

// --- normalized DC current ---------------------------------------------------------

bool DetectorWindow::full() const {
    return n >= 16 && std::all_of(phase.begin(), phase.end(), [this](const auto& p) { return p.size() == n; });
}

PhaseChi normalized_dc_current(std::span<const double> one_period, double eps_amp) {
    const FundamentalFit fit = fundamental_fit(one_period);
    PhaseChi out;
    out.avg = fit.mean;
    out.amplitude = fit.amplitude();
    if (!(out.amplitude > eps_amp)) {
        out.indeterminate = true;
        return out;
    }
    out.chi = fit.mean / out.amplitude;
    return out;
}

std::array<PhaseChi, 3> normalized_dc_current(const DetectorWindow& w, double eps_amp) {
    if (!w.full()) throw InvalidArgument("detector window not full (need n >= 16 samples per phase)");
    return {normalized_dc_current(w.phase[0], eps_amp), normalized_dc_current(w.phase[1], eps_amp),
            normalized_dc_current(w.phase[2], eps_amp)};
}

Classification classify_open_switch(const std::array<PhaseChi, 3>& chis, double threshold) {
    Classification c;
    int hits = 0;
    for (int k = 0; k < 3; ++k) {
        const PhaseChi& p = chis[static_cast<std::size_t>(k)];
        if (p.indeterminate || !(std::fabs(p.chi) > threshold)) continue;
        ++hits;
        const Leg leg = static_cast<Leg>(k);
        c.device = p.avg <= 0 ? converter::upper_device(leg) : converter::lower_device(leg);
    }
    if (hits > 1) {
        c.device.reset();
        c.multi_fault = true;
    }
    return c;
}

OpenSwitchDetector::OpenSwitchDetector(DetectorConfig cfg, double eps_amp) : cfg_(cfg), eps_amp_(eps_amp) {
    if (cfg_.window_samples < 16) throw InvalidArgument("detector window needs >= 16 samples per period");
    if (!(cfg_.min_frequency > 0)) throw InvalidArgument("detector min_frequency must be positive");
    window_.n = cfg_.window_samples;
    for (auto& p : window_.phase) p.resize(window_.n);
}

void OpenSwitchDetector::push(double t, const Abc& i, double omega_e) {
    if (!primed_) {
        omega_ = omega_e;
        primed_ = true;
    } else if (t > last_t_) {
        omega_ += -std::expm1(-cfg_.frequency_filter * (t - last_t_)) * (omega_e - omega_);
    }
    freq_hz_ = std::fabs(omega_) / (2.0 * std::numbers::pi);
    last_t_ = t;
    history_.push_back({t, i});
    const double keep = 1.0 / cfg_.min_frequency;
    while (history_.size() > 2 && history_[1].t < t - keep) history_.pop_front();
}

void OpenSwitchDetector::reset(double t) {
    history_.clear();
    valid_from_ = t;
}

std::optional<Classification> OpenSwitchDetector::evaluate(double t) {
    if (t < cfg_.arm_time || freq_hz_ < cfg_.min_frequency || history_.size() < 2) return std::nullopt;
    const double period = 1.0 / freq_hz_;
    const double t0 = t - period;
    if (t0 < valid_from_ || history_.front().t > t0) return std::nullopt;

    const std::size_t n = window_.n;
    std::size_t j = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const double tk = t0 + period * static_cast<double>(k) / static_cast<double>(n);
        while (j + 2 < history_.size() && history_[j + 1].t <= tk) ++j;
        const Sample& s0 = history_[j];
        const Sample& s1 = history_[j + 1];
        const double w = s1.t > s0.t ? std::clamp((tk - s0.t) / (s1.t - s0.t), 0.0, 1.0) : 0.0;
        for (int ph = 0; ph < 3; ++ph) window_.phase[static_cast<std::size_t>(ph)][k] = s0.i[ph] + w * (s1.i[ph] - s0.i[ph]);
    }
    last_ = normalized_dc_current(window_, eps_amp_);
    return classify_open_switch(last_, cfg_.threshold);
}

// --- first-stage slope check ---------------------------------------------------------

std::string_view verdict_name(SlopeVerdict v) {
    switch (v) {
    case SlopeVerdict::consistent: return "consistent";
    case SlopeVerdict::open_suspect: return "open_suspect";
    case SlopeVerdict::short_suspect: return "short_suspect";
    }
    return "?";
}

SlopeVerdict dcdc_slope_check(double iL_slope, bool gate_on, double deadband) {
    if (gate_on && iL_slope <= -deadband) return SlopeVerdict::open_suspect;
    if (!gate_on && iL_slope >= deadband) return SlopeVerdict::short_suspect;
    return SlopeVerdict::consistent;
}

double estimate_slope(std::span<const double> samples, double dt) {
    const std::size_t n = samples.size();
    if (n < 3) throw InvalidArgument("estimate_slope: need at least 3 samples");
    if (!(dt > 0)) throw InvalidArgument("estimate_slope: dt must be positive");
    const double xm = 0.5 * static_cast<double>(n - 1);
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double x = static_cast<double>(k) - xm;
        sxy += x * samples[k];
        sxx += x * x;
    }
    return sxy / sxx / dt;
}

SlopeMonitor::SlopeMonitor(double switching_period, double deadband)
    : period_(switching_period), deadband_(deadband) {
    if (!(switching_period > 0)) throw InvalidArgument("SlopeMonitor: switching period must be positive");
    if (!(deadband >= 0)) throw InvalidArgument("SlopeMonitor: deadband must be >= 0");
}

SlopeVerdict SlopeMonitor::update(double t, double iL_slope, bool gate_on) {
    const SlopeVerdict v = dcdc_slope_check(iL_slope, gate_on, deadband_);
    auto& since = gate_on ? open_since_ : short_since_;
    if (v == SlopeVerdict::consistent)
        since.reset();
    else if (!since)
        since = t;
    const double need = period_ * (1.0 - 1e-9);
    if (open_since_ && t - *open_since_ >= need) return SlopeVerdict::open_suspect;
    if (short_since_ && t - *short_since_ >= need) return SlopeVerdict::short_suspect;
    return SlopeVerdict::consistent;
}

bool gate_command(const InductorWaveform& w, double t) {
    const double phase = t * w.switching_frequency;
    return phase - std::floor(phase) < w.duty;
}

double inductor_slope(const InductorWaveform& w, bool gate_on, converter::DeviceHealth health) {
    using converter::DeviceHealth;
    bool conducts = gate_on;
    if (health == DeviceHealth::open_fault || health == DeviceHealth::gate_blocked) conducts = false;
    if (health == DeviceHealth::short_fault) conducts = true;
    return conducts ? w.rise_slope : -w.fall_slope;
}

// --- reconfiguration state machine ------------------------------------------------------

std::string_view mode_name(ModeKind m) {
    switch (m) {
    case ModeKind::normal: return "Normal";
    case ModeKind::fault_detected: return "FaultDetected";
    case ModeKind::isolating: return "Isolating";
    case ModeKind::postfault: return "PostFault";
    case ModeKind::shutdown: return "Shutdown";
    }
    return "?";
}

std::string_view action_name(ActionKind a) {
    switch (a) {
    case ActionKind::gate_block: return "gate_block";
    case ActionKind::gate_on: return "gate_on";
    case ActionKind::close_rn: return "close_rn";
    case ActionKind::set_postfault_table: return "set_postfault_table";
    case ActionKind::open_isolation_relay: return "open_isolation_relay";
    case ActionKind::enable_redundant: return "enable_redundant";
    case ActionKind::stop: return "stop";
    }
    return "?";
}

namespace {

int event_rank(EventKind k) { return k == EventKind::fuse_blown ? 1 : 0; }

struct Machine {
    FsmResult r;
    double t;

    void enter(ModeKind kind, std::optional<Device> dev, std::optional<Leg> leg, std::string detail) {
        r.state.mode = {kind, dev, leg, t};
        r.log.push_back({t, kind, std::move(detail)});
    }

    void act(ActionKind k, Target target) { r.actions.push_back({k, target}); }

    void shutdown(std::string why) {
        enter(ModeKind::shutdown, std::nullopt, std::nullopt, std::move(why));
        act(ActionKind::stop, Target::S1);
    }

    void postfault(Leg leg, std::optional<Device> blocked) {
        if (blocked) act(ActionKind::gate_block, device_target(*blocked));
        if (!r.state.rn_closed) {
            act(ActionKind::close_rn, leg_target(leg));
            r.state.rn_closed = true;
        }
        act(ActionKind::set_postfault_table, leg_target(leg));
        enter(ModeKind::postfault, std::nullopt, leg, "postfault table, leg " + std::string(1, leg_name(leg)));
    }

    /// Faults reported against a leg while another leg is already lost.
    bool reject_or_shutdown(Leg leg, std::string_view what) {
        const DriveMode& m = r.state.mode;
        if (m.kind == ModeKind::normal) return false;
        if (m.leg && *m.leg == leg)
            throw InvalidTransition(std::string(what) + " on already isolated leg " + std::string(1, leg_name(leg)));
        shutdown(std::string(what) + " on remaining leg " + std::string(1, leg_name(leg)));
        return true;
    }

    void handle(const FsmEvent& e) {
        if (r.state.mode.kind == ModeKind::shutdown) return;
        switch (e.kind) {
        case EventKind::open_circuit_detected: {
            const Device d = as_device(e.target);
            const Leg leg = converter::leg_of(d);
            if (reject_or_shutdown(leg, "open circuit " + converter::device_name(d))) return;
            enter(ModeKind::fault_detected, d, leg, "open circuit " + converter::device_name(d));
            enter(ModeKind::isolating, d, leg, "gate block " + converter::device_name(converter::complementary(d)));
            postfault(leg, converter::complementary(d));
            return;
        }
        case EventKind::short_circuit_detected: {
            const Device d = as_device(e.target);
            const Leg leg = converter::leg_of(d);
            if (reject_or_shutdown(leg, "short circuit " + converter::device_name(d))) return;
            enter(ModeKind::fault_detected, d, leg, "short circuit " + converter::device_name(d));
            act(ActionKind::gate_on, device_target(converter::complementary(d)));
            enter(ModeKind::isolating, d, leg, "shoot-through via " + converter::device_name(converter::complementary(d)));
            return;
        }
        case EventKind::dcdc_fault_detected: {
            if (!is_dcdc_switch(e.target)) throw InvalidArgument("dcdc fault event needs Q1 or Q2");
            const std::size_t q = e.target == Target::Q1 ? 0 : 1;
            if (r.state.redundant_in_use[q]) {
                shutdown("second fault on " + std::string(target_name(e.target)) + " position");
                return;
            }
            r.state.redundant_in_use[q] = true;
            act(ActionKind::open_isolation_relay, e.target);
            act(ActionKind::enable_redundant, e.target);
            r.log.push_back({t, r.state.mode.kind, std::string(target_name(e.target)) + " replaced by redundant switch"});
            return;
        }
        case EventKind::leg_lost: {
            const Leg leg = target_leg(e.target);
            if (reject_or_shutdown(leg, "leg lost")) return;
            enter(ModeKind::fault_detected, std::nullopt, leg, "leg " + std::string(1, leg_name(leg)) + " lost");
            enter(ModeKind::isolating, std::nullopt, leg, "leg " + std::string(1, leg_name(leg)) + " disconnected");
            postfault(leg, std::nullopt);
            return;
        }
        case EventKind::fuse_blown: {
            const Leg leg = target_leg(e.target);
            const DriveMode m = r.state.mode;
            if (m.kind == ModeKind::isolating && m.leg == leg) {
                // The shoot-through partner is switched off again once the fuse has cleared.
                std::optional<Device> partner;
                if (m.device) partner = converter::complementary(*m.device);
                postfault(leg, partner);
                return;
            }
            if (reject_or_shutdown(leg, "fuse blown")) return;
            enter(ModeKind::fault_detected, std::nullopt, leg, "unexpected fuse blow, leg " + std::string(1, leg_name(leg)));
            enter(ModeKind::isolating, std::nullopt, leg, "leg isolated by fuse");
            postfault(leg, std::nullopt);
            return;
        }
        }
    }
};

} // namespace

FsmResult fsm_step(const FsmState& state, std::span<const FsmEvent> events, double t) {
    if (t < state.mode.entered_at) throw InvalidTransition("fsm_step: time went backwards");
    Machine m{{state, {}, {}}, t};
    std::vector<FsmEvent> ordered(events.begin(), events.end());
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const FsmEvent& a, const FsmEvent& b) { return event_rank(a.kind) < event_rank(b.kind); });
    for (const auto& e : ordered) m.handle(e);
    return m.r;
}

} // namespace ftdrive::fault
