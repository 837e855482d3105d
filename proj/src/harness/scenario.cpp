#include "ftdrive/scenario.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace ftdrive::sim {

using nlohmann::json;

double Profile::at(double t) const {
    if (points.empty()) return 0.0;
    if (t <= points.front().first) return points.front().second;
    if (t >= points.back().first) return points.back().second;
    auto hi = std::upper_bound(points.begin(), points.end(), t,
                               [](double x, const std::pair<double, double>& p) { return x < p.first; });
    const auto lo = hi - 1;
    const double span = hi->first - lo->first;
    if (span <= 0) return hi->second;
    return lo->second + (t - lo->first) / span * (hi->second - lo->second);
}

int Scenario::control_ratio() const {
    if (!(sim.dt > 0) || !(sim.Ts > 0)) throw InvalidConfiguration("sim.dt and sim.Ts must be positive");
    const double r = sim.Ts / sim.dt;
    const double n = std::round(r);
    if (n < 1 || std::fabs(r - n) > 1e-9 * n) throw InvalidConfiguration("sim.Ts must be an integer multiple of sim.dt");
    return static_cast<int>(n);
}

void Scenario::validate() const {
    (void)machine::derive_params(machine);
    (void)control_ratio();
    if (!(sim.duration >= 0)) throw InvalidConfiguration("sim.duration must be >= 0");
    if (sim.decimation < 1) throw InvalidConfiguration("sim.decimation must be >= 1");
    if (!(dc.v_total > 0 && dc.c1 > 0 && dc.c2 > 0)) throw InvalidConfiguration("dc_link values must be positive");
    if (!(dc.balancer.bandwidth > 0)) throw InvalidConfiguration("balancer bandwidth must be positive");
    if (!(controller.mpc.flux_ref > 0) || !(controller.mpc.lambda >= 0))
        throw InvalidConfiguration("controller.mpc: flux_ref > 0 and lambda >= 0 required");
    if (controller.pi && (!(controller.pi->t_max > 0) || controller.pi->kp < 0 || controller.pi->ki < 0))
        throw InvalidConfiguration("controller.pi: kp, ki >= 0 and t_max > 0 required");
    for (const Profile* p : {&speed_ref, &load_torque})
        for (std::size_t i = 1; i < p->points.size(); ++i)
            if (!(p->points[i].first >= p->points[i - 1].first))
                throw InvalidConfiguration("profile breakpoints must be in time order");
    try {
        fault::validate_schedule(faults);
    } catch (const InvalidArgument& e) {
        throw InvalidConfiguration(std::string("faults: ") + e.what());
    }
    if (detector.window_samples < 16) throw InvalidConfiguration("detector.window_samples must be >= 16");
}

namespace {

/// Reads one JSON object and rejects keys nobody asked for.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw InvalidConfiguration(path_ + ": expected an object");
    }
    ~Section() noexcept(false) {
        if (std::uncaught_exceptions() > 0) return;
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!used_.count(it.key())) throw InvalidConfiguration(path_ + "." + it.key() + ": unknown key");
    }

    bool has(const std::string& k) {
        used_.insert(k);
        return j_.contains(k) && !j_.at(k).is_null();
    }
    const json& at(const std::string& k) {
        used_.insert(k);
        return j_.at(k);
    }

    void num(const std::string& k, double& out) {
        if (!has(k)) return;
        const json& v = j_.at(k);
        if (!v.is_number()) throw InvalidConfiguration(path_ + "." + k + ": expected a number");
        out = v.get<double>();
        if (!std::isfinite(out)) throw InvalidConfiguration(path_ + "." + k + ": not finite");
    }
    void num(const std::string& k, std::optional<double>& out) {
        if (!has(k)) return;
        double v = 0;
        num(k, v);
        out = v;
    }
    void integer(const std::string& k, int& out) {
        if (!has(k)) return;
        const json& v = j_.at(k);
        if (!v.is_number_integer()) throw InvalidConfiguration(path_ + "." + k + ": expected an integer");
        out = v.get<int>();
    }
    void boolean(const std::string& k, bool& out) {
        if (!has(k)) return;
        const json& v = j_.at(k);
        if (!v.is_boolean()) throw InvalidConfiguration(path_ + "." + k + ": expected true/false");
        out = v.get<bool>();
    }
    void string(const std::string& k, std::string& out) {
        if (!has(k)) return;
        const json& v = j_.at(k);
        if (!v.is_string()) throw InvalidConfiguration(path_ + "." + k + ": expected a string");
        out = v.get<std::string>();
    }
    std::string child(const std::string& k) const { return path_ + "." + k; }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

Profile read_profile(const json& j, const std::string& path) {
    if (j.is_number()) return Profile::constant(j.get<double>());
    if (!j.is_array() || j.empty()) throw InvalidConfiguration(path + ": expected a number or [[t, v], ...]");
    Profile p;
    for (const auto& pt : j) {
        if (!pt.is_array() || pt.size() != 2 || !pt[0].is_number() || !pt[1].is_number())
            throw InvalidConfiguration(path + ": breakpoints must be [t, value] pairs");
        p.points.emplace_back(pt[0].get<double>(), pt[1].get<double>());
    }
    return p;
}

std::pair<double, double> read_window(const json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw InvalidConfiguration(path + ": expected [t0, t1]");
    const double a = j[0].get<double>();
    const double b = j[1].get<double>();
    if (!(b > a)) throw InvalidConfiguration(path + ": window end must follow its start");
    return {a, b};
}

void read_machine(const json& j, machine::MachineParams& m) {
    Section s(j, "machine");
    s.num("Rs", m.Rs);
    s.num("Rr", m.Rr);
    s.num("Ls", m.Ls);
    s.num("Lr", m.Lr);
    s.num("Lm", m.Lm);
    s.integer("p", m.p);
    s.num("J", m.J);
    s.num("Tn", m.Tn);
    s.num("psi_n", m.psi_n);
}

void read_dc(const json& j, DcLinkConfig& dc) {
    Section s(j, "dc_link");
    s.num("v_total", dc.v_total);
    s.num("c1", dc.c1);
    s.num("c2", dc.c2);
    s.num("v_dc1_init", dc.v_dc1_init);
    s.num("v_dc2_init", dc.v_dc2_init);
    s.num("inductance", dc.inductance);
    dc.balancer.v_ref_total = dc.v_total;
    if (s.has("balancer")) {
        Section b(s.at("balancer"), s.child("balancer"));
        b.num("bandwidth", dc.balancer.bandwidth);
        b.num("max_source_current", dc.balancer.max_source_current);
        b.num("duty", dc.balancer.duty);
        b.num("switching_frequency", dc.balancer.switching_frequency);
    }
    if (s.has("fuse")) {
        Section f(s.at("fuse"), s.child("fuse"));
        f.num("rated_i2t", dc.fuse.rated_i2t);
        f.num("Rf", dc.fuse.Rf);
        f.num("alpha", dc.fuse.alpha);
        f.num("omega_d", dc.fuse.omega_d);
    }
}

void read_controller(const json& j, ControllerConfig& c, const machine::MachineParams& m) {
    Section s(j, "controller");
    c.mpc.lambda = mpc::nominal_weighting(m);
    c.mpc.flux_ref = m.psi_n;
    if (s.has("mpc")) {
        Section p(s.at("mpc"), s.child("mpc"));
        p.num("lambda", c.mpc.lambda);
        p.num("flux_ref", c.mpc.flux_ref);
        p.boolean("delay_compensation", c.mpc.delay_compensation);
        p.num("flux_term_multiplier", c.mpc.flux_term_multiplier);
    }
    if (s.has("pi")) {
        Section p(s.at("pi"), s.child("pi"));
        p.num("bandwidth", c.pi_bandwidth);
        std::optional<double> kp, ki, tmax;
        p.num("kp", kp);
        p.num("ki", ki);
        p.num("t_max", tmax);
        if (kp || ki || tmax) {
            mpc::PiConfig d = mpc::default_pi(m, c.pi_bandwidth);
            c.pi = mpc::PiConfig{kp.value_or(d.kp), ki.value_or(d.ki), tmax.value_or(d.t_max)};
        }
    }
    s.boolean("postfault_strategy", c.postfault_strategy);
    s.boolean("computation_delay", c.computation_delay);
    s.integer("torque_ramp_periods", c.torque_ramp_periods);
    if (s.has("measurement_noise")) {
        Section n(s.at("measurement_noise"), s.child("measurement_noise"));
        n.num("current_std", c.noise.current_std);
        n.num("speed_std", c.noise.speed_std);
        if (n.has("seed")) {
            const json& v = n.at("seed");
            if (!v.is_number_unsigned()) throw InvalidConfiguration("controller.measurement_noise.seed: expected an unsigned integer");
            c.noise.seed = v.get<std::uint64_t>();
        }
    }
}

void read_detector(const json& j, fault::DetectorConfig& d) {
    Section s(j, "detector");
    s.num("threshold", d.threshold);
    int n = static_cast<int>(d.window_samples);
    s.integer("window_samples", n);
    if (n < 16) throw InvalidConfiguration("detector.window_samples must be >= 16");
    d.window_samples = static_cast<std::size_t>(n);
    s.num("eps_amp", d.eps_amp);
    s.num("arm_time", d.arm_time);
    s.num("min_frequency", d.min_frequency);
    s.num("frequency_filter", d.frequency_filter);
    s.num("sc_latency", d.sc_latency);
    s.num("slope_deadband", d.slope_deadband);
    if (d.sc_latency < 0) throw InvalidConfiguration("detector.sc_latency must be >= 0");
}

std::vector<fault::FaultEvent> read_faults(const json& j) {
    if (!j.is_array()) throw InvalidConfiguration("faults: expected a list");
    std::vector<fault::FaultEvent> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string path = "faults[" + std::to_string(i) + "]";
        Section s(j[i], path);
        fault::FaultEvent e;
        std::string target;
        std::string kind;
        s.num("time", e.time);
        s.string("target", target);
        s.string("kind", kind);
        try {
            e.target = fault::parse_target(target);
            e.kind = fault::parse_kind(kind);
        } catch (const InvalidArgument& err) {
            throw InvalidConfiguration(path + ": " + err.what());
        }
        out.push_back(e);
    }
    return out;
}

void read_sim(const json& j, SimConfig& sim) {
    Section s(j, "sim");
    s.num("dt", sim.dt);
    s.num("Ts", sim.Ts);
    s.num("duration", sim.duration);
    s.integer("decimation", sim.decimation);
    if (s.has("integrator")) {
        std::string m;
        s.string("integrator", m);
        if (m == "rk4")
            sim.integrator = machine::Integrator::rk4;
        else if (m == "euler")
            sim.integrator = machine::Integrator::euler;
        else
            throw InvalidConfiguration("sim.integrator: expected rk4 or euler");
    }
    if (s.has("analysis")) {
        Section a(s.at("analysis"), s.child("analysis"));
        if (a.has("prefault")) sim.analysis.prefault = read_window(a.at("prefault"), "sim.analysis.prefault");
        if (a.has("postfault")) sim.analysis.postfault = read_window(a.at("postfault"), "sim.analysis.postfault");
        a.num("f1", sim.analysis.f1);
    }
}

} // namespace

Scenario parse_scenario(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw InvalidConfiguration(std::string("scenario is not valid JSON: ") + e.what());
    }
    Scenario sc;
    {
        Section root(j, "scenario");
        if (!root.has("schema") || !root.at("schema").is_number_integer() || root.at("schema").get<int>() != 1)
            throw InvalidConfiguration("scenario.schema: expected 1");
        root.string("name", sc.name);
        if (root.has("machine")) read_machine(root.at("machine"), sc.machine);
        if (root.has("dc_link")) read_dc(root.at("dc_link"), sc.dc);
        sc.controller.mpc.lambda = mpc::nominal_weighting(sc.machine);
        sc.controller.mpc.flux_ref = sc.machine.psi_n;
        if (root.has("controller")) read_controller(root.at("controller"), sc.controller, sc.machine);
        if (root.has("detector")) read_detector(root.at("detector"), sc.detector);
        if (root.has("faults")) sc.faults = read_faults(root.at("faults"));
        if (root.has("profiles")) {
            Section p(root.at("profiles"), "profiles");
            if (p.has("speed_ref")) sc.speed_ref = read_profile(p.at("speed_ref"), "profiles.speed_ref");
            if (p.has("load_torque")) sc.load_torque = read_profile(p.at("load_torque"), "profiles.load_torque");
        }
        if (root.has("sim")) read_sim(root.at("sim"), sc.sim);
    }
    try {
        sc.validate();
    } catch (const InvalidConfiguration&) {
        throw;
    } catch (const Error& e) {
        throw InvalidConfiguration(e.what());
    }
    return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidConfiguration("cannot open scenario " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str());
}

std::string scenario_to_json(const Scenario& s) {
    json j;
    j["schema"] = 1;
    j["name"] = s.name;
    const auto& m = s.machine;
    j["machine"] = {{"Rs", m.Rs}, {"Rr", m.Rr}, {"Ls", m.Ls}, {"Lr", m.Lr}, {"Lm", m.Lm},
                    {"p", m.p},   {"J", m.J},   {"Tn", m.Tn}, {"psi_n", m.psi_n}};
    json dc = {{"v_total", s.dc.v_total}, {"c1", s.dc.c1}, {"c2", s.dc.c2}, {"inductance", s.dc.inductance}};
    if (s.dc.v_dc1_init) dc["v_dc1_init"] = *s.dc.v_dc1_init;
    if (s.dc.v_dc2_init) dc["v_dc2_init"] = *s.dc.v_dc2_init;
    dc["balancer"] = {{"bandwidth", s.dc.balancer.bandwidth},
                      {"max_source_current", s.dc.balancer.max_source_current},
                      {"duty", s.dc.balancer.duty},
                      {"switching_frequency", s.dc.balancer.switching_frequency}};
    dc["fuse"] = {{"rated_i2t", s.dc.fuse.rated_i2t},
                  {"Rf", s.dc.fuse.Rf},
                  {"alpha", s.dc.fuse.alpha},
                  {"omega_d", s.dc.fuse.omega_d}};
    j["dc_link"] = dc;
    const auto& c = s.controller;
    json pi = {{"bandwidth", c.pi_bandwidth}};
    if (c.pi) {
        pi["kp"] = c.pi->kp;
        pi["ki"] = c.pi->ki;
        pi["t_max"] = c.pi->t_max;
    }
    j["controller"] = {{"mpc",
                        {{"lambda", c.mpc.lambda},
                         {"flux_ref", c.mpc.flux_ref},
                         {"delay_compensation", c.mpc.delay_compensation},
                         {"flux_term_multiplier", c.mpc.flux_term_multiplier}}},
                       {"pi", pi},
                       {"postfault_strategy", c.postfault_strategy},
                       {"computation_delay", c.computation_delay},
                       {"torque_ramp_periods", c.torque_ramp_periods},
                       {"measurement_noise",
                        {{"current_std", c.noise.current_std}, {"speed_std", c.noise.speed_std}, {"seed", c.noise.seed}}}};
    const auto& d = s.detector;
    j["detector"] = {{"threshold", d.threshold},       {"window_samples", d.window_samples},
                     {"eps_amp", d.eps_amp},           {"arm_time", d.arm_time},
                     {"min_frequency", d.min_frequency}, {"frequency_filter", d.frequency_filter},
                     {"sc_latency", d.sc_latency},     {"slope_deadband", d.slope_deadband}};
    j["faults"] = json::array();
    for (const auto& f : s.faults)
        j["faults"].push_back({{"time", f.time},
                               {"target", std::string(fault::target_name(f.target))},
                               {"kind", std::string(fault::kind_name(f.kind))}});
    auto profile = [](const Profile& p) {
        json a = json::array();
        for (const auto& [t, v] : p.points) a.push_back({t, v});
        return a;
    };
    j["profiles"] = {{"speed_ref", profile(s.speed_ref)}, {"load_torque", profile(s.load_torque)}};
    json sim = {{"dt", s.sim.dt},
                {"Ts", s.sim.Ts},
                {"duration", s.sim.duration},
                {"decimation", s.sim.decimation},
                {"integrator", s.sim.integrator == machine::Integrator::rk4 ? "rk4" : "euler"}};
    json an = json::object();
    if (s.sim.analysis.prefault) an["prefault"] = {s.sim.analysis.prefault->first, s.sim.analysis.prefault->second};
    if (s.sim.analysis.postfault) an["postfault"] = {s.sim.analysis.postfault->first, s.sim.analysis.postfault->second};
    if (s.sim.analysis.f1) an["f1"] = *s.sim.analysis.f1;
    sim["analysis"] = an;
    j["sim"] = sim;
    return j.dump(2);
}

} // namespace ftdrive::sim
