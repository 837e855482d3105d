// ftdrive: scenario simulation, trace analysis and offline design calculators.
//
// Exit codes: 0 ok, 2 invalid input, 3 run aborted, 4 check failure (--check).

#include "ftdrive/design.hpp"
#include "ftdrive/kernels.hpp"
#include "ftdrive/simulator.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ftdrive;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 2;
constexpr int kAborted = 3;
constexpr int kCheckFailed = 4;

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw InvalidArgument("cannot open " + p.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw InvalidArgument("cannot write " + p.string());
    out << text << '\n';
}

std::pair<double, double> parse_window(const std::string& s) {
    const auto colon = s.find(':');
    if (colon == std::string::npos) throw InvalidArgument("window must be t0:t1, got '" + s + "'");
    try {
        std::size_t n0 = 0;
        std::size_t n1 = 0;
        const double a = std::stod(s.substr(0, colon), &n0);
        const double b = std::stod(s.substr(colon + 1), &n1);
        if (n0 != colon || n1 != s.size() - colon - 1) throw std::invalid_argument("trailing");
        if (!(b > a)) throw InvalidArgument("window end must follow its start: " + s);
        return {a, b};
    } catch (const std::logic_error&) {
        throw InvalidArgument("window must be t0:t1, got '" + s + "'");
    }
}

json parse_json_file(const fs::path& p) {
    try {
        return json::parse(read_file(p));
    } catch (const json::exception& e) {
        throw InvalidArgument(p.string() + ": " + e.what());
    }
}

double get_num(const json& j, const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number()) throw InvalidArgument(std::string("'") + key + "' must be a number");
    return j.at(key).get<double>();
}

void print_checks(const std::string& name, const std::vector<sim::CheckItem>& items, bool& all_pass) {
    for (const auto& c : items) {
        std::cout << (c.pass ? "[PASS] " : "[FAIL] ") << name << ": " << c.name << " (" << c.detail << ")\n";
        all_pass = all_pass && c.pass;
    }
}

// --- simulate ------------------------------------------------------------------------------

struct SimulateArgs {
    std::vector<std::string> scenarios;
    std::string out_dir = ".";
    bool check = false;
    unsigned threads = 0;
    std::string backend;
};

int cmd_simulate(const SimulateArgs& a) {
    if (!a.backend.empty()) {
        const kernels::Backend b = a.backend == "scalar" ? kernels::Backend::scalar : kernels::Backend::avx2;
        if (a.backend != "scalar" && a.backend != "avx2") throw InvalidArgument("unknown backend " + a.backend);
        kernels::set_backend(b);
    }
    std::vector<sim::Scenario> scenarios;
    for (const auto& p : a.scenarios) {
        scenarios.push_back(sim::load_scenario(p));
        scenarios.back().validate();
    }
    fs::create_directories(a.out_dir);

    std::vector<std::optional<sim::Summary>> results(scenarios.size());
    std::vector<std::string> errors(scenarios.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < scenarios.size(); i = next++) {
            try {
                sim::RunResult r = sim::run_scenario(scenarios[i]);
                const fs::path stem = fs::path(a.out_dir) / fs::path(a.scenarios[i]).stem();
                sim::write_trace_csv(stem.string() + ".trace.csv", r.trace);
                write_file(stem.string() + ".summary.json", sim::summary_to_json(r.summary));
                results[i] = std::move(r.summary);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const unsigned n = std::min<unsigned>(a.threads ? a.threads : hw, static_cast<unsigned>(scenarios.size()));
    std::vector<std::thread> pool;
    for (unsigned k = 1; k < n; ++k) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    int rc = kOk;
    bool all_pass = true;
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
        const std::string& name = scenarios[i].name;
        if (!errors[i].empty()) {
            std::cerr << name << ": " << errors[i] << '\n';
            rc = std::max(rc, kInvalid);
            continue;
        }
        const sim::Summary& s = *results[i];
        std::cout << name << ": " << s.steps << " steps, final speed " << sim::format_double(s.final_speed)
                  << " rad/s, " << s.mode_log.size() << " mode changes\n";
        if (s.aborted) {
            std::cerr << name << ": aborted: " << s.abort_diagnostic << '\n';
            rc = kAborted;
        }
        if (a.check) print_checks(name, sim::check_run(scenarios[i], s), all_pass);
    }
    if (rc == kOk && a.check && !all_pass) rc = kCheckFailed;
    return rc;
}

// --- analyze -------------------------------------------------------------------------------

struct AnalyzeArgs {
    std::string trace;
    std::string prefault;
    std::string postfault;
    std::optional<double> f1;
    double flux_ref = 0.6;
    bool check = false;
};

int cmd_analyze(const AnalyzeArgs& a) {
    const sim::Trace trace = sim::read_trace_csv(a.trace);
    const auto report =
        sim::negative_sequence_report(trace, parse_window(a.prefault), parse_window(a.postfault), a.flux_ref, a.f1);
    std::cout << sim::analysis_to_json(report) << '\n';
    if (!a.check) return kOk;
    bool pass = true;
    std::vector<sim::CheckItem> items;
    const double circ = report.postfault.circularity.value_or(std::numeric_limits<double>::infinity());
    items.push_back({"postfault circularity <= 1.10", circ <= 1.10, sim::format_double(circ)});
    items.push_back({"postfault negative sequence <= 5%", report.postfault.negative_ratio <= 0.05,
                     sim::format_double(report.postfault.negative_ratio)});
    items.push_back({"prefault flux error <= 2%", report.prefault.flux_error_mean <= 0.02 * a.flux_ref,
                     sim::format_double(report.prefault.flux_error_mean)});
    items.push_back({"postfault flux error <= 2%", report.postfault.flux_error_mean <= 0.02 * a.flux_ref,
                     sim::format_double(report.postfault.flux_error_mean)});
    print_checks(fs::path(a.trace).filename().string(), items, pass);
    return pass ? kOk : kCheckFailed;
}

// --- margins -------------------------------------------------------------------------------

int cmd_margins(const std::string& params, const std::string& out_dir) {
    const json j = parse_json_file(params);
    design::LoopGainParams p;
    p.beta = get_num(j, "beta", p.beta);
    p.F = get_num(j, "F", p.F);
    p.f_zc = get_num(j, "f_zc", p.f_zc);
    p.f_pc = get_num(j, "f_pc", p.f_pc);
    p.f_zn = get_num(j, "f_zn", p.f_zn);
    p.f_zp = get_num(j, "f_zp", p.f_zp);
    p.zeta = get_num(j, "zeta", p.zeta);
    p.omega_0 = get_num(j, "omega_0", p.omega_0);
    p.Tm = get_num(j, "Tm", p.Tm);
    p.plant_gain = get_num(j, "plant_gain", p.plant_gain);
    p.dc_gain_sign = get_num(j, "dc_gain_sign", p.dc_gain_sign);
    const double f_lo = get_num(j, "f_lo", 1.0);
    const double f_hi = get_num(j, "f_hi", 1e6);

    const auto tf = design::loop_gain(p);
    const auto m = design::margins(tf, f_lo, f_hi);
    const json out = {{"gain_margin_db", std::isinf(m.gain_margin_db) ? json(nullptr) : json(m.gain_margin_db)},
                      {"gain_margin_infinite", std::isinf(m.gain_margin_db)},
                      {"phase_margin_deg", m.phase_margin_deg},
                      {"gain_crossovers_hz", m.gain_crossovers_hz},
                      {"phase_crossovers_hz", m.phase_crossovers_hz},
                      {"multiple_gain_crossovers", m.multiple_gain_crossovers},
                      {"multiple_phase_crossovers", m.multiple_phase_crossovers}};
    std::cout << out.dump(2) << '\n';
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_file(fs::path(out_dir) / "margins.json", out.dump(2));
        std::ostringstream csv;
        csv << "f_hz,mag_db,phase_deg\n";
        for (const auto& b : design::bode(tf, f_lo, f_hi))
            csv << sim::format_double(b.f_hz) << ',' << sim::format_double(b.mag_db) << ','
                << sim::format_double(b.phase_deg) << '\n';
        std::ofstream(fs::path(out_dir) / "bode.csv", std::ios::binary) << csv.str();
    }
    return kOk;
}

// --- fuse ----------------------------------------------------------------------------------

int cmd_fuse(const std::string& params, const std::string& withstand, const std::string& catalog) {
    const json j = parse_json_file(params);
    std::vector<double> cat;
    if (!catalog.empty())
        cat = design::read_catalog_csv(catalog);
    else if (j.contains("catalog"))
        cat = j.at("catalog").get<std::vector<double>>();
    std::sort(cat.begin(), cat.end());

    design::FuseDesignParams p;
    bool printed = false;
    if (j.contains("printed")) {
        const json& q = j.at("printed");
        p = design::FuseDesignParams::from_printed_formula(get_num(q, "Vdc", 0), get_num(q, "Rf", 0), get_num(q, "L", 0),
                                                           get_num(q, "C", 0), cat);
        printed = true;
    } else {
        p.Vdc = get_num(j, "Vdc", 300.0);
        p.Rf = get_num(j, "Rf", 0.5);
        p.alpha = get_num(j, "alpha", 50.0);
        p.omega_d = get_num(j, "omega_d", 1000.0);
        p.catalog = cat;
    }
    const double t0 = get_num(j, "t_clear", 0.01);
    const design::WithstandCurve curve =
        withstand.empty() ? design::WithstandCurve::placeholder() : design::read_withstand_csv(withstand);

    const double energy = design::joule_integral(t0, p);
    const double fw = curve.at(t0);
    const double nominal = design::nominal_melt_energy(t0, p, curve);
    json out = {{"Vdc", p.Vdc},
                {"Rf", p.Rf},
                {"alpha", p.alpha},
                {"omega_d", p.omega_d},
                {"printed_parameterization", printed},
                {"withstand_placeholder", withstand.empty()},
                {"t_clear", t0},
                {"peak_current", design::fault_current(0.0, p)},
                {"joule_integral", energy},
                {"withstand_factor", fw},
                {"nominal_i2t", nominal}};
    if (!p.catalog.empty()) {
        const double chosen = design::select_fuse(nominal, p.catalog);
        const double t_blow = design::joule_inversion(chosen, p, curve.t_max());
        out["selected_i2t"] = chosen;
        out["blow_time"] = std::isinf(t_blow) ? json(nullptr) : json(t_blow);
    }
    std::cout << out.dump(2) << '\n';
    return kOk;
}

// --- nof -----------------------------------------------------------------------------------

int cmd_nof(const std::string& sheet, const std::string& baseline) {
    const auto s = design::read_rating_sheet_csv(sheet);
    const auto b = design::read_rating_sheet_csv(baseline);
    const json out = {{"sheet", sheet},
                      {"baseline", baseline},
                      {"sheet_kva", design::total_kva(s) / 1e3},
                      {"baseline_kva", design::total_kva(b) / 1e3},
                      {"nof", design::nof(s, b)}};
    std::cout << out.dump(2) << '\n';
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fault-tolerant drive simulation and design tools"};
    app.require_subcommand(1);

    SimulateArgs sim_args;
    auto* simulate = app.add_subcommand("simulate", "run one or more scenarios");
    simulate->add_option("scenarios", sim_args.scenarios, "scenario JSON files")->required()->check(CLI::ExistingFile);
    simulate->add_option("-o,--out", sim_args.out_dir, "output directory");
    simulate->add_flag("--check", sim_args.check, "evaluate acceptance checks");
    simulate->add_option("-j,--threads", sim_args.threads, "worker threads (default: hardware)");
    simulate->add_option("--backend", sim_args.backend, "scalar or avx2");

    AnalyzeArgs an_args;
    auto* analyze = app.add_subcommand("analyze", "phasor and sequence analysis of a trace");
    analyze->add_option("trace", an_args.trace, "trace CSV")->required()->check(CLI::ExistingFile);
    analyze->add_option("--prefault", an_args.prefault, "t0:t1")->required();
    analyze->add_option("--postfault", an_args.postfault, "t2:t3")->required();
    analyze->add_option("--f1", an_args.f1, "fundamental frequency [Hz]");
    analyze->add_option("--flux-ref", an_args.flux_ref, "flux reference [Wb]");
    analyze->add_flag("--check", an_args.check, "evaluate acceptance checks");

    std::string margins_params;
    std::string margins_out;
    auto* margins = app.add_subcommand("margins", "loop-gain stability margins and Bode table");
    margins->add_option("params", margins_params, "loop-gain parameter JSON")->required()->check(CLI::ExistingFile);
    margins->add_option("-o,--out", margins_out, "directory for margins.json and bode.csv");

    std::string fuse_params;
    std::string fuse_withstand;
    std::string fuse_catalog;
    auto* fuse = app.add_subcommand("fuse", "shoot-through fuse sizing");
    fuse->add_option("params", fuse_params, "fuse parameter JSON")->required()->check(CLI::ExistingFile);
    fuse->add_option("--withstand", fuse_withstand, "withstand curve CSV (time_s, fw)")->check(CLI::ExistingFile);
    fuse->add_option("--catalog", fuse_catalog, "catalog CSV (i2t)")->check(CLI::ExistingFile);

    std::string nof_sheet;
    std::string nof_baseline;
    auto* nof = app.add_subcommand("nof", "normalized overrating factor");
    nof->add_option("sheet", nof_sheet, "rating sheet CSV")->required()->check(CLI::ExistingFile);
    nof->add_option("--baseline", nof_baseline, "baseline rating sheet CSV")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kInvalid;
    }

    try {
        if (simulate->parsed()) return cmd_simulate(sim_args);
        if (analyze->parsed()) return cmd_analyze(an_args);
        if (margins->parsed()) return cmd_margins(margins_params, margins_out);
        if (fuse->parsed()) return cmd_fuse(fuse_params, fuse_withstand, fuse_catalog);
        if (nof->parsed()) return cmd_nof(nof_sheet, nof_baseline);
    } catch (const design::NoCrossover& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInvalid;
    }
    return kInvalid;
}
