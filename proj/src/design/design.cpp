#include "ftdrive/design.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace ftdrive::design {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = 180.0 / std::numbers::pi;

bool positive(double x) { return x > 0 && std::isfinite(x); }

} // namespace

// --- transfer functions ------------------------------------------------------------

Complex RationalTransferFunction::eval(Complex s) const {
    Complex num{gain, 0.0};
    for (const auto& z : zeros) num *= s - z;
    Complex den{1.0, 0.0};
    for (const auto& p : poles) den *= s - p;
    return num / den;
}

double RationalTransferFunction::unwrapped_phase_deg(double omega) const {
    double ph = gain < 0 ? 180.0 : 0.0;
    for (const auto& z : zeros) ph += std::atan2(omega - z.imag(), -z.real()) * kDeg;
    for (const auto& p : poles) ph -= std::atan2(omega - p.imag(), -p.real()) * kDeg;
    return ph;
}

void RationalTransferFunction::validate() const {
    auto check = [](const std::vector<Complex>& roots, const char* what) {
        for (const auto& r : roots) {
            if (r.imag() == 0.0) continue;
            const auto conj = std::conj(r);
            const bool found = std::any_of(roots.begin(), roots.end(), [&](const Complex& o) {
                return std::abs(o - conj) <= 1e-12 * std::max(1.0, std::abs(r));
            });
            if (!found) throw InvalidArgument(std::string("complex ") + what + " without conjugate partner");
        }
    };
    check(zeros, "zero");
    check(poles, "pole");
}

ControllerDesign controller_tf(const ControllerComponents& c) {
    for (double v : {c.R1, c.R2, c.R3, c.RA, c.RB, c.C1, c.C2, c.C3})
        if (!positive(v)) throw InvalidArgument("controller components must be positive");
    const double h11 = c.h11();
    const double D = c.R1 * c.R3 + h11 * (c.R1 + c.R3);
    ControllerCorners k;
    k.F = (c.R1 + c.R3) / (c.C2 * D);
    k.wzc1 = 1.0 / (c.R2 * c.C1);
    k.wpc1 = (c.C1 + c.C2) / (c.R2 * c.C1 * c.C2);
    k.wzc2 = 1.0 / ((c.R1 + c.R3) * c.C3);
    k.wpc2 = (c.R1 + h11) / (c.C3 * D);

    ControllerDesign out;
    out.corners = k;
    out.tf.gain = k.F;
    out.tf.zeros = {Complex{-k.wzc1, 0.0}, Complex{-k.wzc2, 0.0}};
    out.tf.poles = {Complex{0.0, 0.0}, Complex{-k.wpc1, 0.0}, Complex{-k.wpc2, 0.0}};
    return out;
}

ControllerComponents synthesize_components(double F, double zc1, double zc2, double pc1, double pc2,
                                           double R1_seed) {
    for (double v : {F, zc1, zc2, pc1, pc2, R1_seed})
        if (!positive(v)) throw Infeasible("synthesis targets and R1 must be positive");
    if (!(pc1 > zc1)) throw Infeasible("pole 1 must lie above zero 1 (wpc1/wzc1 = (C1+C2)/C2 > 1)");
    if (!(pc2 > zc2)) throw Infeasible("pole 2 must lie above zero 2");

    ControllerComponents c;
    c.R1 = R1_seed;
    const double r1 = pc1 / zc1 - 1.0; // C1/C2
    const double r2 = pc2 / zc2;
    // r2 - 1 = R1^2 / D with D = R1 R3 + h11 (R1 + R3); R3 > 0 needs h11 < R1/(r2-1).
    const double D = c.R1 * c.R1 / (r2 - 1.0);
    const double h11 = 0.5 * c.R1 / (r2 - 1.0);
    c.R3 = (D - h11 * c.R1) / (c.R1 + h11);
    c.RA = 2.0 * h11;
    c.RB = 2.0 * h11;
    c.C3 = 1.0 / (zc2 * (c.R1 + c.R3));
    c.C2 = (c.R1 + c.R3) / (F * D);
    c.C1 = r1 * c.C2;
    c.R2 = 1.0 / (zc1 * c.C1);
    return c;
}

RationalTransferFunction loop_gain(const LoopGainParams& p) {
    if (!(p.beta >= 0 && p.beta <= 1)) throw InvalidArgument("beta must lie in [0, 1]");
    if (!(p.zeta > 0 && p.zeta < 1)) throw InvalidArgument("zeta must lie in (0, 1)");
    for (double v : {p.f_zc, p.f_pc, p.f_zn, p.f_zp, p.omega_0})
        if (!positive(v)) throw InvalidArgument("loop gain corners and omega_0 must be positive");
    const double w = 2.0 * kPi;
    const double wzc = w * p.f_zc;
    const double wpc = w * p.f_pc;
    const double re = -p.zeta * p.omega_0;
    const double im = p.omega_0 * std::sqrt(1.0 - p.zeta * p.zeta);

    RationalTransferFunction tf;
    tf.gain = p.dc_gain_sign * p.beta * p.F * p.Tm * p.plant_gain;
    tf.zeros = {Complex{-wzc, 0.0}, Complex{-wzc, 0.0}, Complex{-w * p.f_zn, 0.0}, Complex{w * p.f_zp, 0.0}};
    tf.poles = {Complex{0.0, 0.0}, Complex{-wpc, 0.0}, Complex{-wpc, 0.0}, Complex{re, im}, Complex{re, -im}};
    return tf;
}

namespace {

struct PhaseNormalizer {
    double offset = 0.0;
    PhaseNormalizer(const RationalTransferFunction& tf, double w_lo) {
        const double ph = tf.unwrapped_phase_deg(w_lo);
        offset = 360.0 * std::ceil((ph - 180.0) / 360.0);
    }
    double operator()(const RationalTransferFunction& tf, double w) const { return tf.unwrapped_phase_deg(w) - offset; }
};

int sign_of(double x) { return x < 0 ? -1 : 1; }

template <class G>
double bisect_log(G&& g, double f_a, double f_b) {
    double la = std::log(f_a);
    double lb = std::log(f_b);
    const int sa = sign_of(g(f_a));
    for (int it = 0; it < 200 && lb - la > 1e-13; ++it) {
        const double lm = 0.5 * (la + lb);
        if (sign_of(g(std::exp(lm))) == sa)
            la = lm;
        else
            lb = lm;
    }
    return std::exp(0.5 * (la + lb));
}

std::vector<double> log_grid(double f_lo, double f_hi, int per_decade) {
    const int n = std::max(1, static_cast<int>(std::ceil(per_decade * std::log10(f_hi / f_lo))));
    std::vector<double> f(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i <= n; ++i) f[static_cast<std::size_t>(i)] = f_lo * std::pow(f_hi / f_lo, static_cast<double>(i) / n);
    f.back() = f_hi;
    return f;
}

} // namespace

MarginReport margins(const RationalTransferFunction& tf, double f_lo, double f_hi) {
    if (!(positive(f_lo) && f_hi > f_lo)) throw InvalidArgument("margins: need 0 < f_lo < f_hi");
    const double w = 2.0 * kPi;
    const PhaseNormalizer norm(tf, w * f_lo);
    auto log_mag = [&](double f) { return std::log(std::abs(tf.at(w * f))); };
    auto phase = [&](double f) { return norm(tf, w * f); };

    const auto grid = log_grid(f_lo, f_hi, 64);
    MarginReport r;
    double worst_pm = std::numeric_limits<double>::infinity();
    double worst_gm = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
        const double fa = grid[i];
        const double fb = grid[i + 1];
        if (sign_of(log_mag(fa)) != sign_of(log_mag(fb))) {
            const double fc = bisect_log(log_mag, fa, fb);
            r.gain_crossovers_hz.push_back(fc);
            worst_pm = std::min(worst_pm, std::remainder(180.0 + phase(fc), 360.0));
        }
        // Phase crossings of -180 + 360 m between the two grid points.
        const double pa = phase(fa);
        const double pb = phase(fb);
        const double lo = std::min(pa, pb);
        const double hi = std::max(pa, pb);
        for (double m = std::ceil((lo + 180.0) / 360.0); -180.0 + 360.0 * m <= hi; m += 1.0) {
            const double target = -180.0 + 360.0 * m;
            auto g = [&](double f) { return phase(f) - target; };
            if (sign_of(g(fa)) == sign_of(g(fb))) continue;
            const double fp = bisect_log(g, fa, fb);
            r.phase_crossovers_hz.push_back(fp);
            worst_gm = std::min(worst_gm, -20.0 * std::log10(std::abs(tf.at(w * fp))));
        }
    }
    if (r.gain_crossovers_hz.empty()) throw NoCrossover("no unity-gain crossover in the frequency range");
    r.phase_margin_deg = worst_pm;
    r.gain_margin_db = worst_gm;
    r.multiple_gain_crossovers = r.gain_crossovers_hz.size() > 1;
    r.multiple_phase_crossovers = r.phase_crossovers_hz.size() > 1;
    return r;
}

std::vector<BodePoint> bode(const RationalTransferFunction& tf, double f_lo, double f_hi, int points_per_decade) {
    if (!(positive(f_lo) && f_hi > f_lo) || points_per_decade < 1) throw InvalidArgument("bode: bad range");
    const double w = 2.0 * kPi;
    const PhaseNormalizer norm(tf, w * f_lo);
    std::vector<BodePoint> out;
    for (double f : log_grid(f_lo, f_hi, points_per_decade))
        out.push_back({f, 20.0 * std::log10(std::abs(tf.at(w * f))), norm(tf, w * f)});
    return out;
}

// --- fuse sizing ------------------------------------------------------------------------

FuseDesignParams FuseDesignParams::from_printed_formula(double Vdc, double Rf, double L, double C,
                                                        std::vector<double> catalog) {
    if (!(positive(Rf) && positive(L) && positive(C))) throw InvalidArgument("Rf, L, C must be positive");
    FuseDesignParams p;
    p.Vdc = Vdc;
    p.Rf = Rf;
    p.alpha = 1.0 / (4.0 * Rf);
    const double w0sq = 1.0 / (L * C);
    const double wd2 = w0sq - p.alpha * p.alpha;
    if (!(wd2 > 0)) throw UnsupportedRegime("fault loop is not underdamped");
    p.omega_d = std::sqrt(wd2);
    p.catalog = std::move(catalog);
    return p;
}

namespace {

void check_fuse(double t, const FuseDesignParams& p) {
    if (!(t >= 0)) throw InvalidArgument("time must be >= 0");
    if (!(p.omega_d > 0)) throw UnsupportedRegime("omega_d must be positive (oscillatory fault current only)");
    if (!(p.alpha >= 0)) throw InvalidArgument("alpha must be >= 0");
    if (!positive(p.Rf)) throw InvalidArgument("Rf must be positive");
}

} // namespace

double fault_current(double t, const FuseDesignParams& p) {
    check_fuse(t, p);
    const double A = p.Vdc / (2.0 * p.Rf);
    const double wt = p.omega_d * t;
    return std::exp(-p.alpha * t) * (A * std::cos(wt) + A * p.alpha / p.omega_d * std::sin(wt));
}

double joule_integral(double t, const FuseDesignParams& p) {
    check_fuse(t, p);
    // i^2 = A^2 e^{-at} [ (1+r^2)/2 + (1-r^2)/2 cos(bt) + r sin(bt) ], a = 2 alpha, b = 2 wd, r = alpha/wd
    const double A = p.Vdc / (2.0 * p.Rf);
    const double r = p.alpha / p.omega_d;
    const double a = 2.0 * p.alpha;
    const double b = 2.0 * p.omega_d;
    const double e = std::exp(-a * t);
    const double em1 = -std::expm1(-a * t); // 1 - e^{-at}
    const double cb = std::cos(b * t);
    const double sb = std::sin(b * t);
    const double sh = std::sin(0.5 * b * t);
    // 1 - e^{-at} cos(bt), without cancellation
    const double one_minus = em1 * cb + 2.0 * sh * sh;
    const double den = a * a + b * b;

    const double i0 = a > 0 ? em1 / a : t;           // int e^{-a tau}
    const double ic = (a * one_minus + b * e * sb) / den; // int e^{-a tau} cos(b tau)
    const double is = (b * one_minus - a * e * sb) / den; // int e^{-a tau} sin(b tau)
    return A * A * (0.5 * (1.0 + r * r) * i0 + 0.5 * (1.0 - r * r) * ic + r * is);
}

double joule_inversion(double energy, const FuseDesignParams& p, double t_max) {
    if (!(energy >= 0)) throw InvalidArgument("energy must be >= 0");
    if (energy == 0) return 0.0;
    if (joule_integral(t_max, p) < energy) return std::numeric_limits<double>::infinity();
    double lo = 0.0;
    double hi = t_max;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * t_max; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (joule_integral(mid, p) < energy)
            lo = mid;
        else
            hi = mid;
    }
    return hi;
}

WithstandCurve::WithstandCurve(std::vector<Point> pts) : pts_(std::move(pts)) {
    if (pts_.empty()) throw InvalidArgument("withstand curve needs at least one point");
    for (std::size_t i = 0; i < pts_.size(); ++i) {
        if (!positive(pts_[i].t)) throw InvalidArgument("withstand curve times must be positive");
        if (!(pts_[i].fw >= 1.0)) throw InvalidArgument("withstand factor must be >= 1");
        if (i > 0 && !(pts_[i].t > pts_[i - 1].t)) throw InvalidArgument("withstand curve times must ascend");
    }
}

WithstandCurve WithstandCurve::placeholder() { return WithstandCurve({{1e-3, 4.0}, {1e-2, 2.0}, {0.1, 1.3}, {1.0, 1.0}}); }

double WithstandCurve::at(double t) const {
    if (!(t >= t_min() && t <= t_max()))
        throw OutOfDomain("time outside the withstand curve domain");
    auto hi = std::lower_bound(pts_.begin(), pts_.end(), t, [](const Point& p, double x) { return p.t < x; });
    if (hi->t == t) return hi->fw;
    const auto lo = hi - 1;
    const double u = std::log(t / lo->t) / std::log(hi->t / lo->t);
    return lo->fw + u * (hi->fw - lo->fw);
}

double nominal_melt_energy(double t0, const FuseDesignParams& p, const WithstandCurve& w) {
    const double fw = w.at(t0);
    return joule_integral(t0, p) / fw;
}

double select_fuse(double i2t_nominal, std::span<const double> catalog) {
    if (catalog.empty()) throw InvalidArgument("fuse catalog is empty");
    if (!std::is_sorted(catalog.begin(), catalog.end())) throw InvalidArgument("fuse catalog must be ascending");
    auto it = std::upper_bound(catalog.begin(), catalog.end(), i2t_nominal);
    if (it == catalog.begin()) throw NoFeasibleFuse("nominal I2t below the smallest catalog rating");
    return *(it - 1);
}

// --- overrating factor ----------------------------------------------------------------------

double total_kva(const DeviceRatingSheet& sheet) {
    double s = 0.0;
    for (const auto& d : sheet) {
        if (!(positive(d.blocking_v) && positive(d.peak_a) && positive(d.count)))
            throw InvalidArgument("device ratings and counts must be positive");
        const double kva = d.blocking_v * d.peak_a * d.count / 1000.0;
        s += d.kind == DeviceKind::diode ? 0.5 * kva : kva;
    }
    return s;
}

double nof(const DeviceRatingSheet& sheet, const DeviceRatingSheet& baseline) {
    const double base = total_kva(baseline);
    if (!(base > 0)) throw InvalidArgument("baseline kVA must be positive");
    return total_kva(sheet) / base;
}

DeviceRatingSheet six_switch_baseline(double v_bus, double i_peak) {
    return {{DeviceKind::switch_device, v_bus, i_peak, 6.0}};
}

// --- data files ---------------------------------------------------------------------------

namespace {

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open " + path.string());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            const auto b = cell.find_first_not_of(" \t");
            const auto e = cell.find_last_not_of(" \t");
            cells.push_back(b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1));
        }
        rows.push_back(std::move(cells));
    }
    return rows;
}

double to_number(const std::string& s, const std::filesystem::path& path) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw InvalidArgument(path.string() + ": not a number: '" + s + "'");
    }
}

bool is_header(const std::vector<std::string>& row) {
    if (row.empty()) return false;
    try {
        std::size_t used = 0;
        (void)std::stod(row.back(), &used);
        return used != row.back().size();
    } catch (const std::exception&) {
        return true;
    }
}

} // namespace

WithstandCurve read_withstand_csv(const std::filesystem::path& path) {
    auto rows = read_csv(path);
    std::vector<WithstandCurve::Point> pts;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (i == 0 && is_header(rows[i])) continue;
        if (rows[i].size() != 2) throw InvalidArgument(path.string() + ": expected columns time_s, fw");
        pts.push_back({to_number(rows[i][0], path), to_number(rows[i][1], path)});
    }
    return WithstandCurve(std::move(pts));
}

std::vector<double> read_catalog_csv(const std::filesystem::path& path) {
    auto rows = read_csv(path);
    std::vector<double> out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (i == 0 && is_header(rows[i])) continue;
        if (rows[i].empty()) continue;
        out.push_back(to_number(rows[i][0], path));
    }
    if (out.empty()) throw InvalidArgument(path.string() + ": empty catalog");
    std::sort(out.begin(), out.end());
    return out;
}

DeviceRatingSheet read_rating_sheet_csv(const std::filesystem::path& path) {
    auto rows = read_csv(path);
    DeviceRatingSheet sheet;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (i == 0 && is_header(rows[i])) continue;
        const auto& r = rows[i];
        if (r.size() != 4) throw InvalidArgument(path.string() + ": expected columns kind, blocking_v, peak_a, count");
        DeviceRating d;
        if (r[0] == "switch")
            d.kind = DeviceKind::switch_device;
        else if (r[0] == "diode")
            d.kind = DeviceKind::diode;
        else
            throw InvalidArgument(path.string() + ": unknown device kind '" + r[0] + "'");
        d.blocking_v = to_number(r[1], path);
        d.peak_a = to_number(r[2], path);
        d.count = to_number(r[3], path);
        sheet.push_back(d);
    }
    if (sheet.empty()) throw InvalidArgument(path.string() + ": empty rating sheet");
    return sheet;
}

} // namespace ftdrive::design
