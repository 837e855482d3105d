#include "ftdrive/trace.hpp"

#include "ftdrive/common.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

namespace ftdrive::sim {

const std::vector<std::string>& trace_columns() {
    static const std::vector<std::string> cols{
        "t",          "ia",         "ib",             "ic",            "i_mid", "v_dc1",     "v_dc2",
        "psis_alpha", "psis_beta",  "psis_alpha_est", "psis_beta_est", "te",    "te_ref",    "omega_m",
        "omega_ref",  "vector_index", "mode",         "health"};
    return cols;
}

std::string format_double(double v) {
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

void write_trace_csv(std::ostream& out, const Trace& trace) {
    const auto& cols = trace_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    out << '\n';
    std::string line;
    for (const auto& r : trace) {
        line.clear();
        for (double v : {r.t, r.ia, r.ib, r.ic, r.i_mid, r.v_dc1, r.v_dc2, r.psis_alpha, r.psis_beta, r.psis_alpha_est,
                         r.psis_beta_est, r.te, r.te_ref, r.omega_m, r.omega_ref}) {
            line += format_double(v);
            line += ',';
        }
        line += std::to_string(r.vector_index);
        line += ',';
        line += r.mode;
        line += ',';
        line += r.health;
        line += '\n';
        out << line;
    }
}

void write_trace_csv(const std::filesystem::path& path, const Trace& trace) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidArgument("cannot write " + path.string());
    write_trace_csv(out, trace);
}

namespace {

double parse_double(const std::string& s, std::size_t line) {
    double v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw InvalidArgument("trace line " + std::to_string(line) + ": bad number '" + s + "'");
    return v;
}

} // namespace

Trace read_trace_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw InvalidArgument(path.string() + ": empty trace");
    {
        std::vector<std::string> head;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) head.push_back(cell);
        if (head != trace_columns()) throw InvalidArgument(path.string() + ": unexpected trace header");
    }
    Trace trace;
    std::size_t n = 1;
    std::vector<std::string> cells;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        cells.clear();
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (line.back() == ',') cells.emplace_back();
        if (cells.size() != trace_columns().size())
            throw InvalidArgument("trace line " + std::to_string(n) + ": wrong column count");
        TraceRecord r;
        double* fields[] = {&r.t,          &r.ia,        &r.ib,         &r.ic,        &r.i_mid,
                            &r.v_dc1,      &r.v_dc2,     &r.psis_alpha, &r.psis_beta, &r.psis_alpha_est,
                            &r.psis_beta_est, &r.te,     &r.te_ref,     &r.omega_m,   &r.omega_ref};
        for (std::size_t k = 0; k < 15; ++k) *fields[k] = parse_double(cells[k], n);
        r.vector_index = static_cast<int>(parse_double(cells[15], n));
        r.mode = cells[16];
        r.health = cells[17];
        trace.push_back(std::move(r));
    }
    return trace;
}

} // namespace ftdrive::sim
