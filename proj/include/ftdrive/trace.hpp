#pragma once

// Decimated simulation trace and its CSV form.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace ftdrive::sim {

struct TraceRecord {
    double t = 0.0;
    double ia = 0.0, ib = 0.0, ic = 0.0;
    double i_mid = 0.0;
    double v_dc1 = 0.0, v_dc2 = 0.0;
    double psis_alpha = 0.0, psis_beta = 0.0;         ///< plant
    double psis_alpha_est = 0.0, psis_beta_est = 0.0; ///< controller estimate
    double te = 0.0, te_ref = 0.0;
    double omega_m = 0.0, omega_ref = 0.0;
    int vector_index = -1;
    std::string mode;
    std::string health; ///< one letter per S1..S6, Q1, Q2: H healthy, O open, S short, B gate blocked, X isolated
};

using Trace = std::vector<TraceRecord>;

/// Column order of the CSV header.
const std::vector<std::string>& trace_columns();

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

void write_trace_csv(std::ostream& out, const Trace& trace);
void write_trace_csv(const std::filesystem::path& path, const Trace& trace);
/// Throws InvalidArgument on a malformed file or header mismatch.
Trace read_trace_csv(const std::filesystem::path& path);

} // namespace ftdrive::sim
