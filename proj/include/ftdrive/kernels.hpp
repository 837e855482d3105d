#pragma once

// Data-parallel inner loops with a scalar reference and SIMD variants.
// The variant is chosen once at runtime (CPU feature probe, overridable with
// the FTDRIVE_SIMD environment variable: "scalar" or "avx2").

#include <cstddef>
#include <span>
#include <string_view>

namespace ftdrive::kernels {

enum class Backend { scalar, avx2 };

std::string_view backend_name(Backend b);

/// Backend used by the dispatching entry points below.
Backend active_backend();

/// Forces a backend (tests, benchmarks). Throws if the CPU cannot run it.
void set_backend(Backend b);

bool backend_available(Backend b);

/// Per-period constants of the one-step prediction, shared by every candidate.
/// flux(v) = flux_base + ts * v, current(v) = current_base + current_gain * v,
/// cost = |te_ref - torque_coeff * (flux x current)| + flux_weight * |flux_ref - |flux||.
struct CandidateBatch {
    double flux_base_alpha = 0.0;
    double flux_base_beta = 0.0;
    double current_base_alpha = 0.0;
    double current_base_beta = 0.0;
    double ts = 0.0;
    double current_gain = 0.0;
    double torque_coeff = 0.0;
    double te_ref = 0.0;
    double flux_ref = 0.0;
    double flux_weight = 0.0;
};

/// Evaluates the cost of each candidate voltage vector. All spans share one length.
void candidate_costs(const CandidateBatch& batch, std::span<const double> v_alpha,
                     std::span<const double> v_beta, std::span<double> costs);

/// Sums used by the single-bin Fourier analysis: sum(x), sum(x*c), sum(x*s).
struct BinSums {
    double sum = 0.0;
    double cos_sum = 0.0;
    double sin_sum = 0.0;
};

BinSums single_bin_sums(std::span<const double> x, std::span<const double> cos_table,
                        std::span<const double> sin_table);

// Direct entry points into each variant, for equivalence testing.
namespace scalar {
void candidate_costs(const CandidateBatch& batch, std::span<const double> v_alpha,
                     std::span<const double> v_beta, std::span<double> costs);
BinSums single_bin_sums(std::span<const double> x, std::span<const double> cos_table,
                        std::span<const double> sin_table);
} // namespace scalar

namespace avx2 {
void candidate_costs(const CandidateBatch& batch, std::span<const double> v_alpha,
                     std::span<const double> v_beta, std::span<double> costs);
BinSums single_bin_sums(std::span<const double> x, std::span<const double> cos_table,
                        std::span<const double> sin_table);
} // namespace avx2

} // namespace ftdrive::kernels
