#include "ftdrive/common.hpp"
#include "ftdrive/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace ftdrive::kernels {

namespace {

bool cpu_has_avx2() {
#if defined(FTDRIVE_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

Backend detect() {
    if (const char* env = std::getenv("FTDRIVE_SIMD")) {
        const std::string_view want{env};
        if (want == "scalar") return Backend::scalar;
        if (want == "avx2" && cpu_has_avx2()) return Backend::avx2;
    }
    return cpu_has_avx2() ? Backend::avx2 : Backend::scalar;
}

std::atomic<Backend>& current() {
    static std::atomic<Backend> b{detect()};
    return b;
}

} // namespace

std::string_view backend_name(Backend b) { return b == Backend::avx2 ? "avx2" : "scalar"; }

bool backend_available(Backend b) { return b == Backend::scalar || cpu_has_avx2(); }

Backend active_backend() { return current().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
    if (!backend_available(b)) throw InvalidArgument("SIMD backend not supported on this CPU");
    current().store(b, std::memory_order_relaxed);
}

void candidate_costs(const CandidateBatch& batch, std::span<const double> v_alpha,
                     std::span<const double> v_beta, std::span<double> costs) {
    if (v_alpha.size() != costs.size() || v_beta.size() != costs.size())
        throw InvalidArgument("candidate_costs: span length mismatch");
    if (active_backend() == Backend::avx2)
        avx2::candidate_costs(batch, v_alpha, v_beta, costs);
    else
        scalar::candidate_costs(batch, v_alpha, v_beta, costs);
}

BinSums single_bin_sums(std::span<const double> x, std::span<const double> cos_table,
                        std::span<const double> sin_table) {
    if (cos_table.size() < x.size() || sin_table.size() < x.size())
        throw InvalidArgument("single_bin_sums: table shorter than signal");
    if (active_backend() == Backend::avx2) return avx2::single_bin_sums(x, cos_table, sin_table);
    return scalar::single_bin_sums(x, cos_table, sin_table);
}

} // namespace ftdrive::kernels
