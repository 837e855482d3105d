#include "ftdrive/kernels.hpp"

#include <cmath>

namespace ftdrive::kernels::scalar {

void candidate_costs(const CandidateBatch& b, std::span<const double> v_alpha,
                     std::span<const double> v_beta, std::span<double> costs) {
    const std::size_t n = costs.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double psi_a = b.flux_base_alpha + b.ts * v_alpha[i];
        const double psi_b = b.flux_base_beta + b.ts * v_beta[i];
        const double cur_a = b.current_base_alpha + b.current_gain * v_alpha[i];
        const double cur_b = b.current_base_beta + b.current_gain * v_beta[i];
        const double te = b.torque_coeff * (psi_a * cur_b - psi_b * cur_a);
        const double mag = std::sqrt(psi_a * psi_a + psi_b * psi_b);
        costs[i] = std::fabs(b.te_ref - te) + b.flux_weight * std::fabs(b.flux_ref - mag);
    }
}

// Four interleaved partial sums combined as (0+2)+(1+3), matching the AVX2
// lane layout and its horizontal add.
BinSums single_bin_sums(std::span<const double> x, std::span<const double> cos_table,
                        std::span<const double> sin_table) {
    const std::size_t n = x.size();
    double s[4] = {}, c[4] = {}, q[4] = {};
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        for (std::size_t l = 0; l < 4; ++l) {
            s[l] += x[i + l];
            c[l] += x[i + l] * cos_table[i + l];
            q[l] += x[i + l] * sin_table[i + l];
        }
    }
    BinSums out{(s[0] + s[2]) + (s[1] + s[3]), (c[0] + c[2]) + (c[1] + c[3]), (q[0] + q[2]) + (q[1] + q[3])};
    for (; i < n; ++i) {
        out.sum += x[i];
        out.cos_sum += x[i] * cos_table[i];
        out.sin_sum += x[i] * sin_table[i];
    }
    return out;
}

} // namespace ftdrive::kernels::scalar
