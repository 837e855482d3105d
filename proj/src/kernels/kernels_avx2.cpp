#include "ftdrive/kernels.hpp"

#include <cmath>

#if defined(__AVX2__)
#include <immintrin.h>
#endif

namespace ftdrive::kernels::avx2 {

#if defined(__AVX2__)

namespace {

inline __m256d abs_pd(__m256d v) { return _mm256_andnot_pd(_mm256_set1_pd(-0.0), v); }

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d pair = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(pair, _mm_unpackhi_pd(pair, pair)));
}

} // namespace

// Same operation order as the scalar reference and no FMA, so every lane
// reproduces the scalar result bit for bit.
void candidate_costs(const CandidateBatch& b, std::span<const double> v_alpha,
                     std::span<const double> v_beta, std::span<double> costs) {
    const std::size_t n = costs.size();
    const __m256d fa0 = _mm256_set1_pd(b.flux_base_alpha);
    const __m256d fb0 = _mm256_set1_pd(b.flux_base_beta);
    const __m256d ca0 = _mm256_set1_pd(b.current_base_alpha);
    const __m256d cb0 = _mm256_set1_pd(b.current_base_beta);
    const __m256d ts = _mm256_set1_pd(b.ts);
    const __m256d g = _mm256_set1_pd(b.current_gain);
    const __m256d k = _mm256_set1_pd(b.torque_coeff);
    const __m256d te_ref = _mm256_set1_pd(b.te_ref);
    const __m256d flux_ref = _mm256_set1_pd(b.flux_ref);
    const __m256d w = _mm256_set1_pd(b.flux_weight);

    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d va = _mm256_loadu_pd(v_alpha.data() + i);
        const __m256d vb = _mm256_loadu_pd(v_beta.data() + i);
        const __m256d psi_a = _mm256_add_pd(fa0, _mm256_mul_pd(ts, va));
        const __m256d psi_b = _mm256_add_pd(fb0, _mm256_mul_pd(ts, vb));
        const __m256d cur_a = _mm256_add_pd(ca0, _mm256_mul_pd(g, va));
        const __m256d cur_b = _mm256_add_pd(cb0, _mm256_mul_pd(g, vb));
        const __m256d crs = _mm256_sub_pd(_mm256_mul_pd(psi_a, cur_b), _mm256_mul_pd(psi_b, cur_a));
        const __m256d te = _mm256_mul_pd(k, crs);
        const __m256d mag = _mm256_sqrt_pd(_mm256_add_pd(_mm256_mul_pd(psi_a, psi_a), _mm256_mul_pd(psi_b, psi_b)));
        const __m256d cost = _mm256_add_pd(abs_pd(_mm256_sub_pd(te_ref, te)),
                                           _mm256_mul_pd(w, abs_pd(_mm256_sub_pd(flux_ref, mag))));
        _mm256_storeu_pd(costs.data() + i, cost);
    }
    if (i < n) {
        scalar::candidate_costs(b, v_alpha.subspan(i), v_beta.subspan(i), costs.subspan(i));
    }
}

BinSums single_bin_sums(std::span<const double> x, std::span<const double> cos_table,
                        std::span<const double> sin_table) {
    const std::size_t n = x.size();
    __m256d acc_s = _mm256_setzero_pd();
    __m256d acc_c = _mm256_setzero_pd();
    __m256d acc_n = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d v = _mm256_loadu_pd(x.data() + i);
        acc_s = _mm256_add_pd(acc_s, v);
        acc_c = _mm256_add_pd(acc_c, _mm256_mul_pd(v, _mm256_loadu_pd(cos_table.data() + i)));
        acc_n = _mm256_add_pd(acc_n, _mm256_mul_pd(v, _mm256_loadu_pd(sin_table.data() + i)));
    }
    BinSums s{hsum(acc_s), hsum(acc_c), hsum(acc_n)};
    for (; i < n; ++i) {
        s.sum += x[i];
        s.cos_sum += x[i] * cos_table[i];
        s.sin_sum += x[i] * sin_table[i];
    }
    return s;
}

#else

void candidate_costs(const CandidateBatch& b, std::span<const double> v_alpha,
                     std::span<const double> v_beta, std::span<double> costs) {
    scalar::candidate_costs(b, v_alpha, v_beta, costs);
}

BinSums single_bin_sums(std::span<const double> x, std::span<const double> cos_table,
                        std::span<const double> sin_table) {
    return scalar::single_bin_sums(x, cos_table, sin_table);
}

#endif

} // namespace ftdrive::kernels::avx2
