#include "ftdrive/fourier.hpp"

#include "ftdrive/common.hpp"
#include "ftdrive/kernels.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace ftdrive {

double FundamentalFit::amplitude() const { return std::hypot(a1, b1); }
double FundamentalFit::phase() const { return std::atan2(b1, a1); }

namespace {

struct BinTables {
    std::size_t n = 0;
    std::vector<double> c;
    std::vector<double> s;
};

const BinTables& tables(std::size_t n) {
    thread_local BinTables t;
    if (t.n != n) {
        t.n = n;
        t.c.resize(n);
        t.s.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            const double th = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
            t.c[k] = std::cos(th);
            t.s[k] = std::sin(th);
        }
    }
    return t;
}

} // namespace

FundamentalFit fundamental_fit(std::span<const double> x) {
    if (x.empty()) throw InvalidArgument("fundamental_fit: empty window");
    const BinTables& t = tables(x.size());
    const kernels::BinSums s = kernels::single_bin_sums(x, t.c, t.s);
    const double n = static_cast<double>(x.size());
    return {s.sum / n, 2.0 * s.cos_sum / n, 2.0 * s.sin_sum / n};
}

} // namespace ftdrive
