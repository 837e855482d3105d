#pragma once

// Single-bin Fourier fit of one period of uniformly spaced samples.

#include <span>

namespace ftdrive {

/// x[k] ~ mean + a1 cos(2 pi k/n) + b1 sin(2 pi k/n)
///      = mean + amplitude cos(2 pi k/n - phase).
struct FundamentalFit {
    double mean = 0.0;
    double a1 = 0.0;
    double b1 = 0.0;

    double amplitude() const;
    /// atan2(b1, a1) [rad]
    double phase() const;
};

/// Throws InvalidArgument for an empty span.
FundamentalFit fundamental_fit(std::span<const double> one_period);

} // namespace ftdrive
