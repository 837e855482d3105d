#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace ftdrive {

/// Space vector in the stationary alpha-beta frame.
struct AlphaBeta {
    double alpha = 0.0;
    double beta = 0.0;

    constexpr AlphaBeta& operator+=(const AlphaBeta& o) {
        alpha += o.alpha;
        beta += o.beta;
        return *this;
    }
    constexpr AlphaBeta& operator-=(const AlphaBeta& o) {
        alpha -= o.alpha;
        beta -= o.beta;
        return *this;
    }
    friend constexpr AlphaBeta operator+(AlphaBeta a, const AlphaBeta& b) { return a += b; }
    friend constexpr AlphaBeta operator-(AlphaBeta a, const AlphaBeta& b) { return a -= b; }
    friend constexpr AlphaBeta operator*(double k, const AlphaBeta& v) { return {k * v.alpha, k * v.beta}; }
    friend constexpr AlphaBeta operator*(const AlphaBeta& v, double k) { return {v.alpha * k, v.beta * k}; }
    friend constexpr bool operator==(const AlphaBeta&, const AlphaBeta&) = default;
};

inline double norm(const AlphaBeta& v) { return std::hypot(v.alpha, v.beta); }
constexpr double dot(const AlphaBeta& a, const AlphaBeta& b) { return a.alpha * b.alpha + a.beta * b.beta; }
/// z-component of a x b.
constexpr double cross(const AlphaBeta& a, const AlphaBeta& b) { return a.alpha * b.beta - a.beta * b.alpha; }
/// Multiplication by j (90 degree rotation).
constexpr AlphaBeta rotate_j(const AlphaBeta& v) { return {-v.beta, v.alpha}; }

/// Three-phase quantity in abc coordinates.
struct Abc {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;

    constexpr double operator[](int i) const { return i == 0 ? a : (i == 1 ? b : c); }
    constexpr double& operator[](int i) { return i == 0 ? a : (i == 1 ? b : c); }
};

enum class Leg : int { a = 0, b = 1, c = 2 };

constexpr int index(Leg l) { return static_cast<int>(l); }
constexpr char leg_name(Leg l) { return static_cast<char>('a' + index(l)); }

/// Unit vector of a phase winding axis in the amplitude-invariant alpha-beta frame.
inline AlphaBeta phase_axis(Leg l) {
    constexpr double h = std::numbers::sqrt3 / 2.0;
    switch (l) {
    case Leg::a: return {1.0, 0.0};
    case Leg::b: return {-0.5, h};
    case Leg::c: return {-0.5, -h};
    }
    return {};
}

// Error hierarchy. Everything thrown by the library derives from Error.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InvalidArgument : Error {
    using Error::Error;
};
struct InvalidConfiguration : Error {
    using Error::Error;
};
struct IntegrationDiverged : Error {
    using Error::Error;
};
struct InvalidTransition : Error {
    using Error::Error;
};

} // namespace ftdrive
