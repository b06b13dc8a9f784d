#pragma once

// Brute-force reference computations shared by the unit tests and the
// acceptance binary. Written from the textbook definitions with long double
// accumulation and no shared code with the library.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "mbfd/matrix.hpp"

namespace oracle {

using ld = long double;

inline ld mean(const std::vector<double>& x) {
    ld s = 0;
    for (double v : x) s += v;
    return s / static_cast<ld>(x.size());
}

inline ld central_moment(const std::vector<double>& x, int k) {
    const ld mu = mean(x);
    ld s = 0;
    for (double v : x) s += std::pow(static_cast<ld>(v) - mu, k);
    return s / static_cast<ld>(x.size());
}

// Order: rms, var, peak, kurtosis, skewness, peak_to_peak, line_integral,
// crest, clearance, impulse, shape.
inline std::array<double, 11> time_features(const std::vector<double>& x) {
    const auto n = static_cast<ld>(x.size());
    ld sq = 0, abs_sum = 0, sqrt_abs = 0, line = 0;
    ld peak = 0, hi = x[0], lo = x[0];
    for (std::size_t i = 0; i < x.size(); ++i) {
        const ld v = x[i];
        sq += v * v;
        abs_sum += std::fabs(v);
        sqrt_abs += std::sqrt(std::fabs(v));
        peak = std::max(peak, std::fabs(v));
        hi = std::max(hi, v);
        lo = std::min(lo, v);
        if (i + 1 < x.size()) line += std::fabs(static_cast<ld>(x[i + 1]) - v);
    }
    const ld rms = std::sqrt(sq / n);
    const ld m2 = central_moment(x, 2), m3 = central_moment(x, 3), m4 = central_moment(x, 4);
    const ld mean_abs = abs_sum / n;
    const ld clear_den = (sqrt_abs / n) * (sqrt_abs / n);
    return {static_cast<double>(rms),          static_cast<double>(m2),
            static_cast<double>(peak),         static_cast<double>(m4 / (m2 * m2)),
            static_cast<double>(m3 / std::pow(m2, 1.5L)), static_cast<double>(hi - lo),
            static_cast<double>(line),         static_cast<double>(peak / rms),
            static_cast<double>(peak / clear_den), static_cast<double>(peak / mean_abs),
            static_cast<double>(rms / mean_abs)};
}

// O(N^2) DFT magnitudes for bins 0..N/2.
inline std::vector<ld> dft_magnitudes(const std::vector<double>& x) {
    const std::size_t n = x.size();
    std::vector<ld> mag(n / 2 + 1);
    for (std::size_t k = 0; k <= n / 2; ++k) {
        ld re = 0, im = 0;
        for (std::size_t t = 0; t < n; ++t) {
            const ld angle = -2.0L * std::numbers::pi_v<ld> * static_cast<ld>((k * t) % n) / static_cast<ld>(n);
            re += x[t] * std::cos(angle);
            im += x[t] * std::sin(angle);
        }
        mag[k] = std::sqrt(re * re + im * im);
    }
    return mag;
}

// Order: centroid, bandwidth, flatness, rolloff.
inline std::array<double, 4> freq_features(const std::vector<double>& x, double rate) {
    const auto m = dft_magnitudes(x);
    const auto n = static_cast<ld>(x.size());
    ld total = 0, weighted = 0, energy = 0;
    for (std::size_t k = 0; k < m.size(); ++k) {
        const ld f = static_cast<ld>(k) * rate / n;
        total += m[k];
        weighted += f * m[k];
        energy += m[k] * m[k];
    }
    const ld centroid = weighted / total;
    ld spread = 0, log_sum = 0, arith = 0;
    for (std::size_t k = 0; k < m.size(); ++k) {
        const ld f = static_cast<ld>(k) * rate / n;
        spread += m[k] * (f - centroid) * (f - centroid);
        log_sum += std::log(m[k] + 1e-12L);
        arith += m[k] + 1e-12L;
    }
    const auto bins = static_cast<ld>(m.size());
    const ld flatness = std::exp(log_sum / bins) / (arith / bins);
    ld cumulative = 0, rolloff = 0;
    for (std::size_t k = 0; k < m.size(); ++k) {
        cumulative += m[k] * m[k];
        if (cumulative >= 0.85L * energy) {
            rolloff = static_cast<ld>(k) * rate / n;
            break;
        }
    }
    return {static_cast<double>(centroid), static_cast<double>(std::sqrt(spread / total)),
            static_cast<double>(flatness), static_cast<double>(rolloff)};
}

// True when some cumulative spectral energy lies within `tol` (relative) of
// the 85% threshold, so the roll-off bin depends on rounding.
inline bool rolloff_ambiguous(const std::vector<double>& x, ld tol = 1e-9L) {
    const auto m = dft_magnitudes(x);
    ld energy = 0;
    for (ld v : m) energy += v * v;
    ld cumulative = 0;
    for (ld v : m) {
        cumulative += v * v;
        if (std::fabs(cumulative - 0.85L * energy) <= tol * energy) return true;
    }
    return false;
}

inline double rel_err(double got, double want) {
    const double scale = std::max({std::fabs(want), std::fabs(got), 1e-300});
    return std::fabs(got - want) / scale;
}

inline std::vector<double> random_signal(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.1, 3.0);
    const double scale = u(rng), offset = g(rng) * 0.3;
    std::vector<double> x(n);
    for (auto& v : x) v = offset + scale * g(rng);
    return x;
}

inline mbfd::Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, double sd = 1.0) {
    std::normal_distribution<double> g(0.0, sd);
    mbfd::Matrix m(r, c);
    for (auto& v : m.data) v = g(rng);
    return m;
}

inline ld squared_distance(std::span<const double> a, std::span<const double> b) {
    ld s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (static_cast<ld>(a[i]) - b[i]) * (static_cast<ld>(a[i]) - b[i]);
    return s;
}

// Central difference of f with respect to every entry of `x`.
inline std::vector<double> numeric_gradient(std::vector<double>& x, const std::function<double()>& f,
                                            double h = 1e-6) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f();
        x[i] = keep - h;
        const double down = f();
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

}  // namespace oracle
