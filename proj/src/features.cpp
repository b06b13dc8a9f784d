#include "mbfd/features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <string>
#include <vector>

#include "mbfd/error.hpp"

namespace mbfd::features {
namespace {

// FFTW's planner is not re-entrant; execution with a private plan is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

std::vector<double> magnitude_spectrum(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<double> in(x.begin(), x.end());
    std::vector<std::complex<double>> out(n / 2 + 1);
    fftw_plan plan;
    {
        std::lock_guard lock(planner_mutex());
        plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), reinterpret_cast<fftw_complex*>(out.data()),
                                    FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan);
    }
    std::vector<double> mag(out.size());
    for (std::size_t k = 0; k < out.size(); ++k) mag[k] = std::abs(out[k]);
    return mag;
}

}  // namespace

TimeFeatures time_features(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 2) throw ShapeError("time features need at least 2 samples");
    const double inv_n = 1.0 / static_cast<double>(n);

    double sum = 0.0, sum_sq = 0.0, sum_abs = 0.0, sum_sqrt_abs = 0.0, peak = 0.0, line = 0.0;
    double lo = x[0], hi = x[0];
    for (std::size_t i = 0; i < n; ++i) {
        const double v = x[i];
        const double a = std::abs(v);
        sum += v;
        sum_sq += v * v;
        sum_abs += a;
        sum_sqrt_abs += std::sqrt(a);
        peak = std::max(peak, a);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        if (i + 1 < n) line += std::abs(x[i + 1] - v);
    }
    const double mean = sum * inv_n;
    const double rms = std::sqrt(sum_sq * inv_n);
    const double mean_abs = sum_abs * inv_n;
    const double mean_sqrt_abs = sum_sqrt_abs * inv_n;
    if (rms == 0.0 || mean_abs == 0.0) throw NumericError("factor features undefined for an all-zero signal");

    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : x) {
        const double d = v - mean;
        const double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 *= inv_n;
    m3 *= inv_n;
    m4 *= inv_n;
    if (m2 == 0.0) throw NumericError("kurtosis and skewness undefined for a constant signal");

    TimeFeatures f{};
    f[kRms] = rms;
    f[kVar] = m2;
    f[kPeak] = peak;
    f[kKurtosis] = m4 / (m2 * m2);
    f[kSkewness] = m3 / std::pow(m2, 1.5);
    f[kPeakToPeak] = hi - lo;
    f[kLineIntegral] = line;
    f[kCrest] = peak / rms;
    f[kClearance] = peak / (mean_sqrt_abs * mean_sqrt_abs);
    f[kImpulse] = peak / mean_abs;
    f[kShape] = rms / mean_abs;
    return f;
}

FreqFeatures freq_features(std::span<const double> x, double sample_rate) {
    const std::size_t n = x.size();
    if (n < 8) throw ShapeError("frequency features need at least 8 samples");
    if (!(sample_rate > 0.0)) throw ShapeError("sample rate must be positive");
    const auto mag = magnitude_spectrum(x);
    const double bin_hz = sample_rate / static_cast<double>(n);

    double total = 0.0, weighted = 0.0, energy = 0.0;
    for (std::size_t k = 0; k < mag.size(); ++k) {
        total += mag[k];
        weighted += static_cast<double>(k) * bin_hz * mag[k];
        energy += mag[k] * mag[k];
    }
    if (total == 0.0) throw NumericError("spectral centroid undefined for an all-zero spectrum");
    const double centroid = weighted / total;

    double spread = 0.0, log_sum = 0.0, eps_sum = 0.0;
    for (std::size_t k = 0; k < mag.size(); ++k) {
        const double d = static_cast<double>(k) * bin_hz - centroid;
        spread += mag[k] * d * d;
        log_sum += std::log(mag[k] + kFlatnessEpsilon);
        eps_sum += mag[k] + kFlatnessEpsilon;
    }
    const double bins = static_cast<double>(mag.size());
    const double flatness = std::min(1.0, std::exp(log_sum / bins) / (eps_sum / bins));

    const double threshold = kRolloffFraction * energy;
    double cumulative = 0.0;
    double rolloff = static_cast<double>(mag.size() - 1) * bin_hz;
    for (std::size_t k = 0; k < mag.size(); ++k) {
        cumulative += mag[k] * mag[k];
        if (cumulative >= threshold) {
            rolloff = static_cast<double>(k) * bin_hz;
            break;
        }
    }

    return {centroid, std::sqrt(spread / total), flatness, rolloff};
}

FeatureVector extract(std::span<const double> x, double sample_rate) {
    const auto t = time_features(x);
    const auto f = freq_features(x, sample_rate);
    FeatureVector out{};
    std::copy(t.begin(), t.end(), out.begin());
    std::copy(f.begin(), f.end(), out.begin() + kTimeCount);
    return out;
}

Matrix extract_matrix(std::span<const VibrationSample> samples) {
    Matrix m(samples.size(), kFeatureCount);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto f = extract(samples[i]);
        std::copy(f.begin(), f.end(), m.row(i).begin());
    }
    return m;
}

Domain parse_domain(std::string_view name) {
    if (name == "time") return Domain::Time;
    if (name == "freq" || name == "frequency") return Domain::Frequency;
    if (name == "both") return Domain::Both;
    throw ConfigError("unknown feature domain '" + std::string(name) + "' (time|freq|both)");
}

std::string_view to_string(Domain d) {
    switch (d) {
        case Domain::Time: return "time";
        case Domain::Frequency: return "freq";
        case Domain::Both: return "both";
    }
    return "?";
}

Matrix select_domain(const Matrix& full, Domain d) {
    if (full.cols != kFeatureCount) throw ShapeError("feature matrix must have 15 columns");
    if (d == Domain::Both) return full;
    const std::size_t first = d == Domain::Time ? 0 : kTimeCount;
    const std::size_t count = d == Domain::Time ? kTimeCount : kFreqCount;
    Matrix out(full.rows, count);
    for (std::size_t r = 0; r < full.rows; ++r)
        for (std::size_t c = 0; c < count; ++c) out(r, c) = full(r, first + c);
    return out;
}

std::string csv_header() {
    std::string h;
    for (std::size_t i = 0; i < kNames.size(); ++i) {
        if (i) h += ',';
        h += kNames[i];
    }
    return h;
}

}  // namespace mbfd::features
