#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>

#include "mbfd/dataio.hpp"
#include "mbfd/matrix.hpp"

namespace mbfd::features {

inline constexpr std::size_t kTimeCount = 11;
inline constexpr std::size_t kFreqCount = 4;
inline constexpr std::size_t kFeatureCount = kTimeCount + kFreqCount;

// Column order of every feature matrix and of the CSV header.
//   rms, var, peak, peak_to_peak, line_integral: amplitude units (var squared)
//   kurtosis, skewness, crest, clearance, impulse, shape: dimensionless
//   spec_centroid, spec_bandwidth, spec_rolloff: Hz; spec_flatness in [0, 1]
inline constexpr std::array<std::string_view, kFeatureCount> kNames = {
    "rms",           "var",           "peak",          "kurtosis",      "skewness",
    "peak_to_peak",  "line_integral", "crest",         "clearance",     "impulse",
    "shape",         "spec_centroid", "spec_bandwidth", "spec_flatness", "spec_rolloff"};

enum Index : std::size_t {
    kRms,
    kVar,
    kPeak,
    kKurtosis,
    kSkewness,
    kPeakToPeak,
    kLineIntegral,
    kCrest,
    kClearance,
    kImpulse,
    kShape,
    kCentroid,
    kBandwidth,
    kFlatness,
    kRolloff,
};

inline constexpr double kFlatnessEpsilon = 1e-12;
inline constexpr double kRolloffFraction = 0.85;

using TimeFeatures = std::array<double, kTimeCount>;
using FreqFeatures = std::array<double, kFreqCount>;
using FeatureVector = std::array<double, kFeatureCount>;

// Needs at least two points. Throws NumericError for an all-zero signal
// (factor features divide by RMS and mean|x|) and for a constant signal
// (kurtosis and skewness divide by the variance).
TimeFeatures time_features(std::span<const double> x);

// One full-length DFT without windowing; bins 0..N/2 at k * rate / N.
// Needs at least eight points; throws NumericError on an all-zero spectrum.
FreqFeatures freq_features(std::span<const double> x, double sample_rate);

FeatureVector extract(std::span<const double> x, double sample_rate);
inline FeatureVector extract(const VibrationSample& s) { return extract(s.values, s.sample_rate); }

// One row per sample.
Matrix extract_matrix(std::span<const VibrationSample> samples);

enum class Domain { Time, Frequency, Both };
Domain parse_domain(std::string_view name);
std::string_view to_string(Domain d);
// Keeps the columns of one domain (11, 4 or all 15).
Matrix select_domain(const Matrix& full, Domain d);

std::string csv_header();

}  // namespace mbfd::features
