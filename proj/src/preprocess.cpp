#include "mbfd/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mbfd/error.hpp"

namespace mbfd::preprocess {
namespace {

std::vector<double> column(const Matrix& x, std::size_t c) {
    std::vector<double> out(x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) out[r] = x(r, c);
    return out;
}

void check_fit_input(const Matrix& x) {
    if (x.empty()) throw ShapeError("cannot fit a transform on an empty matrix");
    for (double v : x.data)
        if (!std::isfinite(v)) throw NumericError("cannot fit a transform on non-finite data");
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    return {mean, std::sqrt(var)};
}

double standardize(double x, double mean, double sd) { return sd == 0.0 ? 0.0 : (x - mean) / sd; }

// Empirical CDF lookup into [0, 1]; repeated quantile values map to the middle
// of their reference run.
double quantile_map(const double* q, std::size_t nq, double x) {
    if (nq == 1 || x <= q[0]) return 0.0;
    if (x >= q[nq - 1]) return 1.0;
    const double step = 1.0 / static_cast<double>(nq - 1);
    const auto lo = static_cast<std::size_t>(std::lower_bound(q, q + nq, x) - q);
    const auto hi_end = static_cast<std::size_t>(std::upper_bound(q, q + nq, x) - q);
    if (lo < hi_end) return 0.5 * (static_cast<double>(lo) + static_cast<double>(hi_end - 1)) * step;
    const std::size_t below = lo - 1;
    const double t = (x - q[below]) / (q[lo] - q[below]);
    return (static_cast<double>(below) + t) * step;
}

}  // namespace

std::string_view to_string(Method m) {
    switch (m) {
        case Method::MAS: return "MAS";
        case Method::SS: return "SS";
        case Method::RS: return "RS";
        case Method::N: return "N";
        case Method::QT: return "QT";
        case Method::PT: return "PT";
    }
    return "?";
}

Method parse_method(std::string_view name) {
    for (auto m : kAllMethods)
        if (name == to_string(m)) return m;
    throw ConfigError("unknown normalization '" + std::string(name) + "' (MAS|SS|RS|N|QT|PT)");
}

double quantile_linear(std::vector<double> sorted_values, double q) {
    if (sorted_values.empty()) throw ShapeError("quantile of an empty column");
    const double pos = q * static_cast<double>(sorted_values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted_values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted_values[lo] + frac * (sorted_values[hi] - sorted_values[lo]);
}

double yeo_johnson(double x, double lambda) {
    if (x >= 0.0) {
        if (std::abs(lambda) < 1e-12) return std::log1p(x);
        return (std::pow(x + 1.0, lambda) - 1.0) / lambda;
    }
    if (std::abs(lambda - 2.0) < 1e-12) return -std::log1p(-x);
    return -(std::pow(1.0 - x, 2.0 - lambda) - 1.0) / (2.0 - lambda);
}

double yeo_johnson_log_likelihood(const std::vector<double>& col, double lambda) {
    std::vector<double> y(col.size());
    double jacobian = 0.0;
    for (std::size_t i = 0; i < col.size(); ++i) {
        y[i] = yeo_johnson(col[i], lambda);
        jacobian += std::copysign(std::log1p(std::abs(col[i])), col[i]);
    }
    const auto [mean, sd] = mean_std(y);
    (void)mean;
    const double var = sd * sd;
    if (!(var > 0.0) || !std::isfinite(var)) return -std::numeric_limits<double>::infinity();
    const double n = static_cast<double>(col.size());
    return -0.5 * n * std::log(var) + (lambda - 1.0) * jacobian;
}

double fit_yeo_johnson_lambda(const std::vector<double>& col) {
    if (std::all_of(col.begin(), col.end(), [&](double v) { return v == col.front(); })) return 1.0;
    constexpr double kInvPhi = 0.6180339887498949;
    double a = -5.0, b = 5.0;
    double c = b - kInvPhi * (b - a), d = a + kInvPhi * (b - a);
    double fc = yeo_johnson_log_likelihood(col, c), fd = yeo_johnson_log_likelihood(col, d);
    while (b - a > 1e-6) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - kInvPhi * (b - a);
            fc = yeo_johnson_log_likelihood(col, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + kInvPhi * (b - a);
            fd = yeo_johnson_log_likelihood(col, d);
        }
    }
    return 0.5 * (a + b);
}

FittedTransform fit(Method method, const Matrix& x) {
    check_fit_input(x);
    FittedTransform t;
    t.method = method;
    t.columns = x.cols;
    switch (method) {
        case Method::MAS:
            t.scale.resize(x.cols);
            for (std::size_t c = 0; c < x.cols; ++c) {
                double m = 0.0;
                for (std::size_t r = 0; r < x.rows; ++r) m = std::max(m, std::abs(x(r, c)));
                t.scale[c] = m;
            }
            break;
        case Method::SS:
            for (std::size_t c = 0; c < x.cols; ++c) {
                const auto [mean, sd] = mean_std(column(x, c));
                t.center.push_back(mean);
                t.scale.push_back(sd);
            }
            break;
        case Method::RS:
            for (std::size_t c = 0; c < x.cols; ++c) {
                auto col = column(x, c);
                std::sort(col.begin(), col.end());
                t.center.push_back(quantile_linear(col, 0.5));
                t.scale.push_back(quantile_linear(col, 0.75) - quantile_linear(col, 0.25));
            }
            break;
        case Method::N: break;
        case Method::QT: {
            t.n_quantiles = std::min(kMaxQuantiles, x.rows);
            t.quantiles.reserve(x.cols * t.n_quantiles);
            for (std::size_t c = 0; c < x.cols; ++c) {
                auto col = column(x, c);
                std::sort(col.begin(), col.end());
                for (std::size_t i = 0; i < t.n_quantiles; ++i) {
                    const double ref =
                        t.n_quantiles == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(t.n_quantiles - 1);
                    t.quantiles.push_back(quantile_linear(col, ref));
                }
                // Linear interpolation can break monotonicity by an ulp.
                auto first = t.quantiles.end() - static_cast<std::ptrdiff_t>(t.n_quantiles);
                for (auto it = first + 1; it != t.quantiles.end(); ++it) *it = std::max(*it, *(it - 1));
            }
            break;
        }
        case Method::PT:
            for (std::size_t c = 0; c < x.cols; ++c) {
                auto col = column(x, c);
                const double lambda = fit_yeo_johnson_lambda(col);
                for (auto& v : col) v = yeo_johnson(v, lambda);
                const auto [mean, sd] = mean_std(col);
                t.lambdas.push_back(lambda);
                t.center.push_back(mean);
                t.scale.push_back(sd);
            }
            break;
    }
    return t;
}

Matrix apply(const FittedTransform& t, const Matrix& x) {
    if (t.method != Method::N && x.cols != t.columns)
        throw ShapeError("transform fitted on " + std::to_string(t.columns) + " columns, got " +
                         std::to_string(x.cols));
    Matrix out = x;
    switch (t.method) {
        case Method::MAS:
            for (std::size_t r = 0; r < x.rows; ++r)
                for (std::size_t c = 0; c < x.cols; ++c)
                    if (t.scale[c] != 0.0) out(r, c) = x(r, c) / t.scale[c];
            break;
        case Method::SS:
        case Method::RS:
            for (std::size_t r = 0; r < x.rows; ++r)
                for (std::size_t c = 0; c < x.cols; ++c) out(r, c) = standardize(x(r, c), t.center[c], t.scale[c]);
            break;
        case Method::N:
            for (std::size_t r = 0; r < x.rows; ++r) {
                auto row = out.row(r);
                double norm = 0.0;
                for (double v : row) norm += v * v;
                norm = std::sqrt(norm);
                if (norm > 0.0)
                    for (auto& v : row) v /= norm;
            }
            break;
        case Method::QT:
            for (std::size_t r = 0; r < x.rows; ++r)
                for (std::size_t c = 0; c < x.cols; ++c)
                    out(r, c) = quantile_map(t.quantiles.data() + c * t.n_quantiles, t.n_quantiles, x(r, c));
            break;
        case Method::PT:
            for (std::size_t r = 0; r < x.rows; ++r)
                for (std::size_t c = 0; c < x.cols; ++c)
                    out(r, c) = standardize(yeo_johnson(x(r, c), t.lambdas[c]), t.center[c], t.scale[c]);
            break;
    }
    return out;
}

nlohmann::json to_json(const FittedTransform& t) {
    nlohmann::json j;
    j["method"] = std::string(to_string(t.method));
    j["columns"] = t.columns;
    j["scale"] = t.scale;
    j["center"] = t.center;
    j["lambdas"] = t.lambdas;
    j["quantiles"] = t.quantiles;
    j["n_quantiles"] = t.n_quantiles;
    return j;
}

FittedTransform from_json(const nlohmann::json& j) {
    try {
        FittedTransform t;
        t.method = parse_method(j.at("method").get<std::string>());
        t.columns = j.at("columns").get<std::size_t>();
        t.scale = j.at("scale").get<std::vector<double>>();
        t.center = j.at("center").get<std::vector<double>>();
        t.lambdas = j.at("lambdas").get<std::vector<double>>();
        t.quantiles = j.at("quantiles").get<std::vector<double>>();
        t.n_quantiles = j.at("n_quantiles").get<std::size_t>();
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad transform JSON: ") + e.what());
    }
}

}  // namespace mbfd::preprocess
