#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mbfd/matrix.hpp"

namespace mbfd::preprocess {

// MAS max-abs, SS standard, RS robust (median/IQR), N row normalizer,
// QT quantile (uniform target), PT Yeo-Johnson power transform.
enum class Method { MAS, SS, RS, N, QT, PT };

std::string_view to_string(Method m);
Method parse_method(std::string_view name);
inline constexpr Method kAllMethods[] = {Method::MAS, Method::SS, Method::RS, Method::N, Method::QT, Method::PT};

inline constexpr std::size_t kMaxQuantiles = 1000;

// Per-column statistics captured by fit(). Immutable once built; apply() never
// looks at the statistics of the data it transforms.
struct FittedTransform {
    Method method = Method::SS;
    std::size_t columns = 0;
    std::vector<double> scale;   // MAS: max|x|; SS/PT: std; RS: IQR
    std::vector<double> center;  // SS/PT: mean; RS: median
    std::vector<double> lambdas;  // PT: Yeo-Johnson exponent
    // QT: columns x n_quantiles, row-major; references are i / (n_quantiles - 1).
    std::vector<double> quantiles;
    std::size_t n_quantiles = 0;

    friend bool operator==(const FittedTransform&, const FittedTransform&) = default;
};

FittedTransform fit(Method method, const Matrix& x);
Matrix apply(const FittedTransform& t, const Matrix& x);

nlohmann::json to_json(const FittedTransform& t);
FittedTransform from_json(const nlohmann::json& j);

// Building blocks, exposed for tests.
double quantile_linear(std::vector<double> sorted_values, double q);
double yeo_johnson(double x, double lambda);
double yeo_johnson_log_likelihood(const std::vector<double>& column, double lambda);
double fit_yeo_johnson_lambda(const std::vector<double>& column);

}  // namespace mbfd::preprocess
