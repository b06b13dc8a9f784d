#pragma once

// Back-end classifiers for hand-crafted features and learned embeddings.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mbfd/matrix.hpp"

namespace mbfd {

enum class BackendKind { SVM, KNN, RF, EUCLIDEAN, COSINE };

std::string_view to_string(BackendKind k);
BackendKind parse_backend(std::string_view name);
inline constexpr BackendKind kAllBackends[] = {BackendKind::SVM, BackendKind::KNN, BackendKind::RF,
                                               BackendKind::EUCLIDEAN, BackendKind::COSINE};

struct BackendParams {
    double svm_c = 1.0;
    std::optional<double> svm_gamma;  // unset: 1 / (n_features * var(X))
    double svm_tolerance = 1e-3;
    std::size_t svm_max_iterations = 10'000'000;
    std::size_t knn_k = 5;
    std::size_t rf_trees = 100;
    std::size_t rf_max_depth = 20;
    std::uint64_t seed = 0;
    // EUCLIDEAN/COSINE: compare against every training point instead of class centroids.
    bool nearest_neighbor = false;

    friend bool operator==(const BackendParams&, const BackendParams&) = default;
};

nlohmann::json to_json(const BackendParams& p);
BackendParams backend_params_from_json(const nlohmann::json& j);

// Binary RBF machine for classes (first, second); decision > 0 votes first.
struct SvmPair {
    int first = 0, second = 0;
    std::vector<std::size_t> support;  // rows of BackendModel::points
    std::vector<double> coef;          // alpha_i * y_i
    double rho = 0.0;

    friend bool operator==(const SvmPair&, const SvmPair&) = default;
};

// Flat CART tree; feature < 0 marks a leaf holding `value`.
struct DecisionTree {
    std::vector<int> feature;
    std::vector<double> threshold;  // go left when x[feature] <= threshold
    std::vector<int> left, right, value;

    friend bool operator==(const DecisionTree&, const DecisionTree&) = default;
};

struct BackendModel {
    BackendKind kind = BackendKind::EUCLIDEAN;
    BackendParams params;
    std::size_t dim = 0;
    std::vector<int> classes;  // ascending

    Matrix points;  // KNN and nearest-neighbour: training set; SVM: support vectors
    std::vector<int> point_labels;
    Matrix centroids;  // one row per entry of `classes`
    double gamma = 0.0;
    std::vector<SvmPair> pairs;
    std::vector<DecisionTree> trees;

    friend bool operator==(const BackendModel&, const BackendModel&) = default;
};

BackendModel fit_backend(BackendKind kind, const Matrix& x, std::span<const int> y, const BackendParams& params = {});
std::vector<int> predict(const BackendModel& model, const Matrix& x);

// 1 / (n_features * var(X)) over all entries; 1 when the variance is zero.
double rbf_gamma_scale(const Matrix& x);
double svm_decision(const BackendModel& model, const SvmPair& pair, std::span<const double> x);

// <dir>/backend.json manifest plus <dir>/backend.bin float64 arrays.
void save_backend(const BackendModel& model, const std::filesystem::path& dir);
BackendModel load_backend(const std::filesystem::path& dir);

}  // namespace mbfd
