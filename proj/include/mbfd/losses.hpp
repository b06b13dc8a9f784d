#pragma once

#include <span>

#include <nlohmann/json.hpp>

#include "mbfd/matrix.hpp"

namespace mbfd::losses {

struct LossConfig {
    double margin = 1.0;        // m in every hinge
    double gamma = 0.4;         // weight of the anchor-positive and anchor-center pulls
    double lambda_ssdlm = 1.0;  // weight of cross-entropy in the semi-supervised objective
    double lambda_double = 0.3; // weight of the MLP-branch double loss
    double Lambda = 0.01;       // weight of the combined double losses against cross-entropy
};

nlohmann::json to_json(const LossConfig& c);
LossConfig loss_config_from_json(const nlohmann::json& j);

inline constexpr double kProbabilityFloor = 1e-12;

// -sum_i y_i log(p_i). Probabilities below kProbabilityFloor where y_i > 0 are
// clamped (and reported once through the log).
double cross_entropy(std::span<const double> target, std::span<const double> probs);
// Mean over rows.
double cross_entropy(const Matrix& targets, const Matrix& probs);
// d(mean CE)/d(logits) for a softmax head: (p - y) / rows.
Matrix cross_entropy_logit_grad(const Matrix& targets, const Matrix& probs);

// d^2(a,p) - d^2(a,n) + m
double triplet_H(std::span<const double> a, std::span<const double> p, std::span<const double> n, double margin);
// gamma * (d^2(a,p) + d^2(a,c)) - d^2(a,n) + m
double double_H(std::span<const double> a, std::span<const double> p, std::span<const double> n,
                std::span<const double> c, double margin, double gamma);

// Row i of each matrix is one leg of triplet i. Losses are means of max(H, 0).
double triplet_loss(const Matrix& anchors, const Matrix& positives, const Matrix& negatives, double margin);
double double_loss_branch(const Matrix& anchors, const Matrix& positives, const Matrix& negatives,
                          const Matrix& centers, double margin, double gamma);

struct LegGradients {
    double value = 0.0;
    Matrix d_anchor, d_positive, d_negative, d_center;  // d_center empty for the plain triplet loss
};

// Gradients use subgradient 0 at H == 0.
LegGradients triplet_loss_grad(const Matrix& anchors, const Matrix& positives, const Matrix& negatives,
                               double margin);
LegGradients double_loss_grad(const Matrix& anchors, const Matrix& positives, const Matrix& negatives,
                              const Matrix& centers, double margin, double gamma);

// L_triplet + lambda * L_entropy
double ssdlm_loss(double triplet, double entropy, double lambda);
// L_entropy + Lambda * (double_cnn + lambda_double * double_mlp)
double total_loss(double entropy, double double_cnn, double double_mlp, const LossConfig& cfg);

}  // namespace mbfd::losses
