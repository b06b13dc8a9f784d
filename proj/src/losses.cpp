#include "mbfd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <spdlog/spdlog.h>

#include "mbfd/error.hpp"
#include "mbfd/kernels.hpp"

namespace mbfd::losses {
namespace {

void require_same(std::size_t a, std::size_t b, const char* what) {
    if (a != b) throw ShapeError(std::string(what) + ": dimension mismatch");
}

void require_legs(const Matrix& a, const Matrix& p, const Matrix& n) {
    if (a.rows != p.rows || a.rows != n.rows || a.cols != p.cols || a.cols != n.cols)
        throw ShapeError("triplet legs must have identical shapes");
}

double sqdist(std::span<const double> x, std::span<const double> y) {
    require_same(x.size(), y.size(), "squared distance");
    return kernels::squared_distance(x.data(), y.data(), x.size());
}

}  // namespace

nlohmann::json to_json(const LossConfig& c) {
    return {{"margin", c.margin},
            {"gamma", c.gamma},
            {"lambda_ssdlm", c.lambda_ssdlm},
            {"lambda_double", c.lambda_double},
            {"Lambda", c.Lambda}};
}

LossConfig loss_config_from_json(const nlohmann::json& j) {
    LossConfig c;
    c.margin = j.value("margin", c.margin);
    c.gamma = j.value("gamma", c.gamma);
    c.lambda_ssdlm = j.value("lambda_ssdlm", c.lambda_ssdlm);
    c.lambda_double = j.value("lambda_double", c.lambda_double);
    c.Lambda = j.value("Lambda", c.Lambda);
    if (!(c.margin > 0.0)) throw ConfigError("margin must be positive");
    return c;
}

double cross_entropy(std::span<const double> target, std::span<const double> probs) {
    require_same(target.size(), probs.size(), "cross_entropy");
    double loss = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        if (target[i] == 0.0) continue;
        double p = probs[i];
        if (p < kProbabilityFloor) {
            static bool warned = false;
            if (!warned) {
                spdlog::warn("cross_entropy: probability {} clamped to {}", p, kProbabilityFloor);
                warned = true;
            }
            p = kProbabilityFloor;
        }
        loss -= target[i] * std::log(p);
    }
    return loss;
}

double cross_entropy(const Matrix& targets, const Matrix& probs) {
    if (targets.rows != probs.rows || targets.cols != probs.cols) throw ShapeError("cross_entropy: shape mismatch");
    if (targets.rows == 0) return 0.0;
    double sum = 0.0;
    for (std::size_t r = 0; r < targets.rows; ++r) sum += cross_entropy(targets.row(r), probs.row(r));
    return sum / static_cast<double>(targets.rows);
}

Matrix cross_entropy_logit_grad(const Matrix& targets, const Matrix& probs) {
    if (targets.rows != probs.rows || targets.cols != probs.cols) throw ShapeError("cross_entropy: shape mismatch");
    Matrix g(probs.rows, probs.cols);
    if (probs.rows == 0) return g;
    const double inv = 1.0 / static_cast<double>(probs.rows);
    for (std::size_t r = 0; r < probs.rows; ++r) {
        // For soft targets the softmax-CE gradient is p * sum(y) - y.
        double mass = 0.0;
        for (std::size_t c = 0; c < probs.cols; ++c) mass += targets(r, c);
        for (std::size_t c = 0; c < probs.cols; ++c) g(r, c) = (probs(r, c) * mass - targets(r, c)) * inv;
    }
    return g;
}

double triplet_H(std::span<const double> a, std::span<const double> p, std::span<const double> n, double margin) {
    return sqdist(a, p) - sqdist(a, n) + margin;
}

double double_H(std::span<const double> a, std::span<const double> p, std::span<const double> n,
                std::span<const double> c, double margin, double gamma) {
    return gamma * (sqdist(a, p) + sqdist(a, c)) - sqdist(a, n) + margin;
}

double triplet_loss(const Matrix& anchors, const Matrix& positives, const Matrix& negatives, double margin) {
    return triplet_loss_grad(anchors, positives, negatives, margin).value;
}

double double_loss_branch(const Matrix& anchors, const Matrix& positives, const Matrix& negatives,
                          const Matrix& centers, double margin, double gamma) {
    return double_loss_grad(anchors, positives, negatives, centers, margin, gamma).value;
}

LegGradients triplet_loss_grad(const Matrix& a, const Matrix& p, const Matrix& n, double margin) {
    require_legs(a, p, n);
    LegGradients g;
    g.d_anchor = Matrix(a.rows, a.cols);
    g.d_positive = Matrix(a.rows, a.cols);
    g.d_negative = Matrix(a.rows, a.cols);
    if (a.rows == 0) return g;
    const double inv = 1.0 / static_cast<double>(a.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double h = triplet_H(a.row(i), p.row(i), n.row(i), margin);
        if (h <= 0.0) continue;
        g.value += h;
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double ap = a(i, k) - p(i, k);
            const double an = a(i, k) - n(i, k);
            g.d_anchor(i, k) = 2.0 * inv * (ap - an);
            g.d_positive(i, k) = -2.0 * inv * ap;
            g.d_negative(i, k) = 2.0 * inv * an;
        }
    }
    g.value *= inv;
    return g;
}

LegGradients double_loss_grad(const Matrix& a, const Matrix& p, const Matrix& n, const Matrix& c, double margin,
                              double gamma) {
    require_legs(a, p, n);
    if (c.rows != a.rows || c.cols != a.cols) throw ShapeError("center embeddings must match the branch dimension");
    LegGradients g;
    g.d_anchor = Matrix(a.rows, a.cols);
    g.d_positive = Matrix(a.rows, a.cols);
    g.d_negative = Matrix(a.rows, a.cols);
    g.d_center = Matrix(a.rows, a.cols);
    if (a.rows == 0) return g;
    const double inv = 1.0 / static_cast<double>(a.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double h = double_H(a.row(i), p.row(i), n.row(i), c.row(i), margin, gamma);
        if (h <= 0.0) continue;
        g.value += h;
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double ap = a(i, k) - p(i, k);
            const double ac = a(i, k) - c(i, k);
            const double an = a(i, k) - n(i, k);
            g.d_anchor(i, k) = 2.0 * inv * (gamma * (ap + ac) - an);
            g.d_positive(i, k) = -2.0 * inv * gamma * ap;
            g.d_center(i, k) = -2.0 * inv * gamma * ac;
            g.d_negative(i, k) = 2.0 * inv * an;
        }
    }
    g.value *= inv;
    return g;
}

double ssdlm_loss(double triplet, double entropy, double lambda) { return triplet + lambda * entropy; }

double total_loss(double entropy, double double_cnn, double double_mlp, const LossConfig& cfg) {
    return entropy + cfg.Lambda * (double_cnn + cfg.lambda_double * double_mlp);
}

}  // namespace mbfd::losses
