#include "mbfd/backend.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "mbfd/archive.hpp"
#include "mbfd/error.hpp"
#include "mbfd/kernels.hpp"

namespace mbfd {
namespace {

constexpr const char* kBackendFormat = "mbfd-backend-1";
constexpr std::size_t kFullKernelLimit = 4096;

// Position of `label` within the sorted class list.
std::size_t class_slot(const std::vector<int>& classes, int label) {
    return static_cast<std::size_t>(std::lower_bound(classes.begin(), classes.end(), label) - classes.begin());
}

// Index of the largest count; the first (lowest class) wins ties.
std::size_t argmax_votes(const std::vector<std::size_t>& votes) {
    return static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

double rbf(const double* a, const double* b, std::size_t n, double gamma) {
    return std::exp(-gamma * kernels::squared_distance(a, b, n));
}

// ---------------------------------------------------------------- SVM

class KernelRows {
public:
    KernelRows(const Matrix& x, const std::vector<std::size_t>& rows, double gamma)
        : x_(x), rows_(rows), gamma_(gamma), n_(rows.size()) {
        if (n_ <= kFullKernelLimit) {
            full_.resize(n_ * n_);
            for (std::size_t i = 0; i < n_; ++i) {
                full_[i * n_ + i] = 1.0;
                for (std::size_t j = 0; j < i; ++j)
                    full_[i * n_ + j] = full_[j * n_ + i] = rbf(x_.row(rows_[i]).data(), x_.row(rows_[j]).data(),
                                                               x_.cols, gamma_);
            }
        } else {
            buffers_[0].resize(n_);
            buffers_[1].resize(n_);
        }
    }

    // Row i of the kernel matrix; `slot` selects one of two scratch buffers.
    const double* row(std::size_t i, int slot) {
        if (!full_.empty()) return full_.data() + i * n_;
        auto& buf = buffers_[slot];
        for (std::size_t j = 0; j < n_; ++j) buf[j] = rbf(x_.row(rows_[i]).data(), x_.row(rows_[j]).data(), x_.cols, gamma_);
        return buf.data();
    }

private:
    const Matrix& x_;
    const std::vector<std::size_t>& rows_;
    double gamma_;
    std::size_t n_;
    std::vector<double> full_;
    std::vector<double> buffers_[2];
};

// C-SVC dual by sequential minimal optimization with second-order working-set
// selection. Returns alpha and rho; decision(x) = sum alpha_t y_t K(x_t, x) - rho.
std::pair<std::vector<double>, double> smo(const Matrix& x, const std::vector<std::size_t>& rows,
                                           const std::vector<double>& y, const BackendParams& p, double gamma) {
    const std::size_t n = rows.size();
    const double C = p.svm_c;
    constexpr double kTau = 1e-12;
    KernelRows K(x, rows, gamma);
    std::vector<double> alpha(n, 0.0), G(n, -1.0);
    auto up = [&](std::size_t t) { return (y[t] > 0 && alpha[t] < C) || (y[t] < 0 && alpha[t] > 0); };
    auto low = [&](std::size_t t) { return (y[t] > 0 && alpha[t] > 0) || (y[t] < 0 && alpha[t] < C); };

    for (std::size_t iter = 0; iter < p.svm_max_iterations; ++iter) {
        double g_max = -std::numeric_limits<double>::infinity();
        std::size_t i = n;
        for (std::size_t t = 0; t < n; ++t)
            if (up(t) && -y[t] * G[t] >= g_max) {
                g_max = -y[t] * G[t];
                i = t;
            }
        if (i == n) break;
        const double* Ki = K.row(i, 0);
        double g_max2 = -std::numeric_limits<double>::infinity();
        double best = std::numeric_limits<double>::infinity();
        std::size_t j = n;
        for (std::size_t t = 0; t < n; ++t) {
            if (!low(t)) continue;
            g_max2 = std::max(g_max2, y[t] * G[t]);
            const double b = g_max + y[t] * G[t];
            if (b <= 0) continue;
            double a = 2.0 - 2.0 * Ki[t];
            if (a <= 0) a = kTau;
            if (-(b * b) / a <= best) {
                best = -(b * b) / a;
                j = t;
            }
        }
        if (g_max + g_max2 < p.svm_tolerance || j == n) break;
        const double* Kj = K.row(j, 1);

        const double old_i = alpha[i], old_j = alpha[j];
        if (y[i] != y[j]) {
            double quad = 2.0 + 2.0 * y[i] * y[j] * Ki[j];
            if (quad <= 0) quad = kTau;
            const double delta = (-G[i] - G[j]) / quad;
            const double diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if (diff > 0) {
                if (alpha[j] < 0) {
                    alpha[j] = 0;
                    alpha[i] = diff;
                }
            } else if (alpha[i] < 0) {
                alpha[i] = 0;
                alpha[j] = -diff;
            }
            if (diff > 0) {
                if (alpha[i] > C) {
                    alpha[i] = C;
                    alpha[j] = C - diff;
                }
            } else if (alpha[j] > C) {
                alpha[j] = C;
                alpha[i] = C + diff;
            }
        } else {
            double quad = 2.0 - 2.0 * Ki[j];
            if (quad <= 0) quad = kTau;
            const double delta = (G[i] - G[j]) / quad;
            const double sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if (sum > C) {
                if (alpha[i] > C) {
                    alpha[i] = C;
                    alpha[j] = sum - C;
                }
            } else if (alpha[j] < 0) {
                alpha[j] = 0;
                alpha[i] = sum;
            }
            if (sum > C) {
                if (alpha[j] > C) {
                    alpha[j] = C;
                    alpha[i] = sum - C;
                }
            } else if (alpha[i] < 0) {
                alpha[i] = 0;
                alpha[j] = sum;
            }
        }
        const double di = alpha[i] - old_i, dj = alpha[j] - old_j;
        for (std::size_t t = 0; t < n; ++t) G[t] += y[t] * (y[i] * Ki[t] * di + y[j] * Kj[t] * dj);
    }

    double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
    std::size_t free = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double yg = y[t] * G[t];
        if (alpha[t] >= C) {
            if (y[t] < 0) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else if (alpha[t] <= 0) {
            if (y[t] > 0) ub = std::min(ub, yg);
            else lb = std::max(lb, yg);
        } else {
            ++free;
            sum_free += yg;
        }
    }
    const double rho = free > 0 ? sum_free / static_cast<double>(free) : 0.5 * (ub + lb);
    return {alpha, rho};
}

void fit_svm(BackendModel& m, const Matrix& x, std::span<const int> y) {
    if (m.classes.size() < 2) throw Error("SVM needs at least two classes");
    m.gamma = m.params.svm_gamma.value_or(rbf_gamma_scale(x));
    std::map<std::size_t, std::size_t> support_slot;
    std::vector<std::size_t> support_rows;
    for (std::size_t a = 0; a < m.classes.size(); ++a)
        for (std::size_t b = a + 1; b < m.classes.size(); ++b) {
            std::vector<std::size_t> rows;
            std::vector<double> sign;
            for (std::size_t r = 0; r < x.rows; ++r) {
                if (y[r] == m.classes[a]) {
                    rows.push_back(r);
                    sign.push_back(1.0);
                } else if (y[r] == m.classes[b]) {
                    rows.push_back(r);
                    sign.push_back(-1.0);
                }
            }
            auto [alpha, rho] = smo(x, rows, sign, m.params, m.gamma);
            SvmPair pair;
            pair.first = m.classes[a];
            pair.second = m.classes[b];
            pair.rho = rho;
            for (std::size_t t = 0; t < rows.size(); ++t) {
                if (alpha[t] <= 0.0) continue;
                auto [it, inserted] = support_slot.emplace(rows[t], support_rows.size());
                if (inserted) support_rows.push_back(rows[t]);
                pair.support.push_back(it->second);
                pair.coef.push_back(alpha[t] * sign[t]);
            }
            m.pairs.push_back(std::move(pair));
        }
    m.points = Matrix(support_rows.size(), x.cols);
    for (std::size_t s = 0; s < support_rows.size(); ++s) {
        std::copy(x.row(support_rows[s]).begin(), x.row(support_rows[s]).end(), m.points.row(s).begin());
        m.point_labels.push_back(y[support_rows[s]]);
    }
}

// ---------------------------------------------------------------- random forest

class TreeBuilder {
public:
    TreeBuilder(const Matrix& x, const std::vector<std::size_t>& cls, std::size_t n_classes, std::size_t max_depth,
                std::mt19937_64& rng)
        : x_(x), cls_(cls), n_classes_(n_classes), max_depth_(max_depth), rng_(rng) {
        features_.resize(x.cols);
        std::iota(features_.begin(), features_.end(), 0);
        per_node_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(x.cols))));
    }

    DecisionTree build(std::vector<std::size_t> samples) {
        tree_ = {};
        grow(samples, 0);
        return std::move(tree_);
    }

private:
    int add_leaf(int value) {
        tree_.feature.push_back(-1);
        tree_.threshold.push_back(0.0);
        tree_.left.push_back(-1);
        tree_.right.push_back(-1);
        tree_.value.push_back(value);
        return static_cast<int>(tree_.feature.size() - 1);
    }

    static double gini(const std::vector<std::size_t>& counts, std::size_t n) {
        double s = 1.0;
        for (auto c : counts) {
            const double f = static_cast<double>(c) / static_cast<double>(n);
            s -= f * f;
        }
        return s;
    }

    int grow(std::vector<std::size_t>& samples, std::size_t depth) {
        std::vector<std::size_t> counts(n_classes_, 0);
        for (auto s : samples) ++counts[cls_[s]];
        const int majority = static_cast<int>(argmax_votes(counts));
        const bool pure = counts[static_cast<std::size_t>(majority)] == samples.size();
        if (depth >= max_depth_ || pure || samples.size() < 2) return add_leaf(majority);

        const std::size_t n = samples.size();
        double best_impurity = std::numeric_limits<double>::infinity();
        int best_feature = -1;
        double best_threshold = 0.0;
        std::vector<std::pair<double, std::size_t>> column(n);
        std::size_t visited = 0;
        for (std::size_t f = 0; f < features_.size() && visited < per_node_; ++f) {
            std::uniform_int_distribution<std::size_t> pick(f, features_.size() - 1);
            std::swap(features_[f], features_[pick(rng_)]);
            const std::size_t feat = features_[f];
            for (std::size_t i = 0; i < n; ++i) column[i] = {x_(samples[i], feat), cls_[samples[i]]};
            std::sort(column.begin(), column.end());
            if (column.front().first == column.back().first) continue;
            ++visited;
            std::vector<std::size_t> left(n_classes_, 0), right = counts;
            for (std::size_t k = 0; k + 1 < n; ++k) {
                ++left[column[k].second];
                --right[column[k].second];
                if (column[k].first == column[k + 1].first) continue;
                const std::size_t nl = k + 1, nr = n - nl;
                const double impurity =
                    (static_cast<double>(nl) * gini(left, nl) + static_cast<double>(nr) * gini(right, nr)) /
                    static_cast<double>(n);
                if (impurity < best_impurity) {
                    best_impurity = impurity;
                    best_feature = static_cast<int>(feat);
                    double mid = 0.5 * (column[k].first + column[k + 1].first);
                    if (!(mid < column[k + 1].first)) mid = column[k].first;
                    best_threshold = mid;
                }
            }
        }
        if (best_feature < 0) return add_leaf(majority);

        std::vector<std::size_t> left_samples, right_samples;
        for (auto s : samples)
            (x_(s, static_cast<std::size_t>(best_feature)) <= best_threshold ? left_samples : right_samples).push_back(s);
        const int node = add_leaf(majority);
        tree_.feature[static_cast<std::size_t>(node)] = best_feature;
        tree_.threshold[static_cast<std::size_t>(node)] = best_threshold;
        const int l = grow(left_samples, depth + 1);
        const int r = grow(right_samples, depth + 1);
        tree_.left[static_cast<std::size_t>(node)] = l;
        tree_.right[static_cast<std::size_t>(node)] = r;
        return node;
    }

    const Matrix& x_;
    const std::vector<std::size_t>& cls_;
    std::size_t n_classes_, max_depth_, per_node_ = 1;
    std::mt19937_64& rng_;
    std::vector<std::size_t> features_;
    DecisionTree tree_;
};

void fit_forest(BackendModel& m, const Matrix& x, std::span<const int> y) {
    std::vector<std::size_t> cls(x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) cls[r] = class_slot(m.classes, y[r]);
    std::mt19937_64 rng(m.params.seed);
    TreeBuilder builder(x, cls, m.classes.size(), m.params.rf_max_depth, rng);
    std::uniform_int_distribution<std::size_t> draw(0, x.rows - 1);
    for (std::size_t t = 0; t < m.params.rf_trees; ++t) {
        std::vector<std::size_t> sample(x.rows);
        for (auto& s : sample) s = draw(rng);
        m.trees.push_back(builder.build(std::move(sample)));
    }
}

int tree_predict(const DecisionTree& tree, std::span<const double> q) {
    std::size_t node = 0;
    while (tree.feature[node] >= 0)
        node = static_cast<std::size_t>(q[static_cast<std::size_t>(tree.feature[node])] <= tree.threshold[node]
                                            ? tree.left[node]
                                            : tree.right[node]);
    return tree.value[node];
}

// ---------------------------------------------------------------- distance classifiers

double norm(std::span<const double> v) { return std::sqrt(kernels::dot(v.data(), v.data(), v.size())); }

double cosine(std::span<const double> q, double q_norm, std::span<const double> c) {
    const double c_norm = norm(c);
    if (c_norm == 0.0) return 0.0;
    return kernels::dot(q.data(), c.data(), q.size()) / (q_norm * c_norm);
}

int predict_one(const BackendModel& m, std::span<const double> q) {
    switch (m.kind) {
        case BackendKind::SVM: {
            std::vector<std::size_t> votes(m.classes.size(), 0);
            for (const auto& pair : m.pairs)
                ++votes[class_slot(m.classes, svm_decision(m, pair, q) > 0 ? pair.first : pair.second)];
            return m.classes[argmax_votes(votes)];
        }
        case BackendKind::KNN: {
            std::vector<std::pair<double, std::size_t>> d(m.points.rows);
            for (std::size_t i = 0; i < m.points.rows; ++i)
                d[i] = {kernels::squared_distance(q.data(), m.points.row(i).data(), m.dim), i};
            const std::size_t k = std::min(m.params.knn_k, d.size());
            std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
            std::vector<std::size_t> votes(m.classes.size(), 0);
            for (std::size_t i = 0; i < k; ++i) ++votes[class_slot(m.classes, m.point_labels[d[i].second])];
            return m.classes[argmax_votes(votes)];
        }
        case BackendKind::RF: {
            std::vector<std::size_t> votes(m.classes.size(), 0);
            for (const auto& tree : m.trees) ++votes[static_cast<std::size_t>(tree_predict(tree, q))];
            return m.classes[argmax_votes(votes)];
        }
        case BackendKind::EUCLIDEAN: {
            const Matrix& refs = m.params.nearest_neighbor ? m.points : m.centroids;
            double best = std::numeric_limits<double>::infinity();
            int label = m.classes.front();
            for (std::size_t i = 0; i < refs.rows; ++i) {
                const double d = kernels::squared_distance(q.data(), refs.row(i).data(), m.dim);
                const int l = m.params.nearest_neighbor ? m.point_labels[i] : m.classes[i];
                if (d < best || (d == best && l < label)) {
                    best = d;
                    label = l;
                }
            }
            return label;
        }
        case BackendKind::COSINE: {
            const double q_norm = norm(q);
            if (q_norm == 0.0) throw NumericError("cosine similarity of a zero-norm query");
            const Matrix& refs = m.params.nearest_neighbor ? m.points : m.centroids;
            double best = -std::numeric_limits<double>::infinity();
            int label = m.classes.front();
            for (std::size_t i = 0; i < refs.rows; ++i) {
                const double s = cosine(q, q_norm, refs.row(i));
                const int l = m.params.nearest_neighbor ? m.point_labels[i] : m.classes[i];
                if (s > best || (s == best && l < label)) {
                    best = s;
                    label = l;
                }
            }
            return label;
        }
    }
    return m.classes.front();
}

NamedArray f64(const std::string& name, std::vector<std::uint64_t> shape, std::vector<double> values) {
    return {name, std::move(shape), std::move(values), ArrayDType::F64};
}

template <typename T>
std::vector<double> as_doubles(const std::vector<T>& v) {
    return {v.begin(), v.end()};
}

template <typename T>
std::vector<T> as_ints(const std::vector<double>& v) {
    std::vector<T> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<T>(v[i]);
    return out;
}

Matrix matrix_from(const NamedArray& a) {
    if (a.shape.size() != 2) throw FormatError("array '" + a.name + "' is not two-dimensional");
    Matrix m(a.shape[0], a.shape[1]);
    m.data = a.values;
    return m;
}

}  // namespace

std::string_view to_string(BackendKind k) {
    switch (k) {
        case BackendKind::SVM: return "SVM";
        case BackendKind::KNN: return "KNN";
        case BackendKind::RF: return "RF";
        case BackendKind::EUCLIDEAN: return "EUCLIDEAN";
        case BackendKind::COSINE: return "COSINE";
    }
    return "?";
}

BackendKind parse_backend(std::string_view name) {
    std::string s(name);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
    for (auto k : kAllBackends)
        if (s == to_string(k)) return k;
    throw ConfigError("unknown backend '" + std::string(name) + "' (SVM|KNN|RF|EUCLIDEAN|COSINE)");
}

nlohmann::json to_json(const BackendParams& p) {
    nlohmann::json j = {{"svm_c", p.svm_c},
                        {"svm_tolerance", p.svm_tolerance},
                        {"svm_max_iterations", p.svm_max_iterations},
                        {"knn_k", p.knn_k},
                        {"rf_trees", p.rf_trees},
                        {"rf_max_depth", p.rf_max_depth},
                        {"seed", p.seed},
                        {"nearest_neighbor", p.nearest_neighbor}};
    j["svm_gamma"] = p.svm_gamma ? nlohmann::json(*p.svm_gamma) : nlohmann::json("scale");
    return j;
}

BackendParams backend_params_from_json(const nlohmann::json& j) {
    BackendParams p;
    p.svm_c = j.value("svm_c", p.svm_c);
    p.svm_tolerance = j.value("svm_tolerance", p.svm_tolerance);
    p.svm_max_iterations = j.value("svm_max_iterations", p.svm_max_iterations);
    p.knn_k = j.value("knn_k", p.knn_k);
    p.rf_trees = j.value("rf_trees", p.rf_trees);
    p.rf_max_depth = j.value("rf_max_depth", p.rf_max_depth);
    p.seed = j.value("seed", p.seed);
    p.nearest_neighbor = j.value("nearest_neighbor", p.nearest_neighbor);
    if (j.contains("svm_gamma") && j["svm_gamma"].is_number()) p.svm_gamma = j["svm_gamma"].get<double>();
    if (!(p.svm_c > 0.0) || p.knn_k == 0 || p.rf_trees == 0) throw ConfigError("invalid back-end parameters");
    return p;
}

double rbf_gamma_scale(const Matrix& x) {
    if (x.data.empty()) return 1.0;
    double mean = 0.0;
    for (double v : x.data) mean += v;
    mean /= static_cast<double>(x.data.size());
    double var = 0.0;
    for (double v : x.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.data.size());
    return var > 0.0 ? 1.0 / (static_cast<double>(x.cols) * var) : 1.0;
}

double svm_decision(const BackendModel& m, const SvmPair& pair, std::span<const double> x) {
    double s = 0.0;
    for (std::size_t t = 0; t < pair.support.size(); ++t)
        s += pair.coef[t] * rbf(m.points.row(pair.support[t]).data(), x.data(), m.dim, m.gamma);
    return s - pair.rho;
}

BackendModel fit_backend(BackendKind kind, const Matrix& x, std::span<const int> y, const BackendParams& params) {
    if (x.rows == 0) throw ShapeError("cannot fit a back-end on zero samples");
    if (y.size() != x.rows) throw ShapeError("label count does not match sample count");
    for (double v : x.data)
        if (!std::isfinite(v)) throw NumericError("non-finite value in back-end training data");

    BackendModel m;
    m.kind = kind;
    m.params = params;
    m.dim = x.cols;
    m.classes.assign(y.begin(), y.end());
    std::sort(m.classes.begin(), m.classes.end());
    m.classes.erase(std::unique(m.classes.begin(), m.classes.end()), m.classes.end());

    switch (kind) {
        case BackendKind::SVM: fit_svm(m, x, y); break;
        case BackendKind::RF: fit_forest(m, x, y); break;
        case BackendKind::KNN:
            m.points = x;
            m.point_labels.assign(y.begin(), y.end());
            break;
        case BackendKind::EUCLIDEAN:
        case BackendKind::COSINE: {
            if (params.nearest_neighbor) {
                m.points = x;
                m.point_labels.assign(y.begin(), y.end());
                break;
            }
            m.centroids = Matrix(m.classes.size(), x.cols);
            std::vector<std::size_t> counts(m.classes.size(), 0);
            for (std::size_t r = 0; r < x.rows; ++r) {
                const std::size_t c = class_slot(m.classes, y[r]);
                ++counts[c];
                kernels::axpy(1.0, x.row(r).data(), m.centroids.row(c).data(), x.cols);
            }
            for (std::size_t c = 0; c < counts.size(); ++c)
                for (auto& v : m.centroids.row(c)) v /= static_cast<double>(counts[c]);
            break;
        }
    }
    return m;
}

std::vector<int> predict(const BackendModel& m, const Matrix& x) {
    if (x.cols != m.dim && x.rows > 0)
        throw ShapeError("back-end fitted on " + std::to_string(m.dim) + " dimensions, got " + std::to_string(x.cols));
    std::vector<int> out(x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) out[r] = predict_one(m, x.row(r));
    return out;
}

void save_backend(const BackendModel& m, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<NamedArray> arrays;
    arrays.push_back(f64("points", {m.points.rows, m.points.cols}, m.points.data));
    arrays.push_back(f64("point_labels", {m.point_labels.size()}, as_doubles(m.point_labels)));
    arrays.push_back(f64("centroids", {m.centroids.rows, m.centroids.cols}, m.centroids.data));

    std::vector<double> pair_classes, rho, offsets{0.0}, support, coef;
    for (const auto& p : m.pairs) {
        pair_classes.push_back(p.first);
        pair_classes.push_back(p.second);
        rho.push_back(p.rho);
        support.insert(support.end(), p.support.begin(), p.support.end());
        coef.insert(coef.end(), p.coef.begin(), p.coef.end());
        offsets.push_back(static_cast<double>(support.size()));
    }
    arrays.push_back(f64("svm.pair_classes", {m.pairs.size(), 2}, pair_classes));
    arrays.push_back(f64("svm.rho", {rho.size()}, rho));
    arrays.push_back(f64("svm.offsets", {offsets.size()}, offsets));
    arrays.push_back(f64("svm.support", {support.size()}, support));
    arrays.push_back(f64("svm.coef", {coef.size()}, coef));

    std::vector<double> tree_offsets{0.0}, feature, threshold, left, right, value;
    for (const auto& t : m.trees) {
        feature.insert(feature.end(), t.feature.begin(), t.feature.end());
        threshold.insert(threshold.end(), t.threshold.begin(), t.threshold.end());
        left.insert(left.end(), t.left.begin(), t.left.end());
        right.insert(right.end(), t.right.begin(), t.right.end());
        value.insert(value.end(), t.value.begin(), t.value.end());
        tree_offsets.push_back(static_cast<double>(feature.size()));
    }
    arrays.push_back(f64("rf.offsets", {tree_offsets.size()}, tree_offsets));
    arrays.push_back(f64("rf.feature", {feature.size()}, feature));
    arrays.push_back(f64("rf.threshold", {threshold.size()}, threshold));
    arrays.push_back(f64("rf.left", {left.size()}, left));
    arrays.push_back(f64("rf.right", {right.size()}, right));
    arrays.push_back(f64("rf.value", {value.size()}, value));
    write_archive(dir / "backend.bin", arrays);

    nlohmann::json manifest = {{"format", kBackendFormat},
                               {"kind", std::string(to_string(m.kind))},
                               {"dim", m.dim},
                               {"classes", m.classes},
                               {"gamma", m.gamma},
                               {"params", to_json(m.params)}};
    std::ofstream out(dir / "backend.json");
    if (!out) throw Error("cannot write " + (dir / "backend.json").string());
    out << manifest.dump(2) << '\n';
}

BackendModel load_backend(const std::filesystem::path& dir) {
    std::ifstream in(dir / "backend.json");
    if (!in) throw MissingDataError("no back-end manifest at " + (dir / "backend.json").string());
    BackendModel m;
    try {
        nlohmann::json j;
        in >> j;
        if (j.at("format").get<std::string>() != kBackendFormat) throw FormatError("unsupported back-end format");
        m.kind = parse_backend(j.at("kind").get<std::string>());
        m.dim = j.at("dim").get<std::size_t>();
        m.classes = j.at("classes").get<std::vector<int>>();
        m.gamma = j.at("gamma").get<double>();
        m.params = backend_params_from_json(j.at("params"));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad back-end manifest: ") + e.what());
    }
    const auto arrays = read_archive(dir / "backend.bin");
    auto get = [&](const char* name) -> const std::vector<double>& { return find_array(arrays, name).values; };
    m.points = matrix_from(find_array(arrays, "points"));
    m.point_labels = as_ints<int>(get("point_labels"));
    m.centroids = matrix_from(find_array(arrays, "centroids"));

    const auto pair_classes = as_ints<int>(get("svm.pair_classes"));
    const auto& rho = get("svm.rho");
    const auto offsets = as_ints<std::size_t>(get("svm.offsets"));
    const auto support = as_ints<std::size_t>(get("svm.support"));
    const auto& coef = get("svm.coef");
    for (std::size_t k = 0; k < rho.size(); ++k) {
        SvmPair p;
        p.first = pair_classes.at(2 * k);
        p.second = pair_classes.at(2 * k + 1);
        p.rho = rho[k];
        p.support.assign(support.begin() + static_cast<std::ptrdiff_t>(offsets.at(k)),
                         support.begin() + static_cast<std::ptrdiff_t>(offsets.at(k + 1)));
        p.coef.assign(coef.begin() + static_cast<std::ptrdiff_t>(offsets[k]),
                      coef.begin() + static_cast<std::ptrdiff_t>(offsets[k + 1]));
        m.pairs.push_back(std::move(p));
    }

    const auto tree_offsets = as_ints<std::size_t>(get("rf.offsets"));
    const auto feature = as_ints<int>(get("rf.feature"));
    const auto& threshold = get("rf.threshold");
    const auto left = as_ints<int>(get("rf.left"));
    const auto right = as_ints<int>(get("rf.right"));
    const auto value = as_ints<int>(get("rf.value"));
    for (std::size_t t = 0; t + 1 < tree_offsets.size(); ++t) {
        const auto b = static_cast<std::ptrdiff_t>(tree_offsets[t]), e = static_cast<std::ptrdiff_t>(tree_offsets[t + 1]);
        DecisionTree tree;
        tree.feature.assign(feature.begin() + b, feature.begin() + e);
        tree.threshold.assign(threshold.begin() + b, threshold.begin() + e);
        tree.left.assign(left.begin() + b, left.begin() + e);
        tree.right.assign(right.begin() + b, right.begin() + e);
        tree.value.assign(value.begin() + b, value.begin() + e);
        m.trees.push_back(std::move(tree));
    }
    return m;
}

}  // namespace mbfd
