#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "mbfd/backend.hpp"
#include "mbfd/error.hpp"
#include "oracles.hpp"

using namespace mbfd;

namespace {

// From tests/data/make_svm_reference.py (scikit-learn 1.7.2, SVC defaults).
const std::vector<double> kSvmX = {
    0.001,  0.209,  -0.192, -0.623, -0.318, -0.694, 0.042, 0.938,  -0.345, -0.434, 0.343,  0.250,
    0.074,  -0.651, -0.020, 0.487,  -0.941, -0.320, -1.331, -0.903, -1.289, -0.165, -0.887, 0.190,
    1.610,  0.369,  -0.262, 0.123,  1.466,  0.579,  0.429,  0.166,  0.815,  -0.066, 2.243,  -0.065,
    1.477,  1.119,  1.091,  0.422,  1.577,  0.545,  0.642,  0.553,  2.451,  -0.583, 2.102,  0.584,
    0.051,  3.200,  1.034,  0.960,  0.552,  2.204,  0.368,  2.278,  0.453,  2.267,  1.507,  1.327,
    0.642,  1.476,  0.589,  0.969,  0.094,  1.663,  1.129,  2.602,  -0.426, 1.244,  0.953,  0.405};
const std::vector<int> kSvmY = {0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1,
                                1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2, 2, 2, 2, 2, 2, 2};
const std::vector<double> kSvmQ = {1.480,  -0.908, 2.303,  2.752, 2.568, 1.064,  -0.845, -0.634, 2.676,  0.985,
                                   -0.688, 2.478,  1.387,  1.064, 0.193, 0.349,  -0.422, -1.329, 2.443,  0.605,
                                   0.964,  -0.050, 1.881,  -1.387, 0.175, -1.363, -0.947, 2.852,  1.460,  0.427,
                                   0.857,  2.428,  0.049,  1.156,  1.577, 0.099,  0.836,  1.944,  2.591,  -0.820,
                                   2.700,  -1.477, 1.888,  2.147,  -0.885, 0.385, 2.169,  -1.436};
const std::vector<int> kSvmPred = {1, 2, 1, 0, 1, 2, 1, 0, 0, 1, 1, 1, 0, 2, 1, 2, 2, 1, 2, 1, 1, 2, 0, 1};
const double kSvmGamma = 0.5390917329696862;
// Pairs (0,1), (0,2), (1,2) per query; positive favours the first class.
const std::vector<double> kSvmDecision = {
    -0.736899093, -0.222362318, 0.932113608,  -0.028668268, -0.425382875, -0.249248326, -0.604766153, -0.551276266,
    0.485566054,  1.238949654,  1.265228783,  0.651209561,  -0.563245799, -0.499282428, 0.516369037,  0.316988971,
    -0.930530063, -0.917993967, -0.996300663, -1.149759823, 0.152547535,  0.665977907,  0.665556742,  0.688310982,
    0.956262793,  0.722033537,  0.443460477,  -0.911146637, -0.611795027, 0.876908657,  -0.770090323, -0.105904476,
    1.293578309,  -0.519544958, -0.241456495, 0.573021064,  0.648956966,  0.420882911,  0.498673439,  0.178579218,
    -0.737887235, -0.625566160, -1.336467113, -0.859481837, 1.098785336,  0.008632885,  -1.165613983, -1.200763433,
    0.858472265,  -0.378592696, -0.756954799, -1.387449573, -0.691380411, 1.349037402,  -0.066044712, -1.266627143,
    -1.211682050, -0.842744089, -0.305512127, 0.827947603,  -0.447888218, -0.241963084, 0.454118277,  -0.303867500,
    -0.745688969, -0.470320968, 1.211069303,  0.854274701,  0.275142541,  -0.525283056, -0.250072797, 0.540236219};

Matrix rows_of(const std::vector<double>& v, std::size_t cols) {
    Matrix m(v.size() / cols, cols);
    m.data = v;
    return m;
}

struct Blobs {
    Matrix x;
    std::vector<int> y;
};

Blobs blobs(std::mt19937_64& rng, std::size_t per_class, std::size_t classes, std::size_t dim, double spread) {
    std::normal_distribution<double> g(0.0, spread);
    Blobs b;
    b.x = Matrix(per_class * classes, dim);
    for (std::size_t i = 0; i < b.x.rows; ++i) {
        const int c = static_cast<int>(i % classes);
        for (std::size_t d = 0; d < dim; ++d) b.x(i, d) = g(rng) + (d % classes == static_cast<std::size_t>(c) ? 3.0 : 0.0);
        b.y.push_back(c);
    }
    return b;
}

double hit_rate(const std::vector<int>& pred, const std::vector<int>& truth) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == truth[i];
    return static_cast<double>(hit) / static_cast<double>(pred.size());
}

std::filesystem::path scratch(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("mbfd_test_backend_" + name);
    std::filesystem::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("SVM agrees with the scikit-learn reference") {
    const auto x = rows_of(kSvmX, 2), q = rows_of(kSvmQ, 2);
    CHECK(rbf_gamma_scale(x) == doctest::Approx(kSvmGamma).epsilon(1e-12));
    const auto m = fit_backend(BackendKind::SVM, x, kSvmY);
    CHECK(m.gamma == doctest::Approx(kSvmGamma).epsilon(1e-12));
    CHECK(predict(m, q) == kSvmPred);
    REQUIRE(m.pairs.size() == 3);
    for (std::size_t r = 0; r < q.rows; ++r)
        for (std::size_t k = 0; k < 3; ++k) {
            CAPTURE(r);
            CAPTURE(k);
            CHECK(svm_decision(m, m.pairs[k], q.row(r)) == doctest::Approx(kSvmDecision[r * 3 + k]).epsilon(2e-3));
        }
    // only support vectors are stored
    CHECK(m.points.rows < x.rows);
    for (const auto& p : m.pairs)
        for (double c : p.coef) CHECK(std::fabs(c) <= 1.0 + 1e-12);
}

TEST_CASE("SVM dual constraint holds per pair") {
    std::mt19937_64 rng(71);
    const auto b = blobs(rng, 15, 3, 4, 1.5);
    BackendParams p;
    p.svm_c = 2.0;
    const auto m = fit_backend(BackendKind::SVM, b.x, b.y, p);
    for (const auto& pair : m.pairs) {
        double sum = 0;
        for (double c : pair.coef) {
            sum += c;
            CHECK(std::fabs(c) <= 2.0 + 1e-12);
        }
        CHECK(std::fabs(sum) < 1e-9);
    }
}

TEST_CASE("kNN equals brute-force majority vote") {
    std::mt19937_64 rng(72);
    for (int trial = 0; trial < 20; ++trial) {
        const auto train = blobs(rng, 10, 3, 5, 2.0);
        const auto test = blobs(rng, 5, 3, 5, 2.0);
        BackendParams p;
        p.knn_k = 1 + trial % 7;
        const auto pred = predict(fit_backend(BackendKind::KNN, train.x, train.y, p), test.x);
        for (std::size_t r = 0; r < test.x.rows; ++r) {
            std::vector<std::pair<long double, std::size_t>> d;
            for (std::size_t i = 0; i < train.x.rows; ++i)
                d.emplace_back(oracle::squared_distance(test.x.row(r), train.x.row(i)), i);
            std::sort(d.begin(), d.end());
            std::vector<int> votes(3, 0);
            for (std::size_t i = 0; i < p.knn_k; ++i) ++votes[train.y[d[i].second]];
            const int expected = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
            CHECK(pred[r] == expected);
        }
    }
}

TEST_CASE("random forest fits separable data and is seed-deterministic") {
    std::mt19937_64 rng(73);
    const auto train = blobs(rng, 30, 3, 6, 0.8);
    const auto test = blobs(rng, 20, 3, 6, 0.8);
    BackendParams p;
    p.rf_trees = 25;
    p.seed = 4;
    const auto a = fit_backend(BackendKind::RF, train.x, train.y, p);
    const auto b = fit_backend(BackendKind::RF, train.x, train.y, p);
    CHECK(a == b);
    CHECK(a.trees.size() == 25);
    CHECK(hit_rate(predict(a, train.x), train.y) > 0.95);
    CHECK(hit_rate(predict(a, test.x), test.y) > 0.9);
    p.seed = 5;
    CHECK_FALSE(fit_backend(BackendKind::RF, train.x, train.y, p) == a);
    for (const auto& t : a.trees) {
        REQUIRE(t.feature.size() == t.threshold.size());
        for (std::size_t n = 0; n < t.feature.size(); ++n) {
            if (t.feature[n] < 0) {
                CHECK(t.value[n] >= 0);
                CHECK(t.value[n] < 3);
            } else {
                CHECK(t.feature[n] < 6);
                CHECK(t.left[n] > static_cast<int>(n));
                CHECK(t.right[n] > static_cast<int>(n));
            }
        }
    }
}

TEST_CASE("single-class training") {
    Matrix x(3, 2, 1.0);
    x(1, 0) = 2.0;
    const std::vector<int> y = {4, 4, 4};
    for (BackendKind k : kAllBackends) {
        if (k == BackendKind::SVM) CHECK_THROWS_AS(fit_backend(k, x, y), Error);
        else CHECK(predict(fit_backend(k, x, y), x) == y);
    }
}

TEST_CASE("nearest-centroid rules by hand") {
    Matrix x(4, 2);
    x.data = {0, 0, 2, 0, 10, 10, 10, 12};
    const std::vector<int> y = {3, 3, 8, 8};
    const auto e = fit_backend(BackendKind::EUCLIDEAN, x, y);
    CHECK(e.centroids.data == std::vector<double>{1, 0, 10, 11});
    Matrix q(3, 2);
    q.data = {1.2, 0.5, 6, 6, 5.5, 5.5};
    CHECK(predict(e, q) == std::vector<int>{3, 8, 3});

    Matrix cx(4, 2);
    cx.data = {1, 0, 3, 0.2, 0, 1, 0.1, 5};
    const auto c = fit_backend(BackendKind::COSINE, cx, std::vector<int>{0, 0, 1, 1});
    Matrix cq(2, 2);
    cq.data = {100, 1, 0.5, 9};
    CHECK(predict(c, cq) == std::vector<int>{0, 1});
    Matrix zero(1, 2, 0.0);
    CHECK_THROWS_AS(predict(c, zero), NumericError);

    BackendParams nn;
    nn.nearest_neighbor = true;
    Matrix spread(4, 2);
    spread.data = {0, 0, 2, 0, 10, 10, 10, 30};
    Matrix nq(1, 2);
    nq.data = {8, 8};
    // centroids (1, 0) and (10, 20) favour class 3; the closest single point is (10, 10)
    CHECK(predict(fit_backend(BackendKind::EUCLIDEAN, spread, y), nq) == std::vector<int>{3});
    CHECK(predict(fit_backend(BackendKind::EUCLIDEAN, spread, y, nn), nq) == std::vector<int>{8});
}

TEST_CASE("gamma scale") {
    Matrix x(2, 2);
    x.data = {0, 0, 2, 2};
    CHECK(rbf_gamma_scale(x) == doctest::Approx(1.0 / (2 * 1.0)));
    CHECK(rbf_gamma_scale(Matrix(3, 3, 5.0)) == 1.0);
}

TEST_CASE("save and load reproduce predictions exactly") {
    std::mt19937_64 rng(74);
    const auto train = blobs(rng, 12, 3, 4, 1.5);
    const auto test = blobs(rng, 8, 3, 4, 1.5);
    for (BackendKind k : kAllBackends) {
        CAPTURE(to_string(k));
        BackendParams p;
        p.rf_trees = 10;
        const auto m = fit_backend(k, train.x, train.y, p);
        const auto dir = scratch(std::string(to_string(k)));
        save_backend(m, dir);
        CHECK(std::filesystem::exists(dir / "backend.json"));
        CHECK(std::filesystem::exists(dir / "backend.bin"));
        const auto back = load_backend(dir);
        CHECK(back == m);
        CHECK(predict(back, test.x) == predict(m, test.x));
        std::filesystem::remove_all(dir);
    }
}

TEST_CASE("names, params and errors") {
    for (BackendKind k : kAllBackends) CHECK(parse_backend(to_string(k)) == k);
    CHECK_THROWS_AS(parse_backend("LDA"), ConfigError);
    BackendParams p;
    p.svm_gamma = 0.25;
    p.knn_k = 3;
    p.nearest_neighbor = true;
    CHECK(backend_params_from_json(nlohmann::json::parse(to_json(p).dump())) == p);
    CHECK(backend_params_from_json(nlohmann::json::object()) == BackendParams{});

    CHECK_THROWS_AS(fit_backend(BackendKind::KNN, Matrix{}, std::vector<int>{}), ShapeError);
    CHECK_THROWS_AS(fit_backend(BackendKind::KNN, Matrix(2, 2), std::vector<int>{1}), ShapeError);
    Matrix bad(2, 1);
    bad.data = {1.0, NAN};
    CHECK_THROWS_AS(fit_backend(BackendKind::SVM, bad, std::vector<int>{0, 1}), NumericError);
    const auto m = fit_backend(BackendKind::EUCLIDEAN, Matrix(2, 3, 1.0), std::vector<int>{0, 1});
    CHECK_THROWS_AS(predict(m, Matrix(1, 2)), ShapeError);
    CHECK_THROWS(load_backend(scratch("missing")));
}
