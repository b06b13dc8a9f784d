#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "mbfd/error.hpp"
#include "mbfd/preprocess.hpp"
#include "oracles.hpp"

using namespace mbfd;
using namespace mbfd::preprocess;

namespace {

Matrix column(std::initializer_list<double> v) {
    Matrix m(v.size(), 1);
    std::copy(v.begin(), v.end(), m.data.begin());
    return m;
}

// Random matrix with a constant column and a column whose IQR is zero.
Matrix degenerate_matrix(std::mt19937_64& rng, std::size_t rows) {
    auto m = oracle::random_matrix(rng, rows, 5, 3.0);
    for (std::size_t r = 0; r < rows; ++r) {
        m(r, 1) = 4.25;
        m(r, 2) = r == 0 ? 10.0 : 1.0;
    }
    return m;
}

}  // namespace

TEST_CASE("worked examples") {
    CHECK(apply(fit(Method::MAS, column({2, -4})), column({2, -4})).data == std::vector<double>{0.5, -1.0});
    const auto ss = fit(Method::SS, column({1, 3}));
    CHECK(ss.center[0] == 2.0);
    CHECK(ss.scale[0] == 1.0);
    CHECK(apply(ss, column({1, 3})).data == std::vector<double>{-1.0, 1.0});
    Matrix row(1, 2);
    row.data = {3, 4};
    const auto n = apply(fit(Method::N, row), row);
    CHECK(n(0, 0) == doctest::Approx(0.6));
    CHECK(n(0, 1) == doctest::Approx(0.8));
    const auto qt = fit(Method::QT, column({0, 1, 2, 3}));
    CHECK(apply(qt, column({1.5}))(0, 0) == doctest::Approx(0.5));
    CHECK(apply(qt, column({-7, 99})).data == std::vector<double>{0.0, 1.0});
}

TEST_CASE("robust scaler uses linear-interpolated quartiles") {
    // numpy.percentile([1,2,3,4,100], [25,50,75]) -> 2, 3, 4
    const auto t = fit(Method::RS, column({4, 1, 100, 3, 2}));
    CHECK(t.center[0] == 3.0);
    CHECK(t.scale[0] == 2.0);
    CHECK(quantile_linear({1, 2, 3, 4}, 0.25) == doctest::Approx(1.75));
}

TEST_CASE("postconditions on random matrices with degenerate columns") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        const auto x = degenerate_matrix(rng, 8 + rng() % 40);
        for (Method m : kAllMethods) {
            CAPTURE(to_string(m));
            const auto t = fit(m, x);
            const auto y = apply(t, x);
            REQUIRE(y.rows == x.rows);
            for (double v : y.data) REQUIRE(std::isfinite(v));
            if (m != Method::N) CHECK(t.columns == x.cols);
            switch (m) {
                case Method::MAS:
                    for (double v : y.data) CHECK(std::fabs(v) <= 1.0 + 1e-12);
                    break;
                case Method::SS:
                case Method::PT:
                    for (std::size_t c = 0; c < y.cols; ++c) {
                        std::vector<double> col;
                        for (std::size_t r = 0; r < y.rows; ++r) col.push_back(y(r, c));
                        const double mu = static_cast<double>(oracle::mean(col));
                        const double var = static_cast<double>(oracle::central_moment(col, 2));
                        CHECK(std::fabs(mu) < 1e-9);
                        if (c == 1) CHECK(var == 0.0);
                        else if (m == Method::SS) CHECK(var == doctest::Approx(1.0).epsilon(1e-9));
                    }
                    break;
                case Method::RS:
                    for (std::size_t r = 0; r < y.rows; ++r) {
                        CHECK(y(r, 1) == 0.0);
                        CHECK(y(r, 2) == 0.0);
                    }
                    break;
                case Method::N:
                    for (std::size_t r = 0; r < y.rows; ++r) {
                        double s = 0;
                        for (double v : y.row(r)) s += v * v;
                        CHECK(std::sqrt(s) == doctest::Approx(1.0).epsilon(1e-12));
                    }
                    break;
                case Method::QT:
                    for (double v : y.data) CHECK((v >= 0.0 && v <= 1.0));
                    break;
            }
        }
    }
}

TEST_CASE("zero rows and zero columns pass through") {
    Matrix z(2, 2, 0.0);
    CHECK(apply(fit(Method::N, z), z) == z);
    CHECK(apply(fit(Method::MAS, z), z) == z);
}

TEST_CASE("MAS and N are idempotent") {
    std::mt19937_64 rng(32);
    const auto x = oracle::random_matrix(rng, 20, 4);
    for (Method m : {Method::MAS, Method::N}) {
        const auto once = apply(fit(m, x), x);
        const auto twice = apply(fit(m, once), once);
        for (std::size_t i = 0; i < once.data.size(); ++i) CHECK(twice.data[i] == doctest::Approx(once.data[i]).epsilon(1e-12));
    }
}

TEST_CASE("held-out rows are transformed independently of each other") {
    std::mt19937_64 rng(33);
    const auto train = oracle::random_matrix(rng, 30, 3);
    auto test = oracle::random_matrix(rng, 10, 3);
    for (Method m : kAllMethods) {
        const auto t = fit(m, train);
        const auto a = apply(t, test);
        Matrix flipped(test.rows, test.cols);
        for (std::size_t r = 0; r < test.rows; ++r)
            std::copy_n(test.row(test.rows - 1 - r).begin(), test.cols, flipped.row(r).begin());
        const auto b = apply(t, flipped);
        for (std::size_t r = 0; r < test.rows; ++r)
            for (std::size_t c = 0; c < test.cols; ++c) CHECK(a(r, c) == b(test.rows - 1 - r, c));
    }
}

TEST_CASE("Yeo-Johnson transform and likelihood") {
    CHECK(yeo_johnson(2.0, 1.0) == doctest::Approx(2.0));
    CHECK(yeo_johnson(-2.0, 1.0) == doctest::Approx(-2.0));
    CHECK(yeo_johnson(3.0, 0.0) == doctest::Approx(std::log1p(3.0)));
    CHECK(yeo_johnson(-3.0, 2.0) == doctest::Approx(-std::log1p(3.0)));
    CHECK(yeo_johnson(1.0, 0.5) == doctest::Approx((std::pow(2.0, 0.5) - 1.0) / 0.5));

    // The fitted exponent is a maximum of the profile likelihood on a grid.
    std::mt19937_64 rng(34);
    std::lognormal_distribution<double> skewed(0.0, 0.8);
    std::vector<double> col(200);
    for (auto& v : col) v = skewed(rng);
    const double lam = fit_yeo_johnson_lambda(col);
    const double best = yeo_johnson_log_likelihood(col, lam);
    for (double l = -5.0; l <= 5.0; l += 0.01) CHECK(yeo_johnson_log_likelihood(col, l) <= best + 1e-6);
    CHECK(lam < 1.0);
}

TEST_CASE("JSON round trip is bit exact") {
    std::mt19937_64 rng(35);
    const auto x = degenerate_matrix(rng, 25);
    for (Method m : kAllMethods) {
        const auto t = fit(m, x);
        const auto back = from_json(nlohmann::json::parse(to_json(t).dump()));
        CHECK(back == t);
        CHECK(apply(back, x) == apply(t, x));
    }
}

TEST_CASE("errors") {
    CHECK_THROWS(fit(Method::SS, Matrix{}));
    Matrix bad(2, 1);
    bad.data = {1.0, std::numeric_limits<double>::quiet_NaN()};
    CHECK_THROWS(fit(Method::SS, bad));
    const auto t = fit(Method::SS, Matrix(3, 2, 1.0));
    CHECK_THROWS_AS(apply(t, Matrix(3, 3, 1.0)), ShapeError);
    CHECK_THROWS_AS(parse_method("minmax"), ConfigError);
}
