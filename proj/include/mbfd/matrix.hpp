#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mbfd/error.hpp"

namespace mbfd {

// Dense row-major matrix of doubles; rows are samples throughout the library.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    bool empty() const { return rows == 0 || cols == 0; }

    void append_row(std::span<const double> values) {
        if (rows == 0 && cols == 0) cols = values.size();
        if (values.size() != cols) throw ShapeError("append_row: row width does not match matrix");
        data.insert(data.end(), values.begin(), values.end());
        ++rows;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

}  // namespace mbfd
