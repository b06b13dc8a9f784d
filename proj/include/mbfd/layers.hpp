#pragma once

// Layers with hand-written backward passes. Activations are row-major:
// convolutional stacks use [batch][channel][time], attention uses
// [time][model_dim] per sample, dense layers use [batch][features].
// forward() is const; batch-norm running statistics are committed separately
// with BatchNorm::commit so eval-mode inference can share a model.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace mbfd::nn {

enum class Mode { Train, Eval };

struct Param {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> value;
    std::vector<double> grad;

    Param() = default;
    Param(std::string n, std::vector<std::size_t> s);
    std::size_t size() const { return value.size(); }
    void zero_grad();
};

// U(-sqrt(6 / fan_in), +sqrt(6 / fan_in)).
void init_fan_in_uniform(Param& p, std::size_t fan_in, std::mt19937_64& rng);

struct Dense {
    std::size_t in = 0, out = 0;
    Param weight;  // out x in
    Param bias;    // out

    Dense() = default;
    Dense(std::string name, std::size_t in, std::size_t out, std::mt19937_64& rng);

    void forward(const double* x, std::size_t batch, double* y) const;
    // Accumulates parameter gradients; writes d(input) into dx when non-null.
    void backward(const double* x, const double* dy, std::size_t batch, double* dx);
};

// Stride-1 'same' convolution: left pad (k-1)/2, right pad k-1-(k-1)/2.
struct Conv1d {
    std::size_t in = 0, out = 0, kernel = 0;
    Param weight;  // out x in x kernel
    Param bias;    // out

    Conv1d() = default;
    Conv1d(std::string name, std::size_t in, std::size_t out, std::size_t kernel, std::mt19937_64& rng);

    std::size_t pad_left() const { return (kernel - 1) / 2; }
    // One sample: x is in x T, y is out x T.
    void forward(const double* x, std::size_t T, double* y) const;
    void backward(const double* x, const double* dy, std::size_t T, double* dx);
};

struct BatchNorm {
    std::size_t channels = 0;
    double momentum = 0.99;
    double eps = 1e-3;
    Param gamma, beta;
    std::vector<double> running_mean, running_var;

    struct Cache {
        std::size_t batch = 0, T = 0;
        std::vector<double> mean, var, inv_std;
        std::vector<double> xhat;
    };

    BatchNorm() = default;
    BatchNorm(std::string name, std::size_t channels, double momentum, double eps);

    // x, y: [batch][channels][T]. Train mode normalizes with batch statistics
    // and requires a cache; eval mode uses the running statistics.
    void forward(const double* x, std::size_t batch, std::size_t T, double* y, Mode mode, Cache* cache) const;
    void backward(const Cache& cache, const double* dy, double* dx);
    // running = momentum * running + (1 - momentum) * batch statistic.
    void commit(const Cache& cache);
};

struct LayerNorm {
    std::size_t dim = 0;
    double eps = 1e-3;
    Param gamma, beta;

    struct Cache {
        std::size_t rows = 0;
        std::vector<double> inv_std, xhat;
    };

    LayerNorm() = default;
    LayerNorm(std::string name, std::size_t dim, double eps);

    void forward(const double* x, std::size_t rows, double* y, Cache* cache) const;
    void backward(const Cache& cache, const double* dy, double* dx);
};

// Self-attention with `heads` heads of width `key_dim` over a [T][model_dim]
// sequence. Softmax is evaluated tile by tile with a running maximum, so
// memory stays O(T * heads * key_dim) for any T; the backward pass recomputes
// attention weights from the saved log-sum-exp of every row.
struct MultiHeadAttention {
    std::size_t model_dim = 0, heads = 0, key_dim = 0;
    Dense query, key, value, output;

    struct Cache {
        std::size_t T = 0;
        std::vector<double> q, k, v;  // T x heads*key_dim
        std::vector<double> attended;  // T x heads*key_dim (pre output projection)
        std::vector<double> lse;       // heads x T
    };

    MultiHeadAttention() = default;
    MultiHeadAttention(std::string name, std::size_t model_dim, std::size_t heads, std::size_t key_dim,
                       std::mt19937_64& rng);

    void forward(const double* x, std::size_t T, double* y, Cache* cache) const;
    void backward(const double* x, const Cache& cache, const double* dy, double* dx);

    std::vector<Param*> params();
};

// Tile sizes for the attention loops; exposed so tests can force multi-tile paths.
struct AttentionTiling {
    std::size_t query_tile = 64;
    std::size_t key_tile = 256;
};
AttentionTiling& attention_tiling();

// Non-overlapping max pooling along time; floor(T / width) outputs.
void maxpool_forward(const double* x, std::size_t channels, std::size_t T, std::size_t width, double* y,
                     std::uint32_t* argmax);
void maxpool_backward(const double* dy, const std::uint32_t* argmax, std::size_t channels, std::size_t T_out,
                      std::size_t T_in, double* dx);

void softmax_rows(double* x, std::size_t rows, std::size_t cols);

}  // namespace mbfd::nn
