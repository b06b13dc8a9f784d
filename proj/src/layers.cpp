#include "mbfd/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mbfd/error.hpp"
#include "mbfd/kernels.hpp"

namespace mbfd::nn {
namespace {

using kernels::Trans;

void add_bias_rows(double* y, std::size_t rows, std::size_t cols, const std::vector<double>& bias) {
    for (std::size_t r = 0; r < rows; ++r) kernels::axpy(1.0, bias.data(), y + r * cols, cols);
}

std::size_t conv_chunk(std::size_t patch, std::size_t T) {
    constexpr std::size_t kBudget = 1u << 21;  // doubles per im2col buffer
    return std::clamp<std::size_t>(kBudget / std::max<std::size_t>(patch, 1), 1, std::max<std::size_t>(T, 1));
}

}  // namespace

Param::Param(std::string n, std::vector<std::size_t> s) : name(std::move(n)), shape(std::move(s)) {
    std::size_t count = 1;
    for (auto d : shape) count *= d;
    value.assign(count, 0.0);
    grad.assign(count, 0.0);
}

void Param::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

void init_fan_in_uniform(Param& p, std::size_t fan_in, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (auto& v : p.value) v = dist(rng);
}

// ---------------------------------------------------------------- Dense

Dense::Dense(std::string name, std::size_t in_, std::size_t out_, std::mt19937_64& rng)
    : in(in_), out(out_), weight(name + ".weight", {out_, in_}), bias(name + ".bias", {out_}) {
    init_fan_in_uniform(weight, in, rng);
}

void Dense::forward(const double* x, std::size_t batch, double* y) const {
    kernels::gemm(Trans::No, Trans::Yes, batch, out, in, 1.0, x, in, weight.value.data(), in, 0.0, y, out);
    add_bias_rows(y, batch, out, bias.value);
}

void Dense::backward(const double* x, const double* dy, std::size_t batch, double* dx) {
    kernels::gemm(Trans::Yes, Trans::No, out, in, batch, 1.0, dy, out, x, in, 1.0, weight.grad.data(), in);
    for (std::size_t b = 0; b < batch; ++b) kernels::axpy(1.0, dy + b * out, bias.grad.data(), out);
    if (dx) kernels::gemm(Trans::No, Trans::No, batch, in, out, 1.0, dy, out, weight.value.data(), in, 0.0, dx, in);
}

// ---------------------------------------------------------------- Conv1d

Conv1d::Conv1d(std::string name, std::size_t in_, std::size_t out_, std::size_t kernel_, std::mt19937_64& rng)
    : in(in_),
      out(out_),
      kernel(kernel_),
      weight(name + ".weight", {out_, in_, kernel_}),
      bias(name + ".bias", {out_}) {
    init_fan_in_uniform(weight, in * kernel, rng);
}

void Conv1d::forward(const double* x, std::size_t T, double* y) const {
    const std::size_t patch = in * kernel;
    const std::size_t padded = T + kernel - 1;
    const std::size_t left = pad_left();
    std::vector<double> xp(in * padded, 0.0);
    for (std::size_t i = 0; i < in; ++i) std::copy(x + i * T, x + (i + 1) * T, xp.begin() + i * padded + left);

    const std::size_t chunk = conv_chunk(patch, T);
    std::vector<double> cols(patch * chunk);
    for (std::size_t t0 = 0; t0 < T; t0 += chunk) {
        const std::size_t tc = std::min(chunk, T - t0);
        for (std::size_t i = 0; i < in; ++i)
            for (std::size_t j = 0; j < kernel; ++j)
                std::copy_n(xp.data() + i * padded + t0 + j, tc, cols.data() + (i * kernel + j) * tc);
        kernels::gemm(Trans::No, Trans::No, out, tc, patch, 1.0, weight.value.data(), patch, cols.data(), tc, 0.0,
                      y + t0, T);
    }
    for (std::size_t o = 0; o < out; ++o) {
        double* row = y + o * T;
        const double b = bias.value[o];
        for (std::size_t t = 0; t < T; ++t) row[t] += b;
    }
}

void Conv1d::backward(const double* x, const double* dy, std::size_t T, double* dx) {
    const std::size_t patch = in * kernel;
    const std::size_t padded = T + kernel - 1;
    const std::size_t left = pad_left();
    std::vector<double> xp(in * padded, 0.0);
    for (std::size_t i = 0; i < in; ++i) std::copy(x + i * T, x + (i + 1) * T, xp.begin() + i * padded + left);
    std::vector<double> dxp(dx ? in * padded : 0, 0.0);

    const std::size_t chunk = conv_chunk(patch, T);
    std::vector<double> cols(patch * chunk), dcols(dx ? patch * chunk : 0);
    for (std::size_t t0 = 0; t0 < T; t0 += chunk) {
        const std::size_t tc = std::min(chunk, T - t0);
        for (std::size_t i = 0; i < in; ++i)
            for (std::size_t j = 0; j < kernel; ++j)
                std::copy_n(xp.data() + i * padded + t0 + j, tc, cols.data() + (i * kernel + j) * tc);
        kernels::gemm(Trans::No, Trans::Yes, out, patch, tc, 1.0, dy + t0, T, cols.data(), tc, 1.0,
                      weight.grad.data(), patch);
        if (dx) {
            kernels::gemm(Trans::Yes, Trans::No, patch, tc, out, 1.0, weight.value.data(), patch, dy + t0, T, 0.0,
                          dcols.data(), tc);
            for (std::size_t i = 0; i < in; ++i)
                for (std::size_t j = 0; j < kernel; ++j)
                    kernels::axpy(1.0, dcols.data() + (i * kernel + j) * tc, dxp.data() + i * padded + t0 + j, tc);
        }
    }
    for (std::size_t o = 0; o < out; ++o) {
        const double* row = dy + o * T;
        double s = 0.0;
        for (std::size_t t = 0; t < T; ++t) s += row[t];
        bias.grad[o] += s;
    }
    if (dx)
        for (std::size_t i = 0; i < in; ++i)
            std::copy_n(dxp.data() + i * padded + left, T, dx + i * T);
}

// ---------------------------------------------------------------- BatchNorm

BatchNorm::BatchNorm(std::string name, std::size_t channels_, double momentum_, double eps_)
    : channels(channels_),
      momentum(momentum_),
      eps(eps_),
      gamma(name + ".gamma", {channels_}),
      beta(name + ".beta", {channels_}),
      running_mean(channels_, 0.0),
      running_var(channels_, 1.0) {
    std::fill(gamma.value.begin(), gamma.value.end(), 1.0);
}

void BatchNorm::forward(const double* x, std::size_t batch, std::size_t T, double* y, Mode mode,
                        Cache* cache) const {
    const std::size_t C = channels;
    if (mode == Mode::Eval) {
        for (std::size_t c = 0; c < C; ++c) {
            const double inv = 1.0 / std::sqrt(running_var[c] + eps);
            const double scale = gamma.value[c] * inv;
            const double shift = beta.value[c] - running_mean[c] * scale;
            for (std::size_t b = 0; b < batch; ++b) {
                const double* xs = x + (b * C + c) * T;
                double* ys = y + (b * C + c) * T;
                for (std::size_t t = 0; t < T; ++t) ys[t] = xs[t] * scale + shift;
            }
        }
        return;
    }
    if (cache == nullptr) throw Error("BatchNorm train-mode forward needs a cache");
    cache->batch = batch;
    cache->T = T;
    cache->mean.assign(C, 0.0);
    cache->var.assign(C, 0.0);
    cache->inv_std.assign(C, 0.0);
    cache->xhat.resize(batch * C * T);
    const double n = static_cast<double>(batch * T);
    for (std::size_t c = 0; c < C; ++c) {
        double sum = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            const double* xs = x + (b * C + c) * T;
            for (std::size_t t = 0; t < T; ++t) sum += xs[t];
        }
        const double mean = sum / n;
        double var = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            const double* xs = x + (b * C + c) * T;
            for (std::size_t t = 0; t < T; ++t) var += (xs[t] - mean) * (xs[t] - mean);
        }
        var /= n;
        const double inv = 1.0 / std::sqrt(var + eps);
        cache->mean[c] = mean;
        cache->var[c] = var;
        cache->inv_std[c] = inv;
        for (std::size_t b = 0; b < batch; ++b) {
            const double* xs = x + (b * C + c) * T;
            double* xh = cache->xhat.data() + (b * C + c) * T;
            double* ys = y + (b * C + c) * T;
            for (std::size_t t = 0; t < T; ++t) {
                xh[t] = (xs[t] - mean) * inv;
                ys[t] = gamma.value[c] * xh[t] + beta.value[c];
            }
        }
    }
}

void BatchNorm::backward(const Cache& cache, const double* dy, double* dx) {
    const std::size_t C = channels, T = cache.T, batch = cache.batch;
    const double n = static_cast<double>(batch * T);
    for (std::size_t c = 0; c < C; ++c) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            const double* d = dy + (b * C + c) * T;
            const double* xh = cache.xhat.data() + (b * C + c) * T;
            for (std::size_t t = 0; t < T; ++t) {
                sum_dy += d[t];
                sum_dy_xhat += d[t] * xh[t];
            }
        }
        gamma.grad[c] += sum_dy_xhat;
        beta.grad[c] += sum_dy;
        if (!dx) continue;
        const double g = gamma.value[c];
        const double k = g * cache.inv_std[c] / n;
        for (std::size_t b = 0; b < batch; ++b) {
            const double* d = dy + (b * C + c) * T;
            const double* xh = cache.xhat.data() + (b * C + c) * T;
            double* out = dx + (b * C + c) * T;
            for (std::size_t t = 0; t < T; ++t) out[t] = k * (n * d[t] - sum_dy - xh[t] * sum_dy_xhat);
        }
    }
}

void BatchNorm::commit(const Cache& cache) {
    for (std::size_t c = 0; c < channels; ++c) {
        running_mean[c] = momentum * running_mean[c] + (1.0 - momentum) * cache.mean[c];
        running_var[c] = momentum * running_var[c] + (1.0 - momentum) * cache.var[c];
    }
}

// ---------------------------------------------------------------- LayerNorm

LayerNorm::LayerNorm(std::string name, std::size_t dim_, double eps_)
    : dim(dim_), eps(eps_), gamma(name + ".gamma", {dim_}), beta(name + ".beta", {dim_}) {
    std::fill(gamma.value.begin(), gamma.value.end(), 1.0);
}

void LayerNorm::forward(const double* x, std::size_t rows, double* y, Cache* cache) const {
    if (cache) {
        cache->rows = rows;
        cache->inv_std.resize(rows);
        cache->xhat.resize(rows * dim);
    }
    const double d = static_cast<double>(dim);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xs = x + r * dim;
        double mean = 0.0;
        for (std::size_t i = 0; i < dim; ++i) mean += xs[i];
        mean /= d;
        double var = 0.0;
        for (std::size_t i = 0; i < dim; ++i) var += (xs[i] - mean) * (xs[i] - mean);
        var /= d;
        const double inv = 1.0 / std::sqrt(var + eps);
        if (cache) cache->inv_std[r] = inv;
        for (std::size_t i = 0; i < dim; ++i) {
            const double xh = (xs[i] - mean) * inv;
            if (cache) cache->xhat[r * dim + i] = xh;
            y[r * dim + i] = gamma.value[i] * xh + beta.value[i];
        }
    }
}

void LayerNorm::backward(const Cache& cache, const double* dy, double* dx) {
    const double d = static_cast<double>(dim);
    std::vector<double> dxhat(dim);
    for (std::size_t r = 0; r < cache.rows; ++r) {
        const double* g = dy + r * dim;
        const double* xh = cache.xhat.data() + r * dim;
        double sum = 0.0, sum_xh = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            gamma.grad[i] += g[i] * xh[i];
            beta.grad[i] += g[i];
            dxhat[i] = g[i] * gamma.value[i];
            sum += dxhat[i];
            sum_xh += dxhat[i] * xh[i];
        }
        const double k = cache.inv_std[r] / d;
        for (std::size_t i = 0; i < dim; ++i) dx[r * dim + i] = k * (d * dxhat[i] - sum - xh[i] * sum_xh);
    }
}

// ---------------------------------------------------------------- attention

AttentionTiling& attention_tiling() {
    static AttentionTiling tiling;
    return tiling;
}

MultiHeadAttention::MultiHeadAttention(std::string name, std::size_t model_dim_, std::size_t heads_,
                                       std::size_t key_dim_, std::mt19937_64& rng)
    : model_dim(model_dim_),
      heads(heads_),
      key_dim(key_dim_),
      query(name + ".query", model_dim_, heads_ * key_dim_, rng),
      key(name + ".key", model_dim_, heads_ * key_dim_, rng),
      value(name + ".value", model_dim_, heads_ * key_dim_, rng),
      output(name + ".output", heads_ * key_dim_, model_dim_, rng) {}

std::vector<Param*> MultiHeadAttention::params() {
    return {&query.weight, &query.bias, &key.weight,    &key.bias,
            &value.weight, &value.bias, &output.weight, &output.bias};
}

void MultiHeadAttention::forward(const double* x, std::size_t T, double* y, Cache* cache) const {
    const std::size_t ld = heads * key_dim;
    const double scale = 1.0 / std::sqrt(static_cast<double>(key_dim));
    const auto tiling = attention_tiling();
    const std::size_t tq_max = std::max<std::size_t>(1, tiling.query_tile);
    const std::size_t tk_max = std::max<std::size_t>(1, tiling.key_tile);

    Cache local;
    Cache& c = cache ? *cache : local;
    c.T = T;
    c.q.resize(T * ld);
    c.k.resize(T * ld);
    c.v.resize(T * ld);
    c.attended.assign(T * ld, 0.0);
    c.lse.resize(heads * T);
    query.forward(x, T, c.q.data());
    key.forward(x, T, c.k.data());
    value.forward(x, T, c.v.data());

    std::vector<double> s(tq_max * tk_max), acc(tq_max * key_dim), row_max(tq_max), row_sum(tq_max);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * key_dim;
        for (std::size_t q0 = 0; q0 < T; q0 += tq_max) {
            const std::size_t tq = std::min(tq_max, T - q0);
            std::fill(acc.begin(), acc.end(), 0.0);
            std::fill(row_max.begin(), row_max.end(), -std::numeric_limits<double>::infinity());
            std::fill(row_sum.begin(), row_sum.end(), 0.0);
            for (std::size_t k0 = 0; k0 < T; k0 += tk_max) {
                const std::size_t tk = std::min(tk_max, T - k0);
                kernels::gemm(Trans::No, Trans::Yes, tq, tk, key_dim, scale, c.q.data() + q0 * ld + off, ld,
                              c.k.data() + k0 * ld + off, ld, 0.0, s.data(), tk);
                for (std::size_t r = 0; r < tq; ++r) {
                    double* sr = s.data() + r * tk;
                    const double tile_max = *std::max_element(sr, sr + tk);
                    const double new_max = std::max(row_max[r], tile_max);
                    const double correction = std::exp(row_max[r] - new_max);
                    for (std::size_t j = 0; j < tk; ++j) sr[j] -= new_max;
                    kernels::exp_inplace(sr, tk);
                    double tile_sum = 0.0;
                    for (std::size_t j = 0; j < tk; ++j) tile_sum += sr[j];
                    row_sum[r] = row_sum[r] * correction + tile_sum;
                    row_max[r] = new_max;
                    if (correction != 1.0)
                        for (std::size_t i = 0; i < key_dim; ++i) acc[r * key_dim + i] *= correction;
                }
                kernels::gemm(Trans::No, Trans::No, tq, key_dim, tk, 1.0, s.data(), tk,
                              c.v.data() + k0 * ld + off, ld, 1.0, acc.data(), key_dim);
            }
            for (std::size_t r = 0; r < tq; ++r) {
                const double inv = 1.0 / row_sum[r];
                double* dst = c.attended.data() + (q0 + r) * ld + off;
                for (std::size_t i = 0; i < key_dim; ++i) dst[i] = acc[r * key_dim + i] * inv;
                c.lse[h * T + q0 + r] = row_max[r] + std::log(row_sum[r]);
            }
        }
    }
    output.forward(c.attended.data(), T, y);
}

void MultiHeadAttention::backward(const double* x, const Cache& c, const double* dy, double* dx) {
    const std::size_t T = c.T;
    const std::size_t ld = heads * key_dim;
    const double scale = 1.0 / std::sqrt(static_cast<double>(key_dim));
    const auto tiling = attention_tiling();
    const std::size_t tq_max = std::max<std::size_t>(1, tiling.query_tile);
    const std::size_t tk_max = std::max<std::size_t>(1, tiling.key_tile);

    std::vector<double> d_att(T * ld);
    output.backward(c.attended.data(), dy, T, d_att.data());

    std::vector<double> dq(T * ld, 0.0), dk(T * ld, 0.0), dv(T * ld, 0.0);
    std::vector<double> p(tq_max * tk_max), dp(tq_max * tk_max), delta(T);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * key_dim;
        for (std::size_t t = 0; t < T; ++t)
            delta[t] = kernels::dot(d_att.data() + t * ld + off, c.attended.data() + t * ld + off, key_dim);
        for (std::size_t q0 = 0; q0 < T; q0 += tq_max) {
            const std::size_t tq = std::min(tq_max, T - q0);
            for (std::size_t k0 = 0; k0 < T; k0 += tk_max) {
                const std::size_t tk = std::min(tk_max, T - k0);
                kernels::gemm(Trans::No, Trans::Yes, tq, tk, key_dim, scale, c.q.data() + q0 * ld + off, ld,
                              c.k.data() + k0 * ld + off, ld, 0.0, p.data(), tk);
                for (std::size_t r = 0; r < tq; ++r) {
                    double* pr = p.data() + r * tk;
                    const double lse = c.lse[h * T + q0 + r];
                    for (std::size_t j = 0; j < tk; ++j) pr[j] -= lse;
                    kernels::exp_inplace(pr, tk);
                }
                kernels::gemm(Trans::Yes, Trans::No, tk, key_dim, tq, 1.0, p.data(), tk,
                              d_att.data() + q0 * ld + off, ld, 1.0, dv.data() + k0 * ld + off, ld);
                kernels::gemm(Trans::No, Trans::Yes, tq, tk, key_dim, 1.0, d_att.data() + q0 * ld + off, ld,
                              c.v.data() + k0 * ld + off, ld, 0.0, dp.data(), tk);
                for (std::size_t r = 0; r < tq; ++r) {
                    const double dr = delta[q0 + r];
                    for (std::size_t j = 0; j < tk; ++j)
                        dp[r * tk + j] = p[r * tk + j] * (dp[r * tk + j] - dr) * scale;
                }
                kernels::gemm(Trans::No, Trans::No, tq, key_dim, tk, 1.0, dp.data(), tk,
                              c.k.data() + k0 * ld + off, ld, 1.0, dq.data() + q0 * ld + off, ld);
                kernels::gemm(Trans::Yes, Trans::No, tk, key_dim, tq, 1.0, dp.data(), tk,
                              c.q.data() + q0 * ld + off, ld, 1.0, dk.data() + k0 * ld + off, ld);
            }
        }
    }
    std::vector<double> tmp(T * model_dim);
    query.backward(x, dq.data(), T, dx);
    key.backward(x, dk.data(), T, tmp.data());
    kernels::axpy(1.0, tmp.data(), dx, T * model_dim);
    value.backward(x, dv.data(), T, tmp.data());
    kernels::axpy(1.0, tmp.data(), dx, T * model_dim);
}

// ---------------------------------------------------------------- misc

void maxpool_forward(const double* x, std::size_t channels, std::size_t T, std::size_t width, double* y,
                     std::uint32_t* argmax) {
    const std::size_t T_out = T / width;
    for (std::size_t c = 0; c < channels; ++c) {
        const double* xs = x + c * T;
        for (std::size_t t = 0; t < T_out; ++t) {
            std::size_t best = t * width;
            for (std::size_t j = 1; j < width; ++j)
                if (xs[t * width + j] > xs[best]) best = t * width + j;
            y[c * T_out + t] = xs[best];
            if (argmax) argmax[c * T_out + t] = static_cast<std::uint32_t>(best);
        }
    }
}

void maxpool_backward(const double* dy, const std::uint32_t* argmax, std::size_t channels, std::size_t T_out,
                      std::size_t T_in, double* dx) {
    std::fill(dx, dx + channels * T_in, 0.0);
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t t = 0; t < T_out; ++t) dx[c * T_in + argmax[c * T_out + t]] += dy[c * T_out + t];
}

void softmax_rows(double* x, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = x + r * cols;
        const double m = *std::max_element(row, row + cols);
        for (std::size_t j = 0; j < cols; ++j) row[j] -= m;
        kernels::exp_inplace(row, cols);
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) s += row[j];
        for (std::size_t j = 0; j < cols; ++j) row[j] /= s;
    }
}

}  // namespace mbfd::nn
