#include "mbfd/backbones.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <string>

#include "mbfd/archive.hpp"
#include "mbfd/error.hpp"
#include "mbfd/kernels.hpp"

namespace mbfd {
namespace {

using nn::Mode;

constexpr const char* kCheckpointFormat = "mbfd-checkpoint-1";

void relu_inplace(std::vector<double>& v) {
    for (auto& x : v) x = x < 0.0 ? 0.0 : x;  // NaN passes through
}

void relu_backward(std::vector<double>& d, const std::vector<double>& activated) {
    for (std::size_t i = 0; i < d.size(); ++i)
        if (!(activated[i] > 0.0)) d[i] = 0.0;
}

void relu_backward(Matrix& d, const Matrix& activated) {
    for (std::size_t i = 0; i < d.data.size(); ++i)
        if (!(activated.data[i] > 0.0)) d.data[i] = 0.0;
}

void block_forward(const ResidualBlock& blk, const std::vector<double>& in, std::size_t in_ch, std::size_t batch,
                   std::size_t T, Mode mode, CnnTape::Block& tb) {
    const std::size_t mid = blk.conv_a.out, outc = blk.conv_b.out;
    const bool train = mode == Mode::Train;

    std::vector<double> tmp(batch * std::max(mid, outc) * T);
    for (std::size_t b = 0; b < batch; ++b) blk.conv_a.forward(in.data() + b * in_ch * T, T, tmp.data() + b * mid * T);
    tb.h.resize(batch * mid * T);
    blk.bn_a.forward(tmp.data(), batch, T, tb.h.data(), mode, train ? &tb.bn_a : nullptr);
    relu_inplace(tb.h);

    for (std::size_t b = 0; b < batch; ++b)
        blk.conv_b.forward(tb.h.data() + b * mid * T, T, tmp.data() + b * outc * T);
    tb.out.resize(batch * outc * T);
    blk.bn_b.forward(tmp.data(), batch, T, tb.out.data(), mode, train ? &tb.bn_b : nullptr);

    if (blk.projection) {
        std::vector<double> skip(outc * T);
        for (std::size_t b = 0; b < batch; ++b) {
            blk.projection->forward(in.data() + b * in_ch * T, T, skip.data());
            kernels::axpy(1.0, skip.data(), tb.out.data() + b * outc * T, outc * T);
        }
    } else {
        if (in_ch != outc) throw ShapeError("identity skip needs matching channel counts");
        kernels::axpy(1.0, in.data(), tb.out.data(), tb.out.size());
    }
    relu_inplace(tb.out);
}

std::vector<double> block_backward(ResidualBlock& blk, const std::vector<double>& in, std::size_t in_ch,
                                   std::size_t batch, std::size_t T, const CnnTape::Block& tb,
                                   std::vector<double> d_out) {
    const std::size_t mid = blk.conv_a.out, outc = blk.conv_b.out;
    relu_backward(d_out, tb.out);

    std::vector<double> d_in(batch * in_ch * T, 0.0);
    std::vector<double> tmp(in_ch * T);
    if (blk.projection) {
        for (std::size_t b = 0; b < batch; ++b) {
            blk.projection->backward(in.data() + b * in_ch * T, d_out.data() + b * outc * T, T, tmp.data());
            kernels::axpy(1.0, tmp.data(), d_in.data() + b * in_ch * T, in_ch * T);
        }
    } else {
        kernels::axpy(1.0, d_out.data(), d_in.data(), d_in.size());
    }

    std::vector<double> d_pre(batch * outc * T);
    blk.bn_b.backward(tb.bn_b, d_out.data(), d_pre.data());
    std::vector<double> d_h(batch * mid * T);
    for (std::size_t b = 0; b < batch; ++b)
        blk.conv_b.backward(tb.h.data() + b * mid * T, d_pre.data() + b * outc * T, T, d_h.data() + b * mid * T);
    relu_backward(d_h, tb.h);
    d_pre.resize(batch * mid * T);
    blk.bn_a.backward(tb.bn_a, d_h.data(), d_pre.data());
    for (std::size_t b = 0; b < batch; ++b) {
        blk.conv_a.backward(in.data() + b * in_ch * T, d_pre.data() + b * mid * T, T, tmp.data());
        kernels::axpy(1.0, tmp.data(), d_in.data() + b * in_ch * T, in_ch * T);
    }
    return d_in;
}

ResidualBlock make_block(const std::string& name, std::size_t in_ch, const BackboneConfig& c, std::mt19937_64& rng) {
    ResidualBlock blk;
    blk.conv_a = nn::Conv1d(name + ".conv_a", in_ch, c.res_mid, c.res_kernel, rng);
    blk.bn_a = nn::BatchNorm(name + ".bn_a", c.res_mid, c.bn_momentum, c.bn_eps);
    blk.conv_b = nn::Conv1d(name + ".conv_b", c.res_mid, c.res_out, c.res_kernel, rng);
    blk.bn_b = nn::BatchNorm(name + ".bn_b", c.res_out, c.bn_momentum, c.bn_eps);
    if (in_ch != c.res_out) blk.projection = nn::Conv1d(name + ".projection", in_ch, c.res_out, 1, rng);
    return blk;
}

CenterGenerator make_center(const std::string& name, std::size_t classes, std::size_t dim, const BackboneConfig& c,
                            std::mt19937_64& rng) {
    return {nn::Dense(name + ".dense", classes, dim, rng), nn::BatchNorm(name + ".bn", dim, c.bn_momentum, c.bn_eps)};
}

void push_block(std::vector<nn::Param*>& out, ResidualBlock& blk) {
    for (auto* p : {&blk.conv_a.weight, &blk.conv_a.bias, &blk.bn_a.gamma, &blk.bn_a.beta, &blk.conv_b.weight,
                    &blk.conv_b.bias, &blk.bn_b.gamma, &blk.bn_b.beta})
        out.push_back(p);
    if (blk.projection) {
        out.push_back(&blk.projection->weight);
        out.push_back(&blk.projection->bias);
    }
}

std::string bn_prefix(const nn::BatchNorm& bn) {
    const std::string& g = bn.gamma.name;
    return g.substr(0, g.size() - std::string(".gamma").size());
}

NamedArray to_array(const std::string& name, const std::vector<std::size_t>& shape, const std::vector<double>& v) {
    NamedArray a;
    a.name = name;
    a.shape.assign(shape.begin(), shape.end());
    a.values = v;
    a.dtype = ArrayDType::F32;
    return a;
}

void fill_from(const std::vector<NamedArray>& arrays, const std::string& name, std::vector<double>& dst) {
    const NamedArray& a = find_array(arrays, name);
    if (a.values.size() != dst.size())
        throw FormatError("checkpoint array '" + name + "' has " + std::to_string(a.values.size()) +
                          " values, expected " + std::to_string(dst.size()));
    dst = a.values;
}

}  // namespace

// ---------------------------------------------------------------- enums/config

std::string_view to_string(Architecture a) {
    switch (a) {
        case Architecture::SDLM: return "SDLM";
        case Architecture::S_SDLM: return "S_SDLM";
        case Architecture::U_SDLM: return "U_SDLM";
        case Architecture::ROBUST_MBFD: return "ROBUST_MBFD";
    }
    return "?";
}

Architecture parse_architecture(std::string_view name) {
    std::string s(name);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return c == '-' ? '_' : std::toupper(c); });
    for (auto a : {Architecture::SDLM, Architecture::S_SDLM, Architecture::U_SDLM, Architecture::ROBUST_MBFD})
        if (s == to_string(a)) return a;
    throw ConfigError("unknown architecture '" + std::string(name) + "'");
}

bool uses_cnn(Architecture a) { return a != Architecture::U_SDLM; }
bool uses_mlp(Architecture a) { return a == Architecture::U_SDLM || a == Architecture::ROBUST_MBFD; }

BackboneConfig BackboneConfig::mini() {
    BackboneConfig c;
    c.conv1_filters = 2;
    c.conv1_kernel = 5;
    c.pool = 2;
    c.res_mid = 2;
    c.res_out = 4;
    c.res_kernel = 3;
    c.heads = 2;
    c.key_dim = 2;
    c.mlp_widths = {8, 6, 5};
    return c;
}

nlohmann::json to_json(const BackboneConfig& c) {
    return {{"conv1_filters", c.conv1_filters}, {"conv1_kernel", c.conv1_kernel}, {"pool", c.pool},
            {"res_mid", c.res_mid},             {"res_out", c.res_out},           {"res_kernel", c.res_kernel},
            {"heads", c.heads},                 {"key_dim", c.key_dim},           {"mlp_widths", c.mlp_widths},
            {"feature_dim", c.feature_dim},     {"bn_momentum", c.bn_momentum},   {"bn_eps", c.bn_eps},
            {"ln_eps", c.ln_eps}};
}

BackboneConfig backbone_config_from_json(const nlohmann::json& j) {
    BackboneConfig c;
    c.conv1_filters = j.value("conv1_filters", c.conv1_filters);
    c.conv1_kernel = j.value("conv1_kernel", c.conv1_kernel);
    c.pool = j.value("pool", c.pool);
    c.res_mid = j.value("res_mid", c.res_mid);
    c.res_out = j.value("res_out", c.res_out);
    c.res_kernel = j.value("res_kernel", c.res_kernel);
    c.heads = j.value("heads", c.heads);
    c.key_dim = j.value("key_dim", c.key_dim);
    c.mlp_widths = j.value("mlp_widths", c.mlp_widths);
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.bn_momentum = j.value("bn_momentum", c.bn_momentum);
    c.bn_eps = j.value("bn_eps", c.bn_eps);
    c.ln_eps = j.value("ln_eps", c.ln_eps);
    if (c.mlp_widths.empty() || c.pool == 0 || c.heads == 0 || c.key_dim == 0)
        throw ConfigError("invalid backbone sizes");
    return c;
}

// ---------------------------------------------------------------- model state

ModelState make_model(Architecture arch, std::size_t class_count, std::size_t input_length, std::uint64_t seed,
                      const BackboneConfig& c) {
    if (class_count == 0) throw ConfigError("class count must be set");
    if (uses_cnn(arch) && input_length < c.pool) throw ConfigError("input length shorter than one pooling window");

    ModelState s;
    s.architecture = arch;
    s.seed = seed;
    s.class_count = class_count;
    s.input_length = input_length;
    s.config = c;
    std::mt19937_64 rng(seed);

    if (uses_cnn(arch)) {
        CnnBranch net;
        net.conv1 = nn::Conv1d("cnn.conv1", 1, c.conv1_filters, c.conv1_kernel, rng);
        net.bn1 = nn::BatchNorm("cnn.bn1", c.conv1_filters, c.bn_momentum, c.bn_eps);
        net.pool = c.pool;
        net.res1 = make_block("cnn.res1", c.conv1_filters, c, rng);
        net.res2 = make_block("cnn.res2", c.res_out, c, rng);
        net.attention = nn::MultiHeadAttention("cnn.attention", c.res_out, c.heads, c.key_dim, rng);
        net.attention_norm = nn::LayerNorm("cnn.attention_norm", c.res_out, c.ln_eps);
        net.head = nn::Dense("cnn.head", c.res_out, class_count, rng);
        s.cnn = std::move(net);
    }
    if (uses_mlp(arch)) {
        MlpBranch net;
        std::size_t in = c.feature_dim;
        for (std::size_t i = 0; i < c.mlp_widths.size(); ++i) {
            net.layers.emplace_back("mlp.dense" + std::to_string(i), in, c.mlp_widths[i], rng);
            in = c.mlp_widths[i];
        }
        s.mlp = std::move(net);
    }
    if (arch == Architecture::ROBUST_MBFD) {
        s.center_cnn = make_center("center_cnn", class_count, c.cnn_dim(), c, rng);
        s.center_mlp = make_center("center_mlp", class_count, c.mlp_dim(), c, rng);
    }
    return s;
}

std::vector<nn::Param*> ModelState::params() {
    std::vector<nn::Param*> out;
    if (cnn) {
        for (auto* p : {&cnn->conv1.weight, &cnn->conv1.bias, &cnn->bn1.gamma, &cnn->bn1.beta}) out.push_back(p);
        push_block(out, cnn->res1);
        push_block(out, cnn->res2);
        for (auto* p : cnn->attention.params()) out.push_back(p);
        for (auto* p : {&cnn->attention_norm.gamma, &cnn->attention_norm.beta, &cnn->head.weight, &cnn->head.bias})
            out.push_back(p);
    }
    if (mlp)
        for (auto& layer : mlp->layers) {
            out.push_back(&layer.weight);
            out.push_back(&layer.bias);
        }
    for (auto* gen : {center_cnn ? &*center_cnn : nullptr, center_mlp ? &*center_mlp : nullptr})
        if (gen)
            for (auto* p : {&gen->dense.weight, &gen->dense.bias, &gen->bn.gamma, &gen->bn.beta}) out.push_back(p);
    return out;
}

std::vector<const nn::Param*> ModelState::params() const {
    auto mutable_params = const_cast<ModelState*>(this)->params();
    return {mutable_params.begin(), mutable_params.end()};
}

std::vector<nn::BatchNorm*> ModelState::batch_norms() {
    std::vector<nn::BatchNorm*> out;
    if (cnn)
        for (auto* bn : {&cnn->bn1, &cnn->res1.bn_a, &cnn->res1.bn_b, &cnn->res2.bn_a, &cnn->res2.bn_b})
            out.push_back(bn);
    if (center_cnn) out.push_back(&center_cnn->bn);
    if (center_mlp) out.push_back(&center_mlp->bn);
    return out;
}

std::vector<const nn::BatchNorm*> ModelState::batch_norms() const {
    auto mutable_bns = const_cast<ModelState*>(this)->batch_norms();
    return {mutable_bns.begin(), mutable_bns.end()};
}

std::size_t ModelState::parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : params()) n += p->size();
    return n;
}

std::size_t ModelState::embedding_dim() const {
    switch (architecture) {
        case Architecture::SDLM:
        case Architecture::S_SDLM: return config.cnn_dim();
        case Architecture::U_SDLM: return config.mlp_dim();
        case Architecture::ROBUST_MBFD: return config.cnn_dim() + config.mlp_dim();
    }
    return 0;
}

// ---------------------------------------------------------------- CNN branch

Matrix cnn_forward(const CnnBranch& net, const Matrix& windows, Mode mode, CnnTape* tape) {
    if (mode == Mode::Train && tape == nullptr) throw Error("train-mode forward needs a tape");
    CnnTape local;
    CnnTape& tp = tape ? *tape : local;
    const bool train = mode == Mode::Train;
    const std::size_t B = windows.rows, L = windows.cols, F = net.conv1.out, D = net.embedding_dim();
    const std::size_t T = L / net.pool;
    if (B == 0) throw ShapeError("empty batch");
    if (T == 0) throw ShapeError("window shorter than the pooling width");
    tp.batch = B;
    tp.length = L;
    tp.steps = T;
    if (tape) tp.x = windows.data;

    {
        std::vector<double> conv(B * F * L);
        for (std::size_t b = 0; b < B; ++b) net.conv1.forward(windows.data.data() + b * L, L, conv.data() + b * F * L);
        tp.r1.resize(B * F * L);
        net.bn1.forward(conv.data(), B, L, tp.r1.data(), mode, train ? &tp.bn1 : nullptr);
    }
    relu_inplace(tp.r1);
    tp.pooled.resize(B * F * T);
    tp.argmax.resize(B * F * T);
    for (std::size_t b = 0; b < B; ++b)
        nn::maxpool_forward(tp.r1.data() + b * F * L, F, L, net.pool, tp.pooled.data() + b * F * T,
                            tp.argmax.data() + b * F * T);
    if (!tape) std::vector<double>().swap(tp.r1);

    block_forward(net.res1, tp.pooled, F, B, T, mode, tp.res1);
    block_forward(net.res2, tp.res1.out, net.res1.conv_b.out, B, T, mode, tp.res2);

    tp.seq.resize(B * T * D);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t d = 0; d < D; ++d)
            for (std::size_t t = 0; t < T; ++t) tp.seq[(b * T + t) * D + d] = tp.res2.out[(b * D + d) * T + t];

    std::vector<double> z(B * T * D);
    if (tape) tp.attention.resize(B);
    for (std::size_t b = 0; b < B; ++b)
        net.attention.forward(tp.seq.data() + b * T * D, T, z.data() + b * T * D, tape ? &tp.attention[b] : nullptr);
    kernels::axpy(1.0, tp.seq.data(), z.data(), z.size());
    std::vector<double> u(B * T * D);
    net.attention_norm.forward(z.data(), B * T, u.data(), tape ? &tp.norm : nullptr);

    Matrix emb(B, D);
    const double inv_t = 1.0 / static_cast<double>(T);
    for (std::size_t b = 0; b < B; ++b) {
        double* e = emb.data.data() + b * D;
        for (std::size_t t = 0; t < T; ++t) kernels::axpy(inv_t, u.data() + (b * T + t) * D, e, D);
    }
    return emb;
}

void cnn_backward(CnnBranch& net, const CnnTape& tp, const Matrix& d_emb) {
    const std::size_t B = tp.batch, L = tp.length, T = tp.steps, F = net.conv1.out, D = net.embedding_dim();
    if (d_emb.rows != B || d_emb.cols != D) throw ShapeError("embedding gradient does not match the tape");
    if (tp.bn1.batch != B || tp.attention.size() != B) throw Error("cnn_backward needs a train-mode tape");

    std::vector<double> d_u(B * T * D);
    const double inv_t = 1.0 / static_cast<double>(T);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t d = 0; d < D; ++d) d_u[(b * T + t) * D + d] = d_emb(b, d) * inv_t;
    std::vector<double> d_seq(B * T * D);
    net.attention_norm.backward(tp.norm, d_u.data(), d_seq.data());
    std::vector<double> tmp(T * D);
    for (std::size_t b = 0; b < B; ++b) {
        net.attention.backward(tp.seq.data() + b * T * D, tp.attention[b], d_seq.data() + b * T * D, tmp.data());
        kernels::axpy(1.0, tmp.data(), d_seq.data() + b * T * D, T * D);
    }

    std::vector<double> d_o2(B * D * T);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t d = 0; d < D; ++d)
            for (std::size_t t = 0; t < T; ++t) d_o2[(b * D + d) * T + t] = d_seq[(b * T + t) * D + d];
    auto d_o1 = block_backward(net.res2, tp.res1.out, net.res1.conv_b.out, B, T, tp.res2, std::move(d_o2));
    auto d_p = block_backward(net.res1, tp.pooled, F, B, T, tp.res1, std::move(d_o1));

    std::vector<double> d_r1(B * F * L);
    for (std::size_t b = 0; b < B; ++b)
        nn::maxpool_backward(d_p.data() + b * F * T, tp.argmax.data() + b * F * T, F, T, L, d_r1.data() + b * F * L);
    relu_backward(d_r1, tp.r1);
    std::vector<double> d_c1(B * F * L);
    net.bn1.backward(tp.bn1, d_r1.data(), d_c1.data());
    for (std::size_t b = 0; b < B; ++b) net.conv1.backward(tp.x.data() + b * L, d_c1.data() + b * F * L, L, nullptr);
}

void cnn_commit(CnnBranch& net, const CnnTape& tp) {
    net.bn1.commit(tp.bn1);
    net.res1.bn_a.commit(tp.res1.bn_a);
    net.res1.bn_b.commit(tp.res1.bn_b);
    net.res2.bn_a.commit(tp.res2.bn_a);
    net.res2.bn_b.commit(tp.res2.bn_b);
}

Matrix head_forward(const nn::Dense& head, const Matrix& emb) {
    if (emb.cols != head.in) throw ShapeError("embedding width does not match the classifier head");
    Matrix probs(emb.rows, head.out);
    head.forward(emb.data.data(), emb.rows, probs.data.data());
    nn::softmax_rows(probs.data.data(), probs.rows, probs.cols);
    return probs;
}

Matrix head_backward(nn::Dense& head, const Matrix& emb, const Matrix& d_logits) {
    Matrix d_emb(emb.rows, emb.cols);
    head.backward(emb.data.data(), d_logits.data.data(), emb.rows, d_emb.data.data());
    return d_emb;
}

// ---------------------------------------------------------------- MLP branch

Matrix mlp_forward(const MlpBranch& net, const Matrix& features, MlpTape* tape) {
    if (net.layers.empty()) throw Error("empty MLP");
    if (features.cols != net.layers.front().in)
        throw ShapeError("MLP expects " + std::to_string(net.layers.front().in) + " features, got " +
                         std::to_string(features.cols));
    if (tape) {
        tape->input = features;
        tape->outputs.clear();
    }
    Matrix cur = features;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        Matrix y(cur.rows, net.layers[i].out);
        net.layers[i].forward(cur.data.data(), cur.rows, y.data.data());
        if (i + 1 < net.layers.size()) relu_inplace(y.data);
        if (tape) tape->outputs.push_back(y);
        cur = std::move(y);
    }
    return cur;
}

void mlp_backward(MlpBranch& net, const MlpTape& tape, const Matrix& d_out) {
    const std::size_t n = net.layers.size();
    if (tape.outputs.size() != n) throw Error("mlp_backward needs a forward tape");
    Matrix d = d_out;
    for (std::size_t i = n; i-- > 0;) {
        const Matrix& in = i == 0 ? tape.input : tape.outputs[i - 1];
        if (i + 1 < n) relu_backward(d, tape.outputs[i]);
        Matrix dx(in.rows, in.cols);
        net.layers[i].backward(in.data.data(), d.data.data(), in.rows, i == 0 ? nullptr : dx.data.data());
        d = std::move(dx);
    }
}

// ---------------------------------------------------------------- centers

Matrix center_forward(const CenterGenerator& gen, std::span<const int> labels, Mode mode, CenterTape* tape) {
    if (mode == Mode::Train && tape == nullptr) throw Error("train-mode forward needs a tape");
    const std::size_t C = gen.dense.in, D = gen.dense.out, B = labels.size();
    Matrix one_hot(B, C);
    for (std::size_t b = 0; b < B; ++b) {
        if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= C)
            throw Error("label " + std::to_string(labels[b]) + " outside the " + std::to_string(C) + " classes");
        one_hot(b, static_cast<std::size_t>(labels[b])) = 1.0;
    }
    Matrix h(B, D), y(B, D);
    gen.dense.forward(one_hot.data.data(), B, h.data.data());
    gen.bn.forward(h.data.data(), B, 1, y.data.data(), mode, mode == Mode::Train ? &tape->bn : nullptr);
    if (tape) tape->one_hot = std::move(one_hot);
    return y;
}

void center_backward(CenterGenerator& gen, const CenterTape& tape, const Matrix& d_out) {
    Matrix d_h(d_out.rows, d_out.cols);
    gen.bn.backward(tape.bn, d_out.data.data(), d_h.data.data());
    gen.dense.backward(tape.one_hot.data.data(), d_h.data.data(), d_out.rows, nullptr);
}

void center_commit(CenterGenerator& gen, const CenterTape& tape) { gen.bn.commit(tape.bn); }

// ---------------------------------------------------------------- single-sample API

namespace {

Matrix window_matrix(const ModelState& state, std::span<const double> window) {
    if (!state.cnn) throw ConfigError(std::string(to_string(state.architecture)) + " has no CNN branch");
    if (window.size() != state.input_length)
        throw ShapeError("window length " + std::to_string(window.size()) + " != configured input length " +
                         std::to_string(state.input_length));
    Matrix w(1, window.size());
    std::copy(window.begin(), window.end(), w.data.begin());
    return w;
}

}  // namespace

SdlmOutput sdlm_forward(const ModelState& state, std::span<const double> window, Mode mode) {
    const Matrix w = window_matrix(state, window);
    CnnTape tape;
    const Matrix emb = cnn_forward(*state.cnn, w, mode, mode == Mode::Train ? &tape : nullptr);
    const Matrix probs = head_forward(state.cnn->head, emb);
    return {emb.data, probs.data};
}

std::vector<double> usdlm_forward(const ModelState& state, std::span<const double> features) {
    if (!state.mlp) throw ConfigError(std::string(to_string(state.architecture)) + " has no MLP branch");
    Matrix f(1, features.size());
    std::copy(features.begin(), features.end(), f.data.begin());
    return mlp_forward(*state.mlp, f, nullptr).data;
}

std::vector<double> center_embedding(const ModelState& state, int label, Branch branch) {
    const auto& gen = branch == Branch::CNN ? state.center_cnn : state.center_mlp;
    if (!gen) throw ConfigError(std::string(to_string(state.architecture)) + " has no center generators");
    const int labels[] = {label};
    return center_forward(*gen, labels, Mode::Eval, nullptr).data;
}

RobustOutput robust_forward(const ModelState& state, std::span<const double> window, std::span<const double> features,
                            Mode mode) {
    if (state.architecture != Architecture::ROBUST_MBFD) throw ConfigError("robust_forward needs a ROBUST_MBFD model");
    auto cnn = sdlm_forward(state, window, mode);
    RobustOutput out;
    out.mlp = usdlm_forward(state, features);
    out.cnn = std::move(cnn.embedding);
    out.probabilities = std::move(cnn.probabilities);
    out.concat = out.cnn;
    out.concat.insert(out.concat.end(), out.mlp.begin(), out.mlp.end());
    return out;
}

// ---------------------------------------------------------------- checkpoints

void save_checkpoint(const ModelState& state, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<NamedArray> arrays;
    for (const auto* p : state.params()) arrays.push_back(to_array(p->name, p->shape, p->value));
    for (const auto* bn : state.batch_norms()) {
        const std::string prefix = bn_prefix(*bn);
        arrays.push_back(to_array(prefix + ".running_mean", {bn->channels}, bn->running_mean));
        arrays.push_back(to_array(prefix + ".running_var", {bn->channels}, bn->running_var));
    }
    write_archive(dir / "checkpoint.bin", arrays);

    nlohmann::json manifest = {{"format", kCheckpointFormat},
                               {"architecture", std::string(to_string(state.architecture))},
                               {"seed", state.seed},
                               {"class_count", state.class_count},
                               {"input_length", state.input_length},
                               {"backbone", to_json(state.config)}};
    std::ofstream out(dir / "checkpoint.json");
    if (!out) throw Error("cannot write " + (dir / "checkpoint.json").string());
    out << manifest.dump(2) << '\n';
}

ModelState load_checkpoint(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "checkpoint.json";
    std::ifstream in(manifest_path);
    if (!in) throw MissingDataError("no checkpoint manifest at " + manifest_path.string());
    nlohmann::json manifest;
    try {
        in >> manifest;
        if (manifest.at("format").get<std::string>() != kCheckpointFormat)
            throw FormatError("unsupported checkpoint format in " + manifest_path.string());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad checkpoint manifest " + manifest_path.string() + ": " + e.what());
    }
    ModelState state = make_model(parse_architecture(manifest.at("architecture").get<std::string>()),
                                  manifest.at("class_count").get<std::size_t>(),
                                  manifest.at("input_length").get<std::size_t>(),
                                  manifest.at("seed").get<std::uint64_t>(),
                                  backbone_config_from_json(manifest.at("backbone")));
    const auto arrays = read_archive(dir / "checkpoint.bin");
    for (auto* p : state.params()) fill_from(arrays, p->name, p->value);
    for (auto* bn : state.batch_norms()) {
        const std::string prefix = bn_prefix(*bn);
        fill_from(arrays, prefix + ".running_mean", bn->running_mean);
        fill_from(arrays, prefix + ".running_var", bn->running_var);
    }
    return state;
}

}  // namespace mbfd
