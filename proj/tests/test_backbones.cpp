#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "mbfd/backbones.hpp"
#include "mbfd/error.hpp"
#include "oracles.hpp"

using namespace mbfd;
namespace fs = std::filesystem;

namespace {

double weighted(const Matrix& y, const Matrix& w) {
    double s = 0;
    for (std::size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * w.data[i];
    return s;
}

// Compares accumulated gradients with central differences for up to `limit`
// entries of every parameter.
void check_params(const std::vector<nn::Param*>& params, const std::function<double()>& loss, std::mt19937_64& rng,
                  std::size_t limit, double tol) {
    for (nn::Param* p : params) {
        CAPTURE(p->name);
        std::vector<std::size_t> idx(p->size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(std::min(limit, idx.size()));
        for (std::size_t i : idx) {
            const double keep = p->value[i], h = 1e-6;
            p->value[i] = keep + h;
            const double up = loss();
            p->value[i] = keep - h;
            const double down = loss();
            p->value[i] = keep;
            const double num = (up - down) / (2 * h);
            CAPTURE(i);
            CHECK(std::fabs(num - p->grad[i]) < tol * std::max(1.0, std::fabs(num)));
        }
    }
}

std::vector<nn::Param*> prefixed(ModelState& s, const std::string& prefix) {
    std::vector<nn::Param*> out;
    for (nn::Param* p : s.params())
        if (p->name.starts_with(prefix)) out.push_back(p);
    return out;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("mbfd_backbones_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("full-size embedding dimensions") {
    std::mt19937_64 rng(1);
    const auto sdlm = make_model(Architecture::SDLM, 3, 4800, 1);
    const auto window = oracle::random_signal(rng, 4800);
    const auto out = sdlm_forward(sdlm, window);
    CHECK(out.embedding.size() == 96);
    CHECK(out.probabilities.size() == 3);
    double sum = 0;
    for (double p : out.probabilities) sum += p;
    CHECK(sum == doctest::Approx(1.0));
    CHECK(sdlm.embedding_dim() == 96);

    const auto usdlm = make_model(Architecture::U_SDLM, 3, 0, 1);
    const auto feats = oracle::random_signal(rng, 15);
    CHECK(usdlm_forward(usdlm, feats).size() == 256);
    CHECK(usdlm.embedding_dim() == 256);

    const auto robust = make_model(Architecture::ROBUST_MBFD, 3, 4800, 1);
    const auto r = robust_forward(robust, window, feats);
    REQUIRE(r.concat.size() == 352);
    CHECK(std::equal(r.cnn.begin(), r.cnn.end(), r.concat.begin()));
    CHECK(std::equal(r.mlp.begin(), r.mlp.end(), r.concat.begin() + 96));
    CHECK(robust.embedding_dim() == 352);
    CHECK(center_embedding(robust, 1, Branch::CNN).size() == 96);
    CHECK(center_embedding(robust, 1, Branch::MLP).size() == 256);
}

TEST_CASE("architecture composition and parameter names") {
    const auto s = make_model(Architecture::S_SDLM, 4, 64, 3, BackboneConfig::mini());
    CHECK(s.cnn);
    CHECK_FALSE(s.mlp);
    CHECK_FALSE(s.center_cnn);
    const auto r = make_model(Architecture::ROBUST_MBFD, 4, 64, 3, BackboneConfig::mini());
    CHECK(r.cnn);
    CHECK(r.mlp);
    CHECK(r.center_cnn);
    CHECK(r.center_mlp);
    std::set<std::string> names;
    for (const nn::Param* p : r.params()) CHECK(names.insert(p->name).second);
    CHECK(names.count("cnn.conv1.weight"));
    CHECK(names.count("cnn.head.weight"));
    CHECK(names.count("center_mlp.dense.weight"));
    // residual block 1 changes channel count and needs a projection; block 2 does not
    CHECK(r.cnn->res1.projection);
    CHECK_FALSE(r.cnn->res2.projection);
    CHECK(parse_architecture("robust-mbfd") == Architecture::ROBUST_MBFD);
    CHECK_THROWS_AS(make_model(Architecture::SDLM, 0, 64, 1), ConfigError);
    CHECK_THROWS_AS(make_model(Architecture::SDLM, 2, 1, 1, BackboneConfig::mini()), ConfigError);
}

TEST_CASE("same seed, same weights; different seed, different weights") {
    const auto a = make_model(Architecture::ROBUST_MBFD, 3, 32, 9, BackboneConfig::mini());
    const auto b = make_model(Architecture::ROBUST_MBFD, 3, 32, 9, BackboneConfig::mini());
    const auto c = make_model(Architecture::ROBUST_MBFD, 3, 32, 10, BackboneConfig::mini());
    const auto pa = a.params(), pb = b.params(), pc = c.params();
    bool differs = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i]->value == pb[i]->value);
        differs |= pa[i]->value != pc[i]->value;
    }
    CHECK(differs);
}

TEST_CASE("window length must match the model") {
    const auto s = make_model(Architecture::SDLM, 2, 32, 1, BackboneConfig::mini());
    CHECK_THROWS_AS(sdlm_forward(s, std::vector<double>(31, 0.0)), ShapeError);
}

TEST_CASE("batched eval equals per-sample eval") {
    std::mt19937_64 rng(2);
    const auto s = make_model(Architecture::SDLM, 3, 40, 4, BackboneConfig::mini());
    const auto x = oracle::random_matrix(rng, 3, 40);
    const auto emb = cnn_forward(*s.cnn, x, nn::Mode::Eval, nullptr);
    for (std::size_t r = 0; r < 3; ++r) {
        const auto single = sdlm_forward(s, x.row(r));
        for (std::size_t i = 0; i < emb.cols; ++i) CHECK(emb(r, i) == doctest::Approx(single.embedding[i]).epsilon(1e-12));
    }
}

TEST_CASE("CNN branch gradients (mini)") {
    std::mt19937_64 rng(3);
    auto s = make_model(Architecture::SDLM, 3, 24, 5, BackboneConfig::mini());
    const auto x = oracle::random_matrix(rng, 3, 24);
    const auto w = oracle::random_matrix(rng, 3, s.cnn->embedding_dim());
    CnnTape tape;
    const auto emb = cnn_forward(*s.cnn, x, nn::Mode::Train, &tape);
    for (nn::Param* p : s.params()) p->zero_grad();
    cnn_backward(*s.cnn, tape, w);
    auto loss = [&] {
        CnnTape t;
        return weighted(cnn_forward(*s.cnn, x, nn::Mode::Train, &t), w);
    };
    auto params = prefixed(s, "cnn.");
    params.erase(std::remove_if(params.begin(), params.end(), [](nn::Param* p) { return p->name.starts_with("cnn.head"); }),
                 params.end());
    check_params(params, loss, rng, 40, 1e-5);
}

TEST_CASE("classification head gradients") {
    std::mt19937_64 rng(4);
    auto s = make_model(Architecture::SDLM, 3, 24, 5, BackboneConfig::mini());
    auto emb = oracle::random_matrix(rng, 4, s.cnn->embedding_dim());
    const auto w = oracle::random_matrix(rng, 4, 3);
    // loss = sum(w * probs); d/dlogits = p * (w - sum(p w)) per row
    const auto probs = head_forward(s.cnn->head, emb);
    Matrix d_logits(4, 3);
    for (std::size_t r = 0; r < 4; ++r) {
        double pw = 0;
        for (std::size_t c = 0; c < 3; ++c) pw += probs(r, c) * w(r, c);
        for (std::size_t c = 0; c < 3; ++c) d_logits(r, c) = probs(r, c) * (w(r, c) - pw);
    }
    s.cnn->head.weight.zero_grad();
    s.cnn->head.bias.zero_grad();
    const auto d_emb = head_backward(s.cnn->head, emb, d_logits);
    auto loss = [&] { return weighted(head_forward(s.cnn->head, emb), w); };
    const auto num = oracle::numeric_gradient(emb.data, loss);
    for (std::size_t i = 0; i < num.size(); ++i) CHECK(std::fabs(num[i] - d_emb.data[i]) < 1e-6);
    check_params({&s.cnn->head.weight, &s.cnn->head.bias}, loss, rng, 100, 1e-6);
}

TEST_CASE("MLP branch gradients (mini)") {
    std::mt19937_64 rng(5);
    auto s = make_model(Architecture::U_SDLM, 3, 0, 6, BackboneConfig::mini());
    const auto x = oracle::random_matrix(rng, 4, 15);
    const auto w = oracle::random_matrix(rng, 4, s.config.mlp_dim());
    MlpTape tape;
    mlp_forward(*s.mlp, x, &tape);
    for (nn::Param* p : s.params()) p->zero_grad();
    mlp_backward(*s.mlp, tape, w);
    auto loss = [&] { return weighted(mlp_forward(*s.mlp, x, nullptr), w); };
    check_params(s.params(), loss, rng, 200, 1e-6);
}

TEST_CASE("center generator gradients (mini)") {
    std::mt19937_64 rng(6);
    auto s = make_model(Architecture::ROBUST_MBFD, 3, 24, 7, BackboneConfig::mini());
    const std::vector<int> labels = {0, 2, 2, 1, 0};
    for (auto* gen : {&*s.center_cnn, &*s.center_mlp}) {
        const auto w = oracle::random_matrix(rng, labels.size(), gen->dense.out);
        CenterTape tape;
        center_forward(*gen, labels, nn::Mode::Train, &tape);
        for (nn::Param* p : s.params()) p->zero_grad();
        center_backward(*gen, tape, w);
        auto loss = [&] {
            CenterTape t;
            return weighted(center_forward(*gen, labels, nn::Mode::Train, &t), w);
        };
        check_params({&gen->dense.weight, &gen->dense.bias, &gen->bn.gamma, &gen->bn.beta}, loss, rng, 100, 1e-5);
    }
}

TEST_CASE("full-size CNN gradient spot check") {
    std::mt19937_64 rng(8);
    auto s = make_model(Architecture::SDLM, 3, 96, 11);
    const auto x = oracle::random_matrix(rng, 2, 96);
    const auto w = oracle::random_matrix(rng, 2, 96);
    CnnTape tape;
    cnn_forward(*s.cnn, x, nn::Mode::Train, &tape);
    for (nn::Param* p : s.params()) p->zero_grad();
    cnn_backward(*s.cnn, tape, w);
    auto loss = [&] {
        CnnTape t;
        return weighted(cnn_forward(*s.cnn, x, nn::Mode::Train, &t), w);
    };
    auto params = prefixed(s, "cnn.");
    params.erase(std::remove_if(params.begin(), params.end(), [](nn::Param* p) { return p->name.starts_with("cnn.head"); }),
                 params.end());
    check_params(params, loss, rng, 3, 1e-4);
}

TEST_CASE("checkpoint round trip reproduces eval outputs") {
    std::mt19937_64 rng(9);
    auto s = make_model(Architecture::ROBUST_MBFD, 3, 32, 12, BackboneConfig::mini());
    // move running statistics away from their initial values
    CnnTape tape;
    const auto x = oracle::random_matrix(rng, 4, 32);
    cnn_forward(*s.cnn, x, nn::Mode::Train, &tape);
    cnn_commit(*s.cnn, tape);
    const auto dir = scratch("ckpt");
    save_checkpoint(s, dir);
    CHECK(fs::exists(dir / "checkpoint.bin"));
    CHECK(fs::exists(dir / "checkpoint.json"));
    const auto back = load_checkpoint(dir);
    CHECK(back.architecture == s.architecture);
    CHECK(back.class_count == 3);
    CHECK(back.input_length == 32);
    CHECK(back.config == s.config);
    const auto feats = oracle::random_signal(rng, 15);
    const auto a = robust_forward(s, x.row(0), feats), b = robust_forward(back, x.row(0), feats);
    // weights are stored as float32
    for (std::size_t i = 0; i < a.concat.size(); ++i) CHECK(b.concat[i] == doctest::Approx(a.concat[i]).epsilon(1e-5));
    CHECK_THROWS_AS(load_checkpoint(dir / "nope"), MissingDataError);
}

TEST_CASE("backbone config JSON round trip") {
    const auto m = BackboneConfig::mini();
    CHECK(backbone_config_from_json(to_json(m)) == m);
    CHECK(backbone_config_from_json(to_json(BackboneConfig{})) == BackboneConfig{});
}
