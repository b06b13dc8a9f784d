#pragma once

// The deep models: a raw-window CNN with residual blocks and self-attention
// (SDLM, S-SDLM and the first Robust-MBFD branch), a feature MLP (U-SDLM and
// the second branch), and the per-class center generators.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mbfd/layers.hpp"
#include "mbfd/matrix.hpp"

namespace mbfd {

enum class Architecture { SDLM, S_SDLM, U_SDLM, ROBUST_MBFD };

std::string_view to_string(Architecture a);
Architecture parse_architecture(std::string_view name);

bool uses_cnn(Architecture a);
bool uses_mlp(Architecture a);

enum class Branch { CNN, MLP };

struct BackboneConfig {
    std::size_t conv1_filters = 48;
    std::size_t conv1_kernel = 80;
    std::size_t pool = 4;
    std::size_t res_mid = 48;
    std::size_t res_out = 96;
    std::size_t res_kernel = 3;
    std::size_t heads = 4;
    std::size_t key_dim = 48;
    std::vector<std::size_t> mlp_widths{1024, 512, 128, 512, 1024, 256};
    std::size_t feature_dim = 15;
    double bn_momentum = 0.99;
    double bn_eps = 1e-3;
    double ln_eps = 1e-3;

    // A few channels per layer, for gradient checks.
    static BackboneConfig mini();

    std::size_t cnn_dim() const { return res_out; }
    std::size_t mlp_dim() const { return mlp_widths.back(); }

    friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

nlohmann::json to_json(const BackboneConfig& c);
BackboneConfig backbone_config_from_json(const nlohmann::json& j);

struct ResidualBlock {
    nn::Conv1d conv_a;
    nn::BatchNorm bn_a;
    nn::Conv1d conv_b;
    nn::BatchNorm bn_b;
    std::optional<nn::Conv1d> projection;  // 1x1 skip projection when channel counts differ
};

struct CnnBranch {
    nn::Conv1d conv1;
    nn::BatchNorm bn1;
    std::size_t pool = 4;
    ResidualBlock res1, res2;
    nn::MultiHeadAttention attention;
    nn::LayerNorm attention_norm;
    nn::Dense head;  // embedding -> class logits

    std::size_t embedding_dim() const { return attention.model_dim; }
};

struct MlpBranch {
    std::vector<nn::Dense> layers;  // ReLU after every layer but the last
};

// one-hot(label) -> Dense -> BatchNorm
struct CenterGenerator {
    nn::Dense dense;
    nn::BatchNorm bn;
};

struct ModelState {
    Architecture architecture = Architecture::SDLM;
    std::uint64_t seed = 0;
    std::size_t class_count = 0;
    std::size_t input_length = 0;  // raw window length for the CNN branch
    BackboneConfig config;

    std::optional<CnnBranch> cnn;
    std::optional<MlpBranch> mlp;
    std::optional<CenterGenerator> center_cnn, center_mlp;

    // Trainable parameters in a fixed order.
    std::vector<nn::Param*> params();
    std::vector<const nn::Param*> params() const;
    std::vector<nn::BatchNorm*> batch_norms();
    std::vector<const nn::BatchNorm*> batch_norms() const;
    std::size_t parameter_count() const;

    // Dimension of extract_features output: 96, 256 or 352 at full size.
    std::size_t embedding_dim() const;
};

// Parameters are drawn from a generator seeded with `seed`.
ModelState make_model(Architecture arch, std::size_t class_count, std::size_t input_length, std::uint64_t seed,
                      const BackboneConfig& config = {});

// ------------------------------------------------------------ batched passes

struct CnnTape {
    std::size_t batch = 0, length = 0, steps = 0;
    std::vector<double> x;
    nn::BatchNorm::Cache bn1;
    std::vector<double> r1;
    std::vector<std::uint32_t> argmax;
    std::vector<double> pooled;
    struct Block {
        nn::BatchNorm::Cache bn_a, bn_b;
        std::vector<double> h, out;
    } res1, res2;
    std::vector<double> seq;  // batch x steps x dim
    std::vector<nn::MultiHeadAttention::Cache> attention;
    nn::LayerNorm::Cache norm;
};

// Rows of `windows` are samples. Returns the batch x dim embedding matrix.
// Train mode normalizes with batch statistics and needs a tape.
Matrix cnn_forward(const CnnBranch& net, const Matrix& windows, nn::Mode mode, CnnTape* tape);
// Accumulates parameter gradients from d(loss)/d(embedding).
void cnn_backward(CnnBranch& net, const CnnTape& tape, const Matrix& d_embedding);
// Folds the tape's batch statistics into the running statistics.
void cnn_commit(CnnBranch& net, const CnnTape& tape);

// Softmax class probabilities from embeddings.
Matrix head_forward(const nn::Dense& head, const Matrix& embedding);
// Given d(loss)/d(logits), accumulates head gradients and returns d(loss)/d(embedding).
Matrix head_backward(nn::Dense& head, const Matrix& embedding, const Matrix& d_logits);

struct MlpTape {
    Matrix input;
    std::vector<Matrix> outputs;  // post-activation output of every layer
};

Matrix mlp_forward(const MlpBranch& net, const Matrix& features, MlpTape* tape);
void mlp_backward(MlpBranch& net, const MlpTape& tape, const Matrix& d_out);

struct CenterTape {
    Matrix one_hot;
    nn::BatchNorm::Cache bn;
};

Matrix center_forward(const CenterGenerator& gen, std::span<const int> labels, nn::Mode mode, CenterTape* tape);
void center_backward(CenterGenerator& gen, const CenterTape& tape, const Matrix& d_out);
void center_commit(CenterGenerator& gen, const CenterTape& tape);

// ------------------------------------------------------------ single-sample API

struct SdlmOutput {
    std::vector<double> embedding;      // CNN, dim 96
    std::vector<double> probabilities;  // class_count
};

struct RobustOutput {
    std::vector<double> cnn, mlp, concat;
    std::vector<double> probabilities;
};

// Train mode uses the statistics of the single window and leaves the running
// statistics untouched.
SdlmOutput sdlm_forward(const ModelState& state, std::span<const double> window, nn::Mode mode = nn::Mode::Eval);
std::vector<double> usdlm_forward(const ModelState& state, std::span<const double> features);
std::vector<double> center_embedding(const ModelState& state, int label, Branch branch);
RobustOutput robust_forward(const ModelState& state, std::span<const double> window, std::span<const double> features,
                            nn::Mode mode = nn::Mode::Eval);

// ------------------------------------------------------------ checkpoints

// Writes <dir>/checkpoint.bin (float32 named arrays, running statistics
// included) and <dir>/checkpoint.json (architecture, seed, class count, input
// length, backbone sizes).
void save_checkpoint(const ModelState& state, const std::filesystem::path& dir);
ModelState load_checkpoint(const std::filesystem::path& dir);

}  // namespace mbfd
