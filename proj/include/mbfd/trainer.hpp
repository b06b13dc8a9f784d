#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mbfd/backbones.hpp"
#include "mbfd/losses.hpp"
#include "mbfd/matrix.hpp"

namespace mbfd {

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 16;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Indices into the current batch.
struct TripletBatch {
    std::vector<std::size_t> anchors, positives, negatives;

    std::size_t size() const { return anchors.size(); }
    bool empty() const { return anchors.empty(); }
};

// Every sample that has a same-label partner and a different-label sample in
// the batch becomes an anchor, with one uniformly drawn positive and negative.
TripletBatch mine_triplets(std::span<const int> labels, std::mt19937_64& rng);

// Row i of `windows` and of `features` describe the same physical sample. A
// matrix may be empty when the architecture has no branch that reads it.
struct TrainingSet {
    Matrix windows;
    Matrix features;
    std::vector<int> labels;
    std::size_t class_count = 0;

    std::size_t size() const { return labels.size(); }
};

// Per-epoch class-balanced order: each class list is shuffled, the lists are
// interleaved round-robin in class order, and the result is cut into batches.
std::vector<std::vector<std::size_t>> balanced_batches(std::span<const int> labels, std::size_t batch_size,
                                                       std::mt19937_64& rng);

struct BatchLoss {
    double entropy = 0.0;
    double triplet = 0.0;
    double double_cnn = 0.0;
    double double_mlp = 0.0;
    double total = 0.0;
    std::size_t triplets = 0;
};

struct BatchTapes {
    CnnTape cnn;
    MlpTape mlp;
    CenterTape center_cnn, center_mlp;
};

// The architecture's objective on one batch, with batch-norm layers in train
// mode. When `backward` is set the parameter gradients are accumulated (not
// zeroed first). Running statistics are left untouched; pass `tapes` and call
// commit_batch_norms to fold them in.
BatchLoss batch_loss(ModelState& state, const TrainingSet& data, std::span<const std::size_t> batch,
                     const TripletBatch& triplets, const losses::LossConfig& cfg, bool backward,
                     BatchTapes* tapes = nullptr);
void commit_batch_norms(ModelState& state, const BatchTapes& tapes);

class Adam {
public:
    Adam(const ModelState& state, const TrainConfig& cfg);
    void step(ModelState& state);
    std::size_t steps() const { return t_; }

private:
    TrainConfig cfg_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

struct StepRecord {
    std::size_t epoch = 0, step = 0;
    BatchLoss loss;
};

struct EpochRecord {
    std::size_t epoch = 0, steps = 0;
    BatchLoss mean;  // component means over the epoch's steps
};

struct TrainLog {
    std::vector<StepRecord> steps;
    std::vector<EpochRecord> epochs;

    // Shortest round-trip decimal for every double, so equal logs compare equal as text.
    std::string steps_csv() const;
    std::string epochs_csv() const;
    void write(const std::filesystem::path& dir) const;  // loss_steps.csv, loss_epochs.csv
};

// Zeroes gradients, runs batch_loss with backward, aborts with NumericError
// on a non-finite loss, steps the optimizer and commits batch statistics.
// U-SDLM batches without triplets have nothing to learn from and are skipped
// (returns false).
bool train_step(ModelState& state, Adam& opt, const TrainingSet& data, std::span<const std::size_t> batch,
                const TripletBatch& triplets, const losses::LossConfig& cfg, BatchLoss& out);

struct TrainResult {
    ModelState state;
    TrainLog log;
};

TrainResult train(Architecture arch, const TrainingSet& data, const TrainConfig& train_cfg,
                  const losses::LossConfig& loss_cfg, const BackboneConfig& backbone = {});

// Eval-mode embeddings: CNN (SDLM, S-SDLM), MLP (U-SDLM) or their
// concatenation (Robust-MBFD).
Matrix extract_features(const ModelState& state, const Matrix& windows, const Matrix& features);

}  // namespace mbfd
