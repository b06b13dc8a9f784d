#include "mbfd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "mbfd/error.hpp"

namespace mbfd {
namespace {

using nn::Mode;

Matrix gather(const Matrix& m, std::span<const std::size_t> rows) {
    Matrix out(rows.size(), m.cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= m.rows) throw ShapeError("row index out of range");
        std::copy_n(m.data.begin() + static_cast<std::ptrdiff_t>(rows[i] * m.cols), m.cols,
                    out.data.begin() + static_cast<std::ptrdiff_t>(i * m.cols));
    }
    return out;
}

void scatter_add(Matrix& dst, std::span<const std::size_t> rows, const Matrix& src, double scale) {
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t c = 0; c < src.cols; ++c) dst(rows[i], c) += scale * src(i, c);
}

Matrix one_hot(std::span<const int> labels, std::size_t classes) {
    Matrix y(labels.size(), classes);
    for (std::size_t i = 0; i < labels.size(); ++i) y(i, static_cast<std::size_t>(labels[i])) = 1.0;
    return y;
}

bool finite(const BatchLoss& l) {
    return std::isfinite(l.entropy) && std::isfinite(l.triplet) && std::isfinite(l.double_cnn) &&
           std::isfinite(l.double_mlp) && std::isfinite(l.total);
}

void check_training_set(const ModelState& state, const TrainingSet& data) {
    if (data.size() == 0) throw Error("training split is empty");
    for (int l : data.labels)
        if (l < 0 || static_cast<std::size_t>(l) >= state.class_count)
            throw Error("label " + std::to_string(l) + " outside the " + std::to_string(state.class_count) +
                        " classes");
    if (state.cnn && (data.windows.rows != data.size() || data.windows.cols != state.input_length))
        throw ShapeError("windows do not match the model input length or label count");
    if (state.mlp && (data.features.rows != data.size() || data.features.cols != state.config.feature_dim))
        throw ShapeError("feature matrix does not match the model feature dimension or label count");
    const auto all_finite = [](const Matrix& m) {
        return std::all_of(m.data.begin(), m.data.end(), [](double v) { return std::isfinite(v); });
    };
    if (!all_finite(data.windows) || !all_finite(data.features))
        throw NumericError("training inputs contain NaN or infinity");
}

// Cross-entropy over `rows` of the batch, gradients scattered into d_logits.
double head_entropy(const Matrix& probs, std::span<const int> labels, std::span<const std::size_t> rows,
                    Matrix* d_logits) {
    std::vector<int> sel(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) sel[i] = labels[rows[i]];
    const Matrix p = gather(probs, rows);
    const Matrix y = one_hot(sel, probs.cols);
    if (d_logits) scatter_add(*d_logits, rows, losses::cross_entropy_logit_grad(y, p), 1.0);
    return losses::cross_entropy(y, p);
}

std::string csv_row(const BatchLoss& l) {
    return fmt::format("{},{},{},{},{}", l.entropy, l.triplet, l.double_cnn, l.double_mlp, l.total);
}

}  // namespace

nlohmann::json to_json(const TrainConfig& c) {
    return {{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
            {"beta1", c.beta1},   {"beta2", c.beta2},           {"epsilon", c.epsilon},
            {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.seed = j.value("seed", c.seed);
    if (c.batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(c.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    return c;
}

TripletBatch mine_triplets(std::span<const int> labels, std::mt19937_64& rng) {
    TripletBatch out;
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        pos.clear();
        neg.clear();
        for (std::size_t j = 0; j < labels.size(); ++j) {
            if (j == i) continue;
            (labels[j] == labels[i] ? pos : neg).push_back(j);
        }
        if (pos.empty() || neg.empty()) continue;
        std::uniform_int_distribution<std::size_t> pick_pos(0, pos.size() - 1);
        std::uniform_int_distribution<std::size_t> pick_neg(0, neg.size() - 1);
        out.anchors.push_back(i);
        out.positives.push_back(pos[pick_pos(rng)]);
        out.negatives.push_back(neg[pick_neg(rng)]);
    }
    return out;
}

std::vector<std::vector<std::size_t>> balanced_batches(std::span<const int> labels, std::size_t batch_size,
                                                       std::mt19937_64& rng) {
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    int max_label = -1;
    for (int l : labels) max_label = std::max(max_label, l);
    std::vector<std::vector<std::size_t>> per_class(static_cast<std::size_t>(max_label + 1));
    for (std::size_t i = 0; i < labels.size(); ++i) per_class[static_cast<std::size_t>(labels[i])].push_back(i);
    std::size_t longest = 0;
    for (auto& members : per_class) {
        std::shuffle(members.begin(), members.end(), rng);
        longest = std::max(longest, members.size());
    }
    std::vector<std::size_t> order;
    order.reserve(labels.size());
    for (std::size_t r = 0; r < longest; ++r)
        for (const auto& members : per_class)
            if (r < members.size()) order.push_back(members[r]);

    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < order.size(); i += batch_size)
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                             order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
    return batches;
}

BatchLoss batch_loss(ModelState& state, const TrainingSet& data, std::span<const std::size_t> batch,
                     const TripletBatch& triplets, const losses::LossConfig& cfg, bool backward, BatchTapes* tapes) {
    if (batch.empty()) throw Error("empty batch");
    BatchTapes local;
    BatchTapes& tp = tapes ? *tapes : local;
    tp.center_cnn = {};
    tp.center_mlp = {};

    std::vector<int> labels(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) labels[i] = data.labels.at(batch[i]);

    Matrix emb_cnn, emb_mlp, d_cnn, d_mlp;
    if (state.cnn) {
        emb_cnn = cnn_forward(*state.cnn, gather(data.windows, batch), Mode::Train, &tp.cnn);
        d_cnn = Matrix(emb_cnn.rows, emb_cnn.cols);
    }
    if (state.mlp) {
        emb_mlp = mlp_forward(*state.mlp, gather(data.features, batch), &tp.mlp);
        d_mlp = Matrix(emb_mlp.rows, emb_mlp.cols);
    }

    const std::span<const std::size_t> a = triplets.anchors, p = triplets.positives, n = triplets.negatives;
    std::vector<std::size_t> all(batch.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

    BatchLoss loss;
    loss.triplets = triplets.size();
    Matrix d_logits;
    Matrix probs;
    if (state.cnn) {
        probs = head_forward(state.cnn->head, emb_cnn);
        d_logits = Matrix(probs.rows, probs.cols);
    }

    switch (state.architecture) {
        case Architecture::SDLM:
            loss.entropy = head_entropy(probs, labels, all, backward ? &d_logits : nullptr);
            loss.total = loss.entropy;
            break;
        case Architecture::S_SDLM: {
            if (!triplets.empty()) {
                const auto g = losses::triplet_loss_grad(gather(emb_cnn, a), gather(emb_cnn, p), gather(emb_cnn, n),
                                                         cfg.margin);
                loss.triplet = g.value;
                scatter_add(d_cnn, a, g.d_anchor, 1.0);
                scatter_add(d_cnn, p, g.d_positive, 1.0);
                scatter_add(d_cnn, n, g.d_negative, 1.0);
            }
            Matrix d_sel(probs.rows, probs.cols);
            loss.entropy = head_entropy(probs, labels, triplets.empty() ? std::span<const std::size_t>(all) : a,
                                        backward ? &d_sel : nullptr);
            for (std::size_t i = 0; i < d_sel.data.size(); ++i) d_logits.data[i] = cfg.lambda_ssdlm * d_sel.data[i];
            loss.total = losses::ssdlm_loss(loss.triplet, loss.entropy, cfg.lambda_ssdlm);
            break;
        }
        case Architecture::U_SDLM:
            if (!triplets.empty()) {
                const auto g = losses::triplet_loss_grad(gather(emb_mlp, a), gather(emb_mlp, p), gather(emb_mlp, n),
                                                         cfg.margin);
                loss.triplet = g.value;
                scatter_add(d_mlp, a, g.d_anchor, 1.0);
                scatter_add(d_mlp, p, g.d_positive, 1.0);
                scatter_add(d_mlp, n, g.d_negative, 1.0);
            }
            loss.total = loss.triplet;
            break;
        case Architecture::ROBUST_MBFD: {
            loss.entropy = head_entropy(probs, labels, all, backward ? &d_logits : nullptr);
            if (!triplets.empty()) {
                const double w_cnn = cfg.Lambda, w_mlp = cfg.Lambda * cfg.lambda_double;
                const Matrix c_cnn = center_forward(*state.center_cnn, labels, Mode::Train, &tp.center_cnn);
                const Matrix c_mlp = center_forward(*state.center_mlp, labels, Mode::Train, &tp.center_mlp);
                const auto gc = losses::double_loss_grad(gather(emb_cnn, a), gather(emb_cnn, p), gather(emb_cnn, n),
                                                         gather(c_cnn, a), cfg.margin, cfg.gamma);
                const auto gm = losses::double_loss_grad(gather(emb_mlp, a), gather(emb_mlp, p), gather(emb_mlp, n),
                                                         gather(c_mlp, a), cfg.margin, cfg.gamma);
                loss.double_cnn = gc.value;
                loss.double_mlp = gm.value;
                if (backward) {
                    scatter_add(d_cnn, a, gc.d_anchor, w_cnn);
                    scatter_add(d_cnn, p, gc.d_positive, w_cnn);
                    scatter_add(d_cnn, n, gc.d_negative, w_cnn);
                    scatter_add(d_mlp, a, gm.d_anchor, w_mlp);
                    scatter_add(d_mlp, p, gm.d_positive, w_mlp);
                    scatter_add(d_mlp, n, gm.d_negative, w_mlp);
                    Matrix d_center(c_cnn.rows, c_cnn.cols);
                    scatter_add(d_center, a, gc.d_center, w_cnn);
                    center_backward(*state.center_cnn, tp.center_cnn, d_center);
                    d_center = Matrix(c_mlp.rows, c_mlp.cols);
                    scatter_add(d_center, a, gm.d_center, w_mlp);
                    center_backward(*state.center_mlp, tp.center_mlp, d_center);
                }
            }
            loss.total = losses::total_loss(loss.entropy, loss.double_cnn, loss.double_mlp, cfg);
            break;
        }
    }

    if (backward) {
        if (state.cnn) {
            const Matrix d_head = head_backward(state.cnn->head, emb_cnn, d_logits);
            for (std::size_t i = 0; i < d_cnn.data.size(); ++i) d_cnn.data[i] += d_head.data[i];
            cnn_backward(*state.cnn, tp.cnn, d_cnn);
        }
        if (state.mlp) mlp_backward(*state.mlp, tp.mlp, d_mlp);
    }
    return loss;
}

void commit_batch_norms(ModelState& state, const BatchTapes& tapes) {
    if (state.cnn) cnn_commit(*state.cnn, tapes.cnn);
    if (state.center_cnn && tapes.center_cnn.bn.batch > 0) center_commit(*state.center_cnn, tapes.center_cnn);
    if (state.center_mlp && tapes.center_mlp.bn.batch > 0) center_commit(*state.center_mlp, tapes.center_mlp);
}

Adam::Adam(const ModelState& state, const TrainConfig& cfg) : cfg_(cfg) {
    for (const auto* p : state.params()) {
        m_.emplace_back(p->size(), 0.0);
        v_.emplace_back(p->size(), 0.0);
    }
}

void Adam::step(ModelState& state) {
    auto params = state.params();
    if (params.size() != m_.size()) throw Error("optimizer state does not match the model");
    ++t_;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = *params[k];
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double g = p.grad[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            p.value[i] -= cfg_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.epsilon);
        }
    }
}

bool train_step(ModelState& state, Adam& opt, const TrainingSet& data, std::span<const std::size_t> batch,
                const TripletBatch& triplets, const losses::LossConfig& cfg, BatchLoss& out) {
    if (state.architecture == Architecture::U_SDLM && triplets.empty()) return false;
    for (auto* p : state.params()) p->zero_grad();
    BatchTapes tapes;
    out = batch_loss(state, data, batch, triplets, cfg, true, &tapes);
    if (!finite(out))
        throw NumericError(fmt::format("non-finite loss after {} steps: entropy={} triplet={} double_cnn={} "
                                       "double_mlp={} total={} (batch of {}, {} triplets)",
                                       opt.steps(), out.entropy, out.triplet, out.double_cnn, out.double_mlp,
                                       out.total, batch.size(), out.triplets));
    opt.step(state);
    commit_batch_norms(state, tapes);
    return true;
}

std::string TrainLog::steps_csv() const {
    std::string s = "epoch,step,triplets,entropy,triplet,double_cnn,double_mlp,total\n";
    for (const auto& r : steps) s += fmt::format("{},{},{},{}\n", r.epoch, r.step, r.loss.triplets, csv_row(r.loss));
    return s;
}

std::string TrainLog::epochs_csv() const {
    std::string s = "epoch,steps,entropy,triplet,double_cnn,double_mlp,total\n";
    for (const auto& r : epochs) s += fmt::format("{},{},{}\n", r.epoch, r.steps, csv_row(r.mean));
    return s;
}

void TrainLog::write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    for (const auto& [name, text] : {std::pair{"loss_steps.csv", steps_csv()}, std::pair{"loss_epochs.csv", epochs_csv()}}) {
        std::ofstream out(dir / name);
        if (!out) throw Error("cannot write " + (dir / name).string());
        out << text;
    }
}

TrainResult train(Architecture arch, const TrainingSet& data, const TrainConfig& cfg,
                  const losses::LossConfig& loss_cfg, const BackboneConfig& backbone) {
    if (data.size() == 0) throw Error("training split is empty");
    TrainResult result{make_model(arch, data.class_count, uses_cnn(arch) ? data.windows.cols : 0, cfg.seed, backbone),
                       {}};
    ModelState& state = result.state;
    check_training_set(state, data);

    Adam opt(state, cfg);
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        EpochRecord rec;
        rec.epoch = epoch;
        std::size_t step = 0;
        for (const auto& batch : balanced_batches(data.labels, cfg.batch_size, rng)) {
            std::vector<int> labels(batch.size());
            for (std::size_t i = 0; i < batch.size(); ++i) labels[i] = data.labels[batch[i]];
            const TripletBatch triplets = mine_triplets(labels, rng);
            BatchLoss loss;
            ++step;
            if (!train_step(state, opt, data, batch, triplets, loss_cfg, loss)) continue;
            result.log.steps.push_back({epoch, step, loss});
            ++rec.steps;
            rec.mean.entropy += loss.entropy;
            rec.mean.triplet += loss.triplet;
            rec.mean.double_cnn += loss.double_cnn;
            rec.mean.double_mlp += loss.double_mlp;
            rec.mean.total += loss.total;
            rec.mean.triplets += loss.triplets;
        }
        if (rec.steps > 0) {
            const double inv = 1.0 / static_cast<double>(rec.steps);
            rec.mean.entropy *= inv;
            rec.mean.triplet *= inv;
            rec.mean.double_cnn *= inv;
            rec.mean.double_mlp *= inv;
            rec.mean.total *= inv;
        }
        spdlog::info("{} epoch {}/{}: loss {:.6f} over {} steps", to_string(arch), epoch, cfg.epochs, rec.mean.total,
                     rec.steps);
        result.log.epochs.push_back(rec);
    }
    return result;
}

Matrix extract_features(const ModelState& state, const Matrix& windows, const Matrix& features) {
    const std::size_t n = state.cnn ? windows.rows : features.rows;
    if (state.cnn && state.mlp && windows.rows != features.rows)
        throw ShapeError("window and feature matrices describe different sample counts");
    if (state.cnn && windows.cols != state.input_length)
        throw ShapeError("window length " + std::to_string(windows.cols) + " != model input length " +
                         std::to_string(state.input_length));
    Matrix out(n, state.embedding_dim());
    if (n == 0) return out;

    std::size_t chunk = n;
    if (state.cnn) {
        const std::size_t per_sample = std::max<std::size_t>(1, windows.cols * state.config.conv1_filters);
        chunk = std::clamp<std::size_t>((std::size_t{1} << 22) / per_sample, 1, 64);
    }
    for (std::size_t start = 0; start < n; start += chunk) {
        const std::size_t count = std::min(chunk, n - start);
        std::vector<std::size_t> rows(count);
        for (std::size_t i = 0; i < count; ++i) rows[i] = start + i;
        std::size_t col = 0;
        if (state.cnn) {
            const Matrix e = cnn_forward(*state.cnn, gather(windows, rows), Mode::Eval, nullptr);
            for (std::size_t i = 0; i < count; ++i) std::copy(e.row(i).begin(), e.row(i).end(), out.row(start + i).begin());
            col = e.cols;
        }
        if (state.mlp) {
            const Matrix e = mlp_forward(*state.mlp, gather(features, rows), nullptr);
            for (std::size_t i = 0; i < count; ++i)
                std::copy(e.row(i).begin(), e.row(i).end(), out.row(start + i).begin() + static_cast<std::ptrdiff_t>(col));
        }
    }
    return out;
}

}  // namespace mbfd
