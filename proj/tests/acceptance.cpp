// Acceptance run: one PASS/FAIL/SKIP line per criterion. Exit status is 1 if
// any hard criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "mbfd/error.hpp"
#include "mbfd/features.hpp"
#include "mbfd/harness.hpp"
#include "mbfd/kernels.hpp"
#include "mbfd/losses.hpp"
#include "mbfd/preprocess.hpp"
#include "oracles.hpp"

using namespace mbfd;
namespace fs = std::filesystem;

namespace {

enum class Status { Pass, Fail, Skip };

struct Outcome {
    Status status = Status::Pass;
    std::string detail;
};

Outcome pass_if(bool ok, std::string detail) { return {ok ? Status::Pass : Status::Fail, std::move(detail)}; }

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("mbfd_acceptance_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ExperimentConfig from_yaml(const std::string& text) { return experiment_config_from_json(yaml_to_json(text)); }

// ---------------------------------------------------------------- hard criteria

Outcome feature_oracle() {
    std::mt19937_64 rng(20240);
    double worst_time = 0, worst_freq = 0, extract_s = 0;
    std::size_t rolloff_ties = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 32 + rng() % 993;
        const double rate = 1000.0 + static_cast<double>(rng() % 100000);
        const auto x = oracle::random_signal(rng, n);
        const auto t0 = Clock::now();
        const auto got = features::extract(x, rate);
        extract_s += seconds_since(t0);
        const auto t = oracle::time_features(x);
        const auto f = oracle::freq_features(x, rate);
        for (std::size_t i = 0; i < features::kTimeCount; ++i) worst_time = std::max(worst_time, oracle::rel_err(got[i], t[i]));
        for (std::size_t i = 0; i < features::kFreqCount; ++i) {
            const double e = oracle::rel_err(got[features::kTimeCount + i], f[i]);
            if (i == 3 && e > 1e-12) {
                const bool one_bin = std::fabs(got[features::kTimeCount + i] - f[i]) <= rate / static_cast<double>(n) * (1 + 1e-9);
                if (oracle::rolloff_ambiguous(x) && one_bin) {
                    ++rolloff_ties;
                    continue;
                }
            }
            worst_freq = std::max(worst_freq, e);
        }
    }
    return pass_if(worst_time <= 1e-9 && worst_freq <= 1e-6 && extract_s < 30.0,
                   fmt::format("1000 signals, max rel err time {:.2e} spectral {:.2e}, {} roll-off ties, extraction {:.2f} s",
                               worst_time, worst_freq, rolloff_ties, extract_s));
}

// Columns: random, constant, zero IQR, all zero, heavy tailed.
Matrix degenerate_matrix(std::mt19937_64& rng, std::size_t rows) {
    auto m = oracle::random_matrix(rng, rows, 5, 3.0);
    std::cauchy_distribution<double> heavy(0.0, 1.0);
    for (std::size_t r = 0; r < rows; ++r) {
        m(r, 1) = 4.25;
        m(r, 2) = r == 0 ? 10.0 : 1.0;
        m(r, 3) = 0.0;
        m(r, 4) = heavy(rng);
    }
    return m;
}

Outcome normalization_invariants() {
    using namespace preprocess;
    std::mt19937_64 rng(31337);
    std::vector<std::string> broken;
    auto expect = [&](bool ok, Method m, const char* what) {
        if (!ok) broken.push_back(fmt::format("{} {}", to_string(m), what));
    };
    for (int trial = 0; trial < 100; ++trial) {
        const auto x = degenerate_matrix(rng, 8 + rng() % 60);
        for (Method m : kAllMethods) {
            const auto t = fit(m, x);
            const auto y = apply(t, x);
            expect(y.rows == x.rows && y.cols == x.cols, m, "shape");
            expect(std::all_of(y.data.begin(), y.data.end(), [](double v) { return std::isfinite(v); }), m, "finite");
            expect(m == Method::N ? t.columns == 0 || t.columns == x.cols : t.columns == x.cols, m, "state size");
            const auto again = from_json(to_json(t));
            expect(apply(again, x).data == y.data, m, "JSON round trip");
            switch (m) {
                case Method::MAS:
                    for (double v : y.data) expect(std::fabs(v) <= 1.0 + 1e-12, m, "range");
                    for (std::size_t r = 0; r < y.rows; ++r) expect(y(r, 3) == 0.0, m, "zero column");
                    break;
                case Method::SS:
                case Method::PT:
                    for (std::size_t c = 0; c < y.cols; ++c) {
                        std::vector<double> col;
                        for (std::size_t r = 0; r < y.rows; ++r) col.push_back(y(r, c));
                        const auto mu = oracle::mean(col);
                        const auto sd = std::sqrt(oracle::central_moment(col, 2));
                        expect(std::fabs(mu) <= 1e-9, m, "mean");
                        if (c == 1 || c == 3) expect(sd == 0.0, m, "constant column");
                        else if (m == Method::SS) expect(std::fabs(sd - 1.0) <= 1e-9, m, "std");
                    }
                    break;
                case Method::RS:
                    for (std::size_t r = 0; r < y.rows; ++r) expect(y(r, 1) == 0.0 && y(r, 2) == 0.0, m, "zero IQR");
                    break;
                case Method::N: {
                    auto with_zero_row = x;
                    for (std::size_t c = 0; c < x.cols; ++c) with_zero_row(1, c) = 0.0;
                    const auto yz = apply(fit(m, with_zero_row), with_zero_row);
                    for (std::size_t r = 0; r < yz.rows; ++r) {
                        long double s = 0;
                        for (double v : yz.row(r)) s += static_cast<long double>(v) * v;
                        const double norm = std::sqrt(static_cast<double>(s));
                        expect(r == 1 ? norm == 0.0 : std::fabs(norm - 1.0) <= 1e-12, m, "row norm");
                    }
                    break;
                }
                case Method::QT:
                    for (double v : y.data) expect(v >= 0.0 && v <= 1.0, m, "range");
                    break;
            }
        }
        for (Method m : {Method::MAS, Method::N}) {
            const auto y = apply(fit(m, x), x);
            const auto z = apply(fit(m, y), y);
            double d = 0;
            for (std::size_t i = 0; i < y.data.size(); ++i) d = std::max(d, std::fabs(z.data[i] - y.data[i]));
            expect(d <= 1e-12, m, "idempotence");
        }
    }
    std::sort(broken.begin(), broken.end());
    broken.erase(std::unique(broken.begin(), broken.end()), broken.end());
    std::string detail = "100 matrices with constant, zero-IQR and zero columns, 6 methods";
    for (const auto& b : broken) detail += "; broken: " + b;
    return pass_if(broken.empty(), detail);
}

long double brute_hinge_sum(const Matrix& a, const Matrix& p, const Matrix& n, const Matrix* c, double m, double g) {
    long double s = 0;
    for (std::size_t i = 0; i < a.rows; ++i) {
        const auto ap = oracle::squared_distance(a.row(i), p.row(i));
        const auto an = oracle::squared_distance(a.row(i), n.row(i));
        const auto h = c ? g * (ap + oracle::squared_distance(a.row(i), c->row(i))) - an + m : ap - an + m;
        s += std::max(h, 0.0L);
    }
    return s / a.rows;
}

double min_hinge(const Matrix& a, const Matrix& p, const Matrix& n, const Matrix* c, double m, double g) {
    double best = 1e300;
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double h = c ? losses::double_H(a.row(i), p.row(i), n.row(i), c->row(i), m, g)
                           : losses::triplet_H(a.row(i), p.row(i), n.row(i), m);
        best = std::min(best, std::fabs(h));
    }
    return best;
}

double max_grad_gap(Matrix& x, const Matrix& analytic, const std::function<double()>& f) {
    const auto num = oracle::numeric_gradient(x.data, f);
    double worst = 0;
    for (std::size_t i = 0; i < num.size(); ++i) worst = std::max(worst, std::fabs(num[i] - analytic.data[i]));
    return worst;
}

Outcome loss_correctness() {
    std::mt19937_64 rng(4242);
    double value_err = 0, embed_gap = 0, center_gap = 0, param_gap = 0;

    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t rows = 1 + rng() % 16, dim = 1 + rng() % 32;
        const double m = 0.25 + (rng() % 8) * 0.25, g = 0.1 + (rng() % 9) * 0.1;
        const auto a = oracle::random_matrix(rng, rows, dim), p = oracle::random_matrix(rng, rows, dim),
                   n = oracle::random_matrix(rng, rows, dim), c = oracle::random_matrix(rng, rows, dim);
        const auto bt = static_cast<double>(brute_hinge_sum(a, p, n, nullptr, m, g));
        const auto bd = static_cast<double>(brute_hinge_sum(a, p, n, &c, m, g));
        value_err = std::max({value_err, oracle::rel_err(losses::triplet_loss(a, p, n, m), bt),
                              oracle::rel_err(losses::triplet_loss_grad(a, p, n, m).value, bt),
                              oracle::rel_err(losses::double_loss_branch(a, p, n, c, m, g), bd),
                              oracle::rel_err(losses::double_loss_grad(a, p, n, c, m, g).value, bd)});
        losses::LossConfig cfg;
        cfg.Lambda = 0.01 + (rng() % 100) * 0.01;
        cfg.lambda_double = 0.1 + (rng() % 9) * 0.1;
        const double ce = 0.1 + (rng() % 1000) * 1e-3, dm = bd * 0.5;
        const long double want = ce + static_cast<long double>(cfg.Lambda) * (bd + static_cast<long double>(cfg.lambda_double) * dm);
        value_err = std::max({value_err, oracle::rel_err(losses::total_loss(ce, bd, dm, cfg), static_cast<double>(want)),
                              oracle::rel_err(losses::ssdlm_loss(bt, ce, cfg.lambda_ssdlm),
                                              static_cast<double>(bt + static_cast<long double>(cfg.lambda_ssdlm) * ce))});
    }

    for (int checked = 0; checked < 40;) {
        auto a = oracle::random_matrix(rng, 6, 5), p = oracle::random_matrix(rng, 6, 5), n = oracle::random_matrix(rng, 6, 5),
             c = oracle::random_matrix(rng, 6, 5);
        if (min_hinge(a, p, n, nullptr, 1.0, 0.4) < 1e-3 || min_hinge(a, p, n, &c, 1.0, 0.4) < 1e-3) continue;
        ++checked;
        const auto gt = losses::triplet_loss_grad(a, p, n, 1.0);
        auto ft = [&] { return losses::triplet_loss(a, p, n, 1.0); };
        embed_gap = std::max({embed_gap, max_grad_gap(a, gt.d_anchor, ft), max_grad_gap(p, gt.d_positive, ft),
                              max_grad_gap(n, gt.d_negative, ft)});
        const auto gd = losses::double_loss_grad(a, p, n, c, 1.0, 0.4);
        auto fd = [&] { return losses::double_loss_branch(a, p, n, c, 1.0, 0.4); };
        embed_gap = std::max({embed_gap, max_grad_gap(a, gd.d_anchor, fd), max_grad_gap(p, gd.d_positive, fd),
                              max_grad_gap(n, gd.d_negative, fd)});
        center_gap = std::max(center_gap, max_grad_gap(c, gd.d_center, fd));
    }

    // Through the networks: every parameter of both branches and both center generators.
    TrainingSet data;
    data.class_count = 3;
    data.windows = oracle::random_matrix(rng, 9, 32);
    data.features = oracle::random_matrix(rng, 9, 15);
    for (std::size_t i = 0; i < 9; ++i) data.labels.push_back(static_cast<int>(i % 3));
    auto state = make_model(Architecture::ROBUST_MBFD, 3, 32, 77, BackboneConfig::mini());
    std::vector<std::size_t> batch(9);
    for (std::size_t i = 0; i < 9; ++i) batch[i] = i;
    std::mt19937_64 mine(78);
    const auto triplets = mine_triplets(data.labels, mine);
    losses::LossConfig cfg;
    cfg.Lambda = 0.5;
    for (auto* prm : state.params()) prm->zero_grad();
    batch_loss(state, data, batch, triplets, cfg, true);
    std::size_t center_params = 0;
    for (auto* prm : state.params()) {
        center_params += prm->name.find("center") != std::string::npos;
        for (std::size_t i = 0; i < prm->size(); i += 1 + prm->size() / 3) {
            const double keep = prm->value[i], h = 1e-6;
            prm->value[i] = keep + h;
            const double up = batch_loss(state, data, batch, triplets, cfg, false).total;
            prm->value[i] = keep - h;
            const double down = batch_loss(state, data, batch, triplets, cfg, false).total;
            prm->value[i] = keep;
            param_gap = std::max(param_gap, std::fabs((up - down) / (2 * h) - prm->grad[i]));
        }
    }

    return pass_if(value_err <= 1e-10 && embed_gap <= 1e-5 && center_gap <= 1e-5 && param_gap <= 1e-5 && center_params > 0,
                   fmt::format("values rel err {:.1e}; FD gap embeddings {:.1e}, centers {:.1e}, network parameters {:.1e} "
                               "({} center-generator tensors)",
                               value_err, embed_gap, center_gap, param_gap, center_params));
}

Outcome shape_suite() {
    std::mt19937_64 rng(96);
    std::vector<std::string> notes;
    bool ok = true;
    const auto feats = oracle::random_signal(rng, 15);
    const auto usdlm = make_model(Architecture::U_SDLM, 3, 0, 5);
    ok &= usdlm_forward(usdlm, feats).size() == 256 && usdlm.embedding_dim() == 256;
    for (std::size_t length : {std::size_t{4800}, std::size_t{255'900}}) {
        const auto window = oracle::random_signal(rng, length);
        const auto sdlm = make_model(Architecture::SDLM, 3, length, 5);
        const auto t0 = Clock::now();
        const auto s = sdlm_forward(sdlm, window);
        const double secs = seconds_since(t0);
        double psum = 0;
        for (double p : s.probabilities) psum += p;
        ok &= s.embedding.size() == 96 && s.probabilities.size() == 3 && std::fabs(psum - 1.0) < 1e-12;

        if (length == 4800) {
            const auto robust = make_model(Architecture::ROBUST_MBFD, 3, length, 5);
            const auto r = robust_forward(robust, window, feats);
            ok &= r.concat.size() == 352 && r.cnn.size() == 96 && r.mlp.size() == 256;
            ok &= std::equal(r.cnn.begin(), r.cnn.end(), r.concat.begin()) &&
                  std::equal(r.mlp.begin(), r.mlp.end(), r.concat.begin() + 96);
            ok &= center_embedding(robust, 2, Branch::CNN).size() == 96 &&
                  center_embedding(robust, 2, Branch::MLP).size() == 256;
        }
        notes.push_back(fmt::format("L={} SDLM forward {:.1f} s", length, secs));
    }
    return pass_if(ok, fmt::format("SDLM 96 + 3 probs, U-SDLM 256, Robust 352 = 96|256; {}; {}", notes[0], notes[1]));
}

Outcome split_fixtures() {
    using Ids = std::vector<std::string>;
    auto as_set = [](const Ids& v) { return std::set<std::string>(v.begin(), v.end()); };
    bool ok = true;

    const auto c1 = pu_c1();
    ok &= c1.classes.size() == 3 && c1.classes[0].train == Ids{"K002"} && c1.classes[0].test == Ids{"K001"} &&
          c1.classes[1].train == Ids{"KA01", "KA05", "KA07"} &&
          as_set(c1.classes[1].test) == as_set({"KA22", "KA04", "KA15", "KA30", "KA16"}) &&
          c1.classes[2].train == Ids{"KI01", "KI05", "KI07"} &&
          as_set(c1.classes[2].test) == as_set({"KI14", "KI21", "KI17", "KI18", "KI16"});

    const auto c2 = pu_c2_combinations();
    std::set<Ids> distinct;
    const std::vector<Ids> pools = {{"K001", "K002", "K003", "K004", "K005"},
                                    {"KA04", "KA15", "KA16", "KA22", "KA30"},
                                    {"KI04", "KI14", "KI16", "KI18", "KI21"}};
    for (const auto& s : c2) {
        ok &= s.train_sources().size() == 9 && s.test_sources().size() == 6;
        for (std::size_t c = 0; c < 3; ++c) {
            auto all = s.classes[c].train;
            all.insert(all.end(), s.classes[c].test.begin(), s.classes[c].test.end());
            ok &= as_set(all) == as_set(pools[c]) && all.size() == 5;
        }
        distinct.insert(s.train_sources());
    }
    ok &= c2.size() == 10 && distinct.size() == 10;

    std::vector<std::size_t> counts;
    for (int c = 1; c <= 4; ++c) counts.push_back(cwru_split(c).classes.size());
    ok &= counts == std::vector<std::size_t>{6, 24, 64, 4};

    const auto mfpt = mfpt_split();
    ok &= mfpt.classes.size() == 3 && mfpt.classes[0].train == Ids{"N1", "N2"} && mfpt.classes[0].test == Ids{"N2", "N3"} &&
          mfpt.classes[1].train == Ids{"O1", "O2", "O4", "O5", "O7", "O8", "O10"} &&
          mfpt.classes[1].test == Ids{"O3", "O6", "O9"} && mfpt.classes[2].train == Ids{"I1", "I2", "I4", "I5", "I7"} &&
          mfpt.classes[2].test == Ids{"I3", "I6"};
    const auto overlap = check_split(mfpt, dataset_manifest(DatasetKind::MFPT));
    ok &= overlap == Ids{"N2"} && mfpt.warnings.size() == 1;

    return pass_if(ok, fmt::format("PU-C1 exact, PU-C2 {} distinct 9/6 specs, CWRU classes {}/{}/{}/{}, MFPT verbatim "
                                   "with overlap warning on {}",
                                   distinct.size(), counts[0], counts[1], counts[2], counts[3],
                                   overlap.empty() ? "nothing" : overlap.front()));
}

Outcome determinism() {
    auto cfg = from_yaml("pipeline: ROBUST_MBFD\nbackend: SVM\ntrain: {epochs: 2}\nseed: 17\n");
    std::vector<std::string> outs;
    std::vector<double> accs;
    for (const char* name : {"det_a", "det_b"}) {
        cfg.output_dir = scratch(name);
        const auto r = run_experiment(cfg, false);
        accs.push_back(r.accuracy);
        outs.push_back(slurp(cfg.output_dir / "record.csv") + slurp(cfg.output_dir / "record.json") +
                       slurp(cfg.output_dir / "model" / "loss_steps.csv") +
                       slurp(cfg.output_dir / "model" / "loss_epochs.csv"));
    }
    return pass_if(outs[0] == outs[1] && outs[0].size() > 1000,
                   fmt::format("two fresh Robust-MBFD runs (full backbone, 2 epochs): {} bytes of records and loss logs {}",
                               outs[0].size(), outs[0] == outs[1] ? "identical" : "differ"));
}

Outcome end_to_end() {
    auto cfg = from_yaml("pipeline: ROBUST_MBFD\nbackend: EUCLIDEAN\ntrain: {epochs: 20}\n");
    cfg.output_dir = scratch("e2e");
    const auto t0 = Clock::now();
    const auto r = run_experiment(cfg, false);
    const double secs = seconds_since(t0);
    return pass_if(r.accuracy >= 95.0 && secs < 300.0,
                   fmt::format("synthetic 3-class, 20 epochs: accuracy {:.2f}% in {:.0f} s", r.accuracy, secs));
}

// ---------------------------------------------------------------- soft targets

fs::path data_root() {
    const char* env = std::getenv("MBFD_DATA_DIR");
    return env ? fs::path(env) : fs::path();
}

bool have_dataset(const std::string& dir) {
    const auto root = data_root();
    return !root.empty() && fs::is_directory(root / dir);
}

ExperimentConfig real_config(const std::string& yaml, const std::string& tag) {
    auto cfg = from_yaml(yaml);
    cfg.output_dir = fs::temp_directory_path() / "mbfd_acceptance_real" / tag;
    return cfg;
}

Outcome mfpt_svm() {
    if (!have_dataset("MFPT")) return {Status::Skip, "no MFPT archive under $MBFD_DATA_DIR"};
    double sum = 0;
    std::string per_seed;
    const auto t0 = Clock::now();
    for (int seed = 0; seed < 3; ++seed) {
        const auto cfg = real_config(fmt::format("split: MFPT\npipeline: ROBUST_MBFD\nnormalization: SS\nbackend: SVM\n"
                                                 "train: {{epochs: 100}}\nseed: {}\n",
                                                 seed),
                                     fmt::format("mfpt_{}", seed));
        const double acc = run_experiment(cfg).accuracy;
        sum += acc;
        per_seed += fmt::format(" {:.2f}", acc);
    }
    const double mean = sum / 3.0, secs = seconds_since(t0);
    return pass_if(mean >= 97.0 && secs <= 3 * 3600.0,
                   fmt::format("mean {:.2f}% over seeds 0-2 (per seed:{}), {:.0f} s", mean, per_seed, secs));
}

double pu_dl(const std::string& pipeline) {
    return run_experiment(real_config("split: PU-C1\npipeline: " + pipeline + "\nnormalization: N\nbackend: EUCLIDEAN\n",
                                      "pu_" + pipeline))
        .accuracy;
}

Outcome pu_robust() {
    if (!have_dataset("PU")) return {Status::Skip, "no PU archive under $MBFD_DATA_DIR"};
    const double robust = pu_dl("ROBUST_MBFD");
    double best_single = 0;
    for (const char* p : {"SDLM", "S_SDLM", "U_SDLM"}) best_single = std::max(best_single, pu_dl(p));
    return pass_if(robust >= 60.0 && robust - best_single >= 10.0,
                   fmt::format("Robust-MBFD {:.2f}%, best single model {:.2f}%", robust, best_single));
}

Outcome pu_ordering() {
    if (!have_dataset("PU")) return {Status::Skip, "no PU archive under $MBFD_DATA_DIR"};
    double best_ml = 0, best_dl = 0;
    for (const char* norm : {"MAS", "SS", "RS", "N", "QT", "PT"})
        for (const char* backend : {"SVM", "KNN", "RF"}) {
            const auto cfg = real_config(fmt::format("split: PU-C1\npipeline: ML_BASELINE\nnormalization: {}\nbackend: {}\n",
                                                     norm, backend),
                                         fmt::format("pu_ml_{}_{}", norm, backend));
            best_ml = std::max(best_ml, run_experiment(cfg).accuracy);
        }
    for (const char* p : {"SDLM", "S_SDLM", "U_SDLM", "ROBUST_MBFD"}) best_dl = std::max(best_dl, pu_dl(p));
    return pass_if(best_dl - best_ml >= 5.0, fmt::format("best deep {:.2f}%, best ML baseline {:.2f}%", best_dl, best_ml));
}

}  // namespace

int main() {
    std::printf("kernels: %s\n", kernels::active().name);
    std::fflush(stdout);
    struct Criterion {
        const char* name;
        bool hard;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria = {
        {"feature-oracle", true, feature_oracle},
        {"normalization-invariants", true, normalization_invariants},
        {"loss-correctness", true, loss_correctness},
        {"shape-suite", true, shape_suite},
        {"split-fixtures", true, split_fixtures},
        {"determinism", true, determinism},
        {"end-to-end-smoke", true, end_to_end},
        {"mfpt-ss-svm-robust", false, mfpt_svm},
        {"pu-c1-n-euclidean-robust", false, pu_robust},
        {"pu-c1-deep-over-ml", false, pu_ordering},
    };
    int hard_failures = 0;
    for (const auto& c : criteria) {
        Outcome o;
        const auto t0 = Clock::now();
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {Status::Fail, std::string("exception: ") + e.what()};
        }
        const char* tag = o.status == Status::Pass ? "PASS" : o.status == Status::Fail ? "FAIL" : "SKIP";
        std::printf("%s %s%s: %s [%.1f s]\n", tag, c.name, c.hard ? "" : " (soft)", o.detail.c_str(), seconds_since(t0));
        std::fflush(stdout);
        hard_failures += c.hard && o.status == Status::Fail;
    }
    return hard_failures == 0 ? 0 : 1;
}
