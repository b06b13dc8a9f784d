// mbfd: command-line front end for ingesting recordings, running experiments
// and rendering result tables.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "mbfd/dataio.hpp"
#include "mbfd/error.hpp"
#include "mbfd/features.hpp"
#include "mbfd/harness.hpp"
#include "mbfd/kernels.hpp"
#include "mbfd/protocols.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitMissing = 3;

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw mbfd::Error("cannot write " + path.string());
    out << text;
}

std::string feature_rows(const std::vector<mbfd::VibrationSample>& samples) {
    const auto m = mbfd::features::extract_matrix(samples);
    std::string out = "source_id,start_index,label," + mbfd::features::csv_header() + "\n";
    for (std::size_t i = 0; i < samples.size(); ++i) {
        out += fmt::format("{},{},{}", samples[i].origin.source_id, samples[i].origin.start_index,
                           samples[i].label ? samples[i].label->index : -1);
        for (double v : m.row(i)) out += fmt::format(",{}", v);
        out += "\n";
    }
    return out;
}

mbfd::ResultRecord read_record(const fs::path& p) {
    const fs::path file = fs::is_directory(p) ? p / "record.json" : p;
    std::ifstream in(file);
    if (!in) throw mbfd::MissingDataError("no result record at " + file.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return mbfd::result_from_json(nlohmann::json::parse(ss.str()));
    } catch (const nlohmann::json::exception& e) {
        throw mbfd::FormatError(file.string() + ": " + e.what());
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Motor bearing fault detection pipeline"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Convert a dataset recording to the canonical container");
    std::string ingest_dataset, ingest_id, ingest_adapter;
    fs::path ingest_src, ingest_dst;
    ingest->add_option("dataset", ingest_dataset, "PU, CWRU, MFPT or SYNTHETIC")->required();
    ingest->add_option("src", ingest_src, "Source file (.mat or canonical)")->required();
    ingest->add_option("dst", ingest_dst, "Destination base path (writes .f32 and .json)")->required();
    ingest->add_option("--id", ingest_id, "Source id (default: file stem)");
    ingest->add_option("--adapter", ingest_adapter, "JSON adapter naming the channel and rate variables");

    // extract
    auto* extract = app.add_subcommand("extract", "Write hand-crafted feature tables for a split");
    fs::path extract_config, extract_out;
    extract->add_option("config", extract_config, "Experiment config (YAML)")->required();
    extract->add_option("-o,--out", extract_out, "Output directory (default: the config's output_dir)");

    // train
    auto* train = app.add_subcommand("train", "Train the configured network and store its checkpoint");
    fs::path train_config;
    train->add_option("config", train_config, "Experiment config (YAML)")->required();

    // eval
    auto* eval = app.add_subcommand("eval", "Run the full experiment and write its result record");
    fs::path eval_config;
    bool eval_fresh = false;
    eval->add_option("config", eval_config, "Experiment config (YAML)")->required();
    eval->add_flag("--fresh", eval_fresh, "Ignore an existing record with the same digest");

    // table
    auto* table = app.add_subcommand("table", "Render result records into a result table layout");
    std::string table_layout, table_format = "md";
    std::vector<fs::path> table_inputs;
    fs::path table_out;
    table->add_option("layout", table_layout, "res_01, res_02, res_03, res_04, res_05 or mfpt")->required();
    table->add_option("records", table_inputs, "record.json files or directories holding one");
    table->add_option("--format", table_format, "csv or md")->check(CLI::IsMember({"csv", "md"}));
    table->add_option("-o,--out", table_out, "Output file (default: stdout)");

    // split
    auto* split = app.add_subcommand("split", "Print a split protocol as JSON");
    std::string split_name;
    bool split_strict = false, split_list = false;
    split->add_option("name", split_name, "Protocol name");
    split->add_flag("--strict-disjoint", split_strict, "MFPT: train healthy on N1 only");
    split->add_flag("--list", split_list, "List protocol names");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    spdlog::set_default_logger(spdlog::stderr_color_mt("mbfd"));
    try {
        spdlog::set_level(spdlog::level::from_str(log_level));
        spdlog::debug("kernels: {}", mbfd::kernels::active().name);

        if (*ingest) {
            const auto kind = mbfd::parse_dataset(ingest_dataset);
            const std::string id = ingest_id.empty() ? ingest_src.stem().string() : ingest_id;
            const auto adapter =
                ingest_adapter.empty() ? mbfd::default_adapter(kind) : mbfd::load_adapter_config(ingest_adapter);
            const auto rec = mbfd::load_recording(ingest_src, kind, id, adapter);
            mbfd::save_canonical(rec, ingest_dst);
            std::cout << fmt::format("{} {}: {} samples at {} Hz\n", mbfd::to_string(kind), id, rec.length(),
                                     rec.sample_rate);
        } else if (*extract) {
            const auto cfg = mbfd::load_experiment_config(extract_config);
            const auto spec = mbfd::resolve_split(cfg);
            const auto data = mbfd::load_split(cfg, spec);
            const fs::path out = extract_out.empty() ? cfg.output_dir : extract_out;
            write_file(out / "train_features.csv", feature_rows(data.train));
            write_file(out / "test_features.csv", feature_rows(data.test));
            std::cout << fmt::format("{}: {} train and {} test rows in {}\n", spec.name, data.train.size(),
                                     data.test.size(), out.string());
        } else if (*train) {
            const auto cfg = mbfd::load_experiment_config(train_config);
            const auto spec = mbfd::resolve_split(cfg);
            const auto data = mbfd::load_split(cfg, spec);
            const auto state = mbfd::train_or_load(cfg, spec, data, cfg.output_dir / "model");
            std::cout << fmt::format("{}: {} parameters saved to {}\n", mbfd::to_string(state.architecture),
                                     state.parameter_count(), (cfg.output_dir / "model").string());
        } else if (*eval) {
            const auto cfg = mbfd::load_experiment_config(eval_config);
            const auto r = mbfd::run_experiment(cfg, !eval_fresh);
            std::cout << fmt::format("{} {} {} {}: {:.2f}%\n", r.split, mbfd::to_string(r.pipeline),
                                     mbfd::preprocess::to_string(r.normalization), mbfd::to_string(r.backend),
                                     r.accuracy);
        } else if (*table) {
            std::vector<mbfd::ResultRecord> records;
            for (const auto& p : table_inputs) records.push_back(read_record(p));
            const auto t = mbfd::emit_table(records, table_layout);
            const auto text = table_format == "csv" ? mbfd::render_csv(t) : mbfd::render_markdown(t);
            if (table_out.empty()) std::cout << text;
            else write_file(table_out, text);
        } else if (*split) {
            if (split_list) {
                for (const auto& n : mbfd::split_names()) std::cout << n << "\n";
                return 0;
            }
            if (split_name.empty()) throw mbfd::ConfigError("split: a protocol name is required");
            const auto spec = split_strict && split_name == "MFPT" ? mbfd::mfpt_split(true)
                                                                   : mbfd::split_by_name(split_name);
            mbfd::check_split(spec, mbfd::dataset_manifest(spec.dataset));
            std::cout << mbfd::to_json(spec).dump(2) << "\n";
        }
    } catch (const mbfd::ConfigError& e) {
        spdlog::error("{}", e.what());
        return kExitConfig;
    } catch (const mbfd::MissingDataError& e) {
        spdlog::error("{}", e.what());
        return kExitMissing;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kExitOther;
    }
    return 0;
}
