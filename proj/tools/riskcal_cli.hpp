#pragma once

// Command-line front end. Kept in a header so the acceptance suite can drive
// the exact same commands in-process.
//
// Exit codes: 0 success, 1 invalid arguments or data, 2 I/O failure.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "riskcal/riskcal.hpp"

namespace riskcal::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitIo = 2;

struct DataOptions {
    std::string input;
    std::string input_format = "probabilities";
    char delimiter = ',';
    std::size_t classes = 10;
    std::size_t pool_size = 10000;
    double concentration = 1.0;
    double distortion = 1.0;
};

struct RunOptions {
    DataOptions data;
    std::size_t k = 1;
    std::vector<std::string> methods{"smx", "platt", "hist_bin", "iso_reg", "invcp"};
    std::size_t repeats = 100;
    double calib_fraction = 0.2;
    std::size_t bins = 10;
    std::string strategy = "equal-frequency";
    std::string score = "aps";
    std::optional<std::uint64_t> seed;
    std::size_t jobs = 1;
    std::string output;
    std::string format = "json";
    // assess
    std::string calib_path;
    std::string test_path;
    // experiment
    std::string splits_path;
    // sweep
    std::string axis;
    std::vector<std::size_t> values;
};

inline std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
    if (flag) return *flag;
    if (const char* env = std::getenv("RISKCAL_SEED"); env != nullptr && *env != '\0') {
        try {
            std::size_t used = 0;
            const auto v = std::stoull(env, &used);
            if (used == std::string(env).size()) return v;
        } catch (const std::exception&) {
        }
        throw InvalidInput("RISKCAL_SEED is not an unsigned integer");
    }
    return 0;
}

inline IngestSchema schema_of(const DataOptions& d) {
    IngestSchema schema;
    schema.format = parse_value_format(d.input_format);
    schema.delimiter = d.delimiter;
    return schema;
}

inline SyntheticConfig synthetic_of(const DataOptions& d, std::uint64_t seed) {
    SyntheticConfig c;
    c.num_classes = d.classes;
    c.pool_size = d.pool_size;
    c.concentration = d.concentration;
    c.distortion_temperature = d.distortion;
    c.seed = seed;
    return c;
}

// Reads --input, or generates a synthetic pool when no input is named.
inline Dataset load_pool(const DataOptions& d, std::uint64_t seed) {
    if (!d.input.empty()) {
        return load_dataset(d.input, schema_of(d));
    }
    return generate_synthetic(synthetic_of(d, seed)).data;
}

inline ExperimentConfig experiment_of(const RunOptions& o) {
    if (o.format != "json" && o.format != "csv") {
        throw InvalidInput("--format must be json or csv");
    }
    ExperimentConfig c;
    c.k = o.k;
    c.methods.clear();
    for (const auto& m : o.methods) c.methods.push_back(parse_method(m));
    c.repeats = o.repeats;
    c.calib_fraction = o.calib_fraction;
    c.bins = o.bins;
    c.strategy = parse_binning_strategy(o.strategy);
    c.score_fn = parse_score_function(o.score);
    c.seed = resolve_seed(o.seed);
    c.jobs = o.jobs;
    return c;
}

// Writes text to path, or to out when path is empty.
inline void emit(const std::string& path, const std::string& text, std::ostream& out) {
    if (path.empty()) {
        out << text;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << text;
    if (!f) throw IoError("write to '" + path + "' failed");
}

inline std::string reports_csv(std::span<const AssessmentReport> reports) {
    std::ostringstream s;
    write_reports_csv(s, reports);
    return s.str();
}

inline std::string delta_table(const ExperimentSummary& summary) {
    std::ostringstream s;
    s << "method      mean_delta    std_delta  conservative\n";
    for (const auto& m : summary.methods) {
        s << std::left << std::setw(10) << to_string(m.method) << std::right << std::fixed
          << std::setprecision(5) << std::setw(12) << m.mean_delta << "  " << std::setw(11)
          << m.std_delta << "  " << std::setw(12) << std::setprecision(2)
          << m.conservative_fraction << '\n';
    }
    return s.str();
}

inline int cmd_assess(const RunOptions& o, std::ostream& out) {
    auto config = experiment_of(o);
    std::vector<AssessmentReport> reports;
    if (!o.calib_path.empty() || !o.test_path.empty()) {
        if (o.calib_path.empty() || o.test_path.empty()) {
            throw InvalidInput("--calib and --test must be given together");
        }
        const auto schema = schema_of(o.data);
        reports = assess(load_dataset(o.calib_path, schema), load_dataset(o.test_path, schema),
                         config);
    } else {
        const Dataset pool = load_pool(o.data, config.seed);
        check_k(config.k, pool.num_classes());
        const std::uint64_t split_seed = repeat_seed(config.seed, 0);
        const Split split =
            random_split(pool.size(), calibration_count(pool.size(), config), split_seed);
        reports = assess(pool.subset(split.calib), pool.subset(split.test), config);
        for (auto& r : reports) r.split_seed = split_seed;
    }
    if (o.format == "csv") {
        emit(o.output, reports_csv(reports), out);
    } else {
        emit(o.output, nlohmann::json{{"reports", reports}}.dump(2) + "\n", out);
    }
    return kExitOk;
}

inline int cmd_experiment(const RunOptions& o, std::ostream& out, std::ostream& err) {
    auto config = experiment_of(o);
    const Dataset pool = load_pool(o.data, config.seed);
    const auto summary = run_experiment(pool, config);

    std::string splits = o.splits_path;
    if (splits.empty() && !o.output.empty() && o.format == "json") {
        splits = o.output + ".splits.csv";
    }
    if (o.format == "csv") {
        emit(o.output, reports_csv(summary.reports), out);
    } else {
        emit(o.output, nlohmann::json(summary).dump(2) + "\n", out);
    }
    if (!splits.empty()) {
        emit(splits, reports_csv(summary.reports), out);
    }
    (o.output.empty() ? err : out) << delta_table(summary);
    return kExitOk;
}

inline int cmd_sweep(const RunOptions& o, std::ostream& out) {
    if (o.values.empty()) {
        throw InvalidInput("--values must list at least one value");
    }
    auto config = experiment_of(o);
    const SweepAxis axis = parse_sweep_axis(o.axis);
    const Dataset pool = load_pool(o.data, config.seed);
    const auto points = sweep(pool, config, axis, o.values);
    if (o.format == "csv") {
        std::ostringstream s;
        write_sweep_csv(s, points);
        emit(o.output, s.str(), out);
    } else {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& p : points) {
            j.push_back({{"axis", to_string(axis)},
                         {"axis_value", p.axis_value},
                         {"summary", {{"config", p.summary.config},
                                      {"repeats", p.summary.repeats},
                                      {"n_calib", p.summary.n_calib},
                                      {"n_test", p.summary.n_test},
                                      {"methods", p.summary.methods}}}});
        }
        emit(o.output, j.dump(2) + "\n", out);
    }
    return kExitOk;
}

inline int cmd_synth(const RunOptions& o, std::ostream& out) {
    if (o.output.empty()) {
        throw InvalidInput("synth needs --output");
    }
    const auto config = synthetic_of(o.data, resolve_seed(o.seed));
    const auto synth = generate_synthetic(config);
    std::ostringstream s;
    write_dataset(s, synth.data, parse_value_format(o.data.input_format), o.data.delimiter);
    emit(o.output, s.str(), out);
    emit(o.output + ".json", synthetic_sidecar(config, synth).dump(2) + "\n", out);
    out << "wrote " << synth.data.size() << " records to " << o.output << '\n';
    return kExitOk;
}

inline int cmd_ece(const RunOptions& o, std::ostream& out) {
    const Dataset data = load_pool(o.data, resolve_seed(o.seed));
    const auto pairs = make_calibration_pairs(data, o.k);
    const nlohmann::json j{{"k", o.k},
                           {"bins", o.bins},
                           {"n", data.size()},
                           {"ece", ece(pairs, o.bins)},
                           {"alpha_emp", alpha_emp(data, o.k)},
                           {"alpha_hat_smx", alpha_hat_smx(data, o.k)}};
    emit(o.output, j.dump(2) + "\n", out);
    return kExitOk;
}

inline void add_data_options(CLI::App* cmd, DataOptions& d) {
    cmd->add_option("--input", d.input, "Label-first CSV of probabilities or logits");
    cmd->add_option("--input-format", d.input_format, "probabilities | logits");
    cmd->add_option("--delimiter", d.delimiter, "Field delimiter");
    cmd->add_option("--classes", d.classes, "Synthetic class count K")->check(CLI::Range(2, 100000));
    cmd->add_option("--pool-size", d.pool_size, "Synthetic pool size")->check(CLI::Range(10, 100000000));
    cmd->add_option("--concentration", d.concentration, "Synthetic Dirichlet concentration")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--distortion", d.distortion, "Synthetic distortion temperature")
        ->check(CLI::PositiveNumber);
}

inline void add_run_options(CLI::App* cmd, RunOptions& o) {
    add_data_options(cmd, o.data);
    cmd->add_option("--k", o.k, "Size of the top-k output set")->check(CLI::PositiveNumber);
    cmd->add_option("--methods", o.methods, "smx,platt,hist_bin,iso_reg,invcp")->delimiter(',');
    cmd->add_option("--repeats", o.repeats, "Random splits")->check(CLI::PositiveNumber);
    cmd->add_option("--calib-fraction", o.calib_fraction, "Share of the pool used for calibration");
    cmd->add_option("--bins", o.bins, "Bin count M")->check(CLI::PositiveNumber);
    cmd->add_option("--strategy", o.strategy, "equal-frequency | equal-width");
    cmd->add_option("--score", o.score, "aps | lac");
    cmd->add_option("--seed", o.seed, "Master seed (fallback: RISKCAL_SEED)");
    cmd->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--output", o.output, "Output path (stdout when omitted)");
    cmd->add_option("--format", o.format, "json | csv");
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
    CLI::App app{"riskcal: misclassification risk assessment for classifier outputs"};
    app.require_subcommand(1);
    RunOptions o;

    auto* assess_cmd = app.add_subcommand("assess", "Estimate risk on one calibration/test split");
    add_run_options(assess_cmd, o);
    assess_cmd->add_option("--calib", o.calib_path, "Explicit calibration file");
    assess_cmd->add_option("--test", o.test_path, "Explicit test file");

    auto* experiment_cmd = app.add_subcommand("experiment", "Average delta over repeated splits");
    add_run_options(experiment_cmd, o);
    experiment_cmd->add_option("--splits", o.splits_path, "Per-split CSV path");

    auto* sweep_cmd = app.add_subcommand("sweep", "Repeat the experiment across n or M");
    add_run_options(sweep_cmd, o);
    sweep_cmd->add_option("--axis", o.axis, "n | M")->required();
    sweep_cmd->add_option("--values", o.values, "Comma-separated axis values")
        ->delimiter(',')
        ->required();

    auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic dataset and oracle sidecar");
    add_data_options(synth_cmd, o.data);
    synth_cmd->add_option("--seed", o.seed, "Generator seed (fallback: RISKCAL_SEED)");
    synth_cmd->add_option("--output", o.output, "CSV path; the sidecar goes to <path>.json")
        ->required();

    auto* ece_cmd = app.add_subcommand("ece", "Expected calibration error of the raw top-k confidence");
    add_data_options(ece_cmd, o.data);
    ece_cmd->add_option("--k", o.k, "Size of the top-k output set")->check(CLI::PositiveNumber);
    ece_cmd->add_option("--bins", o.bins, "Bin count M")->check(CLI::PositiveNumber);
    ece_cmd->add_option("--seed", o.seed, "Seed for synthetic input");
    ece_cmd->add_option("--output", o.output, "Output path (stdout when omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "riskcal: " << e.what() << '\n';
        return kExitInvalid;
    }

    try {
        if (*assess_cmd) return cmd_assess(o, out);
        if (*experiment_cmd) return cmd_experiment(o, out, err);
        if (*sweep_cmd) return cmd_sweep(o, out);
        if (*synth_cmd) return cmd_synth(o, out);
        if (*ece_cmd) return cmd_ece(o, out);
    } catch (const IoError& e) {
        err << "riskcal: " << e.what() << '\n';
        return kExitIo;
    } catch (const Error& e) {
        err << "riskcal: " << e.what() << '\n';
        return kExitInvalid;
    }
    return kExitInvalid;
}

}  // namespace riskcal::cli
