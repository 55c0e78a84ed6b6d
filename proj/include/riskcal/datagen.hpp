#pragma once

// Dataset ingestion (label-first CSV of probabilities or logits) and a
// synthetic generator with an analytic misclassification oracle.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "riskcal/core.hpp"
#include "riskcal/error.hpp"

namespace riskcal {

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

struct SyntheticConfig {
    std::size_t num_classes = 10;
    std::size_t pool_size = 10000;
    // Symmetric Dirichlet parameter of the true conditional probabilities.
    double concentration = 1.0;
    // Reported probabilities are softmax(log p_true / distortion_temperature);
    // values below 1 make the model over-confident.
    double distortion_temperature = 1.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (num_classes < 2) throw InvalidInput("synthetic data needs K >= 2");
        if (pool_size < 10) throw InvalidInput("synthetic pool must hold at least 10 records");
        if (!(concentration > 0.0) || !std::isfinite(concentration)) {
            throw InvalidInput("Dirichlet concentration must be positive");
        }
        if (!(distortion_temperature > 0.0) || !std::isfinite(distortion_temperature)) {
            throw InvalidInput("distortion temperature must be positive");
        }
    }
};

inline void to_json(nlohmann::json& j, const SyntheticConfig& c) {
    j = nlohmann::json{{"num_classes", c.num_classes},
                       {"pool_size", c.pool_size},
                       {"concentration", c.concentration},
                       {"distortion_temperature", c.distortion_temperature},
                       {"seed", c.seed}};
}

struct SyntheticData {
    Dataset data;
    // oracle_risk[k-1] = mean over the pool of 1 - (true mass of the top-k set).
    std::vector<double> oracle_risk;
    // The true conditional distributions, row per record.
    std::vector<std::vector<double>> true_probabilities;

    double risk(std::size_t k) const {
        check_k(k, oracle_risk.size());
        return oracle_risk[k - 1];
    }
};

inline SyntheticData generate_synthetic(const SyntheticConfig& config) {
    config.validate();
    std::mt19937_64 rng(config.seed);
    std::gamma_distribution<double> gamma(config.concentration, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const std::size_t num_classes = config.num_classes;
    std::vector<PredictionRecord> records;
    std::vector<std::vector<double>> truths;
    records.reserve(config.pool_size);
    truths.reserve(config.pool_size);
    std::vector<double> risk_sum(num_classes, 0.0);

    for (std::size_t i = 0; i < config.pool_size; ++i) {
        std::vector<double> p(num_classes);
        double total = 0.0;
        for (double& v : p) {
            // Floor keeps log(p) finite for tiny concentrations.
            v = std::max(gamma(rng), 1e-300);
            total += v;
        }
        for (double& v : p) {
            v /= total;
        }
        const double u = unit(rng);
        std::size_t label = num_classes - 1;
        double cumulative = 0.0;
        for (std::size_t c = 0; c < num_classes; ++c) {
            cumulative += p[c];
            if (u < cumulative) {
                label = c;
                break;
            }
        }
        std::vector<double> logits(num_classes);
        for (std::size_t c = 0; c < num_classes; ++c) {
            logits[c] = std::log(p[c]) / config.distortion_temperature;
        }
        auto record = PredictionRecord::from_logits(std::move(logits), label);
        // Tail sums from the bottom of the ranking, so k = K is exactly zero.
        double tail = 0.0;
        for (std::size_t r = num_classes; r-- > 0;) {
            risk_sum[r] += tail;
            tail += p[record.order()[r]];
        }
        records.push_back(std::move(record));
        truths.push_back(std::move(p));
    }
    std::vector<double> oracle(num_classes);
    for (std::size_t r = 0; r < num_classes; ++r) {
        oracle[r] = std::max(0.0, risk_sum[r] / static_cast<double>(config.pool_size));
    }
    return {Dataset(std::move(records)), std::move(oracle), std::move(truths)};
}

// ---------------------------------------------------------------------------
// File format: one record per line, "label,v_0,...,v_{K-1}", optional first
// line starting with '#'.
// ---------------------------------------------------------------------------

enum class ValueFormat { Probabilities, Logits };

inline std::string_view to_string(ValueFormat f) {
    return f == ValueFormat::Probabilities ? "probabilities" : "logits";
}

inline ValueFormat parse_value_format(std::string_view name) {
    if (name == "probabilities" || name == "probs") return ValueFormat::Probabilities;
    if (name == "logits") return ValueFormat::Logits;
    throw InvalidInput("unknown value format '" + std::string(name) + "'");
}

struct IngestSchema {
    ValueFormat format = ValueFormat::Probabilities;
    // 0 infers K from the first data row.
    std::size_t num_classes = 0;
    char delimiter = ',';
};

// Rows whose probabilities miss 1 by more than this are rejected.
inline constexpr double kIngestSumTolerance = 1e-3;

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split(std::string_view line, char delimiter) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(delimiter, start);
        fields.push_back(trim(line.substr(start, pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return fields;
}

inline double parse_double(std::string_view field, std::size_t line) {
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
        throw ParseError(line, "cannot parse '" + std::string(field) + "' as a number");
    }
    return value;
}

inline std::size_t parse_label(std::string_view field, std::size_t line) {
    std::size_t value = 0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
        throw ParseError(line, "cannot parse label '" + std::string(field) + "'");
    }
    return value;
}

inline PredictionRecord parse_record(std::string_view text, const IngestSchema& schema,
                                     std::size_t num_classes, std::size_t line) {
    const auto fields = split(text, schema.delimiter);
    if (fields.size() != num_classes + 1) {
        throw ParseError(line, "expected " + std::to_string(num_classes + 1) + " columns, got " +
                                   std::to_string(fields.size()));
    }
    const std::size_t label = parse_label(fields[0], line);
    std::vector<double> values(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) {
        values[c] = parse_double(fields[c + 1], line);
    }
    const auto where = "line " + std::to_string(line) + ": ";
    if (label >= num_classes) {
        throw ValidationError(where + "label " + std::to_string(label) + " >= K=" +
                              std::to_string(num_classes));
    }
    try {
        if (schema.format == ValueFormat::Logits) {
            return PredictionRecord::from_logits(std::move(values), label);
        }
        double total = 0.0;
        for (double v : values) total += v;
        if (std::abs(total - 1.0) > kIngestSumTolerance) {
            throw ValidationError("probabilities sum to " + std::to_string(total));
        }
        if (std::abs(total - 1.0) > kRenormalizeThreshold) {
            for (double& v : values) v /= total;
        }
        return PredictionRecord::from_probabilities(std::move(values), label);
    } catch (const Error& e) {
        throw ValidationError(where + e.what());
    }
}

}  // namespace detail

inline Dataset parse_dataset(std::istream& in, IngestSchema schema) {
    if (schema.num_classes == 1) {
        throw InvalidInput("K must be at least 2");
    }
    std::vector<PredictionRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto text = detail::trim(line);
        if (line_no == 1 && !text.empty() && text.front() == '#') continue;
        if (text.empty()) continue;
        if (schema.num_classes == 0) {
            const auto columns = detail::split(text, schema.delimiter).size();
            if (columns < 3) {
                throw ParseError(line_no, "need a label and at least two values");
            }
            schema.num_classes = columns - 1;
        }
        records.push_back(detail::parse_record(text, schema, schema.num_classes, line_no));
    }
    if (records.empty()) {
        throw ValidationError("input holds no records");
    }
    return Dataset(std::move(records));
}

inline Dataset load_dataset(const std::string& path, const IngestSchema& schema = {}) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path + "' for reading");
    }
    return parse_dataset(in, schema);
}

inline std::string format_double(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

inline void write_dataset(std::ostream& out, const Dataset& data,
                          ValueFormat format = ValueFormat::Probabilities,
                          char delimiter = ',') {
    out << "# label";
    for (std::size_t c = 0; c < data.num_classes(); ++c) {
        out << delimiter << (format == ValueFormat::Logits ? "z" : "p") << c;
    }
    out << '\n';
    for (const auto& record : data) {
        out << record.label();
        if (format == ValueFormat::Logits) {
            if (!record.has_logits()) {
                throw InvalidInput("record has no logits to write");
            }
            for (double z : *record.logits()) out << delimiter << format_double(z);
        } else {
            for (double p : record.probabilities()) out << delimiter << format_double(p);
        }
        out << '\n';
    }
}

inline void save_dataset(const std::string& path, const Dataset& data,
                         ValueFormat format = ValueFormat::Probabilities, char delimiter = ',') {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open '" + path + "' for writing");
    }
    write_dataset(out, data, format, delimiter);
    if (!out) {
        throw IoError("write to '" + path + "' failed");
    }
}

inline nlohmann::json synthetic_sidecar(const SyntheticConfig& config, const SyntheticData& synth) {
    nlohmann::json risks = nlohmann::json::array();
    for (std::size_t k = 1; k <= synth.oracle_risk.size(); ++k) {
        risks.push_back({{"k", k}, {"oracle_risk", synth.oracle_risk[k - 1]}});
    }
    return {{"config", config}, {"oracle_risk", risks}};
}

}  // namespace riskcal
