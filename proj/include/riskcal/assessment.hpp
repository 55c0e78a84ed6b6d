#pragma once

// Risk estimates from each method, the evaluation metrics (alpha_emp, delta,
// conservativeness, ECE) and the repeated random-split experiment protocol.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "riskcal/calibration.hpp"
#include "riskcal/conformal.hpp"
#include "riskcal/core.hpp"
#include "riskcal/datagen.hpp"
#include "riskcal/error.hpp"

namespace riskcal {

enum class MethodId { Smx, Platt, HistBin, IsoReg, InvCp };

inline constexpr std::array<MethodId, 5> kAllMethods = {
    MethodId::Smx, MethodId::Platt, MethodId::HistBin, MethodId::IsoReg, MethodId::InvCp};

inline std::string_view to_string(MethodId m) {
    switch (m) {
        case MethodId::Smx: return "SMX";
        case MethodId::Platt: return "PLATT";
        case MethodId::HistBin: return "HIST_BIN";
        case MethodId::IsoReg: return "ISO_REG";
        case MethodId::InvCp: return "INVCP";
    }
    return "?";
}

inline MethodId parse_method(std::string_view name) {
    std::string key;
    for (char c : name) {
        key.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    }
    for (MethodId m : kAllMethods) {
        if (key == to_string(m)) return m;
    }
    if (key == "HISTBIN" || key == "HIST") return MethodId::HistBin;
    if (key == "ISOREG" || key == "ISO") return MethodId::IsoReg;
    if (key == "TEMPERATURE") return MethodId::Platt;
    throw InvalidInput("unknown method '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Single-split estimates
// ---------------------------------------------------------------------------

// Fraction of records whose label falls outside the top-k set.
inline double alpha_emp(const Dataset& test, std::size_t k) {
    check_k(k, test.num_classes());
    std::size_t misses = 0;
    for (const auto& record : test) {
        misses += label_in_top_k(record, k) ? 0 : 1;
    }
    return static_cast<double>(misses) / static_cast<double>(test.size());
}

inline double alpha_hat_smx(const Dataset& test, std::size_t k) {
    check_k(k, test.num_classes());
    double total = 0.0;
    for (const auto& record : test) {
        total += 1.0 - std::clamp(top_k_mass(record, k), 0.0, 1.0);
    }
    return total / static_cast<double>(test.size());
}

// mean over the test set of 1 - r(X).
inline double alpha_hat_calibrated(const Calibrator& calibrator, const Dataset& test,
                                   std::size_t k) {
    if (!calibrator.fitted()) {
        throw InvalidState("calibrator is not fitted");
    }
    check_k(k, test.num_classes());
    double total = 0.0;
    for (const auto& record : test) {
        total += 1.0 - calibrator.correctness(record, k);
    }
    return total / static_cast<double>(test.size());
}

// Equal-width M-bin estimate: sum_j (n_j / n) |acc_j - conf_j|.
inline double ece(std::span<const CalibrationPair> pairs, std::size_t bins) {
    if (pairs.empty()) {
        throw InvalidInput("ECE of an empty set");
    }
    if (bins < 1) {
        throw InvalidInput("ECE needs at least one bin");
    }
    std::vector<double> conf(bins, 0.0);
    std::vector<double> acc(bins, 0.0);
    std::vector<std::size_t> count(bins, 0);
    for (const auto& p : pairs) {
        check_unit_score(p.score);
        const auto j = std::min(static_cast<std::size_t>(p.score * static_cast<double>(bins)),
                                bins - 1);
        conf[j] += p.score;
        acc[j] += p.target;
        ++count[j];
    }
    double total = 0.0;
    for (std::size_t j = 0; j < bins; ++j) {
        if (count[j] > 0) {
            total += std::abs(acc[j] - conf[j]);
        }
    }
    return total / static_cast<double>(pairs.size());
}

// ---------------------------------------------------------------------------
// Experiment protocol
// ---------------------------------------------------------------------------

struct ExperimentConfig {
    std::size_t k = 1;
    std::vector<MethodId> methods{kAllMethods.begin(), kAllMethods.end()};
    std::size_t repeats = 100;
    double calib_fraction = 0.2;
    // Absolute calibration size; overrides calib_fraction when nonzero.
    std::size_t calib_size = 0;
    std::size_t bins = 10;
    BinningStrategy strategy = BinningStrategy::EqualFrequency;
    ScoreFunction score_fn = ScoreFunction::Aps;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
};

struct AssessmentReport {
    MethodId method = MethodId::Smx;
    double alpha_hat = 0.0;
    double alpha_emp = 0.0;
    double delta = 0.0;
    bool conservative = false;
    std::size_t k = 1;
    std::size_t n_calib = 0;
    std::size_t n_test = 0;
    std::size_t repeat = 0;
    std::uint64_t split_seed = 0;
};

inline AssessmentReport make_report(MethodId method, double alpha_hat, double alpha_emp,
                                    std::size_t k, std::size_t n_calib, std::size_t n_test) {
    AssessmentReport r;
    r.method = method;
    r.alpha_hat = alpha_hat;
    r.alpha_emp = alpha_emp;
    r.delta = alpha_hat - alpha_emp;
    r.conservative = r.delta >= 0.0;
    r.k = k;
    r.n_calib = n_calib;
    r.n_test = n_test;
    return r;
}

// Fits every requested method on calib and scores it on test.
inline double estimate_risk(MethodId method, const Dataset& calib, const Dataset& test,
                            const ExperimentConfig& config) {
    const std::size_t k = config.k;
    switch (method) {
        case MethodId::Smx:
            return alpha_hat_smx(test, k);
        case MethodId::Platt:
            return alpha_hat_calibrated(Calibrator::temperature(fit_temperature(calib)), test, k);
        case MethodId::HistBin: {
            const auto pairs = make_calibration_pairs(calib, k);
            return alpha_hat_calibrated(
                Calibrator::histogram(fit_histogram_binning(pairs, config.bins, config.strategy)),
                test, k);
        }
        case MethodId::IsoReg: {
            const auto pairs = make_calibration_pairs(calib, k);
            return alpha_hat_calibrated(Calibrator::isotonic(fit_isotonic(pairs)), test, k);
        }
        case MethodId::InvCp:
            return invcp_estimate(calib, test, k, config.score_fn).alpha_hat;
    }
    throw InvalidInput("unknown method");
}

inline std::vector<AssessmentReport> assess(const Dataset& calib, const Dataset& test,
                                            const ExperimentConfig& config) {
    if (calib.num_classes() != test.num_classes()) {
        throw InvalidInput("calibration and test sets disagree on the class count");
    }
    check_k(config.k, test.num_classes());
    if (config.methods.empty()) {
        throw InvalidInput("no methods requested");
    }
    const double emp = alpha_emp(test, config.k);
    std::vector<AssessmentReport> reports;
    for (MethodId m : config.methods) {
        reports.push_back(make_report(m, estimate_risk(m, calib, test, config), emp, config.k,
                                      calib.size(), test.size()));
    }
    return reports;
}

// Seed of repeat r, derived from the master seed by a counter scheme.
inline std::uint64_t repeat_seed(std::uint64_t master, std::size_t repeat) {
    std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                      static_cast<std::uint32_t>(repeat),
                      static_cast<std::uint32_t>(static_cast<std::uint64_t>(repeat) >> 32)};
    std::array<std::uint32_t, 2> words{};
    seq.generate(words.begin(), words.end());
    return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

struct Split {
    std::vector<std::size_t> calib;
    std::vector<std::size_t> test;
};

inline std::size_t calibration_count(std::size_t pool_size, const ExperimentConfig& config) {
    std::size_t n = config.calib_size;
    if (n == 0) {
        if (!(config.calib_fraction > 0.0 && config.calib_fraction < 1.0)) {
            throw InvalidInput("calib_fraction must lie in (0, 1)");
        }
        n = static_cast<std::size_t>(
            std::llround(config.calib_fraction * static_cast<double>(pool_size)));
    }
    if (n == 0 || n >= pool_size) {
        throw InvalidInput("split leaves the calibration or the test set empty");
    }
    return n;
}

// Uniform split without replacement; the two halves are disjoint and exhaust the pool.
inline Split random_split(std::size_t pool_size, std::size_t n_calib, std::uint64_t seed) {
    std::vector<std::size_t> idx(pool_size);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    Split s;
    s.calib.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_calib));
    s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_calib), idx.end());
    std::sort(s.calib.begin(), s.calib.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

struct MethodSummary {
    MethodId method = MethodId::Smx;
    double mean_delta = 0.0;
    double std_delta = 0.0;
    double mean_alpha_hat = 0.0;
    double mean_alpha_emp = 0.0;
    // Share of repeats with delta >= 0.
    double conservative_fraction = 0.0;
};

struct ExperimentSummary {
    ExperimentConfig config;
    std::size_t repeats = 0;
    std::size_t n_calib = 0;
    std::size_t n_test = 0;
    std::vector<MethodSummary> methods;
    // Every per-split report, ordered by (repeat, method).
    std::vector<AssessmentReport> reports;

    const MethodSummary& method(MethodId id) const {
        for (const auto& m : methods) {
            if (m.method == id) return m;
        }
        throw InvalidInput("method " + std::string(to_string(id)) + " not in summary");
    }
};

namespace detail {

template <typename Fn>
void for_each_repeat(std::size_t repeats, std::size_t jobs, Fn&& fn) {
    jobs = std::clamp<std::size_t>(jobs, 1, repeats);
    if (jobs == 1) {
        for (std::size_t r = 0; r < repeats; ++r) fn(r);
        return;
    }
    std::vector<std::exception_ptr> errors(jobs);
    {
        std::vector<std::jthread> workers;
        for (std::size_t t = 0; t < jobs; ++t) {
            workers.emplace_back([&, t] {
                try {
                    for (std::size_t r = t; r < repeats; r += jobs) fn(r);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace detail

inline ExperimentSummary summarize(const ExperimentConfig& config,
                                   std::vector<AssessmentReport> reports, std::size_t repeats) {
    ExperimentSummary summary;
    summary.config = config;
    summary.repeats = repeats;
    if (!reports.empty()) {
        summary.n_calib = reports.front().n_calib;
        summary.n_test = reports.front().n_test;
    }
    for (MethodId m : config.methods) {
        MethodSummary ms;
        ms.method = m;
        std::vector<double> deltas;
        double hat = 0.0;
        double emp = 0.0;
        std::size_t conservative = 0;
        for (const auto& r : reports) {
            if (r.method != m) continue;
            deltas.push_back(r.delta);
            hat += r.alpha_hat;
            emp += r.alpha_emp;
            conservative += r.conservative ? 1 : 0;
        }
        const auto count = static_cast<double>(deltas.size());
        ms.mean_delta = std::accumulate(deltas.begin(), deltas.end(), 0.0) / count;
        ms.mean_alpha_hat = hat / count;
        ms.mean_alpha_emp = emp / count;
        ms.conservative_fraction = static_cast<double>(conservative) / count;
        if (deltas.size() > 1) {
            double ss = 0.0;
            for (double d : deltas) ss += (d - ms.mean_delta) * (d - ms.mean_delta);
            ms.std_delta = std::sqrt(ss / (count - 1.0));
        }
        summary.methods.push_back(ms);
    }
    summary.reports = std::move(reports);
    return summary;
}

inline ExperimentSummary run_experiment(const Dataset& pool, const ExperimentConfig& config) {
    if (config.repeats < 1) {
        throw InvalidInput("repeats must be at least 1");
    }
    if (config.methods.empty()) {
        throw InvalidInput("no methods requested");
    }
    check_k(config.k, pool.num_classes());
    const std::size_t n_calib = calibration_count(pool.size(), config);

    std::vector<std::vector<AssessmentReport>> per_repeat(config.repeats);
    detail::for_each_repeat(config.repeats, config.jobs, [&](std::size_t r) {
        const std::uint64_t seed = repeat_seed(config.seed, r);
        const Split split = random_split(pool.size(), n_calib, seed);
        auto reports = assess(pool.subset(split.calib), pool.subset(split.test), config);
        for (auto& rep : reports) {
            rep.repeat = r;
            rep.split_seed = seed;
        }
        per_repeat[r] = std::move(reports);
    });

    std::vector<AssessmentReport> all;
    all.reserve(config.repeats * config.methods.size());
    for (auto& reps : per_repeat) {
        all.insert(all.end(), reps.begin(), reps.end());
    }
    return summarize(config, std::move(all), config.repeats);
}

enum class SweepAxis { CalibSize, Bins };

inline std::string_view to_string(SweepAxis a) { return a == SweepAxis::CalibSize ? "n" : "M"; }

inline SweepAxis parse_sweep_axis(std::string_view name) {
    if (name == "n" || name == "calib-size" || name == "calib_size") return SweepAxis::CalibSize;
    if (name == "M" || name == "m" || name == "bins") return SweepAxis::Bins;
    throw InvalidInput("unknown sweep axis '" + std::string(name) + "'");
}

struct SweepPoint {
    std::size_t axis_value = 0;
    ExperimentSummary summary;
};

// One experiment per axis value, all sharing the master seed so repeats are paired.
inline std::vector<SweepPoint> sweep(const Dataset& pool, const ExperimentConfig& config,
                                     SweepAxis axis, std::span<const std::size_t> values) {
    if (values.empty()) {
        throw InvalidInput("sweep needs at least one value");
    }
    std::vector<SweepPoint> out;
    for (std::size_t v : values) {
        ExperimentConfig c = config;
        if (axis == SweepAxis::CalibSize) {
            c.calib_size = v;
        } else {
            c.bins = v;
        }
        out.push_back({v, run_experiment(pool, c)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const AssessmentReport& r) {
    j = nlohmann::json{{"method", to_string(r.method)},
                       {"k", r.k},
                       {"repeat", r.repeat},
                       {"seed", r.split_seed},
                       {"n_calib", r.n_calib},
                       {"n_test", r.n_test},
                       {"alpha_hat", r.alpha_hat},
                       {"alpha_emp", r.alpha_emp},
                       {"delta", r.delta},
                       {"conservative", r.conservative}};
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    std::vector<std::string> methods;
    for (MethodId m : c.methods) methods.emplace_back(to_string(m));
    j = nlohmann::json{{"k", c.k},
                       {"methods", methods},
                       {"repeats", c.repeats},
                       {"calib_fraction", c.calib_fraction},
                       {"calib_size", c.calib_size},
                       {"bins", c.bins},
                       {"strategy", to_string(c.strategy)},
                       {"score", to_string(c.score_fn)},
                       {"seed", c.seed}};
}

inline void to_json(nlohmann::json& j, const MethodSummary& m) {
    j = nlohmann::json{{"method", to_string(m.method)},
                       {"mean_delta", m.mean_delta},
                       {"std_delta", m.std_delta},
                       {"mean_alpha_hat", m.mean_alpha_hat},
                       {"mean_alpha_emp", m.mean_alpha_emp},
                       {"conservative_fraction", m.conservative_fraction}};
}

inline void to_json(nlohmann::json& j, const ExperimentSummary& s) {
    j = nlohmann::json{{"config", s.config},   {"repeats", s.repeats}, {"n_calib", s.n_calib},
                       {"n_test", s.n_test},   {"methods", s.methods}, {"reports", s.reports}};
}

inline void write_reports_csv(std::ostream& out, std::span<const AssessmentReport> reports) {
    out << "method,k,repeat,seed,alpha_hat,alpha_emp,delta,conservative\n";
    for (const auto& r : reports) {
        out << to_string(r.method) << ',' << r.k << ',' << r.repeat << ',' << r.split_seed << ','
            << format_double(r.alpha_hat) << ',' << format_double(r.alpha_emp) << ','
            << format_double(r.delta) << ',' << (r.conservative ? 1 : 0) << '\n';
    }
}

inline void write_sweep_csv(std::ostream& out, std::span<const SweepPoint> points) {
    out << "axis_value,method,mean_delta,std_delta\n";
    for (const auto& p : points) {
        for (const auto& m : p.summary.methods) {
            out << p.axis_value << ',' << to_string(m.method) << ','
                << format_double(m.mean_delta) << ',' << format_double(m.std_delta) << '\n';
        }
    }
}

}  // namespace riskcal
