#pragma once

// Calibration baselines mapping a model's top-k confidence to a calibrated
// probability that the top-k output is correct: histogram binning, isotonic
// regression (PAVA) and temperature scaling.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "riskcal/core.hpp"
#include "riskcal/error.hpp"

namespace riskcal {

// (confidence of the top-k set, 1 if the label is in the set).
struct CalibrationPair {
    double score = 0.0;
    double target = 0.0;
};

inline void check_unit_score(double score) {
    if (!(score >= 0.0 && score <= 1.0)) {
        throw InvalidInput("score " + std::to_string(score) + " outside [0, 1]");
    }
}

inline std::vector<CalibrationPair> make_calibration_pairs(const Dataset& data, std::size_t k) {
    check_k(k, data.num_classes());
    std::vector<CalibrationPair> pairs;
    pairs.reserve(data.size());
    for (const auto& record : data) {
        pairs.push_back({std::clamp(top_k_mass(record, k), 0.0, 1.0),
                         label_in_top_k(record, k) ? 1.0 : 0.0});
    }
    return pairs;
}

// ---------------------------------------------------------------------------
// Histogram binning
// ---------------------------------------------------------------------------

enum class BinningStrategy { EqualWidth, EqualFrequency };

inline std::string_view to_string(BinningStrategy s) {
    return s == BinningStrategy::EqualWidth ? "equal-width" : "equal-frequency";
}

inline BinningStrategy parse_binning_strategy(std::string_view name) {
    if (name == "equal-width" || name == "equal_width" || name == "width") {
        return BinningStrategy::EqualWidth;
    }
    if (name == "equal-frequency" || name == "equal_frequency" || name == "frequency") {
        return BinningStrategy::EqualFrequency;
    }
    throw InvalidInput("unknown binning strategy '" + std::string(name) + "'");
}

struct HistogramBinningModel {
    // a_1 = 0 < a_2 < ... < a_{M+1} = 1. Bins are [a_j, a_{j+1}), the last closed.
    std::vector<double> boundaries;
    std::vector<double> thetas;
    // Bins that received no calibration points; their theta is the bin midpoint.
    std::vector<bool> empty_bins;

    std::size_t num_bins() const noexcept { return thetas.size(); }

    bool has_empty_bins() const noexcept {
        return std::find(empty_bins.begin(), empty_bins.end(), true) != empty_bins.end();
    }

    std::size_t bin_of(double score) const {
        check_unit_score(score);
        const auto it = std::upper_bound(boundaries.begin(), boundaries.end(), score);
        const auto bin = static_cast<std::size_t>(it - boundaries.begin()) - 1;
        return std::min(bin, num_bins() - 1);
    }
};

namespace detail {

inline std::vector<double> equal_width_boundaries(std::size_t bins) {
    std::vector<double> a(bins + 1);
    for (std::size_t j = 0; j <= bins; ++j) {
        a[j] = static_cast<double>(j) / static_cast<double>(bins);
    }
    a.back() = 1.0;
    return a;
}

// Cut points halfway between the order statistics that separate the groups.
// Coinciding cuts (tied scores) are merged, so fewer than M bins may remain.
inline std::vector<double> equal_frequency_boundaries(std::span<const CalibrationPair> pairs,
                                                      std::size_t bins) {
    std::vector<double> sorted;
    sorted.reserve(pairs.size());
    for (const auto& p : pairs) {
        sorted.push_back(p.score);
    }
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    std::vector<double> a{0.0};
    for (std::size_t j = 1; j < bins; ++j) {
        const std::size_t idx = j * n / bins;
        const double cut = 0.5 * (sorted[idx - 1] + sorted[idx]);
        // A cut at the smallest score would leave the first bin empty.
        if (cut > a.back() && cut > sorted.front() && cut < 1.0) {
            a.push_back(cut);
        }
    }
    a.push_back(1.0);
    return a;
}

}  // namespace detail

inline HistogramBinningModel fit_histogram_binning(std::span<const CalibrationPair> pairs,
                                                   std::size_t bins,
                                                   BinningStrategy strategy) {
    if (pairs.empty()) {
        throw InvalidInput("histogram binning needs at least one pair");
    }
    if (bins < 1) {
        throw InvalidInput("histogram binning needs at least one bin");
    }
    for (const auto& p : pairs) {
        check_unit_score(p.score);
    }
    HistogramBinningModel model;
    if (strategy == BinningStrategy::EqualWidth) {
        model.boundaries = detail::equal_width_boundaries(bins);
    } else {
        if (bins > pairs.size()) {
            throw InvalidInput("equal-frequency binning with more bins than points");
        }
        model.boundaries = detail::equal_frequency_boundaries(pairs, bins);
    }
    const std::size_t m = model.boundaries.size() - 1;
    model.thetas.assign(m, 0.0);
    model.empty_bins.assign(m, false);

    std::vector<double> sums(m, 0.0);
    std::vector<std::size_t> counts(m, 0);
    for (const auto& p : pairs) {
        const std::size_t j = model.bin_of(p.score);
        sums[j] += p.target;
        ++counts[j];
    }
    for (std::size_t j = 0; j < m; ++j) {
        if (counts[j] == 0) {
            model.thetas[j] = 0.5 * (model.boundaries[j] + model.boundaries[j + 1]);
            model.empty_bins[j] = true;
        } else {
            model.thetas[j] = sums[j] / static_cast<double>(counts[j]);
        }
    }
    return model;
}

inline double apply_histogram_binning(const HistogramBinningModel& model, double score) {
    if (model.num_bins() == 0) {
        throw InvalidState("histogram binning model is not fitted");
    }
    return model.thetas[model.bin_of(score)];
}

// ---------------------------------------------------------------------------
// Isotonic regression
// ---------------------------------------------------------------------------

// Weighted pool-adjacent-violators: the nondecreasing sequence minimising
// sum w_i (f_i - y_i)^2.
inline std::vector<double> pool_adjacent_violators(std::span<const double> y,
                                                   std::span<const double> w) {
    if (y.size() != w.size()) {
        throw InvalidInput("PAVA values and weights differ in length");
    }
    struct Block {
        double weight;
        double weighted_sum;
        std::size_t count;
        double mean() const { return weighted_sum / weight; }
    };
    std::vector<Block> blocks;
    blocks.reserve(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        blocks.push_back({w[i], w[i] * y[i], 1});
        while (blocks.size() >= 2 && blocks[blocks.size() - 2].mean() > blocks.back().mean()) {
            Block last = blocks.back();
            blocks.pop_back();
            blocks.back().weight += last.weight;
            blocks.back().weighted_sum += last.weighted_sum;
            blocks.back().count += last.count;
        }
    }
    std::vector<double> fitted;
    fitted.reserve(y.size());
    for (const auto& b : blocks) {
        fitted.insert(fitted.end(), b.count, b.mean());
    }
    return fitted;
}

struct IsotonicModel {
    // Distinct calibration scores, ascending, and the fitted value at each.
    std::vector<double> breakpoints;
    std::vector<double> values;
};

inline IsotonicModel fit_isotonic(std::span<const CalibrationPair> pairs) {
    if (pairs.empty()) {
        throw InvalidInput("isotonic regression needs at least one pair");
    }
    for (const auto& p : pairs) {
        check_unit_score(p.score);
    }
    std::vector<CalibrationPair> sorted(pairs.begin(), pairs.end());
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const auto& a, const auto& b) { return a.score < b.score; });

    // Tied scores collapse to one weighted observation before PAVA.
    IsotonicModel model;
    std::vector<double> means;
    std::vector<double> weights;
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        double total = 0.0;
        while (j < sorted.size() && sorted[j].score == sorted[i].score) {
            total += sorted[j].target;
            ++j;
        }
        const auto count = static_cast<double>(j - i);
        model.breakpoints.push_back(sorted[i].score);
        means.push_back(total / count);
        weights.push_back(count);
        i = j;
    }
    model.values = pool_adjacent_violators(means, weights);
    return model;
}

inline double apply_isotonic(const IsotonicModel& model, double score) {
    if (model.values.empty()) {
        throw InvalidState("isotonic model is not fitted");
    }
    check_unit_score(score);
    const auto it = std::upper_bound(model.breakpoints.begin(), model.breakpoints.end(), score);
    if (it == model.breakpoints.begin()) {
        return model.values.front();
    }
    return model.values[static_cast<std::size_t>(it - model.breakpoints.begin()) - 1];
}

// ---------------------------------------------------------------------------
// Temperature scaling (reported as PLATT)
// ---------------------------------------------------------------------------

inline constexpr double kMinLogTemperature = -3.0;
inline constexpr double kMaxLogTemperature = 3.0;
inline constexpr double kLogTemperatureTolerance = 1e-4;

struct TemperatureModel {
    double temperature = 1.0;
    // Every record had constant logits; the likelihood ignores T.
    bool degenerate = false;
};

// Mean negative log-likelihood of softmax(z / T) against the true labels.
inline double temperature_nll(const std::vector<std::vector<double>>& logits,
                              const std::vector<std::size_t>& labels, double temperature) {
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const auto& z = logits[i];
        const auto top = std::max_element(z.begin(), z.end());
        const double zmax = *top;
        // The argmax term is exactly 1; log1p keeps precision when the rest is tiny.
        double rest = 0.0;
        for (auto it = z.begin(); it != z.end(); ++it) {
            if (it != top) {
                rest += std::exp((*it - zmax) / temperature);
            }
        }
        total += std::log1p(rest) - (z[labels[i]] - zmax) / temperature;
    }
    return total / static_cast<double>(logits.size());
}

// Golden-section search on log T over [-3, 3]. NLL is convex in 1/T, hence
// unimodal in log T.
inline TemperatureModel fit_temperature(const Dataset& calib) {
    std::vector<std::vector<double>> logits;
    std::vector<std::size_t> labels;
    logits.reserve(calib.size());
    labels.reserve(calib.size());
    bool all_flat = true;
    for (const auto& record : calib) {
        logits.push_back(record.logits_or_pseudo());
        labels.push_back(record.label());
        const auto [lo, hi] = std::minmax_element(logits.back().begin(), logits.back().end());
        all_flat = all_flat && (*lo == *hi);
    }
    if (all_flat) {
        return {1.0, true};
    }
    const auto nll = [&](double log_t) { return temperature_nll(logits, labels, std::exp(log_t)); };

    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = kMinLogTemperature;
    double b = kMaxLogTemperature;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = nll(c);
    double fd = nll(d);
    while (b - a > kLogTemperatureTolerance) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = nll(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = nll(d);
        }
    }
    double best = 0.5 * (a + b);
    double best_nll = nll(best);
    // The optimum may sit on a bound, or be flat enough that T=1 ties it.
    for (double candidate : {kMinLogTemperature, kMaxLogTemperature, 0.0}) {
        const double f = nll(candidate);
        if (f < best_nll) {
            best = candidate;
            best_nll = f;
        }
    }
    return {std::exp(best), false};
}

// Calibrated confidence of the record's top-k set: sum over that set of
// softmax(z / T). Scaling does not reorder classes, so the set is unchanged.
inline double apply_temperature(const TemperatureModel& model, const PredictionRecord& record,
                                std::size_t k) {
    check_k(k, record.num_classes());
    const auto z = record.logits_or_pseudo();
    const auto calibrated = softmax(z, model.temperature);
    double mass = 0.0;
    for (std::size_t r = 0; r < k; ++r) {
        mass += calibrated[record.order()[r]];
    }
    return std::clamp(mass, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Type-erased calibrator: r(X) for a record's top-k output.
// ---------------------------------------------------------------------------

class Calibrator {
public:
    using ScoreMap = std::function<double(double)>;

    Calibrator() = default;

    static Calibrator histogram(HistogramBinningModel model) { return Calibrator(std::move(model)); }
    static Calibrator isotonic(IsotonicModel model) { return Calibrator(std::move(model)); }
    static Calibrator temperature(TemperatureModel model) { return Calibrator(model); }
    // Arbitrary map applied to the raw top-k confidence.
    static Calibrator from_function(ScoreMap map) { return Calibrator(std::move(map)); }

    bool fitted() const noexcept { return !std::holds_alternative<std::monostate>(model_); }

    double correctness(const PredictionRecord& record, std::size_t k) const {
        return std::visit(
            [&](const auto& m) -> double {
                using T = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<T, std::monostate>) {
                    throw InvalidState("calibrator is not fitted");
                } else if constexpr (std::is_same_v<T, TemperatureModel>) {
                    return apply_temperature(m, record, k);
                } else {
                    const double s = std::clamp(top_k_mass(record, k), 0.0, 1.0);
                    if constexpr (std::is_same_v<T, HistogramBinningModel>) {
                        return apply_histogram_binning(m, s);
                    } else if constexpr (std::is_same_v<T, IsotonicModel>) {
                        return apply_isotonic(m, s);
                    } else {
                        return m(s);
                    }
                }
            },
            model_);
    }

private:
    template <typename Model>
    explicit Calibrator(Model model) : model_(std::move(model)) {}

    std::variant<std::monostate, HistogramBinningModel, IsotonicModel, TemperatureModel, ScoreMap>
        model_;
};

}  // namespace riskcal
