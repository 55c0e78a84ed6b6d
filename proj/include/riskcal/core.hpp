#pragma once

// Domain types shared by every risk estimator: validated prediction records,
// datasets, top-k prediction sets and the conformity scores defined on them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "riskcal/error.hpp"

namespace riskcal {

// Tolerance on |sum(p) - 1| accepted when constructing a record.
inline constexpr double kProbabilitySumTolerance = 1e-6;
// Deviations at or below this are float-printing noise and are left untouched,
// so that values written at full precision reload bit-exactly.
inline constexpr double kRenormalizeThreshold = 1e-12;
// Offset used when deriving pseudo-logits from probability-only records.
inline constexpr double kPseudoLogitEpsilon = 1e-12;

inline std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0) {
    if (logits.size() < 2) {
        throw InvalidInput("softmax needs at least two logits");
    }
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw InvalidInput("softmax temperature must be positive and finite");
    }
    double max_logit = logits[0];
    for (double z : logits) {
        if (!std::isfinite(z)) {
            throw InvalidInput("softmax input is not finite");
        }
        max_logit = std::max(max_logit, z);
    }
    std::vector<double> out(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp((logits[i] - max_logit) / temperature);
        total += out[i];
    }
    for (double& p : out) {
        p /= total;
    }
    return out;
}

// Class indices ordered by probability descending, ties by index ascending.
inline std::vector<std::size_t> descending_order(std::span<const double> probabilities) {
    std::vector<std::size_t> order(probabilities.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return probabilities[a] > probabilities[b];
    });
    return order;
}

// One sample: the model's class-probability vector, optional logits and the
// true label. Immutable once built; the descending class order is cached.
class PredictionRecord {
public:
    static PredictionRecord from_probabilities(std::vector<double> probabilities,
                                               std::size_t label) {
        return PredictionRecord(normalized(std::move(probabilities)), std::nullopt, label);
    }

    static PredictionRecord from_logits(std::vector<double> logits, std::size_t label) {
        auto probabilities = softmax(logits);
        return PredictionRecord(std::move(probabilities), std::move(logits), label);
    }

    // Both vectors supplied; softmax(logits) must agree with probabilities.
    static PredictionRecord from_parts(std::vector<double> probabilities,
                                       std::vector<double> logits, std::size_t label) {
        auto p = normalized(std::move(probabilities));
        if (logits.size() != p.size()) {
            throw ValidationError("logits and probabilities differ in length");
        }
        const auto implied = softmax(logits);
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (std::abs(implied[i] - p[i]) > kProbabilitySumTolerance) {
                throw ValidationError("softmax(logits) does not match probabilities");
            }
        }
        return PredictionRecord(std::move(p), std::move(logits), label);
    }

    std::size_t num_classes() const noexcept { return probabilities_.size(); }
    std::size_t label() const noexcept { return label_; }
    std::span<const double> probabilities() const noexcept { return probabilities_; }
    double probability(std::size_t y) const { return probabilities_.at(y); }
    bool has_logits() const noexcept { return logits_.has_value(); }
    const std::optional<std::vector<double>>& logits() const noexcept { return logits_; }
    std::span<const std::size_t> order() const noexcept { return order_; }

    // Real logits when present, otherwise log(p + eps) so softmax recovers p.
    std::vector<double> logits_or_pseudo() const {
        if (logits_) {
            return *logits_;
        }
        std::vector<double> z(probabilities_.size());
        for (std::size_t i = 0; i < z.size(); ++i) {
            z[i] = std::log(probabilities_[i] + kPseudoLogitEpsilon);
        }
        return z;
    }

    // 1-based position of class y in the descending order.
    std::size_t rank_of(std::size_t y) const {
        check_class(y);
        return rank_[y] + 1;
    }

    void check_class(std::size_t y) const {
        if (y >= probabilities_.size()) {
            throw InvalidInput("class index " + std::to_string(y) + " out of range for K=" +
                               std::to_string(probabilities_.size()));
        }
    }

private:
    PredictionRecord(std::vector<double> probabilities, std::optional<std::vector<double>> logits,
                     std::size_t label)
        : probabilities_(std::move(probabilities)), logits_(std::move(logits)), label_(label) {
        if (label_ >= probabilities_.size()) {
            throw ValidationError("label " + std::to_string(label_) + " >= K=" +
                                  std::to_string(probabilities_.size()));
        }
        order_ = descending_order(probabilities_);
        rank_.resize(order_.size());
        for (std::size_t r = 0; r < order_.size(); ++r) {
            rank_[order_[r]] = r;
        }
    }

    static std::vector<double> normalized(std::vector<double> p) {
        if (p.size() < 2) {
            throw ValidationError("a record needs at least two classes");
        }
        double total = 0.0;
        for (double v : p) {
            if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
                throw ValidationError("probability outside [0, 1]");
            }
            total += v;
        }
        if (std::abs(total - 1.0) > kProbabilitySumTolerance) {
            throw ValidationError("probabilities sum to " + std::to_string(total));
        }
        if (std::abs(total - 1.0) > kRenormalizeThreshold) {
            for (double& v : p) {
                v /= total;
            }
        }
        return p;
    }

    std::vector<double> probabilities_;
    std::optional<std::vector<double>> logits_;
    std::size_t label_;
    std::vector<std::size_t> order_;
    std::vector<std::size_t> rank_;
};

// Ordered, nonempty collection of records sharing one class count.
class Dataset {
public:
    explicit Dataset(std::vector<PredictionRecord> records) : records_(std::move(records)) {
        if (records_.empty()) {
            throw ValidationError("dataset is empty");
        }
        num_classes_ = records_.front().num_classes();
        for (const auto& r : records_) {
            if (r.num_classes() != num_classes_) {
                throw ValidationError("records disagree on the class count");
            }
        }
    }

    std::size_t size() const noexcept { return records_.size(); }
    std::size_t num_classes() const noexcept { return num_classes_; }
    const std::vector<PredictionRecord>& records() const noexcept { return records_; }
    const PredictionRecord& operator[](std::size_t i) const { return records_[i]; }
    auto begin() const noexcept { return records_.begin(); }
    auto end() const noexcept { return records_.end(); }

    Dataset subset(std::span<const std::size_t> indices) const {
        std::vector<PredictionRecord> out;
        out.reserve(indices.size());
        for (std::size_t i : indices) {
            out.push_back(records_.at(i));
        }
        return Dataset(std::move(out));
    }

private:
    std::vector<PredictionRecord> records_;
    std::size_t num_classes_ = 0;
};

// The model output I(X): distinct classes in descending model probability.
class PredictionSet {
public:
    PredictionSet(std::vector<std::size_t> classes, std::size_t num_classes)
        : classes_(std::move(classes)) {
        if (classes_.empty()) {
            throw InvalidInput("prediction set is empty");
        }
        std::vector<bool> seen(num_classes, false);
        for (std::size_t c : classes_) {
            if (c >= num_classes || seen[c]) {
                throw InvalidInput("prediction set has an invalid or repeated class");
            }
            seen[c] = true;
        }
    }

    std::size_t size() const noexcept { return classes_.size(); }
    const std::vector<std::size_t>& classes() const noexcept { return classes_; }
    bool contains(std::size_t y) const {
        return std::find(classes_.begin(), classes_.end(), y) != classes_.end();
    }

private:
    std::vector<std::size_t> classes_;
};

enum class ScoreFunction { Aps, Lac };

inline std::string_view to_string(ScoreFunction fn) {
    return fn == ScoreFunction::Aps ? "aps" : "lac";
}

inline ScoreFunction parse_score_function(std::string_view name) {
    if (name == "aps" || name == "APS") return ScoreFunction::Aps;
    if (name == "lac" || name == "LAC") return ScoreFunction::Lac;
    throw InvalidInput("unknown score function '" + std::string(name) + "'");
}

inline void check_k(std::size_t k, std::size_t num_classes) {
    if (k < 1 || k > num_classes) {
        throw InvalidInput("k=" + std::to_string(k) + " outside [1, " +
                           std::to_string(num_classes) + "]");
    }
}

inline PredictionSet top_k_set(const PredictionRecord& record, std::size_t k) {
    check_k(k, record.num_classes());
    const auto order = record.order();
    return PredictionSet({order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k)},
                         record.num_classes());
}

// Summed probability of the k most probable classes.
inline double top_k_mass(const PredictionRecord& record, std::size_t k) {
    check_k(k, record.num_classes());
    if (k == record.num_classes()) {
        return 1.0;
    }
    double mass = 0.0;
    for (std::size_t r = 0; r < k; ++r) {
        mass += record.probabilities()[record.order()[r]];
    }
    return mass;
}

inline bool label_in_top_k(const PredictionRecord& record, std::size_t k) {
    check_k(k, record.num_classes());
    return record.rank_of(record.label()) <= k;
}

// Cumulative probability of the descending order up to and including y.
inline double aps_score(const PredictionRecord& record, std::size_t y) {
    const std::size_t rank = record.rank_of(y);
    double score = 0.0;
    for (std::size_t r = 0; r < rank; ++r) {
        score += record.probabilities()[record.order()[r]];
    }
    return score;
}

inline double lac_score(const PredictionRecord& record, std::size_t y) {
    record.check_class(y);
    return 1.0 - record.probabilities()[y];
}

inline double score(const PredictionRecord& record, std::size_t y, ScoreFunction fn) {
    return fn == ScoreFunction::Aps ? aps_score(record, y) : lac_score(record, y);
}

// s(X, I) = max over y in I of s(X, y).
inline double set_score(const PredictionRecord& record, const PredictionSet& set,
                        ScoreFunction fn) {
    if (set.size() == 0) {
        throw InvalidInput("set score of an empty set");
    }
    if (fn == ScoreFunction::Aps) {
        std::size_t deepest = 0;
        for (std::size_t c : set.classes()) {
            deepest = std::max(deepest, record.rank_of(c));
        }
        return aps_score(record, record.order()[deepest - 1]);
    }
    double best = -1.0;
    for (std::size_t c : set.classes()) {
        best = std::max(best, lac_score(record, c));
    }
    return best;
}

}  // namespace riskcal
