#pragma once

// Split conformal prediction for classification and its inverse (InvCP):
// given the model's own top-k output, find the miss-coverage level of the
// smallest conformal set that still contains it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "riskcal/core.hpp"
#include "riskcal/error.hpp"

namespace riskcal {

// Sorted conformity scores s_1 <= ... <= s_n of the hold-out set.
class ConformalCalibration {
public:
    ConformalCalibration(std::vector<double> scores, ScoreFunction fn)
        : scores_(std::move(scores)), score_fn_(fn) {
        if (scores_.empty()) {
            throw InvalidInput("conformal calibration needs at least one score");
        }
        std::stable_sort(scores_.begin(), scores_.end());
    }

    std::size_t size() const noexcept { return scores_.size(); }
    std::span<const double> sorted_scores() const noexcept { return scores_; }
    ScoreFunction score_function() const noexcept { return score_fn_; }

    // 1-based order statistic s_i.
    double order_statistic(std::size_t i) const { return scores_.at(i - 1); }

private:
    std::vector<double> scores_;
    ScoreFunction score_fn_;
};

inline ConformalCalibration calibrate_scores(const Dataset& calib, ScoreFunction fn) {
    std::vector<double> scores;
    scores.reserve(calib.size());
    for (const auto& record : calib) {
        scores.push_back(score(record, record.label(), fn));
    }
    return ConformalCalibration(std::move(scores), fn);
}

// ceil((n+1)(1-alpha)); values within 1e-9 of an integer are snapped first so
// that alpha = 1 - i/(n+1) maps back to exactly i.
inline std::size_t quantile_index(std::size_t n, double alpha) {
    const double raw = static_cast<double>(n + 1) * (1.0 - alpha);
    const double nearest = std::round(raw);
    const double snapped = std::abs(raw - nearest) < 1e-9 ? nearest : raw;
    return static_cast<std::size_t>(std::ceil(snapped));
}

// q-hat; +infinity when the index exceeds n.
inline double conformal_quantile(const ConformalCalibration& calibration, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw InvalidInput("alpha must lie in (0, 1)");
    }
    const std::size_t idx = quantile_index(calibration.size(), alpha);
    if (idx > calibration.size()) {
        return std::numeric_limits<double>::infinity();
    }
    return calibration.order_statistic(std::max<std::size_t>(idx, 1));
}

// {y : s(x, y) <= q-hat}, classes listed in descending model probability.
// With the deterministic APS score the set is empty when q-hat falls below
// the top class's probability, so this is not a PredictionSet.
inline std::vector<std::size_t> cp_interval(const ConformalCalibration& calibration,
                                            const PredictionRecord& record, double alpha) {
    const double q = conformal_quantile(calibration, alpha);
    std::vector<std::size_t> out;
    for (std::size_t y : record.order()) {
        if (score(record, y, calibration.score_function()) <= q) {
            out.push_back(y);
        }
    }
    return out;
}

struct InvCPAlpha {
    std::size_t gamma = 0;
    double alpha = 0.0;
};

// gamma = min{i : s_i >= s*} (n+1 when no such i), alpha = 1 - gamma/(n+1).
inline InvCPAlpha invcp_alpha(const ConformalCalibration& calibration, double s_star) {
    if (!std::isfinite(s_star)) {
        throw InvalidInput("InvCP score must be finite");
    }
    const auto scores = calibration.sorted_scores();
    const auto it = std::lower_bound(scores.begin(), scores.end(), s_star);
    const auto gamma = static_cast<std::size_t>(it - scores.begin()) + 1;
    const auto n1 = static_cast<double>(calibration.size() + 1);
    return {gamma, 1.0 - static_cast<double>(gamma) / n1};
}

struct InvCPResult {
    std::vector<double> per_point_alphas;
    std::vector<std::size_t> gammas;
    double alpha_hat = 0.0;
};

inline InvCPResult invcp_estimate(const ConformalCalibration& calibration, const Dataset& test,
                                  std::size_t k) {
    check_k(k, test.num_classes());
    InvCPResult result;
    result.per_point_alphas.reserve(test.size());
    result.gammas.reserve(test.size());
    double total = 0.0;
    for (const auto& record : test) {
        const double s_star =
            set_score(record, top_k_set(record, k), calibration.score_function());
        const auto [gamma, alpha] = invcp_alpha(calibration, s_star);
        result.gammas.push_back(gamma);
        result.per_point_alphas.push_back(alpha);
        total += alpha;
    }
    result.alpha_hat = total / static_cast<double>(test.size());
    return result;
}

inline InvCPResult invcp_estimate(const Dataset& calib, const Dataset& test, std::size_t k,
                                  ScoreFunction fn = ScoreFunction::Aps) {
    if (calib.num_classes() != test.num_classes()) {
        throw InvalidInput("calibration and test sets disagree on the class count");
    }
    return invcp_estimate(calibrate_scores(calib, fn), test, k);
}

}  // namespace riskcal
