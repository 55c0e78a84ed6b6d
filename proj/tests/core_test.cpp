#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "riskcal/core.hpp"

namespace riskcal {
namespace {

PredictionRecord Probs(std::vector<double> p, std::size_t label = 0) {
    return PredictionRecord::from_probabilities(std::move(p), label);
}

TEST(Softmax, ClosedForms) {
    const std::vector<double> zero{0.0, 0.0};
    EXPECT_DOUBLE_EQ(softmax(zero)[0], 0.5);
    EXPECT_DOUBLE_EQ(softmax(zero)[1], 0.5);

    const std::vector<double> ln2{std::log(2.0), 0.0};
    const auto p = softmax(ln2);
    EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
    const std::vector<double> z{1000.0, 0.0};
    const auto p = softmax(z);
    EXPECT_TRUE(std::isfinite(p[0]));
    EXPECT_NEAR(p[0], 1.0, 1e-12);
    EXPECT_NEAR(p[1], 0.0, 1e-12);
}

TEST(Softmax, RejectsNonFinite) {
    const std::vector<double> z{NAN, 0.0};
    EXPECT_THROW(softmax(z), InvalidInput);
    const std::vector<double> inf{INFINITY, 0.0};
    EXPECT_THROW(softmax(inf), InvalidInput);
    const std::vector<double> one{1.0};
    EXPECT_THROW(softmax(one), InvalidInput);
}

TEST(Softmax, SumsToOneAndKeepsArgmax) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> normal(0.0, 5.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> z(2 + trial % 9);
        for (double& v : z) v = normal(rng);
        const auto p = softmax(z);
        double total = 0.0;
        for (double v : p) total += v;
        EXPECT_NEAR(total, 1.0, 1e-9);
        EXPECT_EQ(std::max_element(z.begin(), z.end()) - z.begin(),
                  std::max_element(p.begin(), p.end()) - p.begin());
    }
}

TEST(PredictionRecord, Validation) {
    EXPECT_THROW(Probs({1.0}), ValidationError);
    EXPECT_THROW(Probs({0.5, 0.6}), ValidationError);
    EXPECT_THROW(Probs({-0.1, 1.1}), ValidationError);
    EXPECT_THROW(Probs({0.5, 0.5}, 2), ValidationError);
    EXPECT_NO_THROW(Probs({0.5, 0.5 + 5e-7}));
    EXPECT_THROW(PredictionRecord::from_parts({0.5, 0.5}, {1.0, 0.0}, 0), ValidationError);
    EXPECT_NO_THROW(PredictionRecord::from_parts({0.5, 0.5}, {3.0, 3.0}, 1));
}

TEST(PredictionRecord, RenormalizesSmallDrift) {
    const auto r = Probs({0.5, 0.5 + 5e-7});
    EXPECT_NEAR(r.probabilities()[0] + r.probabilities()[1], 1.0, 1e-15);
}

TEST(PredictionRecord, PseudoLogitsReproduceProbabilities) {
    const auto r = Probs({0.7, 0.2, 0.1});
    const auto z = r.logits_or_pseudo();
    const auto p = softmax(z);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(p[i], r.probabilities()[i], 1e-10);
}

TEST(Dataset, RejectsEmptyAndMixedK) {
    EXPECT_THROW(Dataset({}), ValidationError);
    std::vector<PredictionRecord> mixed{Probs({0.5, 0.5}), Probs({0.2, 0.3, 0.5})};
    EXPECT_THROW(Dataset(std::move(mixed)), ValidationError);
}

TEST(TopK, ArgmaxAndTies) {
    const auto r = Probs({0.5, 0.3, 0.2});
    EXPECT_EQ(top_k_set(r, 1).classes(), (std::vector<std::size_t>{0}));
    EXPECT_EQ(top_k_set(r, 2).classes(), (std::vector<std::size_t>{0, 1}));
    EXPECT_EQ(top_k_set(Probs({0.4, 0.4, 0.2}), 1).classes(), (std::vector<std::size_t>{0}));
    EXPECT_EQ(top_k_set(Probs({0.2, 0.4, 0.4}), 2).classes(), (std::vector<std::size_t>{1, 2}));
    EXPECT_EQ(top_k_set(r, 3).size(), 3u);
    EXPECT_THROW(top_k_set(r, 4), InvalidInput);
    EXPECT_THROW(top_k_set(r, 0), InvalidInput);
}

TEST(Scores, Aps) {
    const auto r = Probs({0.5, 0.3, 0.2});
    EXPECT_NEAR(aps_score(r, 1), 0.8, 1e-12);
    EXPECT_NEAR(aps_score(r, 0), 0.5, 1e-12);
    EXPECT_NEAR(aps_score(r, 2), 1.0, 1e-9);
    EXPECT_THROW(aps_score(r, 3), InvalidInput);
}

TEST(Scores, Lac) {
    const auto r = Probs({0.5, 0.3, 0.2});
    EXPECT_NEAR(lac_score(r, 0), 0.5, 1e-12);
    EXPECT_NEAR(lac_score(r, 2), 0.8, 1e-12);
    EXPECT_EQ(lac_score(Probs({1.0, 0.0}), 0), 0.0);
}

TEST(Scores, SetScore) {
    const auto r = Probs({0.5, 0.3, 0.2});
    EXPECT_NEAR(set_score(r, top_k_set(r, 1), ScoreFunction::Aps), 0.5, 1e-12);
    EXPECT_NEAR(set_score(r, top_k_set(r, 2), ScoreFunction::Aps), 0.8, 1e-12);
    EXPECT_NEAR(set_score(r, top_k_set(r, 2), ScoreFunction::Lac), 0.7, 1e-12);
}

TEST(ScoreProperties, RandomRecords) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t k = 2 + static_cast<std::size_t>(trial % 12);
        const auto p = testing::random_simplex(rng, k);
        const auto r = PredictionRecord::from_probabilities(p, 0);
        const double pmax = *std::max_element(p.begin(), p.end());

        double prev = -1.0;
        double lo = INFINITY;
        double hi = -INFINITY;
        for (std::size_t rank = 0; rank < k; ++rank) {
            const double s = aps_score(r, r.order()[rank]);
            EXPECT_GE(s, prev);
            prev = s;
            lo = std::min(lo, s);
            hi = std::max(hi, s);
        }
        EXPECT_NEAR(hi, 1.0, 1e-9);
        EXPECT_DOUBLE_EQ(lo, pmax);

        for (std::size_t kk = 1; kk <= k; ++kk) {
            const auto set = top_k_set(r, kk);
            EXPECT_DOUBLE_EQ(set_score(r, set, ScoreFunction::Aps),
                             aps_score(r, set.classes().back()));
            EXPECT_NEAR(set_score(r, set, ScoreFunction::Aps), top_k_mass(r, kk), 1e-12);
        }
        for (std::size_t y = 0; y < k; ++y) {
            EXPECT_NEAR(aps_score(r, y), testing::naive_aps(p, y), 1e-12);
        }

        // Relabel classes by a random permutation; scores follow the labels.
        std::vector<std::size_t> perm(k);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<double> q(k);
        for (std::size_t c = 0; c < k; ++c) q[perm[c]] = p[c];
        const auto permuted = PredictionRecord::from_probabilities(q, 0);
        for (std::size_t y = 0; y < k; ++y) {
            EXPECT_NEAR(aps_score(permuted, perm[y]), aps_score(r, y), 1e-12);
        }
    }
}

}  // namespace
}  // namespace riskcal
