#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "riskcal/assessment.hpp"
#include "riskcal/datagen.hpp"

namespace riskcal {
namespace {

Dataset Parse(const std::string& text, IngestSchema schema = {}) {
    std::istringstream in(text);
    return parse_dataset(in, schema);
}

TEST(Synthetic, IdentityDistortionReproducesTruth) {
    SyntheticConfig c;
    c.num_classes = 5;
    c.pool_size = 200;
    c.seed = 1;
    const auto s = generate_synthetic(c);
    for (std::size_t i = 0; i < s.data.size(); ++i) {
        for (std::size_t k = 0; k < 5; ++k) {
            EXPECT_NEAR(s.data[i].probabilities()[k], s.true_probabilities[i][k], 1e-9);
        }
    }
}

TEST(Synthetic, SharpeningIsOverConfident) {
    SyntheticConfig c;
    c.num_classes = 10;
    c.pool_size = 500;
    c.distortion_temperature = 0.5;
    c.seed = 2;
    const auto s = generate_synthetic(c);
    for (std::size_t i = 0; i < s.data.size(); ++i) {
        const auto& truth = s.true_probabilities[i];
        EXPECT_GE(top_k_mass(s.data[i], 1) + 1e-12, *std::max_element(truth.begin(), truth.end()));
    }
}

TEST(Synthetic, NearUniformOracle) {
    SyntheticConfig c;
    c.num_classes = 10;
    c.pool_size = 2000;
    c.concentration = 1e4;
    c.seed = 3;
    EXPECT_NEAR(generate_synthetic(c).risk(1), 0.9, 0.01);
}

TEST(Synthetic, OracleMatchesEmpiricalRisk) {
    SyntheticConfig c;
    c.num_classes = 10;
    c.pool_size = 20000;
    c.seed = 4;
    const auto s = generate_synthetic(c);
    for (std::size_t k : {1u, 3u}) {
        const double r = s.risk(k);
        EXPECT_NEAR(alpha_emp(s.data, k), r, 3.0 * std::sqrt(r * (1.0 - r) / 20000.0));
    }
    EXPECT_EQ(s.risk(10), 0.0);
    EXPECT_THROW(s.risk(11), InvalidInput);
}

TEST(Synthetic, DeterministicAndValidated) {
    SyntheticConfig c;
    c.pool_size = 50;
    c.seed = 9;
    const auto a = generate_synthetic(c);
    const auto b = generate_synthetic(c);
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        EXPECT_EQ(a.data[i].label(), b.data[i].label());
        EXPECT_TRUE(std::equal(a.data[i].probabilities().begin(), a.data[i].probabilities().end(),
                               b.data[i].probabilities().begin()));
    }
    c.num_classes = 1;
    EXPECT_THROW(generate_synthetic(c), InvalidInput);
    c.num_classes = 3;
    c.pool_size = 5;
    EXPECT_THROW(generate_synthetic(c), InvalidInput);
    c.pool_size = 50;
    c.distortion_temperature = 0.0;
    EXPECT_THROW(generate_synthetic(c), InvalidInput);
}

TEST(Ingest, ParsesRows) {
    const auto d = Parse("# label,p0,p1,p2\n2,0.1,0.2,0.7\n0, 0.5 ,0.25,0.25\n");
    ASSERT_EQ(d.size(), 2u);
    EXPECT_EQ(d.num_classes(), 3u);
    EXPECT_EQ(d[0].label(), 2u);
    EXPECT_EQ(d[0].probabilities()[2], 0.7);
    EXPECT_EQ(d[1].probabilities()[0], 0.5);
}

TEST(Ingest, RenormalizesWithinTolerance) {
    const auto d = Parse("0,0.4995,0.5\n");
    EXPECT_NEAR(d[0].probabilities()[0] + d[0].probabilities()[1], 1.0, 1e-15);
    EXPECT_THROW(Parse("0,0.4,0.5\n"), ValidationError);
}

TEST(Ingest, Errors) {
    IngestSchema three;
    three.num_classes = 3;
    EXPECT_THROW(Parse("5,0.1,0.2,0.7\n", three), ValidationError);
    try {
        Parse("0,0.5,0.5\n1,0.5,abc\n");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
    EXPECT_THROW(Parse("0,0.5,0.3,0.2\n", IngestSchema{ValueFormat::Probabilities, 2, ','}),
                 ParseError);
    EXPECT_THROW(Parse("0,0.5,0.5\n1,0.2,0.3,0.5\n"), ParseError);
    EXPECT_THROW(Parse("-1,0.5,0.5\n"), ParseError);
    EXPECT_THROW(Parse("# header only\n"), ValidationError);
    EXPECT_THROW(load_dataset("/nonexistent/riskcal.csv"), IoError);
}

TEST(Ingest, LogitsAndDelimiter) {
    IngestSchema schema;
    schema.format = ValueFormat::Logits;
    schema.delimiter = ';';
    const auto d = Parse("1;0;0.6931471805599453\n", schema);
    ASSERT_TRUE(d[0].has_logits());
    EXPECT_NEAR(d[0].probabilities()[1], 2.0 / 3.0, 1e-12);
}

TEST(Ingest, RoundTripIsBitExact) {
    SyntheticConfig c;
    c.num_classes = 7;
    c.pool_size = 300;
    c.distortion_temperature = 0.7;
    c.seed = 12;
    const auto original = generate_synthetic(c).data;
    for (auto format : {ValueFormat::Probabilities, ValueFormat::Logits}) {
        std::stringstream buf;
        write_dataset(buf, original, format);
        IngestSchema schema;
        schema.format = format;
        const auto back = parse_dataset(buf, schema);
        ASSERT_EQ(back.size(), original.size());
        for (std::size_t i = 0; i < back.size(); ++i) {
            EXPECT_EQ(back[i].label(), original[i].label());
            for (std::size_t k = 0; k < 7; ++k) {
                EXPECT_EQ(back[i].probabilities()[k], original[i].probabilities()[k]);
            }
        }
    }
}

TEST(Ingest, SaveAndLoadFile) {
    const auto path = (std::filesystem::temp_directory_path() / "riskcal_datagen_test.csv").string();
    const auto d = Parse("1,0.25,0.75\n0,0.9,0.1\n");
    save_dataset(path, d);
    const auto back = load_dataset(path);
    EXPECT_EQ(back.size(), 2u);
    EXPECT_EQ(back[1].probabilities()[0], 0.9);
    std::filesystem::remove(path);
}

TEST(Sidecar, CarriesConfigAndOracle) {
    SyntheticConfig c;
    c.num_classes = 4;
    c.pool_size = 100;
    c.seed = 5;
    const auto s = generate_synthetic(c);
    const auto j = synthetic_sidecar(c, s);
    EXPECT_EQ(j["config"]["num_classes"], 4);
    ASSERT_EQ(j["oracle_risk"].size(), 4u);
    EXPECT_EQ(j["oracle_risk"][0]["k"], 1);
    EXPECT_DOUBLE_EQ(j["oracle_risk"][0]["oracle_risk"].get<double>(), s.risk(1));
}

}  // namespace
}  // namespace riskcal
