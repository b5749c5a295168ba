#include "bizmodel/error.hpp"
#include "bizmodel/profile.hpp"
#include "bizmodel/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace bizmodel;

namespace {

// Contribution rows whose totals per cluster are the given values.
Matrix contributions_with_totals(const std::vector<int>& labels, const std::vector<double>& totals) {
    Matrix m(labels.size(), kNumFeatures);
    for (std::size_t i = 0; i < labels.size(); ++i) m(i, 8) = totals[static_cast<std::size_t>(labels[i])];
    return m;
}

} // namespace

TEST_CASE("models are ranked by total contribution") {
    const std::vector<int> labels{0, 1, 2, 1, 0, 2};
    // Cluster 1 is best, cluster 0 middle, cluster 2 worst.
    const auto contrib = contributions_with_totals(labels, {-0.001545, 0.010387, -0.012566});
    const Matrix ratios(labels.size(), kNumFeatures, 0.1);
    const auto models = rank_models(labels, 3, contrib, ratios);
    REQUIRE(models.size() == 3);
    CHECK(models[0].label == "BM1");
    CHECK(models[0].cluster == 1);
    CHECK(models[1].cluster == 0);
    CHECK(models[2].cluster == 2);
    CHECK(models[0].total_contribution == doctest::Approx(0.010387));
    for (const auto& m : models) {
        double sum = 0.0;
        for (double v : m.mean_contributions) sum += v;
        CHECK(std::abs(sum - m.total_contribution) <= 1e-9);
    }
    CHECK(record_ranks(models, labels.size()) == std::vector<int>{2, 1, 3, 1, 2, 3});

    // Positive rescaling keeps the order.
    Matrix scaled = contrib;
    for (std::size_t i = 0; i < scaled.rows(); ++i) scaled(i, 8) *= 37.5;
    const auto again = rank_models(labels, 3, scaled, ratios);
    for (std::size_t r = 0; r < 3; ++r) CHECK(again[r].cluster == models[r].cluster);
}

TEST_CASE("ranking ties go to the larger model, then the lower label") {
    const std::vector<int> labels{0, 1, 1, 2};
    const auto contrib = contributions_with_totals(labels, {0.5, 0.5, 0.5});
    const Matrix ratios(labels.size(), kNumFeatures);
    const auto models = rank_models(labels, 3, contrib, ratios);
    CHECK(models[0].cluster == 1);
    CHECK(models[1].cluster == 0);
    CHECK(models[2].cluster == 2);

    const std::vector<int> single{0, 0};
    const auto one = rank_models(single, 1, contributions_with_totals(single, {0.1}), Matrix(2, kNumFeatures));
    CHECK(one[0].label == "BM1");
}

TEST_CASE("separated loans are characteristic") {
    Rng rng(1);
    Matrix ratios(400, kNumFeatures);
    std::vector<std::size_t> in, out;
    for (std::size_t i = 0; i < 400; ++i) {
        const bool member = i < 200;
        (member ? in : out).push_back(i);
        ratios(i, 0) = member ? rng.uniform(0.8, 0.9) : rng.uniform(0.2, 0.3);
        for (std::size_t j = 1; j < kNumFeatures; ++j) ratios(i, j) = rng.uniform01();
    }
    const auto tests = characterize(ratios, in, out, 0.10);
    CHECK(tests[0].characteristic);
    CHECK(tests[0].test.p_two_sided < 1e-10);
    CHECK(tests[0].mean_in > tests[0].mean_out);

    // Swapping the roles fails the mean condition even though the test rejects.
    const auto swapped = characterize(ratios, out, in, 0.10);
    CHECK_FALSE(swapped[0].characteristic);

    const auto none = characterize(ratios, in, out, 0.0);
    for (const auto& t : none) CHECK_FALSE(t.characteristic);
    const auto all = characterize(ratios, in, out, 1.0);
    for (const auto& t : all) CHECK(t.characteristic == (t.mean_in > t.mean_out));
}

TEST_CASE("a random split of one cloud is rarely characterized") {
    Rng rng(2);
    std::size_t hits = 0, trials = 0;
    for (int rep = 0; rep < 40; ++rep) {
        Matrix ratios(120, kNumFeatures);
        std::vector<std::size_t> in, out;
        for (std::size_t i = 0; i < 120; ++i) {
            (rng.uniform01() < 0.4 ? in : out).push_back(i);
            for (std::size_t j = 0; j < kNumFeatures; ++j) ratios(i, j) = rng.uniform01();
        }
        for (const auto& t : characterize(ratios, in, out, 0.10)) {
            hits += t.characteristic ? 1 : 0;
            ++trials;
        }
    }
    // One-sided share of a 10% two-sided test is about 5%.
    CHECK(static_cast<double>(hits) / static_cast<double>(trials) < 0.10);
}

TEST_CASE("constant components are never characteristic") {
    Matrix ratios(20, kNumFeatures, 0.3);
    std::vector<std::size_t> in{0, 1, 2, 3, 4}, out;
    for (std::size_t i = 5; i < 20; ++i) out.push_back(i);
    for (const auto& t : characterize(ratios, in, out, 1.0)) CHECK_FALSE(t.characteristic);
}

TEST_CASE("side split of a best-model row") {
    BusinessModel bm1;
    bm1.label = "BM1";
    bm1.mean_contributions = {0.1245, 0.1087, 0.0540, 0.1275, 0.1214, 0.1261, 0.0367, 0.0952, 0.2447};
    bm1.total_contribution = 0.0;
    for (double v : bm1.mean_contributions) bm1.total_contribution += v;
    const std::vector<BusinessModel> models{bm1};
    const auto sides = side_contributions(models);
    CHECK(sides[0].assets == doctest::Approx(0.4147).epsilon(1e-12));
    CHECK(sides[0].liabilities == doctest::Approx(0.6241).epsilon(1e-12));
    CHECK(std::abs(sides[0].assets + sides[0].liabilities - bm1.total_contribution) <= 1e-9);

    BusinessModel zero;
    zero.label = "BM2";
    zero.mean_contributions.assign(kNumFeatures, 0.0);
    const std::vector<BusinessModel> zeros{zero};
    CHECK(side_contributions(zeros)[0].assets == 0.0);
    CHECK(side_contributions(zeros)[0].liabilities == 0.0);
}

TEST_CASE("pairwise superscripts name the differing models") {
    Rng rng(3);
    Matrix ratios(90, kNumFeatures);
    std::vector<int> labels;
    for (std::size_t i = 0; i < 90; ++i) {
        const int g = static_cast<int>(i / 30);
        labels.push_back(g);
        for (std::size_t j = 0; j < kNumFeatures; ++j) ratios(i, j) = rng.uniform01();
        ratios(i, 0) += g == 2 ? 5.0 : 0.0;
    }
    Matrix contrib(90, kNumFeatures);
    for (std::size_t i = 0; i < 90; ++i) contrib(i, 0) = -labels[i];
    const auto models = rank_models(labels, 3, contrib, ratios);
    const auto sup = pairwise_superscripts(models, ratios, 0.10);
    // BM3 is cluster 2, shifted on component 0.
    CHECK(sup[0][0] == std::vector<int>{3});
    CHECK(sup[1][0] == std::vector<int>{3});
    CHECK(sup[2][0] == std::vector<int>{1, 2});
}

TEST_CASE("hand-counted transitions") {
    // Bank A: BM1, BM1, BM2; bank B: BM2, BM2, BM2.
    const std::vector<RankObservation> obs{{"A", 2000, 1}, {"A", 2001, 1}, {"A", 2002, 2},
                                           {"B", 2000, 2}, {"B", 2001, 2}, {"B", 2002, 2}};
    const std::vector<PeriodSpec> all{{"all", 2000, 2002}};
    const auto rows = transition_report(obs, all);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].worse == 25.0);
    CHECK(rows[0].equal == 75.0);
    CHECK(rows[0].better == 0.0);
    CHECK(rows[0].year_pairs == 2);

    const auto pairs = transition_pairs(obs);
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].equal == 100.0);
    CHECK(pairs[1].worse == 50.0);
}

TEST_CASE("transition rows always sum to 100") {
    Rng rng(4);
    std::vector<RankObservation> obs;
    for (int b = 0; b < 30; ++b)
        for (int y = 2000; y < 2010; ++y)
            if (rng.uniform01() < 0.85) obs.push_back({"b" + std::to_string(b), y, 1 + static_cast<int>(rng.uniform_index(3))});
    const std::vector<PeriodSpec> periods{{"p1", 2000, 2004}, {"p2", 2005, 2009}};
    for (const auto& r : transition_report(obs, periods))
        CHECK(std::abs(r.worse + r.equal + r.better - 100.0) <= 1e-9);

    const std::vector<RankObservation> steady{{"A", 2000, 1}, {"A", 2001, 1}, {"B", 2000, 3}, {"B", 2001, 3}};
    const auto constant = transition_report(steady, std::vector<PeriodSpec>{{"all", 2000, 2001}});
    CHECK(constant[0].equal == 100.0);

    const std::vector<RankObservation> gaps{{"A", 2000, 1}, {"A", 2002, 1}};
    CHECK_THROWS_AS(transition_report(gaps, std::vector<PeriodSpec>{{"all", 2000, 2002}}), DataError);
}
