#include "bizmodel/cluster.hpp"
#include "bizmodel/error.hpp"
#include "bizmodel/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>

using namespace bizmodel;

namespace {

Matrix blobs(const std::vector<std::vector<double>>& centers, std::size_t per_blob, double sigma, std::uint64_t seed,
             std::vector<int>* truth = nullptr) {
    Rng rng(seed);
    const std::size_t dim = centers.front().size();
    Matrix m(centers.size() * per_blob, dim);
    std::size_t r = 0;
    for (std::size_t c = 0; c < centers.size(); ++c)
        for (std::size_t i = 0; i < per_blob; ++i, ++r) {
            for (std::size_t j = 0; j < dim; ++j) m(r, j) = centers[c][j] + sigma * rng.normal();
            if (truth) truth->push_back(static_cast<int>(c));
        }
    return m;
}

double dist(const Matrix& m, std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) s += (m(a, j) - m(b, j)) * (m(a, j) - m(b, j));
    return std::sqrt(s);
}

// Naive index formulas computed from the assignments alone.
struct OracleIndices {
    double ch, sil, db, dunn, inertia;
};

OracleIndices oracle(const Matrix& x, const std::vector<int>& labels, std::size_t k) {
    const std::size_t n = x.rows(), p = x.cols();
    Matrix cent(k, p);
    std::vector<double> size(k, 0.0), grand(p, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        size[labels[i]] += 1;
        for (std::size_t j = 0; j < p; ++j) {
            cent(labels[i], j) += x(i, j);
            grand[j] += x(i, j) / n;
        }
    }
    for (std::size_t c = 0; c < k; ++c)
        for (std::size_t j = 0; j < p; ++j) cent(c, j) /= size[c];
    double w = 0.0, b = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) w += std::pow(x(i, j) - cent(labels[i], j), 2);
    for (std::size_t c = 0; c < k; ++c)
        for (std::size_t j = 0; j < p; ++j) b += size[c] * std::pow(cent(c, j) - grand[j], 2);
    OracleIndices o{};
    o.inertia = w;
    o.ch = (b / (k - 1)) / (w / (n - k));

    double sil = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> sum(k, 0.0);
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) sum[labels[j]] += dist(x, i, j);
        if (size[labels[i]] < 2) continue;
        const double a = sum[labels[i]] / (size[labels[i]] - 1);
        double nearest = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c)
            if (static_cast<int>(c) != labels[i]) nearest = std::min(nearest, sum[c] / size[c]);
        sil += (nearest - a) / std::max(a, nearest);
    }
    o.sil = sil / n;

    std::vector<double> scatter(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double d = 0.0;
        for (std::size_t j = 0; j < p; ++j) d += std::pow(x(i, j) - cent(labels[i], j), 2);
        scatter[labels[i]] += std::sqrt(d) / size[labels[i]];
    }
    double db = 0.0;
    for (std::size_t a = 0; a < k; ++a) {
        double worst = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            if (a == c) continue;
            double d = 0.0;
            for (std::size_t j = 0; j < p; ++j) d += std::pow(cent(a, j) - cent(c, j), 2);
            worst = std::max(worst, (scatter[a] + scatter[c]) / std::sqrt(d));
        }
        db += worst;
    }
    o.db = db / k;

    double min_between = std::numeric_limits<double>::infinity(), max_diam = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            if (labels[i] == labels[j])
                max_diam = std::max(max_diam, dist(x, i, j));
            else
                min_between = std::min(min_between, dist(x, i, j));
        }
    o.dunn = min_between / max_diam;
    return o;
}

} // namespace

TEST_CASE("two duplicated pairs give zero inertia") {
    Matrix x(4, 2);
    x(2, 0) = x(2, 1) = x(3, 0) = x(3, 1) = 10.0;
    KMeansOptions opt;
    opt.n_starts = 10;
    auto s = kmeans(x, 2, opt);
    CHECK(s.inertia == 0.0);
    CHECK(s.assignments[0] == s.assignments[1]);
    CHECK(s.assignments[2] == s.assignments[3]);
    CHECK(s.assignments[0] != s.assignments[2]);
    const auto c = static_cast<std::size_t>(s.assignments[2]);
    CHECK(s.centroids(c, 0) == 10.0);
    CHECK(s.centroids(c, 1) == 10.0);
}

TEST_CASE("k equal to n puts each point alone") {
    const Matrix x = blobs({{0, 0}}, 6, 1.0, 3);
    auto s = kmeans(x, 6, {});
    CHECK(s.inertia == 0.0);
    CHECK(std::set<int>(s.assignments.begin(), s.assignments.end()).size() == 6);
}

TEST_CASE("three separated blobs are recovered exactly") {
    std::vector<int> truth;
    const Matrix x = blobs({{0, 0}, {10, 0}, {0, 10}}, 40, 0.1, 4, &truth);
    auto s = kmeans(x, 3, {});
    for (std::size_t i = 0; i < truth.size(); ++i)
        for (std::size_t j = 0; j < truth.size(); ++j)
            CHECK((truth[i] == truth[j]) == (s.assignments[i] == s.assignments[j]));
}

TEST_CASE("Lloyd inertia never increases and the reported inertia is recomputable") {
    const Matrix x = blobs({{0, 0, 0}, {1, 1, 1}, {2, 0, 1}}, 30, 0.8, 5);
    Matrix init(4, 3);
    for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t j = 0; j < 3; ++j) init(c, j) = x(c * 7, j);
    auto run = lloyd(x, init, 300);
    for (std::size_t i = 1; i < run.inertia_trace.size(); ++i) CHECK(run.inertia_trace[i] <= run.inertia_trace[i - 1]);
    CHECK(run.solution.inertia ==
          doctest::Approx(inertia(x, run.solution.assignments, run.solution.centroids)).epsilon(1e-12));
}

TEST_CASE("more starts never do worse on the same seed stream") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Matrix x = blobs({{0, 0}, {3, 0}, {0, 3}, {3, 3}}, 15, 1.0, 100 + seed);
        KMeansOptions one, many;
        one.n_starts = 1;
        many.n_starts = 50;
        one.seed = many.seed = seed;
        CHECK(kmeans(x, 4, many).inertia <= kmeans(x, 4, one).inertia);
    }
}

TEST_CASE("translating every point leaves the partition unchanged") {
    const Matrix x = blobs({{0, 0}, {4, 1}, {1, 5}}, 20, 0.7, 6);
    Matrix shifted = x;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        shifted(i, 0) += 100.0;
        shifted(i, 1) -= 50.0;
    }
    KMeansOptions opt;
    opt.seed = 3;
    auto a = kmeans(x, 3, opt);
    auto b = kmeans(shifted, 3, opt);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.rows(); ++j)
            CHECK((a.assignments[i] == a.assignments[j]) == (b.assignments[i] == b.assignments[j]));
}

TEST_CASE("validity indices agree with brute-force formulas") {
    const Matrix x = blobs({{0, 0}, {2, 1}, {1, 3}}, 12, 0.9, 7);
    for (std::size_t k = 2; k <= 4; ++k) {
        auto s = kmeans(x, k, {});
        const auto o = oracle(x, s.assignments, k);
        CHECK(s.inertia == doctest::Approx(o.inertia).epsilon(1e-10));
        CHECK(*calinski_harabasz(x, s) == doctest::Approx(o.ch).epsilon(1e-10));
        CHECK(*silhouette(x, s) == doctest::Approx(o.sil).epsilon(1e-10));
        CHECK(*davies_bouldin(x, s) == doctest::Approx(o.db).epsilon(1e-10));
        CHECK(*dunn(x, s) == doctest::Approx(o.dunn).epsilon(1e-10));
    }
    CHECK(*hartigan(20.0, 10.0, 30, 2) == doctest::Approx(27.0));
}

TEST_CASE("two far-apart blobs select k = 2") {
    const Matrix x = blobs({{0, 0}, {50, 50}}, 10, 1.0, 8);
    SelectKOptions opt;
    opt.k_max = 6;
    opt.kmeans.n_starts = 20;
    auto report = select_k(x, opt);
    CHECK(report.final_k == 2);
    for (const auto& col : report.indices) {
        if (col.index == ValidityIndex::kHartigan) continue;
        CHECK(col.recommended_k == std::optional<std::size_t>(2));
        // The reported value matches the brute-force formula on the chosen solution.
        const auto o = oracle(x, report.solution_for(2).assignments, 2);
        const double v = *col.values[0];
        switch (col.index) {
        case ValidityIndex::kCalinskiHarabasz: CHECK(v == doctest::Approx(o.ch)); break;
        case ValidityIndex::kSilhouette: CHECK(v == doctest::Approx(o.sil)); break;
        case ValidityIndex::kDaviesBouldin: CHECK(v == doctest::Approx(o.db)); break;
        case ValidityIndex::kDunn: CHECK(v == doctest::Approx(o.dunn)); break;
        default: break;
        }
    }
    CHECK(k_selection_csv(report).rfind("index,k,value,vote\n", 0) == 0);
}

TEST_CASE("vote ties go to the smallest k") {
    CHECK(majority_vote({{2, 2}, {4, 2}, {3, 1}}) == 2);
    CHECK(majority_vote({{5, 1}, {3, 3}}) == 3);
    CHECK_THROWS_AS(majority_vote({}), Error);
}

TEST_CASE("k-means errors") {
    Matrix x(2, 1);
    CHECK_THROWS_AS(kmeans(x, 3, {}), Error);
    x(0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(kmeans(x, 1, {}), Error);
}
