#include "bizmodel/error.hpp"
#include "bizmodel/tree.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

using namespace bizmodel;

namespace {

Matrix column(std::initializer_list<double> xs) {
    Matrix m(xs.size(), 1);
    std::size_t i = 0;
    for (double x : xs) m(i++, 0) = x;
    return m;
}

Matrix random_matrix(std::size_t n, std::size_t p, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(n, p);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) m(i, j) = rng.uniform(0.1, 2.0);
    return m;
}

double sse_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double mean = 0.0;
    for (double y : v) mean += y;
    mean /= static_cast<double>(v.size());
    double s = 0.0;
    for (double y : v) s += (y - mean) * (y - mean);
    return s;
}

struct BestSplit {
    std::size_t feature = 0;
    double threshold = 0.0;
    double gain = -1.0;
};

// Exhaustive enumeration of every (feature, adjacent distinct value) split.
BestSplit oracle_root_split(const Matrix& x, const std::vector<double>& y) {
    BestSplit best;
    const double total = sse_of(y);
    for (std::size_t f = 0; f < x.cols(); ++f) {
        std::vector<double> values;
        for (std::size_t i = 0; i < x.rows(); ++i) values.push_back(x(i, f));
        std::sort(values.begin(), values.end());
        values.erase(std::unique(values.begin(), values.end()), values.end());
        for (std::size_t v = 0; v + 1 < values.size(); ++v) {
            std::vector<double> left, right;
            for (std::size_t i = 0; i < x.rows(); ++i) (x(i, f) <= values[v] ? left : right).push_back(y[i]);
            const double gain = total - sse_of(left) - sse_of(right);
            if (gain > best.gain + 1e-12 * std::max(1.0, total)) best = {f, values[v], gain};
        }
    }
    return best;
}

void check_node_invariants(const RegressionTree& tree) {
    for (const auto& n : tree.nodes()) {
        if (n.leaf) continue;
        const auto& l = tree.node(n.left);
        const auto& r = tree.node(n.right);
        CHECK(n.count == l.count + r.count);
        const double lhs = n.mean * static_cast<double>(n.count);
        const double rhs = l.mean * static_cast<double>(l.count) + r.mean * static_cast<double>(r.count);
        CHECK(std::abs(lhs - rhs) <= 1e-9 * std::max(1.0, std::abs(lhs)));
        CHECK(n.sse > l.sse + r.sse);
        CHECK(n.feature < tree.n_features());
    }
}

} // namespace

TEST_CASE("constant response gives a single leaf") {
    const Matrix x = column({1, 2, 3, 4});
    const std::vector<double> y(4, 0.7);
    Rng rng(1);
    TreeParams p;
    p.mtry = 1;
    auto tree = fit_tree(x, y, p, rng);
    CHECK(tree.nodes().size() == 1);
    const std::vector<double> q{123.0};
    CHECK(predict_tree(tree, q) == 0.7);
}

TEST_CASE("one-dimensional step is split once with pure children") {
    const Matrix x = column({1, 2, 3, 4});
    const std::vector<double> y{0, 0, 10, 10};
    TreeParams p;
    p.mtry = 1;

    SUBCASE("midpoint rule places the threshold at 2.5") {
        p.threshold_rule = ThresholdRule::kMidpoint;
        Rng rng(3);
        auto tree = fit_tree(x, y, p, rng);
        REQUIRE(tree.nodes().size() == 3);
        CHECK(tree.root().threshold == 2.5);
        const std::vector<double> q{1.7};
        CHECK(predict_tree(tree, q) == 0.0);
    }
    SUBCASE("default rule places it at the lower adjacent value") {
        Rng rng(3);
        auto tree = fit_tree(x, y, p, rng);
        REQUIRE(tree.nodes().size() == 3);
        CHECK(tree.root().threshold == 2.0);
        const std::vector<double> q{1.7}, at{2.0}, above{3.2};
        CHECK(predict_tree(tree, q) == 0.0);
        CHECK(predict_tree(tree, at) == 0.0);  // ties go left
        CHECK(predict_tree(tree, above) == 10.0);
        CHECK(decision_path(tree, above) == std::vector<int>{0, tree.root().right});
        for (int i = 0; i < 4; ++i) CHECK(predict_tree(tree, x.row(static_cast<std::size_t>(i))) == y[i]);
    }
}

TEST_CASE("XOR-style data grows a depth-2 tree with zero training error") {
    // (0,0) appears twice so that the root split has positive gain.
    Matrix x(5, 2);
    const double rows[5][2] = {{0, 0}, {0, 0}, {0, 1}, {1, 0}, {1, 1}};
    for (std::size_t i = 0; i < 5; ++i) {
        x(i, 0) = rows[i][0];
        x(i, 1) = rows[i][1];
    }
    const std::vector<double> y{0, 0, 1, 1, 0};
    const auto oracle = oracle_root_split(x, y);
    TreeParams p;
    p.mtry = 2;
    Rng rng(5);
    auto tree = fit_tree(x, y, p, rng);
    CHECK(tree.root().feature == oracle.feature);
    CHECK(tree.root().threshold == oracle.threshold);
    CHECK(tree.depth() == 2);
    for (std::size_t i = 0; i < 5; ++i) CHECK(predict_tree(tree, x.row(i)) == y[i]);
}

TEST_CASE("root split matches exhaustive enumeration on random data") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Matrix x = random_matrix(40, 4, seed);
        std::vector<double> y;
        for (std::size_t i = 0; i < x.rows(); ++i) y.push_back(std::sin(3 * x(i, 0)) + x(i, 2) * x(i, 3));
        const auto oracle = oracle_root_split(x, y);
        TreeParams p;
        p.mtry = 4;
        Rng rng(seed);
        auto tree = fit_tree(x, y, p, rng);
        CHECK(tree.root().feature == oracle.feature);
        CHECK(tree.root().threshold == oracle.threshold);
        CHECK(tree.root().sse - tree.node(tree.root().left).sse - tree.node(tree.root().right).sse ==
              doctest::Approx(oracle.gain).epsilon(1e-9));
    }
}

TEST_CASE("fully grown tree interpolates distinct rows and keeps node invariants") {
    const Matrix x = random_matrix(60, 3, 42);
    std::vector<double> y;
    for (std::size_t i = 0; i < x.rows(); ++i) y.push_back(x(i, 0) - x(i, 1) * x(i, 2));
    TreeParams p;
    p.mtry = 2;
    Rng rng(9);
    auto tree = fit_tree(x, y, p, rng);
    check_node_invariants(tree);
    for (std::size_t i = 0; i < x.rows(); ++i) CHECK(predict_tree(tree, x.row(i)) == doctest::Approx(y[i]));
    for (std::size_t i = 0; i < x.rows(); ++i) CHECK(decision_path(tree, x.row(i)).size() <= tree.depth() + 1);
}

TEST_CASE("min_node_size and max_depth are respected") {
    const Matrix x = random_matrix(200, 3, 4);
    std::vector<double> y;
    for (std::size_t i = 0; i < x.rows(); ++i) y.push_back(x(i, 0) * x(i, 0) + x(i, 1));
    TreeParams p;
    p.mtry = 3;
    p.min_node_size = 7;
    Rng rng(2);
    auto tree = fit_tree(x, y, p, rng);
    check_node_invariants(tree);
    for (const auto& n : tree.nodes()) CHECK(n.count >= 7);

    p.min_node_size = 1;
    p.max_depth = 3;
    Rng rng2(2);
    CHECK(fit_tree(x, y, p, rng2).depth() <= 3);
}

TEST_CASE("fitting is deterministic per seed") {
    const Matrix x = random_matrix(80, 5, 7);
    std::vector<double> y;
    for (std::size_t i = 0; i < x.rows(); ++i) y.push_back(x(i, 4) - x(i, 2));
    TreeParams p;
    p.mtry = 2;
    Rng a(17), b(17);
    CHECK(fit_tree(x, y, p, a) == fit_tree(x, y, p, b));
}

TEST_CASE("a strictly increasing transform of one feature leaves predictions unchanged") {
    const Matrix x = random_matrix(100, 3, 8);
    Matrix cubed = x;
    for (std::size_t i = 0; i < x.rows(); ++i) cubed(i, 1) = std::pow(x(i, 1), 3);
    std::vector<double> y;
    for (std::size_t i = 0; i < x.rows(); ++i) y.push_back(std::log(x(i, 0)) + x(i, 1) * x(i, 2));
    std::vector<std::size_t> rows;
    Rng draw(1);
    for (std::size_t i = 0; i < x.rows(); ++i) rows.push_back(draw.uniform_index(x.rows()));
    TreeParams p;
    p.mtry = 2;
    Rng a(31), b(31);
    auto t1 = fit_tree(x, y, rows, p, a);
    auto t2 = fit_tree(cubed, y, rows, p, b);
    const Matrix queries = random_matrix(300, 3, 99);
    for (std::size_t i = 0; i < queries.rows(); ++i) {
        std::vector<double> q(queries.row(i).begin(), queries.row(i).end());
        std::vector<double> qc = q;
        qc[1] = std::pow(q[1], 3);
        CHECK(predict_tree(t1, q) == predict_tree(t2, qc));
        CHECK(decision_path(t1, q) == decision_path(t2, qc));
    }
    for (std::size_t i = 0; i < x.rows(); ++i) CHECK(predict_tree(t1, x.row(i)) == predict_tree(t2, cubed.row(i)));
}

TEST_CASE("tree text round trip is exact") {
    const Matrix x = random_matrix(50, 4, 12);
    std::vector<double> y;
    for (std::size_t i = 0; i < x.rows(); ++i) y.push_back(x(i, 0) / 3.0 + x(i, 3) * 1e-7);
    TreeParams p;
    Rng rng(4);
    auto tree = fit_tree(x, y, p, rng);
    auto back = tree_from_text(tree_to_text(tree));
    CHECK(back == tree);
}

TEST_CASE("tree errors") {
    const Matrix x = column({1, 2});
    TreeParams p;
    p.mtry = 1;
    Rng rng(1);
    const std::vector<double> bad{1.0, std::numeric_limits<double>::quiet_NaN()};
    CHECK_THROWS_AS(fit_tree(x, bad, p, rng), Error);
    const std::vector<std::size_t> none;
    const std::vector<double> y{1.0, 2.0};
    CHECK_THROWS_AS(fit_tree(x, y, none, p, rng), Error);
    auto tree = fit_tree(x, y, p, rng);
    const std::vector<double> wrong{1.0, 2.0};
    CHECK_THROWS_AS(predict_tree(tree, wrong), DimensionError);
    CHECK_THROWS_AS(tree_from_text("not a tree"), Error);
}
