#pragma once

#include "bizmodel/matrix.hpp"
#include "bizmodel/rng.hpp"

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bizmodel {

/// Where a split threshold is placed between the two adjacent distinct
/// values a < b that separate the partitions. Routing is always x <= t left.
enum class ThresholdRule {
    /// t = a. Query routing then depends only on the order of values, so a
    /// strictly increasing transform of a feature cannot change any path.
    kLowerValue,
    /// t = (a + b) / 2, the classic CART choice.
    kMidpoint,
};

struct TreeParams {
    std::size_t mtry = 3;
    /// Minimum number of rows in each child of an accepted split.
    std::size_t min_node_size = 1;
    std::optional<std::size_t> max_depth;
    ThresholdRule threshold_rule = ThresholdRule::kLowerValue;
};

struct TreeNode {
    int id = 0;
    bool leaf = true;
    std::size_t feature = 0;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    /// Mean training response of the rows reaching the node.
    double mean = 0.0;
    std::size_t count = 0;
    /// Sum of squared deviations of those responses from `mean`.
    double sse = 0.0;

    friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// Immutable fitted regression tree. Node 0 is the root.
class RegressionTree {
public:
    /// Validates the node table (ids, child links, single rooted tree).
    RegressionTree(std::vector<TreeNode> nodes, std::size_t n_features);

    const std::vector<TreeNode>& nodes() const { return nodes_; }
    const TreeNode& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
    const TreeNode& root() const { return nodes_.front(); }
    std::size_t n_features() const { return n_features_; }
    std::size_t depth() const;

    friend bool operator==(const RegressionTree&, const RegressionTree&) = default;

private:
    std::vector<TreeNode> nodes_;
    std::size_t n_features_ = 0;
};

/// Fits a CART regression tree on the given rows of (features, response).
/// `rows` is a multiset of row indices (bootstrap draws repeat). At each
/// node, features are drawn in random order and the first `mtry` that are
/// not constant in the node become split candidates; the split maximizing
/// the SSE reduction wins, ties going to the lowest feature index and then
/// the lowest threshold.
RegressionTree fit_tree(const Matrix& features, std::span<const double> response, std::span<const std::size_t> rows,
                        const TreeParams& params, Rng& rng);

/// Fits on every row once.
RegressionTree fit_tree(const Matrix& features, std::span<const double> response, const TreeParams& params, Rng& rng);

double predict_tree(const RegressionTree& tree, std::span<const double> x);

/// Node ids from the root to the leaf reached by x.
std::vector<int> decision_path(const RegressionTree& tree, std::span<const double> x);

/// Node table as text. Doubles are written in shortest round-trip form, so
/// reading the text back reproduces the tree exactly.
void write_tree(std::ostream& out, const RegressionTree& tree);
RegressionTree read_tree(std::istream& in);
std::string tree_to_text(const RegressionTree& tree);
RegressionTree tree_from_text(std::string_view text);

} // namespace bizmodel
