#pragma once

#include "bizmodel/data.hpp"
#include "bizmodel/forest.hpp"
#include "bizmodel/matrix.hpp"
#include "bizmodel/tree.hpp"

#include <span>
#include <string>
#include <vector>

namespace bizmodel {

/// A prediction written as bias plus one additive term per feature.
struct ContributionVector {
    double bias = 0.0;
    std::vector<double> contributions;

    double prediction() const;
};

/// Walks the decision path of x. Each step from a parent to a child adds
/// mean(child) - mean(parent) to the parent's split feature; the bias is
/// the root mean. bias + sum(contributions) equals predict_tree(tree, x).
ContributionVector decompose(const RegressionTree& tree, std::span<const double> x);

/// Element-wise mean of the per-tree decompositions. The bias is the mean
/// of the per-tree root means, which keeps the identity with predict().
ContributionVector decompose_forest(const Forest& forest, std::span<const double> x);

/// Per-record decompositions of a panel: the clustering input.
struct ContributionMatrix {
    std::vector<std::string> bank_ids;
    std::vector<int> years;
    std::vector<double> bias;
    /// n x K contributions in response units.
    Matrix contributions;
    std::vector<double> prediction;
    std::vector<double> actual;

    std::size_t size() const { return bias.size(); }
};

ContributionMatrix contribution_matrix(const Forest& forest, const Panel& panel);

/// Columns: bank_id, year, bias, one column per feature, prediction, actual.
std::string contribution_csv(const ContributionMatrix& matrix);
ContributionMatrix parse_contribution_csv(const csv::Table& table);

} // namespace bizmodel
