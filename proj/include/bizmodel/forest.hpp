#pragma once

#include "bizmodel/data.hpp"
#include "bizmodel/tree.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bizmodel {

struct ForestConfig {
    std::size_t n_trees = 500;
    std::size_t mtry = 3;
    std::size_t min_node_size = 1;
    std::optional<std::size_t> max_depth;
    std::uint64_t seed = 0;
    /// Draws per bootstrap sample; defaults to the number of training rows.
    std::optional<std::size_t> bootstrap_size;
    ThresholdRule threshold_rule = ThresholdRule::kLowerValue;

    TreeParams tree_params() const { return {mtry, min_node_size, max_depth, threshold_rule}; }

    friend bool operator==(const ForestConfig&, const ForestConfig&) = default;
};

class Forest {
public:
    Forest(std::vector<RegressionTree> trees, std::vector<std::vector<std::uint32_t>> inbag, ForestConfig config,
           double global_mean, std::size_t n_train);

    const std::vector<RegressionTree>& trees() const { return trees_; }
    /// Sorted bootstrap draws (with repeats) of each tree.
    const std::vector<std::vector<std::uint32_t>>& inbag() const { return inbag_; }
    const ForestConfig& config() const { return config_; }
    /// Mean training response.
    double global_mean() const { return global_mean_; }
    std::size_t n_train() const { return n_train_; }
    std::size_t n_features() const { return trees_.front().n_features(); }

    friend bool operator==(const Forest&, const Forest&) = default;

private:
    std::vector<RegressionTree> trees_;
    std::vector<std::vector<std::uint32_t>> inbag_;
    ForestConfig config_;
    double global_mean_ = 0.0;
    std::size_t n_train_ = 0;
};

/// Bootstrap draws of tree `tree_index`, sorted. Depends only on
/// (n, draws, seed, tree_index), never on the training values.
std::vector<std::uint32_t> bootstrap_rows(std::size_t n, std::size_t draws, std::uint64_t seed,
                                          std::size_t tree_index);

Forest fit_forest(const Matrix& features, std::span<const double> response, const ForestConfig& config);
Forest fit_forest(const Panel& panel, const ForestConfig& config);

/// Arithmetic mean of the per-tree predictions.
double predict(const Forest& forest, std::span<const double> x);
std::vector<double> predict_rows(const Forest& forest, const Matrix& features);

enum class ErrorMetric { kRmse, kMae };

/// Out-of-bag error: each row is predicted by the trees whose bootstrap
/// sample excludes it. Rows in every bootstrap sample are skipped with a
/// warning; throws if no row has an out-of-bag tree.
double oob_error(const Forest& forest, const Matrix& features, std::span<const double> response,
                 ErrorMetric metric = ErrorMetric::kRmse);
double oob_error(const Forest& forest, const Panel& panel, ErrorMetric metric = ErrorMetric::kRmse);

struct TuneCell {
    std::size_t mtry = 0;
    std::size_t min_node_size = 0;
    double error = 0.0;
};

struct TuneResult {
    std::vector<TuneCell> cells;
    std::size_t best = 0;

    const TuneCell& best_cell() const { return cells[best]; }
};

/// One forest per (mtry, min_node_size) cell scored by out-of-bag error.
/// The argmin prefers smaller mtry, then smaller min_node_size, on ties.
TuneResult tune_grid(const Panel& panel, std::span<const std::size_t> mtry_values,
                     std::span<const std::size_t> min_node_values, const ForestConfig& base,
                     ErrorMetric metric = ErrorMetric::kRmse);

/// CSV with columns mtry, min_node_size, rmse (or mae).
std::string tune_grid_csv(const TuneResult& result, ErrorMetric metric = ErrorMetric::kRmse);

enum class ImportanceKind { kImpurity, kPermutation };
enum class ImportanceScaling {
    /// 100 * (raw - min) / (max - min)
    kMinMax,
    /// 100 * raw / max
    kRelativeToMax,
};

struct ImportanceReport {
    std::vector<double> raw;
    std::vector<double> scaled;
    /// All raw importances equal; every scaled score set to 100.
    bool degenerate = false;
};

/// Impurity importance: total SSE reduction of the splits on each feature,
/// summed over all trees.
ImportanceReport variable_importance(const Forest& forest, ImportanceScaling scaling = ImportanceScaling::kMinMax);

/// Permutation importance on out-of-bag rows: mean increase in tree MSE
/// after shuffling one feature, floored at zero.
ImportanceReport permutation_importance(const Forest& forest, const Matrix& features,
                                        std::span<const double> response,
                                        ImportanceScaling scaling = ImportanceScaling::kMinMax);

ImportanceReport scale_importance(std::vector<double> raw, ImportanceScaling scaling);

/// CSV rows sorted by scaled score: feature, raw_importance, scaled_score.
std::string importance_csv(const ImportanceReport& report);

void write_forest(std::ostream& out, const Forest& forest);
Forest read_forest(std::istream& in);

} // namespace bizmodel
