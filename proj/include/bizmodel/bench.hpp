#pragma once

#include "bizmodel/data.hpp"
#include "bizmodel/forest.hpp"
#include "bizmodel/tree.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bizmodel {

/// k-nearest-neighbour regression on standardized features. Features with
/// zero training variance are left out of the distance.
class KnnRegressor {
public:
    KnnRegressor(const Matrix& features, std::span<const double> response, std::size_t k = 5);

    /// Mean response of the k nearest training rows; distance ties go to
    /// the earlier training row.
    double predict(std::span<const double> x) const;

    const std::vector<std::size_t>& used_features() const { return used_; }

private:
    Matrix scaled_;
    std::vector<double> response_;
    std::vector<double> mean_;
    std::vector<double> sd_;
    std::vector<std::size_t> used_;
    std::size_t k_;
};

double knn_predict(const Panel& train, std::span<const double> x, std::size_t k = 5);

struct GbConfig {
    std::size_t n_stages = 200;
    double shrinkage = 0.1;
    /// nullopt grows each stage tree without a depth limit.
    std::optional<std::size_t> tree_depth = 3;
    std::size_t min_node_size = 1;
    std::uint64_t seed = 0;
};

/// Least-squares gradient boosting: F_0 = mean, F_m = F_{m-1} + shrinkage * tree_m
/// with tree_m fitted to the current residuals.
class BoostedModel {
public:
    BoostedModel(double initial, double shrinkage, std::vector<RegressionTree> stages);

    double predict(std::span<const double> x) const { return predict_stages(x, stages_.size()); }
    /// Prediction of F_m using only the first m stages.
    double predict_stages(std::span<const double> x, std::size_t m) const;
    std::size_t n_stages() const { return stages_.size(); }

private:
    double initial_;
    double shrinkage_;
    std::vector<RegressionTree> stages_;
};

BoostedModel fit_gb(const Matrix& features, std::span<const double> response, const GbConfig& config);
BoostedModel fit_gb(const Panel& panel, const GbConfig& config);

struct Scores {
    double rmse = 0.0;
    double mae = 0.0;
    /// nullopt when the evaluation responses have zero variance.
    std::optional<double> r_squared;
};

Scores score(std::span<const double> actual, std::span<const double> predicted);

enum class EvalMode { kInSample, kHoldout, kCrossValidation };

std::string eval_mode_name(EvalMode mode);
std::optional<EvalMode> parse_eval_mode(std::string_view name);

struct BenchConfig {
    /// Any of "rf", "knn", "gb", "cart".
    std::vector<std::string> models = {"rf", "knn", "gb", "cart"};
    EvalMode mode = EvalMode::kInSample;
    ForestConfig forest;
    std::size_t knn_k = 5;
    GbConfig gb;
    /// Candidate min_node_size values for the single CART, chosen by CV.
    std::vector<std::size_t> cart_min_node_grid = {1, 2, 5, 10, 20, 50, 100, 200};
    std::size_t folds = 5;
    double holdout_fraction = 0.2;
    std::uint64_t seed = 0;
};

struct BenchRow {
    std::string model;
    Scores scores;
    /// SSE of the evaluation predictions, accumulated while scoring.
    double sse = 0.0;
    /// Comparator settings as used (including the tuned CART restriction).
    std::string settings;
    std::vector<double> actual;
    std::vector<double> predicted;
};

struct BenchResult {
    EvalMode mode = EvalMode::kInSample;
    std::vector<BenchRow> rows;
};

/// Scores each comparator on the panel. In-sample mode fits and evaluates
/// on the whole panel and emits a warning.
BenchResult run_benchmark(const Panel& panel, const BenchConfig& config);

/// Columns: model, rmse, mae, r_squared (NA when undefined), mode.
std::string bench_csv(const BenchResult& result);
/// Columns: model, settings.
std::string bench_settings_csv(const BenchResult& result);

} // namespace bizmodel
