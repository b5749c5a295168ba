#include "bizmodel/bench.hpp"

#include "bizmodel/csv.hpp"
#include "bizmodel/error.hpp"
#include "bizmodel/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>

namespace bizmodel {

// --- kNN -----------------------------------------------------------------------

KnnRegressor::KnnRegressor(const Matrix& features, std::span<const double> response, std::size_t k)
    : response_(response.begin(), response.end()), k_(k) {
    const std::size_t n = features.rows();
    if (n == 0) throw Error("kNN needs a nonempty training set");
    if (n != response.size()) throw DimensionError("feature rows and responses differ in length");
    if (k < 1 || k > n) throw Error("kNN k must lie in [1, n]");
    const std::size_t dims = features.cols();
    mean_.assign(dims, 0.0);
    sd_.assign(dims, 0.0);
    for (std::size_t j = 0; j < dims; ++j) {
        for (std::size_t i = 0; i < n; ++i) mean_[j] += features(i, j);
        mean_[j] /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) sd_[j] += (features(i, j) - mean_[j]) * (features(i, j) - mean_[j]);
        sd_[j] = std::sqrt(sd_[j] / static_cast<double>(n));
        if (sd_[j] > 0.0)
            used_.push_back(j);
        else
            warn("kNN: feature " + std::to_string(j) + " has zero variance and is excluded from distances");
    }
    scaled_ = Matrix(n, used_.size());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t u = 0; u < used_.size(); ++u)
            scaled_(i, u) = (features(i, used_[u]) - mean_[used_[u]]) / sd_[used_[u]];
}

double KnnRegressor::predict(std::span<const double> x) const {
    if (x.size() != mean_.size()) throw DimensionError("kNN query has the wrong dimension");
    std::vector<double> q(used_.size());
    for (std::size_t u = 0; u < used_.size(); ++u) q[u] = (x[used_[u]] - mean_[used_[u]]) / sd_[used_[u]];
    std::vector<std::pair<double, std::size_t>> dist(scaled_.rows());
    for (std::size_t i = 0; i < scaled_.rows(); ++i) {
        double d = 0.0;
        const auto row = scaled_.row(i);
        for (std::size_t u = 0; u < q.size(); ++u) d += (row[u] - q[u]) * (row[u] - q[u]);
        dist[i] = {d, i};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k_), dist.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < k_; ++i) sum += response_[dist[i].second];
    return sum / static_cast<double>(k_);
}

double knn_predict(const Panel& train, std::span<const double> x, std::size_t k) {
    const auto y = train.responses();
    return KnnRegressor(train.features(), y, k).predict(x);
}

// --- gradient boosting ---------------------------------------------------------

BoostedModel::BoostedModel(double initial, double shrinkage, std::vector<RegressionTree> stages)
    : initial_(initial), shrinkage_(shrinkage), stages_(std::move(stages)) {}

double BoostedModel::predict_stages(std::span<const double> x, std::size_t m) const {
    double f = initial_;
    for (std::size_t s = 0; s < std::min(m, stages_.size()); ++s) f += shrinkage_ * predict_tree(stages_[s], x);
    return f;
}

BoostedModel fit_gb(const Matrix& features, std::span<const double> response, const GbConfig& config) {
    const std::size_t n = response.size();
    if (n == 0) throw Error("cannot boost on an empty panel");
    if (features.rows() != n) throw DimensionError("feature rows and responses differ in length");
    const double initial = std::accumulate(response.begin(), response.end(), 0.0) / static_cast<double>(n);
    std::vector<double> current(n, initial), residual(n);
    std::vector<RegressionTree> stages;
    TreeParams params;
    params.mtry = features.cols();
    params.min_node_size = config.min_node_size;
    params.max_depth = config.tree_depth;
    Rng rng(derive_seed(config.seed, "gb"));
    for (std::size_t m = 0; m < config.n_stages; ++m) {
        for (std::size_t i = 0; i < n; ++i) residual[i] = response[i] - current[i];
        stages.push_back(fit_tree(features, residual, params, rng));
        for (std::size_t i = 0; i < n; ++i)
            current[i] += config.shrinkage * predict_tree(stages.back(), features.row(i));
    }
    return BoostedModel(initial, config.shrinkage, std::move(stages));
}

BoostedModel fit_gb(const Panel& panel, const GbConfig& config) {
    const auto y = panel.responses();
    return fit_gb(panel.features(), y, config);
}

// --- scoring -------------------------------------------------------------------

Scores score(std::span<const double> actual, std::span<const double> predicted) {
    if (actual.size() != predicted.size() || actual.empty()) throw Error("scoring needs matching nonempty vectors");
    const double n = static_cast<double>(actual.size());
    double sse = 0.0, sae = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        const double r = actual[i] - predicted[i];
        sse += r * r;
        sae += std::abs(r);
    }
    const double mean = std::accumulate(actual.begin(), actual.end(), 0.0) / n;
    double sst = 0.0;
    for (double y : actual) sst += (y - mean) * (y - mean);
    Scores s;
    s.rmse = std::sqrt(sse / n);
    s.mae = sae / n;
    if (sst > 0.0) s.r_squared = 1.0 - sse / sst;
    return s;
}

std::string eval_mode_name(EvalMode mode) {
    switch (mode) {
    case EvalMode::kInSample: return "in_sample";
    case EvalMode::kHoldout: return "holdout";
    case EvalMode::kCrossValidation: return "cv";
    }
    return "unknown";
}

std::optional<EvalMode> parse_eval_mode(std::string_view name) {
    if (name == "in_sample") return EvalMode::kInSample;
    if (name == "holdout") return EvalMode::kHoldout;
    if (name == "cv") return EvalMode::kCrossValidation;
    return std::nullopt;
}

namespace {

using Predictor = std::function<double(std::span<const double>)>;
// Fits on (features, response) and returns a predictor plus a settings note.
using Fitter = std::function<std::pair<Predictor, std::string>(const Matrix&, std::span<const double>)>;

Matrix take_rows(const Matrix& m, std::span<const std::size_t> rows) {
    Matrix out(rows.size(), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) std::ranges::copy(m.row(rows[i]), out.row(i).begin());
    return out;
}

std::vector<double> take(std::span<const double> v, std::span<const std::size_t> rows) {
    std::vector<double> out;
    out.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(v[r]);
    return out;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
    return idx;
}

// Fold f of `folds` over a shuffled index list.
std::vector<std::vector<std::size_t>> make_folds(std::size_t n, std::size_t folds, std::uint64_t seed) {
    const auto idx = shuffled_indices(n, seed);
    std::vector<std::vector<std::size_t>> out(folds);
    for (std::size_t i = 0; i < n; ++i) out[i % folds].push_back(idx[i]);
    for (auto& f : out) std::sort(f.begin(), f.end());
    return out;
}

std::vector<std::size_t> complement(std::size_t n, const std::vector<std::size_t>& rows) {
    std::vector<char> in(n, 0);
    for (std::size_t r : rows) in[r] = 1;
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n; ++i)
        if (!in[i]) out.push_back(i);
    return out;
}

std::size_t tune_cart_min_node(const Matrix& x, std::span<const double> y, const BenchConfig& config) {
    const std::size_t n = y.size();
    const std::size_t folds = std::min<std::size_t>(config.folds, n);
    if (folds < 2) return config.cart_min_node_grid.front();
    const auto parts = make_folds(n, folds, derive_seed(config.seed, "cart_cv"));
    std::size_t best = config.cart_min_node_grid.front();
    double best_err = std::numeric_limits<double>::infinity();
    for (std::size_t min_node : config.cart_min_node_grid) {
        double sse = 0.0;
        for (const auto& test : parts) {
            const auto train = complement(n, test);
            const Matrix xt = take_rows(x, train);
            const auto yt = take(y, train);
            TreeParams p;
            p.mtry = x.cols();
            p.min_node_size = min_node;
            Rng rng(derive_seed(config.seed, "cart"));
            const auto tree = fit_tree(xt, yt, p, rng);
            for (std::size_t r : test) {
                const double e = y[r] - predict_tree(tree, x.row(r));
                sse += e * e;
            }
        }
        if (sse < best_err) {
            best_err = sse;
            best = min_node;
        }
    }
    return best;
}

Fitter make_fitter(const std::string& name, const BenchConfig& config) {
    if (name == "rf")
        return [&config](const Matrix& x, std::span<const double> y) {
            ForestConfig fc = config.forest;
            fc.seed = derive_seed(config.seed, "rf");
            auto forest = std::make_shared<Forest>(fit_forest(x, y, fc));
            std::string settings = "n_trees=" + std::to_string(fc.n_trees) + " mtry=" + std::to_string(fc.mtry) +
                                   " min_node_size=" + std::to_string(fc.min_node_size);
            return std::pair{Predictor([forest](std::span<const double> q) { return predict(*forest, q); }), settings};
        };
    if (name == "knn")
        return [&config](const Matrix& x, std::span<const double> y) {
            auto knn = std::make_shared<KnnRegressor>(x, y, std::min(config.knn_k, y.size()));
            return std::pair{Predictor([knn](std::span<const double> q) { return knn->predict(q); }),
                             "k=" + std::to_string(std::min(config.knn_k, y.size())) + " standardized=yes"};
        };
    if (name == "gb")
        return [&config](const Matrix& x, std::span<const double> y) {
            GbConfig gc = config.gb;
            gc.seed = derive_seed(config.seed, "gb");
            auto gb = std::make_shared<BoostedModel>(fit_gb(x, y, gc));
            std::string settings = "n_stages=" + std::to_string(gc.n_stages) +
                                   " shrinkage=" + csv::format_double(gc.shrinkage) + " tree_depth=" +
                                   (gc.tree_depth ? std::to_string(*gc.tree_depth) : std::string("none"));
            return std::pair{Predictor([gb](std::span<const double> q) { return gb->predict(q); }), settings};
        };
    if (name == "cart")
        return [&config](const Matrix& x, std::span<const double> y) {
            const std::size_t min_node = tune_cart_min_node(x, y, config);
            TreeParams p;
            p.mtry = x.cols();
            p.min_node_size = min_node;
            Rng rng(derive_seed(config.seed, "cart"));
            auto tree = std::make_shared<RegressionTree>(fit_tree(x, y, p, rng));
            return std::pair{Predictor([tree](std::span<const double> q) { return predict_tree(*tree, q); }),
                             "min_node_size=" + std::to_string(min_node) + " (chosen by " +
                                 std::to_string(config.folds) + "-fold CV)"};
        };
    throw Error("unknown benchmark model '" + name + "'");
}

} // namespace

BenchResult run_benchmark(const Panel& panel, const BenchConfig& config) {
    const std::size_t n = panel.size();
    if (n == 0) throw Error("cannot benchmark on an empty panel");
    if (config.cart_min_node_grid.empty()) throw Error("CART min_node grid is empty");
    const Matrix x = panel.features();
    const auto y = panel.responses();

    std::vector<std::vector<std::size_t>> test_sets;
    switch (config.mode) {
    case EvalMode::kInSample:
        warn("benchmark scored in-sample: errors measure fit, not generalization");
        break;
    case EvalMode::kHoldout: {
        const auto n_test = static_cast<std::size_t>(std::round(config.holdout_fraction * static_cast<double>(n)));
        if (n_test < 1 || n_test >= n) throw Error("holdout split infeasible for " + std::to_string(n) + " records");
        auto idx = shuffled_indices(n, derive_seed(config.seed, "holdout"));
        std::vector<std::size_t> test(idx.end() - static_cast<std::ptrdiff_t>(n_test), idx.end());
        std::sort(test.begin(), test.end());
        test_sets.push_back(std::move(test));
        break;
    }
    case EvalMode::kCrossValidation:
        if (config.folds < 2 || n < 2 * config.folds)
            throw Error("cross-validation infeasible for " + std::to_string(n) + " records");
        test_sets = make_folds(n, config.folds, derive_seed(config.seed, "cv"));
        break;
    }

    BenchResult result;
    result.mode = config.mode;
    result.rows.resize(config.models.size());
    for (std::size_t m = 0; m < config.models.size(); ++m) {
        const auto fitter = make_fitter(config.models[m], config);
        BenchRow& row = result.rows[m];
        row.model = config.models[m];
        if (config.mode == EvalMode::kInSample) {
            auto [predictor, settings] = fitter(x, y);
            row.settings = settings;
            row.actual = y;
            row.predicted.resize(n);
            parallel_for(n, [&](std::size_t i) { row.predicted[i] = predictor(x.row(i)); });
        } else {
            for (const auto& test : test_sets) {
                const auto train = complement(n, test);
                auto [predictor, settings] = fitter(take_rows(x, train), take(y, train));
                if (row.settings.empty()) row.settings = settings;
                std::vector<double> pred(test.size());
                parallel_for(test.size(), [&](std::size_t i) { pred[i] = predictor(x.row(test[i])); });
                for (std::size_t i = 0; i < test.size(); ++i) {
                    row.actual.push_back(y[test[i]]);
                    row.predicted.push_back(pred[i]);
                }
            }
        }
        for (std::size_t i = 0; i < row.actual.size(); ++i) {
            const double r = row.actual[i] - row.predicted[i];
            row.sse += r * r;
        }
        row.scores = score(row.actual, row.predicted);
    }
    return result;
}

std::string bench_csv(const BenchResult& result) {
    csv::Writer w({"model", "rmse", "mae", "r_squared", "mode"});
    for (const auto& r : result.rows)
        w.row({r.model, csv::format_double(r.scores.rmse), csv::format_double(r.scores.mae),
               r.scores.r_squared ? csv::format_double(*r.scores.r_squared) : "NA", eval_mode_name(result.mode)});
    return w.str();
}

std::string bench_settings_csv(const BenchResult& result) {
    csv::Writer w({"model", "settings"});
    for (const auto& r : result.rows) w.row({r.model, r.settings});
    return w.str();
}

} // namespace bizmodel
