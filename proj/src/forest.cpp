#include "bizmodel/forest.hpp"

#include "bizmodel/csv.hpp"
#include "bizmodel/error.hpp"
#include "bizmodel/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <tuple>

namespace bizmodel {

Forest::Forest(std::vector<RegressionTree> trees, std::vector<std::vector<std::uint32_t>> inbag, ForestConfig config,
               double global_mean, std::size_t n_train)
    : trees_(std::move(trees)),
      inbag_(std::move(inbag)),
      config_(std::move(config)),
      global_mean_(global_mean),
      n_train_(n_train) {
    if (trees_.empty()) throw Error("forest has no trees");
    if (inbag_.size() != trees_.size()) throw Error("forest needs one in-bag sample per tree");
}

namespace {

std::uint64_t tree_seed(std::uint64_t seed, std::size_t t, std::string_view purpose) {
    return derive_seed(derive_seed(seed, static_cast<std::uint64_t>(t)), purpose);
}

void check_config(const ForestConfig& config, std::size_t n_features) {
    if (config.n_trees < 1) throw Error("n_trees must be at least 1");
    if (config.mtry < 1 || config.mtry > n_features) throw Error("mtry must lie in [1, n_features]");
    if (config.min_node_size < 1) throw Error("min_node_size must be at least 1");
    if (config.bootstrap_size && *config.bootstrap_size < 1) throw Error("bootstrap_size must be positive");
}

std::string feature_label(std::size_t j, std::size_t n_features) {
    if (n_features == kNumFeatures) return std::string(feature_names()[j]);
    return "f" + std::to_string(j);
}

} // namespace

std::vector<std::uint32_t> bootstrap_rows(std::size_t n, std::size_t draws, std::uint64_t seed,
                                          std::size_t tree_index) {
    Rng rng(tree_seed(seed, tree_index, "bootstrap"));
    std::vector<std::uint32_t> rows(draws);
    for (auto& r : rows) r = static_cast<std::uint32_t>(rng.uniform_index(n));
    std::sort(rows.begin(), rows.end());
    return rows;
}

Forest fit_forest(const Matrix& features, std::span<const double> response, const ForestConfig& config) {
    if (response.empty()) throw Error("cannot fit a forest on an empty panel");
    if (features.rows() != response.size()) throw DimensionError("feature rows and responses differ in length");
    check_config(config, features.cols());
    const std::size_t n = response.size();
    const std::size_t draws = config.bootstrap_size.value_or(n);

    std::vector<std::optional<RegressionTree>> trees(config.n_trees);
    std::vector<std::vector<std::uint32_t>> inbag(config.n_trees);
    const TreeParams params = config.tree_params();
    parallel_for(config.n_trees, [&](std::size_t t) {
        inbag[t] = bootstrap_rows(n, draws, config.seed, t);
        const std::vector<std::size_t> rows(inbag[t].begin(), inbag[t].end());
        Rng rng(tree_seed(config.seed, t, "grow"));
        trees[t].emplace(fit_tree(features, response, rows, params, rng));
    });

    std::vector<RegressionTree> fitted;
    fitted.reserve(trees.size());
    for (auto& t : trees) fitted.push_back(std::move(*t));
    const double mean = std::accumulate(response.begin(), response.end(), 0.0) / static_cast<double>(n);
    return Forest(std::move(fitted), std::move(inbag), config, mean, n);
}

Forest fit_forest(const Panel& panel, const ForestConfig& config) {
    if (panel.empty()) throw Error("cannot fit a forest on an empty panel");
    const auto y = panel.responses();
    return fit_forest(panel.features(), y, config);
}

double predict(const Forest& forest, std::span<const double> x) {
    double sum = 0.0;
    for (const auto& tree : forest.trees()) sum += predict_tree(tree, x);
    return sum / static_cast<double>(forest.trees().size());
}

std::vector<double> predict_rows(const Forest& forest, const Matrix& features) {
    std::vector<double> out(features.rows());
    parallel_for(features.rows(), [&](std::size_t i) { out[i] = predict(forest, features.row(i)); });
    return out;
}

double oob_error(const Forest& forest, const Matrix& features, std::span<const double> response,
                 ErrorMetric metric) {
    const std::size_t n = response.size();
    if (features.rows() != n) throw DimensionError("feature rows and responses differ in length");
    if (n != forest.n_train()) throw DimensionError("out-of-bag error needs the forest's training rows");

    std::vector<double> sums(n, 0.0);
    std::vector<std::size_t> counts(n, 0);
    std::vector<char> in_bag(n);
    for (std::size_t t = 0; t < forest.trees().size(); ++t) {
        std::fill(in_bag.begin(), in_bag.end(), 0);
        for (auto r : forest.inbag()[t]) in_bag[r] = 1;
        for (std::size_t i = 0; i < n; ++i) {
            if (in_bag[i]) continue;
            sums[i] += predict_tree(forest.trees()[t], features.row(i));
            ++counts[i];
        }
    }
    double acc = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (counts[i] == 0) continue;
        const double resid = response[i] - sums[i] / static_cast<double>(counts[i]);
        acc += metric == ErrorMetric::kRmse ? resid * resid : std::abs(resid);
        ++used;
    }
    if (used == 0) throw Error("no row is out-of-bag for any tree");
    if (used < n) warn(std::to_string(n - used) + " rows are in every bootstrap sample and were skipped");
    const double mean = acc / static_cast<double>(used);
    return metric == ErrorMetric::kRmse ? std::sqrt(mean) : mean;
}

double oob_error(const Forest& forest, const Panel& panel, ErrorMetric metric) {
    const auto y = panel.responses();
    return oob_error(forest, panel.features(), y, metric);
}

TuneResult tune_grid(const Panel& panel, std::span<const std::size_t> mtry_values,
                     std::span<const std::size_t> min_node_values, const ForestConfig& base, ErrorMetric metric) {
    if (mtry_values.empty() || min_node_values.empty()) throw Error("tuning ranges must be nonempty");
    const Matrix x = panel.features();
    const auto y = panel.responses();
    TuneResult result;
    for (std::size_t m : mtry_values)
        for (std::size_t s : min_node_values) {
            ForestConfig cfg = base;
            cfg.mtry = m;
            cfg.min_node_size = s;
            const Forest forest = fit_forest(x, y, cfg);
            result.cells.push_back({m, s, oob_error(forest, x, y, metric)});
        }
    for (std::size_t i = 1; i < result.cells.size(); ++i) {
        const auto& c = result.cells[i];
        const auto& b = result.cells[result.best];
        if (c.error < b.error ||
            (c.error == b.error && std::tie(c.mtry, c.min_node_size) < std::tie(b.mtry, b.min_node_size)))
            result.best = i;
    }
    return result;
}

std::string tune_grid_csv(const TuneResult& result, ErrorMetric metric) {
    csv::Writer w({"mtry", "min_node_size", metric == ErrorMetric::kRmse ? "rmse" : "mae"});
    for (const auto& c : result.cells)
        w.row({std::to_string(c.mtry), std::to_string(c.min_node_size), csv::format_double(c.error)});
    return w.str();
}

ImportanceReport scale_importance(std::vector<double> raw, ImportanceScaling scaling) {
    ImportanceReport report;
    report.raw = std::move(raw);
    report.scaled.assign(report.raw.size(), 100.0);
    if (report.raw.empty()) return report;
    const auto [lo_it, hi_it] = std::minmax_element(report.raw.begin(), report.raw.end());
    const double lo = *lo_it, hi = *hi_it;
    if (lo == hi) {
        report.degenerate = true;
        warn("all variable importances are equal; scaled scores set to 100");
        return report;
    }
    for (std::size_t j = 0; j < report.raw.size(); ++j)
        report.scaled[j] = scaling == ImportanceScaling::kMinMax ? 100.0 * (report.raw[j] - lo) / (hi - lo)
                                                                 : 100.0 * report.raw[j] / hi;
    return report;
}

ImportanceReport variable_importance(const Forest& forest, ImportanceScaling scaling) {
    std::vector<double> raw(forest.n_features(), 0.0);
    for (const auto& tree : forest.trees())
        for (const auto& node : tree.nodes()) {
            if (node.leaf) continue;
            const double reduction = node.sse - tree.node(node.left).sse - tree.node(node.right).sse;
            raw[node.feature] += std::max(reduction, 0.0);
        }
    return scale_importance(std::move(raw), scaling);
}

ImportanceReport permutation_importance(const Forest& forest, const Matrix& features,
                                        std::span<const double> response, ImportanceScaling scaling) {
    const std::size_t n = response.size();
    if (features.rows() != n || n != forest.n_train())
        throw DimensionError("permutation importance needs the forest's training rows");
    const std::size_t k = forest.n_features();
    const std::size_t n_trees = forest.trees().size();
    std::vector<std::vector<double>> increase(n_trees, std::vector<double>(k, 0.0));
    std::vector<char> has_oob(n_trees, 0);

    parallel_for(n_trees, [&](std::size_t t) {
        const auto& tree = forest.trees()[t];
        std::vector<char> in_bag(n, 0);
        for (auto r : forest.inbag()[t]) in_bag[r] = 1;
        std::vector<std::size_t> oob;
        for (std::size_t i = 0; i < n; ++i)
            if (!in_bag[i]) oob.push_back(i);
        if (oob.empty()) return;
        has_oob[t] = 1;
        auto mse = [&](const auto& value_of) {
            double acc = 0.0;
            std::vector<double> x(k);
            for (std::size_t a = 0; a < oob.size(); ++a) {
                for (std::size_t j = 0; j < k; ++j) x[j] = value_of(a, j);
                const double r = response[oob[a]] - predict_tree(tree, x);
                acc += r * r;
            }
            return acc / static_cast<double>(oob.size());
        };
        const double base = mse([&](std::size_t a, std::size_t j) { return features(oob[a], j); });
        Rng rng(derive_seed(derive_seed(forest.config().seed, "permutation"), static_cast<std::uint64_t>(t)));
        std::vector<std::size_t> perm(oob.size());
        for (std::size_t f = 0; f < k; ++f) {
            std::iota(perm.begin(), perm.end(), std::size_t{0});
            for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.uniform_index(i)]);
            const double shuffled = mse([&](std::size_t a, std::size_t j) {
                return j == f ? features(oob[perm[a]], j) : features(oob[a], j);
            });
            increase[t][f] = shuffled - base;
        }
    });

    std::vector<double> raw(k, 0.0);
    std::size_t used = 0;
    for (std::size_t t = 0; t < n_trees; ++t) {
        if (!has_oob[t]) continue;
        ++used;
        for (std::size_t f = 0; f < k; ++f) raw[f] += increase[t][f];
    }
    if (used == 0) throw Error("no tree has out-of-bag rows");
    for (double& v : raw) v = std::max(v / static_cast<double>(used), 0.0);
    return scale_importance(std::move(raw), scaling);
}

std::string importance_csv(const ImportanceReport& report) {
    std::vector<std::size_t> order(report.raw.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return report.scaled[a] > report.scaled[b]; });
    csv::Writer w({"feature", "raw_importance", "scaled_score"});
    for (std::size_t j : order)
        w.row({feature_label(j, report.raw.size()), csv::format_double(report.raw[j]),
               csv::format_double(report.scaled[j])});
    return w.str();
}

// --- serialization -----------------------------------------------------------

namespace {

std::string threshold_rule_name(ThresholdRule rule) {
    return rule == ThresholdRule::kMidpoint ? "midpoint" : "lower_value";
}

std::pair<std::string, std::string> key_value(std::istream& in, std::string_view expected) {
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) break;
    }
    const auto space = line.find(' ');
    std::string key = line.substr(0, space);
    std::string value = space == std::string::npos ? "" : line.substr(space + 1);
    if (key != expected) throw Error("forest file: expected '" + std::string(expected) + "', found '" + key + "'");
    return {key, value};
}

std::size_t parse_size(const std::string& s) {
    auto v = csv::parse_int(s);
    if (!v || *v < 0) throw Error("forest file: bad integer '" + s + "'");
    return static_cast<std::size_t>(*v);
}

} // namespace

void write_forest(std::ostream& out, const Forest& forest) {
    const auto& c = forest.config();
    out << "bizmodel-forest 1\n";
    out << "n_trees " << c.n_trees << '\n';
    out << "mtry " << c.mtry << '\n';
    out << "min_node_size " << c.min_node_size << '\n';
    out << "max_depth " << (c.max_depth ? std::to_string(*c.max_depth) : "none") << '\n';
    out << "threshold_rule " << threshold_rule_name(c.threshold_rule) << '\n';
    out << "seed " << c.seed << '\n';
    out << "bootstrap_size " << c.bootstrap_size.value_or(forest.n_train()) << '\n';
    out << "n_train " << forest.n_train() << '\n';
    out << "global_mean " << csv::format_double(forest.global_mean()) << '\n';
    for (std::size_t t = 0; t < forest.trees().size(); ++t) {
        out << "tree " << t << '\n';
        write_tree(out, forest.trees()[t]);
    }
    out << "end\n";
}

Forest read_forest(std::istream& in) {
    auto [magic, version] = key_value(in, "bizmodel-forest");
    if (version != "1") throw Error("unsupported forest format version " + version);
    ForestConfig c;
    c.n_trees = parse_size(key_value(in, "n_trees").second);
    c.mtry = parse_size(key_value(in, "mtry").second);
    c.min_node_size = parse_size(key_value(in, "min_node_size").second);
    const auto depth = key_value(in, "max_depth").second;
    if (depth != "none") c.max_depth = parse_size(depth);
    const auto rule = key_value(in, "threshold_rule").second;
    if (rule == "midpoint")
        c.threshold_rule = ThresholdRule::kMidpoint;
    else if (rule != "lower_value")
        throw Error("forest file: unknown threshold rule '" + rule + "'");
    const auto seed_text = key_value(in, "seed").second;
    {
        std::istringstream ss(seed_text);
        if (!(ss >> c.seed)) throw Error("forest file: bad seed");
    }
    const std::size_t draws = parse_size(key_value(in, "bootstrap_size").second);
    const std::size_t n_train = parse_size(key_value(in, "n_train").second);
    if (draws != n_train) c.bootstrap_size = draws;
    auto mean = csv::parse_double(key_value(in, "global_mean").second);
    if (!mean) throw Error("forest file: bad global_mean");

    std::vector<RegressionTree> trees;
    std::vector<std::vector<std::uint32_t>> inbag;
    for (std::size_t t = 0; t < c.n_trees; ++t) {
        if (parse_size(key_value(in, "tree").second) != t) throw Error("forest file: trees out of order");
        trees.push_back(read_tree(in));
        // In-bag samples are a pure function of the seed; regenerate them.
        inbag.push_back(bootstrap_rows(n_train, draws, c.seed, t));
    }
    key_value(in, "end");
    return Forest(std::move(trees), std::move(inbag), c, *mean, n_train);
}

} // namespace bizmodel
