#include "bizmodel/tree.hpp"

#include "bizmodel/csv.hpp"
#include "bizmodel/error.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace bizmodel {

RegressionTree::RegressionTree(std::vector<TreeNode> nodes, std::size_t n_features)
    : nodes_(std::move(nodes)), n_features_(n_features) {
    if (nodes_.empty()) throw Error("tree has no nodes");
    std::vector<int> parents(nodes_.size(), 0);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const auto& n = nodes_[i];
        if (n.id != static_cast<int>(i)) throw Error("tree node ids must equal their positions");
        if (n.leaf) {
            if (n.left != -1 || n.right != -1) throw Error("leaf node " + std::to_string(i) + " has children");
            continue;
        }
        if (n.feature >= n_features_) throw Error("node " + std::to_string(i) + " splits on an unknown feature");
        for (int child : {n.left, n.right}) {
            if (child <= 0 || child >= static_cast<int>(nodes_.size()))
                throw Error("node " + std::to_string(i) + " has an invalid child");
            ++parents[static_cast<std::size_t>(child)];
        }
    }
    if (parents[0] != 0) throw Error("root node has a parent");
    for (std::size_t i = 1; i < parents.size(); ++i)
        if (parents[i] != 1) throw Error("node " + std::to_string(i) + " does not have exactly one parent");
    // Every node reachable from the root (no detached cycles).
    std::vector<int> stack = {0};
    std::size_t reached = 0;
    while (!stack.empty()) {
        const auto& n = node(stack.back());
        stack.pop_back();
        ++reached;
        if (!n.leaf) {
            stack.push_back(n.left);
            stack.push_back(n.right);
        }
    }
    if (reached != nodes_.size()) throw Error("tree nodes are not a single rooted tree");
}

std::size_t RegressionTree::depth() const {
    std::size_t max_depth = 0;
    std::vector<std::pair<int, std::size_t>> stack = {{0, 0}};
    while (!stack.empty()) {
        auto [id, d] = stack.back();
        stack.pop_back();
        max_depth = std::max(max_depth, d);
        const auto& n = node(id);
        if (!n.leaf) {
            stack.emplace_back(n.left, d + 1);
            stack.emplace_back(n.right, d + 1);
        }
    }
    return max_depth;
}

namespace {

class TreeBuilder {
public:
    TreeBuilder(const Matrix& x, std::span<const double> y, const TreeParams& params, Rng& rng)
        : x_(x), y_(y), params_(params), rng_(rng), feature_order_(x.cols()) {
        std::iota(feature_order_.begin(), feature_order_.end(), std::size_t{0});
    }

    std::vector<TreeNode> build(std::vector<std::size_t> rows) {
        rows_ = std::move(rows);
        nodes_.push_back({});
        grow(0, 0, rows_.size(), 0);
        return std::move(nodes_);
    }

private:
    struct Split {
        std::size_t feature = 0;
        double threshold = 0.0;
        double gain = 0.0;
    };

    void grow(int id, std::size_t begin, std::size_t end, std::size_t depth) {
        const std::size_t n = end - begin;
        double sum = 0.0;
        double lo = y_[rows_[begin]], hi = lo;
        for (std::size_t i = begin; i < end; ++i) {
            const double v = y_[rows_[i]];
            sum += v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        const double mean = sum / static_cast<double>(n);
        double sse = 0.0;
        for (std::size_t i = begin; i < end; ++i) {
            const double d = y_[rows_[i]] - mean;
            sse += d * d;
        }
        {
            auto& node = nodes_[static_cast<std::size_t>(id)];
            node.id = id;
            node.mean = mean;
            node.count = n;
            node.sse = sse;
        }

        const bool depth_exhausted = params_.max_depth && depth >= *params_.max_depth;
        if (n < 2 * params_.min_node_size || lo == hi || depth_exhausted) return;

        const auto split = best_split(begin, end, mean, sse);
        if (!split) return;

        auto mid_it = std::stable_partition(rows_.begin() + static_cast<std::ptrdiff_t>(begin),
                                            rows_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t r) {
                                                return x_(r, split->feature) <= split->threshold;
                                            });
        const auto mid = static_cast<std::size_t>(mid_it - rows_.begin());

        const int left = static_cast<int>(nodes_.size());
        nodes_.push_back({});
        nodes_.push_back({});
        {
            auto& node = nodes_[static_cast<std::size_t>(id)];
            node.leaf = false;
            node.feature = split->feature;
            node.threshold = split->threshold;
            node.left = left;
            node.right = left + 1;
        }
        grow(left, begin, mid, depth + 1);
        grow(left + 1, mid, end, depth + 1);
    }

    std::optional<Split> best_split(std::size_t begin, std::size_t end, double mean, double sse) {
        const std::size_t n = end - begin;
        const std::size_t k = feature_order_.size();

        // Lazy Fisher-Yates: draw features until mtry non-constant ones are found.
        std::vector<std::size_t> candidates;
        for (std::size_t i = 0; i < k && candidates.size() < params_.mtry; ++i) {
            const std::size_t j = i + rng_.uniform_index(k - i);
            std::swap(feature_order_[i], feature_order_[j]);
            const std::size_t f = feature_order_[i];
            const double first = x_(rows_[begin], f);
            for (std::size_t r = begin + 1; r < end; ++r)
                if (x_(rows_[r], f) != first) {
                    candidates.push_back(f);
                    break;
                }
        }
        std::sort(candidates.begin(), candidates.end());

        std::optional<Split> best;
        const std::size_t min_child = params_.min_node_size;
        std::vector<std::pair<double, double>> column(n);
        for (std::size_t f : candidates) {
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t r = rows_[begin + i];
                column[i] = {x_(r, f), y_[r] - mean};
            }
            std::stable_sort(column.begin(), column.end(),
                             [](const auto& a, const auto& b) { return a.first < b.first; });
            double total = 0.0;
            for (const auto& c : column) total += c.second;
            const double base = total * total / static_cast<double>(n);
            double left_sum = 0.0;
            for (std::size_t i = 1; i < n; ++i) {
                left_sum += column[i - 1].second;
                if (i < min_child || n - i < min_child) continue;
                if (column[i - 1].first == column[i].first) continue;
                const double right_sum = total - left_sum;
                const double gain = left_sum * left_sum / static_cast<double>(i) +
                                    right_sum * right_sum / static_cast<double>(n - i) - base;
                if (!best || gain > best->gain) {
                    const double a = column[i - 1].first, b = column[i].first;
                    double t = a;
                    if (params_.threshold_rule == ThresholdRule::kMidpoint) {
                        t = a + (b - a) / 2.0;
                        if (!(t < b)) t = a;
                    }
                    best = Split{f, t, gain};
                }
            }
        }
        // Zero-gain splits (e.g. balanced XOR) are not accepted.
        if (!best || !(best->gain > 1e-12 * sse)) return std::nullopt;
        return best;
    }

    const Matrix& x_;
    std::span<const double> y_;
    const TreeParams& params_;
    Rng& rng_;
    std::vector<std::size_t> feature_order_;
    std::vector<std::size_t> rows_;
    std::vector<TreeNode> nodes_;
};

void check_dimension(const RegressionTree& tree, std::span<const double> x) {
    if (x.size() != tree.n_features())
        throw DimensionError("expected " + std::to_string(tree.n_features()) + " features, got " +
                             std::to_string(x.size()));
}

} // namespace

RegressionTree fit_tree(const Matrix& features, std::span<const double> response, std::span<const std::size_t> rows,
                        const TreeParams& params, Rng& rng) {
    if (rows.empty()) throw Error("cannot fit a tree on zero rows");
    if (features.rows() != response.size()) throw DimensionError("feature rows and responses differ in length");
    if (params.mtry < 1 || params.mtry > features.cols()) throw Error("mtry must lie in [1, n_features]");
    if (params.min_node_size < 1) throw Error("min_node_size must be at least 1");
    for (std::size_t r : rows) {
        if (r >= response.size()) throw Error("row index out of range");
        if (!std::isfinite(response[r])) throw Error("non-finite response at row " + std::to_string(r));
    }
    TreeBuilder builder(features, response, params, rng);
    return RegressionTree(builder.build({rows.begin(), rows.end()}), features.cols());
}

RegressionTree fit_tree(const Matrix& features, std::span<const double> response, const TreeParams& params,
                        Rng& rng) {
    std::vector<std::size_t> rows(response.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return fit_tree(features, response, rows, params, rng);
}

double predict_tree(const RegressionTree& tree, std::span<const double> x) {
    check_dimension(tree, x);
    const TreeNode* n = &tree.root();
    while (!n->leaf) n = &tree.node(x[n->feature] <= n->threshold ? n->left : n->right);
    return n->mean;
}

std::vector<int> decision_path(const RegressionTree& tree, std::span<const double> x) {
    check_dimension(tree, x);
    std::vector<int> path = {0};
    const TreeNode* n = &tree.root();
    while (!n->leaf) {
        const int next = x[n->feature] <= n->threshold ? n->left : n->right;
        path.push_back(next);
        n = &tree.node(next);
    }
    return path;
}

// --- serialization -----------------------------------------------------------

namespace {

constexpr std::string_view kTreeMagic = "bizmodel-tree";
constexpr std::string_view kColumns = "id kind feature threshold left right mean count sse";

std::string next_line(std::istream& in, std::string_view what) {
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) return line;
    }
    throw Error("unexpected end of tree text while reading " + std::string(what));
}

std::vector<std::string> split_ws(const std::string& line) {
    std::istringstream ss(line);
    std::vector<std::string> out;
    for (std::string tok; ss >> tok;) out.push_back(tok);
    return out;
}

double to_double(const std::string& s) {
    auto v = csv::parse_double(s);
    if (!v) throw Error("bad number '" + s + "' in tree text");
    return *v;
}

long long to_int(const std::string& s) {
    auto v = csv::parse_int(s);
    if (!v) throw Error("bad integer '" + s + "' in tree text");
    return *v;
}

} // namespace

void write_tree(std::ostream& out, const RegressionTree& tree) {
    out << kTreeMagic << " 1\n";
    out << "n_features " << tree.n_features() << '\n';
    out << "nodes " << tree.nodes().size() << '\n';
    out << "columns " << kColumns << '\n';
    for (const auto& n : tree.nodes()) {
        out << n.id << ' ' << (n.leaf ? "leaf" : "internal") << ' ';
        if (n.leaf)
            out << "- - - -";
        else
            out << n.feature << ' ' << csv::format_double(n.threshold) << ' ' << n.left << ' ' << n.right;
        out << ' ' << csv::format_double(n.mean) << ' ' << n.count << ' ' << csv::format_double(n.sse) << '\n';
    }
}

RegressionTree read_tree(std::istream& in) {
    auto magic = split_ws(next_line(in, "header"));
    if (magic.size() != 2 || magic[0] != kTreeMagic) throw Error("not a tree file");
    if (magic[1] != "1") throw Error("unsupported tree format version " + magic[1]);
    auto nf = split_ws(next_line(in, "n_features"));
    if (nf.size() != 2 || nf[0] != "n_features") throw Error("missing n_features line");
    auto nn = split_ws(next_line(in, "nodes"));
    if (nn.size() != 2 || nn[0] != "nodes") throw Error("missing nodes line");
    auto cols = split_ws(next_line(in, "columns"));
    if (cols.empty() || cols[0] != "columns") throw Error("missing columns line");
    cols.erase(cols.begin());
    auto col = [&](std::string_view name) -> std::size_t {
        auto it = std::find(cols.begin(), cols.end(), name);
        if (it == cols.end()) throw Error("tree text lacks column '" + std::string(name) + "'");
        return static_cast<std::size_t>(it - cols.begin());
    };
    const std::size_t c_id = col("id"), c_kind = col("kind"), c_feature = col("feature"),
                      c_threshold = col("threshold"), c_left = col("left"), c_right = col("right"),
                      c_mean = col("mean"), c_count = col("count"), c_sse = col("sse");

    const auto n_nodes = to_int(nn[1]);
    if (n_nodes <= 0) throw Error("tree must have at least one node");
    std::vector<TreeNode> nodes;
    nodes.reserve(static_cast<std::size_t>(n_nodes));
    for (long long i = 0; i < n_nodes; ++i) {
        auto f = split_ws(next_line(in, "node"));
        if (f.size() != cols.size()) throw Error("tree node row has wrong field count");
        TreeNode node;
        node.id = static_cast<int>(to_int(f[c_id]));
        if (f[c_kind] != "leaf" && f[c_kind] != "internal") throw Error("unknown node kind '" + f[c_kind] + "'");
        node.leaf = f[c_kind] == "leaf";
        if (!node.leaf) {
            node.feature = static_cast<std::size_t>(to_int(f[c_feature]));
            node.threshold = to_double(f[c_threshold]);
            node.left = static_cast<int>(to_int(f[c_left]));
            node.right = static_cast<int>(to_int(f[c_right]));
        }
        node.mean = to_double(f[c_mean]);
        node.count = static_cast<std::size_t>(to_int(f[c_count]));
        node.sse = to_double(f[c_sse]);
        nodes.push_back(node);
    }
    return RegressionTree(std::move(nodes), static_cast<std::size_t>(to_int(nf[1])));
}

std::string tree_to_text(const RegressionTree& tree) {
    std::ostringstream out;
    write_tree(out, tree);
    return out.str();
}

RegressionTree tree_from_text(std::string_view text) {
    std::istringstream in{std::string(text)};
    return read_tree(in);
}

} // namespace bizmodel
