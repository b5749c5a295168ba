#include "bizmodel/cluster.hpp"

#include "bizmodel/csv.hpp"
#include "bizmodel/error.hpp"
#include "bizmodel/parallel.hpp"
#include "bizmodel/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace bizmodel {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double d = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double t = a[j] - b[j];
        d += t * t;
    }
    return d;
}

int nearest(const Matrix& centroids, std::span<const double> p) {
    int best = 0;
    double best_d = squared_distance(p, centroids.row(0));
    for (std::size_t c = 1; c < centroids.rows(); ++c) {
        const double d = squared_distance(p, centroids.row(c));
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    return best;
}

// Moves, for every empty cluster, the point farthest from its centroid
// (among clusters that keep at least one member) into that cluster.
void repair_empty(const Matrix& points, std::vector<int>& assign, const Matrix& centroids, std::size_t k) {
    std::vector<std::size_t> sizes(k, 0);
    for (int a : assign) ++sizes[static_cast<std::size_t>(a)];
    for (std::size_t e = 0; e < k; ++e) {
        if (sizes[e] != 0) continue;
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < points.rows(); ++i) {
            const auto c = static_cast<std::size_t>(assign[i]);
            if (sizes[c] < 2) continue;
            const double d = squared_distance(points.row(i), centroids.row(c));
            if (d > far_d) {
                far_d = d;
                far = i;
            }
        }
        if (far_d < 0.0) throw Error("cannot repair empty cluster: too few points");
        --sizes[static_cast<std::size_t>(assign[far])];
        assign[far] = static_cast<int>(e);
        sizes[e] = 1;
    }
}

void check_points(const Matrix& points) {
    for (double v : points.data())
        if (!std::isfinite(v)) throw Error("clustering input contains non-finite values");
}

} // namespace

double inertia(const Matrix& points, std::span<const int> assignments, const Matrix& centroids) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.rows(); ++i)
        total += squared_distance(points.row(i), centroids.row(static_cast<std::size_t>(assignments[i])));
    return total;
}

Matrix cluster_means(const Matrix& points, std::span<const int> assignments, std::size_t k) {
    Matrix means(k, points.cols());
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t i = 0; i < points.rows(); ++i) {
        const auto c = static_cast<std::size_t>(assignments[i]);
        ++sizes[c];
        auto row = means.row(c);
        const auto p = points.row(i);
        for (std::size_t j = 0; j < p.size(); ++j) row[j] += p[j];
    }
    for (std::size_t c = 0; c < k; ++c)
        if (sizes[c] > 0)
            for (double& v : means.row(c)) v /= static_cast<double>(sizes[c]);
    return means;
}

LloydRun lloyd(const Matrix& points, Matrix centroids, std::size_t max_iter) {
    const std::size_t n = points.rows();
    const std::size_t k = centroids.rows();
    if (k == 0 || n < k) throw Error("k-means needs 1 <= k <= n");
    LloydRun run;
    std::vector<int> assign(n);
    for (std::size_t i = 0; i < n; ++i) assign[i] = nearest(centroids, points.row(i));
    repair_empty(points, assign, centroids, k);

    auto record = [&](double value) {
        if (!run.inertia_trace.empty()) {
            const double prev = run.inertia_trace.back();
            if (value > prev + 1e-12 * std::max(prev, 1.0))
                throw std::logic_error("k-means inertia increased during a Lloyd iteration");
        }
        run.inertia_trace.push_back(value);
    };

    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        centroids = cluster_means(points, assign, k);
        record(inertia(points, assign, centroids));
        std::vector<int> next(n);
        for (std::size_t i = 0; i < n; ++i) next[i] = nearest(centroids, points.row(i));
        repair_empty(points, next, centroids, k);
        if (next == assign) {
            run.converged = true;
            break;
        }
        assign = std::move(next);
    }
    if (!run.converged) {
        centroids = cluster_means(points, assign, k);
        record(inertia(points, assign, centroids));
    }
    run.solution.k = k;
    run.solution.inertia = run.inertia_trace.back();
    run.solution.assignments = std::move(assign);
    run.solution.centroids = std::move(centroids);
    run.solution.n_starts_used = 1;
    return run;
}

ClusterSolution kmeans(const Matrix& points, std::size_t k, const KMeansOptions& options) {
    const std::size_t n = points.rows();
    if (k < 1) throw Error("k must be at least 1");
    if (n < k) throw Error("k-means needs at least k points (n=" + std::to_string(n) + ", k=" + std::to_string(k) + ")");
    if (options.n_starts < 1) throw Error("n_starts must be at least 1");
    check_points(points);

    std::vector<ClusterSolution> results(options.n_starts);
    parallel_for(options.n_starts, [&](std::size_t s) {
        Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(s)));
        // Floyd's algorithm: k distinct indices.
        std::vector<std::size_t> chosen;
        for (std::size_t j = n - k; j < n; ++j) {
            const std::size_t t = rng.uniform_index(j + 1);
            if (std::find(chosen.begin(), chosen.end(), t) == chosen.end())
                chosen.push_back(t);
            else
                chosen.push_back(j);
        }
        Matrix init(k, points.cols());
        for (std::size_t c = 0; c < k; ++c) std::ranges::copy(points.row(chosen[c]), init.row(c).begin());
        results[s] = lloyd(points, std::move(init), options.max_iter).solution;
    });

    std::size_t best = 0;
    for (std::size_t s = 1; s < results.size(); ++s)
        if (results[s].inertia < results[best].inertia) best = s;
    ClusterSolution out = std::move(results[best]);
    out.n_starts_used = options.n_starts;
    return out;
}

Matrix standardize_columns(const Matrix& points) {
    Matrix out = points;
    const std::size_t n = points.rows();
    if (n == 0) return out;
    for (std::size_t j = 0; j < points.cols(); ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += points(i, j);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) var += (points(i, j) - mean) * (points(i, j) - mean);
        const double sd = n > 1 ? std::sqrt(var / static_cast<double>(n - 1)) : 0.0;
        for (std::size_t i = 0; i < n; ++i) out(i, j) = sd > 0.0 ? (points(i, j) - mean) / sd : points(i, j) - mean;
    }
    return out;
}

// --- validity indices ----------------------------------------------------------

std::string_view index_name(ValidityIndex index) {
    switch (index) {
    case ValidityIndex::kCalinskiHarabasz: return "calinski_harabasz";
    case ValidityIndex::kSilhouette: return "silhouette";
    case ValidityIndex::kDaviesBouldin: return "davies_bouldin";
    case ValidityIndex::kDunn: return "dunn";
    case ValidityIndex::kHartigan: return "hartigan";
    }
    return "unknown";
}

std::optional<ValidityIndex> parse_index_name(std::string_view name) {
    for (auto idx : all_validity_indices())
        if (index_name(idx) == name) return idx;
    return std::nullopt;
}

std::vector<ValidityIndex> all_validity_indices() {
    return {ValidityIndex::kCalinskiHarabasz, ValidityIndex::kSilhouette, ValidityIndex::kDaviesBouldin,
            ValidityIndex::kDunn, ValidityIndex::kHartigan};
}

namespace {

std::vector<std::size_t> cluster_sizes(const ClusterSolution& s) {
    std::vector<std::size_t> sizes(s.k, 0);
    for (int a : s.assignments) ++sizes[static_cast<std::size_t>(a)];
    return sizes;
}

struct PairwiseSummary {
    double silhouette = 0.0;
    double min_between = 0.0;
    double max_diameter = 0.0;
};

// One O(n^2) pass shared by the silhouette and Dunn indices.
PairwiseSummary pairwise_summary(const Matrix& points, const ClusterSolution& s) {
    const std::size_t n = points.rows();
    const auto sizes = cluster_sizes(s);
    std::vector<double> sil(n), min_between(n), max_within(n);
    parallel_for(n, [&](std::size_t i) {
        std::vector<double> sums(s.k, 0.0);
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        const auto ci = static_cast<std::size_t>(s.assignments[i]);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double d = std::sqrt(squared_distance(points.row(i), points.row(j)));
            const auto cj = static_cast<std::size_t>(s.assignments[j]);
            sums[cj] += d;
            if (cj == ci)
                hi = std::max(hi, d);
            else
                lo = std::min(lo, d);
        }
        min_between[i] = lo;
        max_within[i] = hi;
        if (sizes[ci] < 2) {
            sil[i] = 0.0;
            return;
        }
        const double a = sums[ci] / static_cast<double>(sizes[ci] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < s.k; ++c)
            if (c != ci && sizes[c] > 0) b = std::min(b, sums[c] / static_cast<double>(sizes[c]));
        const double m = std::max(a, b);
        sil[i] = m > 0.0 ? (b - a) / m : 0.0;
    });
    PairwiseSummary out;
    out.min_between = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        out.silhouette += sil[i];
        out.min_between = std::min(out.min_between, min_between[i]);
        out.max_diameter = std::max(out.max_diameter, max_within[i]);
    }
    out.silhouette /= static_cast<double>(n);
    return out;
}

} // namespace

std::optional<double> calinski_harabasz(const Matrix& points, const ClusterSolution& s) {
    const std::size_t n = points.rows();
    if (s.k < 2 || n <= s.k) return std::nullopt;
    std::vector<double> grand(points.cols(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < points.cols(); ++j) grand[j] += points(i, j);
    for (double& g : grand) g /= static_cast<double>(n);
    const auto sizes = cluster_sizes(s);
    double between = 0.0;
    for (std::size_t c = 0; c < s.k; ++c)
        between += static_cast<double>(sizes[c]) * squared_distance(s.centroids.row(c), grand);
    const double within = inertia(points, s.assignments, s.centroids);
    if (within <= 0.0) return std::nullopt;
    return (between / static_cast<double>(s.k - 1)) / (within / static_cast<double>(n - s.k));
}

std::optional<double> silhouette(const Matrix& points, const ClusterSolution& s) {
    if (s.k < 2 || points.rows() <= s.k) return std::nullopt;
    return pairwise_summary(points, s).silhouette;
}

std::optional<double> davies_bouldin(const Matrix& points, const ClusterSolution& s) {
    if (s.k < 2) return std::nullopt;
    const auto sizes = cluster_sizes(s);
    std::vector<double> scatter(s.k, 0.0);
    for (std::size_t i = 0; i < points.rows(); ++i) {
        const auto c = static_cast<std::size_t>(s.assignments[i]);
        scatter[c] += std::sqrt(squared_distance(points.row(i), s.centroids.row(c)));
    }
    for (std::size_t c = 0; c < s.k; ++c) {
        if (sizes[c] == 0) return std::nullopt;
        scatter[c] /= static_cast<double>(sizes[c]);
    }
    double total = 0.0;
    for (std::size_t a = 0; a < s.k; ++a) {
        double worst = 0.0;
        for (std::size_t b = 0; b < s.k; ++b) {
            if (a == b) continue;
            const double sep = std::sqrt(squared_distance(s.centroids.row(a), s.centroids.row(b)));
            if (sep <= 0.0) return std::nullopt;
            worst = std::max(worst, (scatter[a] + scatter[b]) / sep);
        }
        total += worst;
    }
    return total / static_cast<double>(s.k);
}

std::optional<double> dunn(const Matrix& points, const ClusterSolution& s) {
    if (s.k < 2) return std::nullopt;
    const auto summary = pairwise_summary(points, s);
    if (summary.max_diameter <= 0.0) return std::nullopt;
    return summary.min_between / summary.max_diameter;
}

std::optional<double> hartigan(double inertia_k, double inertia_k_plus_1, std::size_t n, std::size_t k) {
    if (!(inertia_k_plus_1 > 0.0) || n < k + 2) return std::nullopt;
    return (inertia_k / inertia_k_plus_1 - 1.0) * static_cast<double>(n - k - 1);
}

const ClusterSolution& KSelectionReport::solution_for(std::size_t k) const {
    for (std::size_t i = 0; i < ks.size(); ++i)
        if (ks[i] == k) return solutions[i];
    throw Error("no clustering solution for k=" + std::to_string(k));
}

std::size_t majority_vote(const std::map<std::size_t, std::size_t>& votes) {
    std::size_t best_k = 0, best_votes = 0;
    for (const auto& [k, v] : votes)  // ascending k: strict > keeps the smallest on ties
        if (v > best_votes) {
            best_votes = v;
            best_k = k;
        }
    if (best_votes == 0) throw Error("no validity index produced a recommendation");
    return best_k;
}

KSelectionReport select_k(const Matrix& points, const SelectKOptions& options) {
    const std::size_t n = points.rows();
    if (options.k_min < 2 || options.k_min > options.k_max || options.k_max + 1 > n)
        throw Error("k range must lie within [2, n-1]");
    if (options.indices.empty()) throw Error("no validity indices selected");

    const bool need_hartigan = std::ranges::find(options.indices, ValidityIndex::kHartigan) != options.indices.end();
    KSelectionReport report;
    for (std::size_t k = options.k_min; k <= options.k_max; ++k) report.ks.push_back(k);
    std::vector<std::size_t> fit_ks = report.ks;
    if (need_hartigan && options.k_max + 1 <= n - 1) fit_ks.push_back(options.k_max + 1);

    std::vector<ClusterSolution> fitted;
    for (std::size_t k : fit_ks) {
        KMeansOptions ko = options.kmeans;
        ko.seed = derive_seed(options.kmeans.seed, static_cast<std::uint64_t>(k));
        fitted.push_back(kmeans(points, k, ko));
    }

    for (auto idx : options.indices) {
        IndexVotes col;
        col.index = idx;
        for (std::size_t i = 0; i < report.ks.size(); ++i) {
            const std::size_t k = report.ks[i];
            const auto& sol = fitted[i];
            std::optional<double> v;
            switch (idx) {
            case ValidityIndex::kCalinskiHarabasz: v = calinski_harabasz(points, sol); break;
            case ValidityIndex::kSilhouette: v = silhouette(points, sol); break;
            case ValidityIndex::kDaviesBouldin: v = davies_bouldin(points, sol); break;
            case ValidityIndex::kDunn: v = dunn(points, sol); break;
            case ValidityIndex::kHartigan:
                if (i + 1 < fitted.size()) v = hartigan(sol.inertia, fitted[i + 1].inertia, n, k);
                break;
            }
            if (!v) warn(std::string(index_name(idx)) + " is undefined at k=" + std::to_string(k) + "; abstaining");
            col.values.push_back(v);
        }
        if (idx == ValidityIndex::kHartigan) {
            for (std::size_t i = 0; i < report.ks.size() && !col.recommended_k; ++i)
                if (col.values[i] && *col.values[i] <= 10.0) col.recommended_k = report.ks[i];
        } else {
            const bool minimize = idx == ValidityIndex::kDaviesBouldin;
            std::optional<double> best;
            for (std::size_t i = 0; i < report.ks.size(); ++i) {
                const auto& v = col.values[i];
                if (!v) continue;
                if (!best || (minimize ? *v < *best : *v > *best)) {
                    best = v;
                    col.recommended_k = report.ks[i];
                }
            }
        }
        if (col.recommended_k)
            ++report.vote_counts[*col.recommended_k];
        else
            warn(std::string(index_name(idx)) + " recommends no k in range; abstaining");
        report.indices.push_back(std::move(col));
    }
    report.final_k = majority_vote(report.vote_counts);
    fitted.resize(report.ks.size());
    report.solutions = std::move(fitted);
    return report;
}

std::string k_selection_csv(const KSelectionReport& report) {
    csv::Writer w({"index", "k", "value", "vote"});
    for (const auto& col : report.indices)
        for (std::size_t i = 0; i < report.ks.size(); ++i) {
            const auto& v = col.values[i];
            w.row({std::string(index_name(col.index)), std::to_string(report.ks[i]),
                   v ? csv::format_double(*v) : "NA", col.recommended_k == report.ks[i] ? "1" : "0"});
        }
    return w.str();
}

} // namespace bizmodel
