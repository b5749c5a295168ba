#include "bizmodel/stats.hpp"

#include "bizmodel/distributions.hpp"
#include "bizmodel/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace bizmodel {

std::vector<double> midranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i + 1;
        while (j < n && values[order[j]] == values[order[i]]) ++j;
        const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t t = i; t < j; ++t) ranks[order[t]] = rank;
        i = j;
    }
    return ranks;
}

double wmw_exact_p(std::size_t n_a, std::size_t n_b, double u_a) {
    const std::size_t n = n_a + n_b;
    const std::size_t max_u = n_a * n_b;
    // ways[s][r]: subsets of size s of the ranks seen so far with rank sum
    // offset r = sum - s(s+1)/2, which is exactly the U statistic of the subset.
    std::vector<std::vector<double>> ways(n_a + 1, std::vector<double>(max_u + 1, 0.0));
    ways[0][0] = 1.0;
    for (std::size_t rank = 1; rank <= n; ++rank) {
        const std::size_t top = std::min(rank, n_a);
        for (std::size_t s = top; s >= 1; --s) {
            // Adding `rank` as the s-th smallest shifts U by rank - s.
            const std::size_t shift = rank - s;
            for (std::size_t r = max_u + 1; r-- > shift;) ways[s][r] += ways[s - 1][r - shift];
        }
    }
    const auto& dist = ways[n_a];
    const double total = std::accumulate(dist.begin(), dist.end(), 0.0);
    double below = 0.0, above = 0.0;
    for (std::size_t u = 0; u <= max_u; ++u) {
        const double uu = static_cast<double>(u);
        if (uu <= u_a + 1e-9) below += dist[u];
        if (uu >= u_a - 1e-9) above += dist[u];
    }
    return std::min(1.0, 2.0 * std::min(below, above) / total);
}

namespace {

double wmw_sd(std::size_t n_a, std::size_t n_b, double tie_sum) {
    const double na = static_cast<double>(n_a), nb = static_cast<double>(n_b);
    const double n = na + nb;
    double var = na * nb / 12.0 * (n + 1.0);
    if (n > 1.0) var = na * nb / 12.0 * ((n + 1.0) - tie_sum / (n * (n - 1.0)));
    return var > 0.0 ? std::sqrt(var) : 0.0;
}

double wmw_z(std::size_t n_a, std::size_t n_b, double u_a, double tie_sum) {
    const double sd = wmw_sd(n_a, n_b, tie_sum);
    if (sd <= 0.0) return 0.0;
    const double diff = u_a - static_cast<double>(n_a) * static_cast<double>(n_b) / 2.0;
    const double corrected = std::max(std::abs(diff) - 0.5, 0.0);
    return std::copysign(corrected / sd, diff);
}

} // namespace

double wmw_normal_p(std::size_t n_a, std::size_t n_b, double u_a, double tie_sum) {
    if (wmw_sd(n_a, n_b, tie_sum) <= 0.0) return 1.0;
    return std::min(1.0, 2.0 * dist::normal_sf(std::abs(wmw_z(n_a, n_b, u_a, tie_sum))));
}

WmwResult wmw_test(std::span<const double> a, std::span<const double> b, std::size_t exact_threshold) {
    if (a.empty() || b.empty()) throw Error("Wilcoxon-Mann-Whitney test needs two nonempty samples");
    std::vector<double> pooled(a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    const auto ranks = midranks(pooled);
    const double n_a = static_cast<double>(a.size()), n_b = static_cast<double>(b.size());
    const double rank_sum_a = std::accumulate(ranks.begin(), ranks.begin() + static_cast<std::ptrdiff_t>(a.size()), 0.0);

    std::vector<double> sorted = pooled;
    std::sort(sorted.begin(), sorted.end());
    double tie_sum = 0.0;
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i + 1;
        while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
        const double t = static_cast<double>(j - i);
        tie_sum += t * t * t - t;
        i = j;
    }

    WmwResult r;
    r.u_a = rank_sum_a - n_a * (n_a + 1.0) / 2.0;
    r.u_b = n_a * n_b - r.u_a;
    r.z = wmw_z(a.size(), b.size(), r.u_a, tie_sum);
    r.exact = std::max(a.size(), b.size()) <= exact_threshold && tie_sum == 0.0;
    r.p_two_sided = r.exact ? wmw_exact_p(a.size(), b.size(), r.u_a) : wmw_normal_p(a.size(), b.size(), r.u_a, tie_sum);
    return r;
}

// --- group means -------------------------------------------------------------

GroupMeanTest group_mean_test(std::span<const double> values, std::span<const int> labels) {
    if (values.size() != labels.size()) throw DimensionError("values and labels differ in length");
    std::map<int, std::pair<double, std::size_t>> groups;
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto& g = groups[labels[i]];
        g.first += values[i];
        ++g.second;
    }
    const std::size_t g = groups.size();
    const std::size_t n = values.size();
    if (g < 2) throw Error("group mean test needs at least two groups");
    if (n <= g) throw Error("group mean test needs more observations than groups");

    const double grand = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
    std::map<int, double> means;
    double between = 0.0;
    for (const auto& [label, acc] : groups) {
        const double m = acc.first / static_cast<double>(acc.second);
        means[label] = m;
        between += static_cast<double>(acc.second) * (m - grand) * (m - grand);
    }
    double within = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = values[i] - means[labels[i]];
        within += d * d;
    }

    GroupMeanTest t;
    t.df1 = static_cast<double>(g - 1);
    t.df2 = static_cast<double>(n - g);
    const double total = within + between;
    if (!(total > 0.0) || !(within > 0.0)) {
        t.defined = false;
        t.wilks_lambda = t.f_stat = t.p_value = std::numeric_limits<double>::quiet_NaN();
        return t;
    }
    t.wilks_lambda = within / total;
    t.f_stat = (between / t.df1) / (within / t.df2);
    t.p_value = dist::f_sf(t.f_stat, t.df1, t.df2);
    return t;
}

std::vector<GroupMeanTest> group_mean_tests(const Matrix& values, std::span<const int> labels) {
    std::vector<GroupMeanTest> out;
    std::vector<double> column(values.rows());
    for (std::size_t j = 0; j < values.cols(); ++j) {
        for (std::size_t i = 0; i < values.rows(); ++i) column[i] = values(i, j);
        out.push_back(group_mean_test(column, labels));
        if (!out.back().defined) warn("equality-of-means test undefined for variable " + std::to_string(j));
    }
    return out;
}

// --- discriminant analysis ---------------------------------------------------

DiscriminantReport lda_discriminant(const Matrix& points, std::span<const int> labels,
                                    WilksApproximation approximation) {
    const std::size_t n = points.rows(), k = points.cols();
    if (labels.size() != n) throw DimensionError("points and labels differ in length");
    std::map<int, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < n; ++i) members[labels[i]].push_back(i);
    const std::size_t g = members.size();
    if (g < 2) throw Error("discriminant analysis needs at least two groups");
    if (n <= g) throw Error("discriminant analysis needs more observations than groups");

    Eigen::MatrixXd x(n, k);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = points(i, j);
    const Eigen::RowVectorXd grand = x.colwise().mean();
    Eigen::MatrixXd within = Eigen::MatrixXd::Zero(k, k), between = Eigen::MatrixXd::Zero(k, k);
    for (const auto& [label, rows] : members) {
        Eigen::MatrixXd block(rows.size(), k);
        for (std::size_t r = 0; r < rows.size(); ++r) block.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(rows[r]));
        const Eigen::RowVectorXd mean = block.colwise().mean();
        const Eigen::MatrixXd centred = block.rowwise() - mean;
        within += centred.transpose() * centred;
        const Eigen::VectorXd d = (mean - grand).transpose();
        between += static_cast<double>(rows.size()) * d * d.transpose();
    }

    DiscriminantReport report;
    report.approximation = approximation;
    report.n = n;
    report.groups = g;

    const double trace = within.trace();
    if (!(trace > 0.0)) throw Error("within-group scatter is singular and cannot be regularized");
    {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(within, Eigen::EigenvaluesOnly);
        const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
        if (!(lo > 1e-12 * hi)) {
            report.ridge = 1e-9 * trace / static_cast<double>(k) + std::max(-lo, 0.0);
            within.diagonal().array() += report.ridge;
            warn("within-group scatter is near-singular; added ridge " + std::to_string(report.ridge));
        }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(within);
    if (llt.info() != Eigen::Success) throw Error("within-group scatter is singular after regularization");
    const Eigen::MatrixXd l = llt.matrixL();
    const Eigen::MatrixXd l_inv = l.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(k, k));
    const Eigen::MatrixXd c = l_inv * between * l_inv.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (c + c.transpose()));
    if (es.info() != Eigen::Success) throw Error("discriminant eigenproblem did not converge");

    const std::size_t m = std::min(g - 1, k);
    const double error_df = static_cast<double>(n - g);
    for (std::size_t f = 0; f < m; ++f) {
        const Eigen::Index col = static_cast<Eigen::Index>(k - 1 - f);  // ascending order from Eigen
        DiscriminantFunction fn;
        fn.eigenvalue = std::max(es.eigenvalues()(col), 0.0);
        Eigen::VectorXd v = l_inv.transpose() * es.eigenvectors().col(col) * std::sqrt(error_df);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        fn.coefficients.assign(v.data(), v.data() + v.size());
        report.functions.push_back(std::move(fn));
    }
    for (std::size_t f = 0; f < m; ++f) {
        double lambda = 1.0;
        for (std::size_t j = f; j < m; ++j) lambda /= 1.0 + report.functions[j].eigenvalue;
        auto& fn = report.functions[f];
        fn.wilks_lambda = lambda;
        const double p = static_cast<double>(k - f);
        const double q = static_cast<double>(g - 1 - f);
        if (approximation == WilksApproximation::kRao) {
            const double denom = p * p + q * q - 5.0;
            const double t = denom > 0.0 ? std::sqrt((p * p * q * q - 4.0) / denom) : 1.0;
            const double w = error_df + q - (p + q + 1.0) / 2.0;
            fn.df1 = p * q;
            fn.df2 = w * t - (p * q - 2.0) / 2.0;
            const double root = std::pow(lambda, 1.0 / t);
            fn.statistic = (1.0 - root) / root * fn.df2 / fn.df1;
            fn.p_value = dist::f_sf(fn.statistic, fn.df1, fn.df2);
        } else {
            fn.df1 = p * q;
            fn.df2 = 0.0;
            fn.statistic = -(static_cast<double>(n) - 1.0 - (static_cast<double>(k) + static_cast<double>(g)) / 2.0) *
                           std::log(lambda);
            fn.p_value = dist::chi2_sf(fn.statistic, fn.df1);
        }
    }
    return report;
}

std::string significance_stars(double p) {
    if (std::isnan(p)) return "";
    if (p < 0.01) return "***";
    if (p < 0.05) return "**";
    if (p < 0.10) return "*";
    return "";
}

} // namespace bizmodel
