#pragma once

#include "bizmodel/matrix.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace bizmodel {

// --- Wilcoxon-Mann-Whitney ---------------------------------------------------

struct WmwResult {
    double u_a = 0.0;
    double u_b = 0.0;
    /// Signed normal statistic, tie- and continuity-corrected (0 if exact
    /// was used and the variance is degenerate).
    double z = 0.0;
    double p_two_sided = 1.0;
    bool exact = false;
};

/// Midranks (average rank for tied values), 1-based.
std::vector<double> midranks(std::span<const double> values);

/// Two-sided exact p-value of U_a for tie-free samples of sizes n_a, n_b,
/// from the full null distribution over all C(n_a + n_b, n_a) rank splits.
double wmw_exact_p(std::size_t n_a, std::size_t n_b, double u_a);

/// Two-sided normal-approximation p-value with tie correction
/// (tie_sum = sum of t^3 - t over tie groups) and 0.5 continuity correction.
double wmw_normal_p(std::size_t n_a, std::size_t n_b, double u_a, double tie_sum);

/// Exact enumeration when max(n_a, n_b) <= exact_threshold and there are no
/// ties; normal approximation otherwise.
WmwResult wmw_test(std::span<const double> a, std::span<const double> b, std::size_t exact_threshold = 12);

// --- equality of group means -------------------------------------------------

struct GroupMeanTest {
    /// SSW / SST
    double wilks_lambda = 1.0;
    double f_stat = 0.0;
    double df1 = 0.0;
    double df2 = 0.0;
    double p_value = 1.0;
    /// False when SST or SSW is zero; the statistics are then NaN.
    bool defined = true;
};

/// Univariate one-way test of equal group means for one variable.
GroupMeanTest group_mean_test(std::span<const double> values, std::span<const int> labels);

/// One test per column of `values`.
std::vector<GroupMeanTest> group_mean_tests(const Matrix& values, std::span<const int> labels);

// --- linear discriminant analysis --------------------------------------------

enum class WilksApproximation { kRao, kBartlett };

struct DiscriminantFunction {
    /// Raw canonical coefficients, scaled to unit pooled within-group variance.
    std::vector<double> coefficients;
    double eigenvalue = 0.0;
    /// Product over functions j >= this one of 1 / (1 + eigenvalue_j).
    double wilks_lambda = 1.0;
    /// Rao F or Bartlett chi-square, per the report's approximation.
    double statistic = 0.0;
    double df1 = 0.0;
    double df2 = 0.0;
    double p_value = 1.0;
};

struct DiscriminantReport {
    std::vector<DiscriminantFunction> functions;
    WilksApproximation approximation = WilksApproximation::kRao;
    /// Ridge added to the within-group scatter to make it invertible.
    double ridge = 0.0;
    std::size_t n = 0;
    std::size_t groups = 0;
};

/// Solves B v = lambda W v (between- and pooled within-group scatter) and
/// keeps min(g - 1, K) functions in descending eigenvalue order.
DiscriminantReport lda_discriminant(const Matrix& points, std::span<const int> labels,
                                    WilksApproximation approximation = WilksApproximation::kRao);

/// "***" p < 0.01, "**" p < 0.05, "*" p < 0.10, otherwise empty.
std::string significance_stars(double p);

} // namespace bizmodel
