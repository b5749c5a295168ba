#pragma once

#include "bizmodel/data.hpp"
#include "bizmodel/matrix.hpp"
#include "bizmodel/stats.hpp"

#include <span>
#include <string>
#include <vector>

namespace bizmodel {

struct BusinessModel {
    /// "BM1" is the model with the largest total contribution.
    std::string label;
    /// Cluster label the model came from.
    int cluster = 0;
    /// Record indices of the members.
    std::vector<std::size_t> members;
    std::vector<double> mean_contributions;
    /// Sum of mean_contributions.
    double total_contribution = 0.0;
    std::vector<double> mean_ratios;
};

/// Groups records by cluster, averages contributions and ratios, and ranks
/// models by total contribution (descending). Equal totals go to the larger
/// model, then to the lower cluster label.
std::vector<BusinessModel> rank_models(std::span<const int> assignments, std::size_t k, const Matrix& contributions,
                                       const Matrix& ratios);

/// Rank (1 = best) of every record under the given models.
std::vector<int> record_ranks(std::span<const BusinessModel> models, std::size_t n_records);

struct ComponentTest {
    double mean_in = 0.0;
    double mean_out = 0.0;
    WmwResult test;
    /// Model mean above the complement mean and WMW rejects at alpha.
    bool characteristic = false;
};

/// Tests every ratio column of `model_rows` against `complement_rows`.
/// Rejection means p <= alpha with alpha > 0; samples whose pooled values
/// are all equal never reject.
std::vector<ComponentTest> characterize(const Matrix& ratios, std::span<const std::size_t> model_rows,
                                        std::span<const std::size_t> complement_rows, double alpha = 0.10);

/// Complement of a model within n records.
std::vector<std::size_t> complement_rows(const BusinessModel& model, std::size_t n_records);

/// For each model and component, the 1-based ranks of the other models whose
/// distribution of that component differs at `alpha`.
std::vector<std::vector<std::vector<int>>> pairwise_superscripts(std::span<const BusinessModel> models,
                                                                 const Matrix& ratios, double alpha = 0.10);

struct SideContribution {
    std::string label;
    double assets = 0.0;
    double liabilities = 0.0;
};

/// Splits each model's total into the asset side (first four components)
/// and the liability side (last five).
std::vector<SideContribution> side_contributions(std::span<const BusinessModel> models);

/// One bank-year observation of a model rank (1 = best).
struct RankObservation {
    std::string bank_id;
    int year = 0;
    int rank = 0;
};

struct YearPairShares {
    /// The later year t+1 of the pair.
    int year = 0;
    std::size_t banks = 0;
    double worse = 0.0;
    double equal = 0.0;
    double better = 0.0;
};

/// Percentages of banks present in both t and t+1 that moved to a worse,
/// the same, or a better ranked model.
std::vector<YearPairShares> transition_pairs(std::span<const RankObservation> observations);

struct TransitionRow {
    std::string label;
    double worse = 0.0;
    double equal = 0.0;
    double better = 0.0;
    std::size_t year_pairs = 0;
};

/// Unweighted mean of the per-pair shares over pairs whose later year lies
/// in each period. Periods without pairs are omitted with a warning; throws
/// if no bank spans two consecutive years.
std::vector<TransitionRow> transition_report(std::span<const RankObservation> observations,
                                             std::span<const PeriodSpec> periods);

} // namespace bizmodel
