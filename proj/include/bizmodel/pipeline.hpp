#pragma once

#include "bizmodel/bench.hpp"
#include "bizmodel/cluster.hpp"
#include "bizmodel/config.hpp"
#include "bizmodel/error.hpp"
#include "bizmodel/forest.hpp"
#include "bizmodel/interpret.hpp"
#include "bizmodel/profile.hpp"
#include "bizmodel/stats.hpp"

#include <optional>
#include <string>
#include <vector>

namespace bizmodel {

/// Error raised by one pipeline stage. exit_code() is the process exit
/// status the command-line tool reports for it.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& message);
    const std::string& stage() const { return stage_; }
    int exit_code() const;

private:
    std::string stage_;
};

/// Exit status per stage name: config 1, data 2, forest 3, interpret 4,
/// cluster 5, stats 6, profile 7, bench 8, output 9.
int stage_exit_code(std::string_view stage);

/// Runs fn and rethrows any failure as a StageError tagged with `stage`.
template <typename Fn>
decltype(auto) run_stage(const std::string& stage, Fn&& fn) {
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
}

struct PairwiseDiscriminant {
    /// 1-based model ranks being compared.
    int model_a = 0;
    int model_b = 0;
    DiscriminantReport discriminant;
    std::vector<GroupMeanTest> group_means;
};

/// Everything derived from one panel: forest, contributions, clusters and
/// business-model profile.
struct AnalysisResult {
    std::string label;
    Panel panel;
    Matrix ratios;
    std::optional<TuneResult> tuning;
    ForestConfig forest_config;
    std::optional<Forest> forest;
    ImportanceReport importance;
    ContributionMatrix contributions;
    /// Clustering input: contributions, standardized when configured.
    Matrix cluster_points;
    /// Empty when the number of clusters was fixed by config.
    std::optional<KSelectionReport> k_selection;
    ClusterSolution solution;
    std::vector<BusinessModel> models;
    /// 1-based business-model rank per record.
    std::vector<int> ranks;
    /// characterization[model][component]
    std::vector<std::vector<ComponentTest>> characterization;
    std::vector<std::vector<std::vector<int>>> superscripts;
    std::vector<SideContribution> sides;
    DiscriminantReport discriminant;
    std::vector<GroupMeanTest> group_means;
    std::vector<PairwiseDiscriminant> pairwise;
};

/// Forest -> contributions -> k selection -> clustering -> ranking ->
/// characterization -> discriminant checks. Seeds derive from `seed`.
AnalysisResult run_analysis(const Panel& panel, const AnalysisConfig& config, std::uint64_t seed,
                            const std::string& label);

/// Tuning (when enabled), forest fit and importance. Expects r.panel and
/// r.ratios to be set.
void fit_forest_stage(AnalysisResult& result, const AnalysisConfig& config, std::uint64_t seed);

/// k selection (or fixed k) and k-means on r.contributions.
void cluster_stage(AnalysisResult& result, const AnalysisConfig& config, std::uint64_t seed);
/// Ranking, sides and characterization from r.solution.
void profile_stage(AnalysisResult& result, const AnalysisConfig& config);
/// Discriminant analysis and group-mean tests on the ranked models.
void stats_stage(AnalysisResult& result, const AnalysisConfig& config);

/// cluster_stage, profile_stage and stats_stage in order.
void profile_contributions(AnalysisResult& result, const AnalysisConfig& config, std::uint64_t seed);

/// Refits the whole analysis independently on each period's sub-panel.
/// Throws StageError("data") when a sub-panel has fewer than min_records.
std::vector<AnalysisResult> run_period_analysis(const Panel& panel, std::span<const PeriodSpec> periods,
                                                const AnalysisConfig& config, std::uint64_t seed,
                                                std::size_t min_records);

struct RunResult {
    std::size_t loaded_records = 0;
    std::vector<RejectedRow> rejects;
    std::size_t outliers_dropped = 0;
    std::optional<OutlierBounds> bounds;
    /// Planted labels when the panel is synthetic.
    std::vector<int> planted_labels;
    AnalysisResult whole;
    std::vector<AnalysisResult> periods;
    std::vector<TransitionRow> transitions;
    std::optional<BenchResult> bench;
};

/// Loads or synthesizes the panel, filters outliers, and returns the
/// result of the data stage.
struct PreparedPanel {
    Panel panel;
    std::size_t loaded_records = 0;
    std::vector<RejectedRow> rejects;
    std::size_t outliers_dropped = 0;
    std::optional<OutlierBounds> bounds;
    std::vector<int> planted_labels;
};
PreparedPanel prepare_panel(const RunConfig& config);

RunResult run_pipeline(const RunConfig& config);

/// Rank observations for migration counting.
std::vector<RankObservation> rank_observations(const AnalysisResult& result);

} // namespace bizmodel
