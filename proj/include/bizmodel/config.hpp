#pragma once

#include "bizmodel/bench.hpp"
#include "bizmodel/cluster.hpp"
#include "bizmodel/data.hpp"
#include "bizmodel/forest.hpp"
#include "bizmodel/stats.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace bizmodel {

struct InputConfig {
    std::filesystem::path path;
    ColumnSchema schema;
};

struct OutlierConfig {
    bool enabled = true;
    double lower_quantile = 0.005;
    double upper_quantile = 0.995;
};

struct TuneConfig {
    bool enabled = false;
    std::vector<std::size_t> mtry_values = {1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::vector<std::size_t> min_node_values = {1, 2, 5, 10, 20};
    ErrorMetric metric = ErrorMetric::kRmse;
};

struct ImportanceConfig {
    ImportanceKind kind = ImportanceKind::kImpurity;
    ImportanceScaling scaling = ImportanceScaling::kMinMax;
};

struct ClusterConfig {
    std::size_t k_min = 2;
    std::size_t k_max = 10;
    /// Skips the index vote when set.
    std::optional<std::size_t> fixed_k;
    std::size_t n_starts = 100;
    std::size_t max_iter = 300;
    std::vector<ValidityIndex> indices = all_validity_indices();
    /// Standardize contribution columns before clustering.
    bool standardize = false;
};

enum class TransitionRanking { kWholeSample, kPerPeriod };

struct AnalysisConfig {
    ForestConfig forest;
    TuneConfig tune;
    ImportanceConfig importance;
    ClusterConfig cluster;
    double alpha = 0.10;
    WilksApproximation wilks = WilksApproximation::kRao;
};

struct RunConfig {
    /// Master seed; every random substream derives from it.
    std::uint64_t seed = 0;
    std::optional<InputConfig> input;
    std::optional<SynthConfig> synth;
    OutlierConfig outliers;
    std::vector<PeriodSpec> periods = crisis_periods();
    std::size_t min_period_records = 200;
    TransitionRanking transition_ranking = TransitionRanking::kWholeSample;
    AnalysisConfig analysis;
    bool bench_enabled = false;
    BenchConfig bench;
    std::filesystem::path output;
};

/// Parses a JSON config. "seed" is mandatory; absent sections keep their
/// defaults. Throws Error with the offending key on invalid input.
RunConfig parse_config(std::string_view json_text);
RunConfig load_config(const std::filesystem::path& path);

/// JSON echo of the fully resolved config, every default included.
std::string config_to_json(const RunConfig& config);

/// Throws Error when the config is inconsistent.
void validate_config(const RunConfig& config);

} // namespace bizmodel
