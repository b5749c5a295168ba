#pragma once

#include "bizmodel/config.hpp"
#include "bizmodel/pipeline.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace bizmodel {

/// File name -> contents. Names may contain '/' for subdirectories.
using Bundle = std::map<std::string, std::string>;

/// Importance table: feature, raw_importance, scaled_score.
std::string table3_csv(const AnalysisResult& result);
/// comparison, function, eigenvalue, wilks_lambda, statistic, df1, df2, p_value, stars, approximation
std::string table4_discriminant_csv(const AnalysisResult& result);
/// comparison, component, wilks_lambda, f_stat, df1, df2, p_value, stars
std::string table4_group_means_csv(const AnalysisResult& result);
/// Long format: panel, row, obs, component, value, p_value, stars,
/// superscripts, characteristic. Values are raw (not multiplied by 100).
std::string table5_csv(const AnalysisResult& result);
/// Human-facing model profile with contributions multiplied by 100.
std::string table5_markdown(const AnalysisResult& result);
/// period, model, obs, assets, liabilities, total
std::string table6_csv(const RunResult& result);
/// period, worse, equal, better, year_pairs
std::string table10_csv(const RunResult& result);
/// bank_id, year, cluster, model
std::string assignments_csv(const AnalysisResult& result);

/// Every artifact of one analysis, keyed by file name.
Bundle analysis_files(const AnalysisResult& result);
/// The full run bundle, including manifest.json.
Bundle run_bundle(const RunResult& result, const RunConfig& config);

/// Writes the bundle into a sibling staging directory and renames it over
/// `dir`, so `dir` only ever holds a complete bundle.
void write_bundle(const Bundle& bundle, const std::filesystem::path& dir);

} // namespace bizmodel
