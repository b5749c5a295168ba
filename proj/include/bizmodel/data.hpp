#pragma once

#include "bizmodel/csv.hpp"
#include "bizmodel/matrix.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bizmodel {

inline constexpr std::size_t kNumFeatures = 9;
inline constexpr std::size_t kNumAssetFeatures = 4;

using Ratios = std::array<double, kNumFeatures>;

/// Canonical predictor order. The first four are asset-side components,
/// the remaining five liability-side.
const std::array<std::string_view, kNumFeatures>& feature_names();

/// Human-readable labels for report tables ("Customer loans", ...).
const std::array<std::string_view, kNumFeatures>& feature_labels();

inline constexpr bool is_asset_feature(std::size_t j) { return j < kNumAssetFeatures; }

struct BankYearRecord {
    std::string bank_id;
    std::string country;
    int year = 0;
    double roa = 0.0;
    Ratios ratios{};

    friend bool operator==(const BankYearRecord&, const BankYearRecord&) = default;
};

/// Returns the reason a record violates the record invariants, if any.
std::optional<std::string> validate_record(const BankYearRecord& record);

std::string record_key(const BankYearRecord& record);

struct Panel {
    std::vector<BankYearRecord> records;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }

    /// n x 9 predictor matrix in canonical order.
    Matrix features() const;
    std::vector<double> responses() const;

    friend bool operator==(const Panel&, const Panel&) = default;
};

/// Maps canonical field names to the column names used in an input file.
/// An empty country column name means the file carries no country.
struct ColumnSchema {
    std::string bank_id = "bank_id";
    std::string country = "country";
    std::string year = "year";
    std::string roa = "roa";
    std::array<std::string, kNumFeatures> ratios = [] {
        std::array<std::string, kNumFeatures> names;
        for (std::size_t j = 0; j < kNumFeatures; ++j) names[j] = std::string(feature_names()[j]);
        return names;
    }();
};

struct RejectedRow {
    std::size_t line = 0;
    std::string reason;
};

struct LoadResult {
    Panel panel;
    std::vector<RejectedRow> rejects;
};

LoadResult load_panel(const std::filesystem::path& path, const ColumnSchema& schema = {});
LoadResult parse_panel(const csv::Table& table, const ColumnSchema& schema = {});

std::string panel_to_csv(const Panel& panel);
std::string rejects_to_csv(std::span<const RejectedRow> rejects);

// --- outlier filtering ---------------------------------------------------

/// Number of filtered variables: roa followed by the nine ratios.
inline constexpr std::size_t kNumFilteredVariables = kNumFeatures + 1;

struct OutlierBounds {
    std::array<double, kNumFilteredVariables> lower{};
    std::array<double, kNumFilteredVariables> upper{};
};

struct FilterResult {
    Panel panel;
    std::size_t dropped = 0;
    OutlierBounds bounds;
};

/// Empirical quantile with linear interpolation between order statistics
/// (position (n-1)q). `sorted` must be ascending and nonempty.
double quantile_sorted(std::span<const double> sorted, double q);

OutlierBounds compute_outlier_bounds(const Panel& panel, double lower_q, double upper_q);
FilterResult apply_outlier_bounds(const Panel& panel, const OutlierBounds& bounds);

/// Drops every record with any variable strictly outside the per-variable
/// [lower_q, upper_q] empirical quantiles of the input panel.
FilterResult filter_outliers(const Panel& panel, double lower_q = 0.005, double upper_q = 0.995);

// --- periods --------------------------------------------------------------

struct PeriodSpec {
    std::string label;
    int year_min = 0;
    int year_max = 0;

    bool contains(int year) const { return year_min <= year && year <= year_max; }
    friend bool operator==(const PeriodSpec&, const PeriodSpec&) = default;
};

/// Before, during and after the 2008 crisis: 1997-2007, 2008-2013, 2014-2021.
std::vector<PeriodSpec> crisis_periods();

/// Throws DataError on year_min > year_max or overlapping periods.
void validate_periods(std::span<const PeriodSpec> periods);

std::vector<Panel> split_periods(const Panel& panel, std::span<const PeriodSpec> periods);

// --- synthetic panels -----------------------------------------------------

/// One planted business model: mean balance-sheet structure plus the
/// response function roa = level + sum_j slope_j * (r_j - mean_j).
struct Archetype {
    std::array<double, kNumAssetFeatures> asset_means{};
    std::array<double, kNumFeatures - kNumAssetFeatures> liability_means{};
    double roa_level = 0.0;
    Ratios roa_slopes{};

    Ratios mean_ratios() const;
    double response(const Ratios& ratios) const;
};

/// Three well-separated archetypes (retail, wholesale, diversified).
std::vector<Archetype> default_archetypes();

struct SynthConfig {
    std::size_t n_banks = 500;
    int first_year = 2012;
    int years = 10;
    std::size_t k_planted = 3;
    /// Empty selects default_archetypes() (requires k_planted <= 3).
    std::vector<Archetype> archetypes;
    double noise_sd = 0.001;
    /// Log-scale dispersion of the persistent per-bank ratio deviation.
    double bank_dispersion = 0.15;
    /// Log-scale dispersion of the year-to-year ratio deviation.
    double year_dispersion = 0.05;
    /// Probability that a bank moves to another archetype between years.
    double switch_prob = 0.05;
    std::uint64_t seed = 0;
};

struct SynthResult {
    Panel panel;
    /// Planted archetype index per record.
    std::vector<int> labels;
};

SynthResult synth_generate(const SynthConfig& config);

/// Two-column CSV: record key ("bank_id:year"), planted label.
std::string ground_truth_csv(const SynthResult& synth);

} // namespace bizmodel
