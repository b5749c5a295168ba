#include "bizmodel/data.hpp"

#include "bizmodel/error.hpp"
#include "bizmodel/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

namespace bizmodel {

const std::array<std::string_view, kNumFeatures>& feature_names() {
    static const std::array<std::string_view, kNumFeatures> names = {
        "customer_loans",    "interbank_lending",   "derivative_exposures",
        "securities",        "customer_deposits",   "interbank_borrowing",
        "short_term_funding", "long_term_funding", "equity"};
    return names;
}

const std::array<std::string_view, kNumFeatures>& feature_labels() {
    static const std::array<std::string_view, kNumFeatures> labels = {
        "Customer loans",     "Interbank lending",  "Derivative exposures",
        "Securities",         "Customer deposits",  "Interbank borrowing",
        "Short-term funding", "Long-term funding",  "Equity"};
    return labels;
}

std::optional<std::string> validate_record(const BankYearRecord& record) {
    if (record.bank_id.empty()) return "empty bank_id";
    if (!std::isfinite(record.roa)) return "roa is not finite";
    for (std::size_t j = 0; j < kNumFeatures; ++j) {
        const double v = record.ratios[j];
        if (!std::isfinite(v)) return std::string(feature_names()[j]) + " is not finite";
        if (v < 0.0) return std::string(feature_names()[j]) + " is negative";
    }
    return std::nullopt;
}

std::string record_key(const BankYearRecord& record) {
    return record.bank_id + ":" + std::to_string(record.year);
}

Matrix Panel::features() const {
    Matrix m(records.size(), kNumFeatures);
    for (std::size_t i = 0; i < records.size(); ++i)
        std::copy(records[i].ratios.begin(), records[i].ratios.end(), m.row(i).begin());
    return m;
}

std::vector<double> Panel::responses() const {
    std::vector<double> y(records.size());
    std::transform(records.begin(), records.end(), y.begin(), [](const auto& r) { return r.roa; });
    return y;
}

// --- loading --------------------------------------------------------------

LoadResult parse_panel(const csv::Table& table, const ColumnSchema& schema) {
    const std::size_t c_bank = table.require_column(schema.bank_id);
    const std::optional<std::size_t> c_country =
        schema.country.empty() ? std::nullopt : std::optional(table.require_column(schema.country));
    const std::size_t c_year = table.require_column(schema.year);
    const std::size_t c_roa = table.require_column(schema.roa);
    std::array<std::size_t, kNumFeatures> c_ratio{};
    for (std::size_t j = 0; j < kNumFeatures; ++j) c_ratio[j] = table.require_column(schema.ratios[j]);

    LoadResult result;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::size_t line = table.line_numbers[r];
        if (row.size() != table.header.size()) {
            result.rejects.push_back({line, "expected " + std::to_string(table.header.size()) + " fields, found " +
                                                std::to_string(row.size())});
            continue;
        }
        BankYearRecord rec;
        rec.bank_id = row[c_bank];
        if (c_country) rec.country = row[*c_country];
        auto numeric = [&](std::size_t col, std::string_view name, double& out) -> bool {
            if (row[col].empty()) {
                result.rejects.push_back({line, "missing value for " + std::string(name)});
                return false;
            }
            auto v = csv::parse_double(row[col]);
            if (!v) {
                result.rejects.push_back({line, "non-numeric value for " + std::string(name)});
                return false;
            }
            out = *v;
            return true;
        };
        auto year = csv::parse_int(row[c_year]);
        if (!year) {
            result.rejects.push_back({line, "invalid year '" + row[c_year] + "'"});
            continue;
        }
        rec.year = static_cast<int>(*year);
        bool ok = numeric(c_roa, schema.roa, rec.roa);
        for (std::size_t j = 0; ok && j < kNumFeatures; ++j) ok = numeric(c_ratio[j], schema.ratios[j], rec.ratios[j]);
        if (!ok) continue;
        if (auto reason = validate_record(rec)) {
            result.rejects.push_back({line, *reason});
            continue;
        }
        result.panel.records.push_back(std::move(rec));
    }

    std::map<std::pair<std::string, int>, int> seen;
    std::vector<std::string> duplicates;
    for (const auto& rec : result.panel.records)
        if (++seen[{rec.bank_id, rec.year}] == 2) duplicates.push_back(rec.bank_id + "/" + std::to_string(rec.year));
    if (!duplicates.empty()) {
        std::string msg = "duplicate (bank_id, year) keys:";
        for (std::size_t i = 0; i < duplicates.size() && i < 20; ++i) msg += " " + duplicates[i];
        if (duplicates.size() > 20) msg += " ... (" + std::to_string(duplicates.size()) + " total)";
        throw DataError(msg);
    }
    return result;
}

LoadResult load_panel(const std::filesystem::path& path, const ColumnSchema& schema) {
    if (!std::filesystem::exists(path)) throw DataError("input file '" + path.string() + "' does not exist");
    return parse_panel(csv::read_file(path), schema);
}

std::string panel_to_csv(const Panel& panel) {
    std::vector<std::string> header = {"bank_id", "country", "year", "roa"};
    for (auto name : feature_names()) header.emplace_back(name);
    csv::Writer w(header);
    for (const auto& rec : panel.records) {
        std::vector<std::string> row = {rec.bank_id, rec.country, std::to_string(rec.year), csv::format_double(rec.roa)};
        for (double v : rec.ratios) row.push_back(csv::format_double(v));
        w.row(row);
    }
    return w.str();
}

std::string rejects_to_csv(std::span<const RejectedRow> rejects) {
    csv::Writer w({"row", "reason"});
    for (const auto& r : rejects) w.row({std::to_string(r.line), r.reason});
    return w.str();
}

// --- outliers -------------------------------------------------------------

double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw DataError("quantile of an empty sample");
    const double pos = (static_cast<double>(sorted.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

namespace {

double variable(const BankYearRecord& rec, std::size_t v) { return v == 0 ? rec.roa : rec.ratios[v - 1]; }

} // namespace

OutlierBounds compute_outlier_bounds(const Panel& panel, double lower_q, double upper_q) {
    if (panel.empty()) throw DataError("cannot filter outliers of an empty panel");
    if (!(lower_q >= 0.0 && lower_q < 0.5 && upper_q > 0.5 && upper_q <= 1.0))
        throw DataError("outlier quantiles must satisfy 0 <= lower < 0.5 < upper <= 1");
    OutlierBounds bounds;
    std::vector<double> column(panel.size());
    for (std::size_t v = 0; v < kNumFilteredVariables; ++v) {
        for (std::size_t i = 0; i < panel.size(); ++i) column[i] = variable(panel.records[i], v);
        std::sort(column.begin(), column.end());
        bounds.lower[v] = quantile_sorted(column, lower_q);
        bounds.upper[v] = quantile_sorted(column, upper_q);
    }
    return bounds;
}

FilterResult apply_outlier_bounds(const Panel& panel, const OutlierBounds& bounds) {
    FilterResult result;
    result.bounds = bounds;
    for (const auto& rec : panel.records) {
        bool keep = true;
        for (std::size_t v = 0; keep && v < kNumFilteredVariables; ++v) {
            const double x = variable(rec, v);
            keep = x >= bounds.lower[v] && x <= bounds.upper[v];
        }
        if (keep)
            result.panel.records.push_back(rec);
        else
            ++result.dropped;
    }
    return result;
}

FilterResult filter_outliers(const Panel& panel, double lower_q, double upper_q) {
    return apply_outlier_bounds(panel, compute_outlier_bounds(panel, lower_q, upper_q));
}

// --- periods --------------------------------------------------------------

std::vector<PeriodSpec> crisis_periods() {
    return {{"before", 1997, 2007}, {"during", 2008, 2013}, {"after", 2014, 2021}};
}

void validate_periods(std::span<const PeriodSpec> periods) {
    for (std::size_t i = 0; i < periods.size(); ++i) {
        const auto& p = periods[i];
        if (p.year_min > p.year_max)
            throw DataError("period '" + p.label + "' has year_min > year_max");
        for (std::size_t j = 0; j < i; ++j) {
            const auto& q = periods[j];
            if (p.year_min <= q.year_max && q.year_min <= p.year_max)
                throw DataError("periods '" + q.label + "' and '" + p.label + "' overlap");
        }
    }
}

std::vector<Panel> split_periods(const Panel& panel, std::span<const PeriodSpec> periods) {
    validate_periods(periods);
    std::vector<Panel> out(periods.size());
    for (const auto& rec : panel.records)
        for (std::size_t p = 0; p < periods.size(); ++p)
            if (periods[p].contains(rec.year)) {
                out[p].records.push_back(rec);
                break;
            }
    for (std::size_t p = 0; p < periods.size(); ++p)
        if (out[p].empty()) warn("period '" + periods[p].label + "' contains no records");
    return out;
}

// --- synthetic panels -----------------------------------------------------

Ratios Archetype::mean_ratios() const {
    Ratios r{};
    std::copy(asset_means.begin(), asset_means.end(), r.begin());
    std::copy(liability_means.begin(), liability_means.end(), r.begin() + kNumAssetFeatures);
    return r;
}

double Archetype::response(const Ratios& ratios) const {
    const Ratios mean = mean_ratios();
    double y = roa_level;
    for (std::size_t j = 0; j < kNumFeatures; ++j) y += roa_slopes[j] * (ratios[j] - mean[j]);
    return y;
}

std::vector<Archetype> default_archetypes() {
    // Each component has one archetype clearly above the other two, and the
    // middle archetype sits below the average of the other two.
    Archetype retail;
    retail.asset_means = {0.64, 0.10, 0.01, 0.25};
    retail.liability_means = {0.72, 0.08, 0.01, 0.05, 0.14};
    retail.roa_level = 0.015;
    retail.roa_slopes = {0.004, 0, 0, 0, 0.004, 0, 0, 0, 0.05};

    Archetype wholesale;
    wholesale.asset_means = {0.30, 0.40, 0.08, 0.22};
    wholesale.liability_means = {0.41, 0.35, 0.06, 0.12, 0.06};
    wholesale.roa_level = 0.005;
    wholesale.roa_slopes = {0, 0.006, -0.03, 0, 0, -0.004, 0, 0, 0.02};

    Archetype diversified;
    diversified.asset_means = {0.40, 0.18, 0.02, 0.40};
    diversified.liability_means = {0.46, 0.17, 0.02, 0.28, 0.07};
    diversified.roa_level = -0.005;
    diversified.roa_slopes = {0, 0, 0, 0.008, 0, 0, 0, -0.006, 0.03};

    return {retail, wholesale, diversified};
}

namespace {

void validate_archetype(const Archetype& a, std::size_t index) {
    const std::string where = "archetype " + std::to_string(index);
    for (double m : a.asset_means)
        if (!(m >= 0.0)) throw DataError(where + ": negative asset mean");
    for (double m : a.liability_means)
        if (!(m >= 0.0)) throw DataError(where + ": negative liability mean");
    const double assets = std::accumulate(a.asset_means.begin(), a.asset_means.end(), 0.0);
    const double liabilities = std::accumulate(a.liability_means.begin(), a.liability_means.end(), 0.0);
    if (std::abs(assets - 1.0) > 1e-6) throw DataError(where + ": asset means do not sum to 1");
    if (std::abs(liabilities - 1.0) > 1e-6) throw DataError(where + ": liability means do not sum to 1");
}

// Scales each balance-sheet side of a perturbed ratio vector back to 1.
void normalize_sides(Ratios& r) {
    double assets = 0.0, liabilities = 0.0;
    for (std::size_t j = 0; j < kNumFeatures; ++j) (is_asset_feature(j) ? assets : liabilities) += r[j];
    for (std::size_t j = 0; j < kNumFeatures; ++j) r[j] /= is_asset_feature(j) ? assets : liabilities;
}

} // namespace

SynthResult synth_generate(const SynthConfig& config) {
    if (config.k_planted < 2) throw DataError("k_planted must be at least 2");
    if (config.n_banks == 0 || config.years <= 0) throw DataError("synthetic panel needs banks and years");
    std::vector<Archetype> archetypes = config.archetypes;
    if (archetypes.empty()) {
        if (config.k_planted > 3) throw DataError("default archetypes cover at most 3 groups; supply archetypes");
        archetypes = default_archetypes();
        archetypes.resize(config.k_planted);
    }
    if (archetypes.size() != config.k_planted) throw DataError("archetype count differs from k_planted");
    for (std::size_t g = 0; g < archetypes.size(); ++g) validate_archetype(archetypes[g], g);
    if (!(config.noise_sd >= 0.0)) throw DataError("noise_sd must be non-negative");

    static constexpr std::array<std::string_view, 6> kCountries = {"AT", "BE", "DE", "ES", "FR", "IT"};
    Rng rng(derive_seed(config.seed, "synth"));
    SynthResult out;
    out.panel.records.reserve(config.n_banks * static_cast<std::size_t>(config.years));
    std::vector<Ratios> mean_ratios;
    for (const auto& a : archetypes) mean_ratios.push_back(a.mean_ratios());

    for (std::size_t b = 0; b < config.n_banks; ++b) {
        char id[16];
        std::snprintf(id, sizeof id, "B%05zu", b + 1);
        std::size_t group = b % config.k_planted;
        Ratios bank_effect{};
        for (double& e : bank_effect) e = rng.normal(0.0, config.bank_dispersion);
        for (int t = 0; t < config.years; ++t) {
            if (t > 0 && rng.uniform01() < config.switch_prob)
                group = (group + 1 + rng.uniform_index(config.k_planted - 1)) % config.k_planted;
            BankYearRecord rec;
            rec.bank_id = id;
            rec.country = std::string(kCountries[b % kCountries.size()]);
            rec.year = config.first_year + t;
            for (std::size_t j = 0; j < kNumFeatures; ++j)
                rec.ratios[j] =
                    mean_ratios[group][j] * std::exp(bank_effect[j] + rng.normal(0.0, config.year_dispersion));
            normalize_sides(rec.ratios);
            rec.roa = archetypes[group].response(rec.ratios);
            const double noise = rng.normal();
            if (config.noise_sd > 0.0) rec.roa += config.noise_sd * noise;
            out.panel.records.push_back(std::move(rec));
            out.labels.push_back(static_cast<int>(group));
        }
    }
    return out;
}

std::string ground_truth_csv(const SynthResult& synth) {
    csv::Writer w({"record_key", "label"});
    for (std::size_t i = 0; i < synth.panel.size(); ++i)
        w.row({record_key(synth.panel.records[i]), std::to_string(synth.labels[i])});
    return w.str();
}

} // namespace bizmodel
