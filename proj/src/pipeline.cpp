#include "bizmodel/pipeline.hpp"

#include "bizmodel/parallel.hpp"
#include "bizmodel/rng.hpp"

#include <algorithm>

namespace bizmodel {

namespace {

std::string stage_message(const std::string& stage, const std::string& message) {
    return "stage '" + stage + "': " + message;
}

Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows) {
    Matrix out(rows.size(), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) std::ranges::copy(m.row(rows[i]), out.row(i).begin());
    return out;
}

} // namespace

StageError::StageError(std::string stage, const std::string& message)
    : Error(stage_message(stage, message)), stage_(std::move(stage)) {}

int StageError::exit_code() const { return stage_exit_code(stage_); }

int stage_exit_code(std::string_view stage) {
    if (stage == "config") return 1;
    if (stage == "data") return 2;
    if (stage == "forest") return 3;
    if (stage == "interpret") return 4;
    if (stage == "cluster") return 5;
    if (stage == "stats") return 6;
    if (stage == "profile") return 7;
    if (stage == "bench") return 8;
    if (stage == "output") return 9;
    return 10;
}

void cluster_stage(AnalysisResult& r, const AnalysisConfig& config, std::uint64_t seed) {
    const auto& cc = config.cluster;
    run_stage("cluster", [&] {
        r.cluster_points = cc.standardize ? standardize_columns(r.contributions.contributions)
                                          : r.contributions.contributions;
        KMeansOptions km;
        km.n_starts = cc.n_starts;
        km.max_iter = cc.max_iter;
        km.seed = derive_seed(seed, "kmeans");
        if (cc.fixed_k) {
            r.k_selection.reset();
            km.seed = derive_seed(km.seed, *cc.fixed_k);
            r.solution = kmeans(r.cluster_points, *cc.fixed_k, km);
        } else {
            SelectKOptions opts;
            opts.k_min = cc.k_min;
            opts.k_max = cc.k_max;
            opts.kmeans = km;
            opts.indices = cc.indices;
            r.k_selection = select_k(r.cluster_points, opts);
            r.solution = r.k_selection->solution_for(r.k_selection->final_k);
        }
    });
}

void profile_stage(AnalysisResult& r, const AnalysisConfig& config) {
    run_stage("profile", [&] {
        r.models = rank_models(r.solution.assignments, r.solution.k, r.contributions.contributions, r.ratios);
        r.ranks = record_ranks(r.models, r.panel.size());
        r.sides = side_contributions(r.models);
        r.characterization.clear();
        for (const auto& model : r.models) {
            const auto rest = complement_rows(model, r.panel.size());
            if (rest.empty()) {
                warn("analysis '" + r.label + "': " + model.label + " covers every record; nothing to characterize");
                r.characterization.emplace_back();
                continue;
            }
            r.characterization.push_back(characterize(r.ratios, model.members, rest, config.alpha));
        }
        r.superscripts = pairwise_superscripts(r.models, r.ratios, config.alpha);
    });
}

void stats_stage(AnalysisResult& r, const AnalysisConfig& config) {
    run_stage("stats", [&] {
        r.pairwise.clear();
        r.group_means.clear();
        r.discriminant = {};
        if (r.models.size() < 2) {
            warn("analysis '" + r.label + "': a single business model has no discriminant analysis");
            return;
        }
        const Matrix& contrib = r.contributions.contributions;
        r.group_means = group_mean_tests(contrib, r.ranks);
        r.discriminant = lda_discriminant(contrib, r.ranks, config.wilks);
        for (std::size_t a = 0; a < r.models.size(); ++a) {
            for (std::size_t b = a + 1; b < r.models.size(); ++b) {
                std::vector<std::size_t> rows;
                for (std::size_t i = 0; i < r.ranks.size(); ++i)
                    if (r.ranks[i] == static_cast<int>(a + 1) || r.ranks[i] == static_cast<int>(b + 1))
                        rows.push_back(i);
                std::vector<int> labels;
                labels.reserve(rows.size());
                for (std::size_t i : rows) labels.push_back(r.ranks[i]);
                const Matrix sub = select_rows(contrib, rows);
                PairwiseDiscriminant pd;
                pd.model_a = static_cast<int>(a + 1);
                pd.model_b = static_cast<int>(b + 1);
                pd.group_means = group_mean_tests(sub, labels);
                pd.discriminant = lda_discriminant(sub, labels, config.wilks);
                r.pairwise.push_back(std::move(pd));
            }
        }
    });
}

void profile_contributions(AnalysisResult& r, const AnalysisConfig& config, std::uint64_t seed) {
    cluster_stage(r, config, seed);
    profile_stage(r, config);
    stats_stage(r, config);
}

void fit_forest_stage(AnalysisResult& r, const AnalysisConfig& config, std::uint64_t seed) {
    run_stage("forest", [&] {
        r.forest_config = config.forest;
        r.forest_config.seed = derive_seed(seed, "forest");
        if (config.tune.enabled) {
            r.tuning = tune_grid(r.panel, config.tune.mtry_values, config.tune.min_node_values, r.forest_config,
                                 config.tune.metric);
            r.forest_config.mtry = r.tuning->best_cell().mtry;
            r.forest_config.min_node_size = r.tuning->best_cell().min_node_size;
        }
        r.forest = fit_forest(r.panel, r.forest_config);
        if (config.importance.kind == ImportanceKind::kImpurity) {
            r.importance = variable_importance(*r.forest, config.importance.scaling);
        } else {
            const auto y = r.panel.responses();
            r.importance = permutation_importance(*r.forest, r.ratios, y, config.importance.scaling);
        }
    });
}

AnalysisResult run_analysis(const Panel& panel, const AnalysisConfig& config, std::uint64_t seed,
                            const std::string& label) {
    AnalysisResult r;
    r.label = label;
    r.panel = panel;
    if (panel.size() == 0) throw StageError("data", "analysis '" + label + "' has an empty panel");
    r.ratios = panel.features();
    fit_forest_stage(r, config, seed);
    run_stage("interpret", [&] { r.contributions = contribution_matrix(*r.forest, panel); });
    profile_contributions(r, config, seed);
    return r;
}

std::vector<AnalysisResult> run_period_analysis(const Panel& panel, std::span<const PeriodSpec> periods,
                                                const AnalysisConfig& config, std::uint64_t seed,
                                                std::size_t min_records) {
    const auto parts = run_stage("data", [&] {
        validate_periods(periods);
        return split_periods(panel, periods);
    });
    for (std::size_t p = 0; p < periods.size(); ++p)
        if (parts[p].size() < min_records)
            throw StageError("data", "period '" + periods[p].label + "' has " + std::to_string(parts[p].size()) +
                                         " records, fewer than the minimum " + std::to_string(min_records));
    std::vector<std::optional<AnalysisResult>> slots(periods.size());
    parallel_for(periods.size(), [&](std::size_t p) {
        slots[p] = run_analysis(parts[p], config, derive_seed(seed, "period:" + periods[p].label), periods[p].label);
    });
    std::vector<AnalysisResult> out;
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

std::vector<RankObservation> rank_observations(const AnalysisResult& result) {
    std::vector<RankObservation> obs;
    obs.reserve(result.panel.size());
    for (std::size_t i = 0; i < result.panel.size(); ++i)
        obs.push_back({result.panel.records[i].bank_id, result.panel.records[i].year, result.ranks.at(i)});
    return obs;
}

PreparedPanel prepare_panel(const RunConfig& config) {
    return run_stage("data", [&] {
        PreparedPanel out;
        if (config.synth) {
            SynthConfig sc = *config.synth;
            sc.seed = derive_seed(config.seed, "synth");
            auto synth = synth_generate(sc);
            out.panel = std::move(synth.panel);
            out.planted_labels = std::move(synth.labels);
        } else if (config.input) {
            auto loaded = load_panel(config.input->path, config.input->schema);
            out.panel = std::move(loaded.panel);
            out.rejects = std::move(loaded.rejects);
        } else {
            throw Error("config names neither an input file nor a synthetic panel");
        }
        out.loaded_records = out.panel.size();
        if (out.panel.size() == 0) throw DataError("panel has no valid records");
        if (config.outliers.enabled) {
            auto filtered = filter_outliers(out.panel, config.outliers.lower_quantile, config.outliers.upper_quantile);
            if (!out.planted_labels.empty()) {
                // Keep planted labels aligned with the surviving records.
                std::vector<int> kept;
                std::size_t j = 0;
                for (std::size_t i = 0; i < out.panel.size() && j < filtered.panel.size(); ++i) {
                    if (record_key(out.panel.records[i]) == record_key(filtered.panel.records[j])) {
                        kept.push_back(out.planted_labels[i]);
                        ++j;
                    }
                }
                out.planted_labels = std::move(kept);
            }
            out.outliers_dropped = filtered.dropped;
            out.bounds = filtered.bounds;
            out.panel = std::move(filtered.panel);
        }
        if (out.panel.size() == 0) throw DataError("outlier filter removed every record");
        return out;
    });
}

RunResult run_pipeline(const RunConfig& config) {
    run_stage("config", [&] { validate_config(config); });
    auto prepared = prepare_panel(config);
    RunResult result;
    result.loaded_records = prepared.loaded_records;
    result.rejects = std::move(prepared.rejects);
    result.outliers_dropped = prepared.outliers_dropped;
    result.bounds = prepared.bounds;
    result.planted_labels = std::move(prepared.planted_labels);
    const Panel& panel = prepared.panel;

    result.whole = run_analysis(panel, config.analysis, config.seed, "whole_sample");
    if (!config.periods.empty())
        result.periods =
            run_period_analysis(panel, config.periods, config.analysis, config.seed, config.min_period_records);

    result.transitions = run_stage("profile", [&] {
        const auto [lo, hi] = std::ranges::minmax_element(panel.records, {}, &BankYearRecord::year);
        std::vector<TransitionRow> rows;
        if (config.transition_ranking == TransitionRanking::kWholeSample) {
            std::vector<PeriodSpec> specs(config.periods.begin(), config.periods.end());
            specs.push_back({"whole_sample", lo->year, hi->year});
            rows = transition_report(rank_observations(result.whole), specs);
        } else {
            for (std::size_t p = 0; p < result.periods.size(); ++p) {
                const PeriodSpec spec = config.periods[p];
                const std::vector<PeriodSpec> one{spec};
                const auto obs = rank_observations(result.periods[p]);
                if (transition_pairs(obs).empty()) continue;
                auto part = transition_report(obs, one);
                rows.insert(rows.end(), part.begin(), part.end());
            }
            const std::vector<PeriodSpec> whole{{"whole_sample", lo->year, hi->year}};
            auto part = transition_report(rank_observations(result.whole), whole);
            rows.insert(rows.end(), part.begin(), part.end());
        }
        return rows;
    });

    if (config.bench_enabled) {
        result.bench = run_stage("bench", [&] {
            BenchConfig bc = config.bench;
            bc.seed = derive_seed(config.seed, "bench");
            return run_benchmark(panel, bc);
        });
    }
    return result;
}

} // namespace bizmodel
