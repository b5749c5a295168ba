// Command-line front end: one subcommand per pipeline stage plus `run`.

#include "bizmodel/config.hpp"
#include "bizmodel/csv.hpp"
#include "bizmodel/error.hpp"
#include "bizmodel/parallel.hpp"
#include "bizmodel/pipeline.hpp"
#include "bizmodel/report.hpp"
#include "bizmodel/rng.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace bizmodel;

namespace {

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    unsigned threads = 0;
    std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--config", o.config, "JSON run configuration");
    cmd->add_option("--seed", o.seed, "master seed (overrides the config)");
    cmd->add_option("--threads", o.threads, "worker threads, 0 = all cores");
    cmd->add_option("--out", o.out, "output directory");
}

RunConfig resolve_config(const CommonOptions& o) {
    return run_stage("config", [&] {
        RunConfig c;
        if (!o.config.empty()) {
            c = load_config(o.config);
        } else if (!o.seed) {
            throw Error("give --config or --seed; runs are never seeded from the clock");
        }
        if (o.seed) c.seed = *o.seed;
        return c;
    });
}

fs::path output_dir(const CommonOptions& o, const RunConfig& c, const std::string& command) {
    if (!o.out.empty()) return o.out;
    if (!c.output.empty()) return c.output;
    const std::string leaf = command + "-" + std::to_string(c.seed);
    if (const char* root = std::getenv("BIZMODEL_OUT_ROOT"); root && *root) return fs::path(root) / leaf;
    return fs::path("bizmodel-out") / leaf;
}

void emit(const Bundle& bundle, const fs::path& dir) {
    run_stage("output", [&] { write_bundle(bundle, dir); });
    std::cout << "wrote " << bundle.size() << " files to " << dir.string() << '\n';
}

std::string read_text(const fs::path& path, const std::string& stage) {
    return run_stage(stage, [&] {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw DataError("cannot open " + path.string());
        std::stringstream buf;
        buf << in.rdbuf();
        return buf.str();
    });
}

Panel read_panel_file(const fs::path& path) {
    return run_stage("data", [&] {
        auto loaded = load_panel(path);
        if (!loaded.rejects.empty())
            throw DataError(path.string() + " has " + std::to_string(loaded.rejects.size()) + " invalid rows");
        return std::move(loaded.panel);
    });
}

ContributionMatrix read_contributions(const fs::path& path, const std::string& stage) {
    return run_stage(stage, [&] { return parse_contribution_csv(csv::read_file(path)); });
}

// Cluster ids from an assignments file, checked against the contribution rows.
std::vector<int> read_assignments(const fs::path& path, const ContributionMatrix& contrib, const std::string& stage) {
    return run_stage(stage, [&] {
        const auto table = csv::read_file(path);
        const auto bank = table.require_column("bank_id");
        const auto year = table.require_column("year");
        const auto cluster = table.require_column("cluster");
        if (table.rows.size() != contrib.size())
            throw DataError("assignments and contributions differ in row count");
        std::vector<int> out;
        for (std::size_t i = 0; i < table.rows.size(); ++i) {
            const auto& row = table.rows[i];
            const auto y = csv::parse_int(row[year]);
            const auto c = csv::parse_int(row[cluster]);
            if (!y || !c || *c < 0) throw DataError("bad assignments row " + std::to_string(i + 1));
            if (row[bank] != contrib.bank_ids[i] || *y != contrib.years[i])
                throw DataError("assignments row " + std::to_string(i + 1) + " does not match the contribution rows");
            out.push_back(static_cast<int>(*c));
        }
        return out;
    });
}

void check_aligned(const Panel& panel, const ContributionMatrix& contrib) {
    if (panel.size() != contrib.size()) throw StageError("data", "panel and contributions differ in row count");
    for (std::size_t i = 0; i < panel.size(); ++i)
        if (panel.records[i].bank_id != contrib.bank_ids[i] || panel.records[i].year != contrib.years[i])
            throw StageError("data", "panel row " + std::to_string(i + 1) + " does not match the contribution rows");
}

AnalysisResult analysis_from_files(const Panel& panel, ContributionMatrix contrib, std::vector<int> assignments) {
    AnalysisResult r;
    r.label = "whole_sample";
    r.panel = panel;
    r.ratios = panel.features();
    r.contributions = std::move(contrib);
    r.solution.k = assignments.empty() ? 0 : static_cast<std::size_t>(*std::ranges::max_element(assignments)) + 1;
    r.solution.assignments = std::move(assignments);
    return r;
}

// Panel with only the key fields, for stages that never look at ratios.
Panel key_panel(const ContributionMatrix& contrib) {
    Panel p;
    for (std::size_t i = 0; i < contrib.size(); ++i) {
        BankYearRecord rec;
        rec.bank_id = contrib.bank_ids[i];
        rec.year = contrib.years[i];
        rec.roa = contrib.actual[i];
        p.records.push_back(rec);
    }
    return p;
}

int cmd_run(const CommonOptions& o) {
    const auto config = resolve_config(o);
    const auto result = run_pipeline(config);
    emit(run_bundle(result, config), output_dir(o, config, "run"));
    return 0;
}

int cmd_synth(const CommonOptions& o) {
    auto config = resolve_config(o);
    if (!config.synth) config.synth = SynthConfig{};
    config.input.reset();
    config.outliers.enabled = false;
    const auto prepared = prepare_panel(config);
    Bundle b;
    b["panel.csv"] = panel_to_csv(prepared.panel);
    csv::Writer w({"bank_id", "year", "planted"});
    for (std::size_t i = 0; i < prepared.panel.size(); ++i)
        w.row({prepared.panel.records[i].bank_id, std::to_string(prepared.panel.records[i].year),
               std::to_string(prepared.planted_labels[i])});
    b["planted_labels.csv"] = w.str();
    emit(b, output_dir(o, config, "synth"));
    return 0;
}

int cmd_fit(const CommonOptions& o) {
    const auto config = resolve_config(o);
    const auto prepared = prepare_panel(config);
    AnalysisResult r;
    r.label = "whole_sample";
    r.panel = prepared.panel;
    r.ratios = r.panel.features();
    fit_forest_stage(r, config.analysis, config.seed);
    Bundle b;
    std::ostringstream forest;
    write_forest(forest, *r.forest);
    b["forest.txt"] = forest.str();
    b["table3.csv"] = table3_csv(r);
    b["panel.csv"] = panel_to_csv(r.panel);
    if (r.tuning) b["tuning_grid.csv"] = tune_grid_csv(*r.tuning, config.analysis.tune.metric);
    emit(b, output_dir(o, config, "fit"));
    return 0;
}

int cmd_tune(const CommonOptions& o) {
    auto config = resolve_config(o);
    config.analysis.tune.enabled = true;
    const auto prepared = prepare_panel(config);
    const auto result = run_stage("forest", [&] {
        ForestConfig base = config.analysis.forest;
        base.seed = derive_seed(config.seed, "forest");
        return tune_grid(prepared.panel, config.analysis.tune.mtry_values, config.analysis.tune.min_node_values, base,
                         config.analysis.tune.metric);
    });
    emit({{"tuning_grid.csv", tune_grid_csv(result, config.analysis.tune.metric)}}, output_dir(o, config, "tune"));
    return 0;
}

int cmd_interpret(const CommonOptions& o, const std::string& forest_path, const std::string& panel_path) {
    const auto text = read_text(forest_path, "interpret");
    const Forest forest = run_stage("interpret", [&] {
        std::istringstream in(text);
        return read_forest(in);
    });
    const Panel panel = read_panel_file(panel_path);
    const auto contrib = run_stage("interpret", [&] { return contribution_matrix(forest, panel); });
    fs::path dir = o.out.empty() ? fs::path(forest_path).parent_path() / "interpret" : fs::path(o.out);
    emit({{"contributions.csv", contribution_csv(contrib)}}, dir);
    return 0;
}

int cmd_cluster(const CommonOptions& o, const std::string& contrib_path) {
    const auto config = resolve_config(o);
    auto r = analysis_from_files(Panel{}, read_contributions(contrib_path, "cluster"), {});
    r.panel = key_panel(r.contributions);
    cluster_stage(r, config.analysis, config.seed);
    // Ranks come from the profile stage; label clusters by their ranking here too.
    r.ratios = Matrix(r.panel.size(), kNumFeatures);
    run_stage("cluster", [&] {
        r.models = rank_models(r.solution.assignments, r.solution.k, r.contributions.contributions, r.ratios);
        r.ranks = record_ranks(r.models, r.panel.size());
    });
    Bundle b;
    b["assignments.csv"] = assignments_csv(r);
    if (r.k_selection) b["k_selection.csv"] = k_selection_csv(*r.k_selection);
    emit(b, output_dir(o, config, "cluster"));
    return 0;
}

int cmd_profile(const CommonOptions& o, const std::string& panel_path, const std::string& contrib_path,
                const std::string& assign_path) {
    const auto config = resolve_config(o);
    const Panel panel = read_panel_file(panel_path);
    auto contrib = read_contributions(contrib_path, "profile");
    check_aligned(panel, contrib);
    auto assignments = read_assignments(assign_path, contrib, "profile");
    RunResult run;
    run.whole = analysis_from_files(panel, std::move(contrib), std::move(assignments));
    profile_stage(run.whole, config.analysis);
    run.transitions = run_stage("profile", [&] {
        const auto [lo, hi] = std::ranges::minmax_element(panel.records, {}, &BankYearRecord::year);
        std::vector<PeriodSpec> specs(config.periods.begin(), config.periods.end());
        specs.push_back({"whole_sample", lo->year, hi->year});
        return transition_report(rank_observations(run.whole), specs);
    });
    Bundle b;
    b["table5.csv"] = table5_csv(run.whole);
    b["table5.md"] = table5_markdown(run.whole);
    b["table6.csv"] = table6_csv(run);
    b["table10.csv"] = table10_csv(run);
    emit(b, output_dir(o, config, "profile"));
    return 0;
}

int cmd_stats(const CommonOptions& o, const std::string& contrib_path, const std::string& assign_path) {
    const auto config = resolve_config(o);
    auto contrib = read_contributions(contrib_path, "stats");
    auto assignments = read_assignments(assign_path, contrib, "stats");
    auto r = analysis_from_files(key_panel(contrib), std::move(contrib), std::move(assignments));
    r.ratios = Matrix(r.panel.size(), kNumFeatures);
    run_stage("stats", [&] {
        r.models = rank_models(r.solution.assignments, r.solution.k, r.contributions.contributions, r.ratios);
        r.ranks = record_ranks(r.models, r.panel.size());
    });
    stats_stage(r, config.analysis);
    Bundle b;
    b["table4_discriminant.csv"] = table4_discriminant_csv(r);
    b["table4_group_means.csv"] = table4_group_means_csv(r);
    emit(b, output_dir(o, config, "stats"));
    return 0;
}

int cmd_bench(const CommonOptions& o) {
    const auto config = resolve_config(o);
    const auto prepared = prepare_panel(config);
    const auto result = run_stage("bench", [&] {
        BenchConfig bc = config.bench;
        bc.seed = derive_seed(config.seed, "bench");
        return run_benchmark(prepared.panel, bc);
    });
    emit({{"table2.csv", bench_csv(result)}, {"table2_settings.csv", bench_settings_csv(result)}},
         output_dir(o, config, "bench"));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bank business models from random-forest contributions"};
    app.require_subcommand(1);

    CommonOptions opts;
    std::string forest_path, panel_path, contrib_path, assign_path;

    auto* run = app.add_subcommand("run", "full pipeline: data, forest, interpret, cluster, stats, profile, bench");
    auto* fit = app.add_subcommand("fit", "fit the forest and write forest.txt, table3.csv, panel.csv");
    auto* interpret = app.add_subcommand("interpret", "contribution matrix for a saved forest and panel");
    auto* cluster = app.add_subcommand("cluster", "choose k and cluster a contribution matrix");
    auto* stats = app.add_subcommand("stats", "discriminant analysis of clustered contributions");
    auto* profile = app.add_subcommand("profile", "business-model tables from contributions and assignments");
    auto* bench = app.add_subcommand("bench", "compare the forest with kNN, boosting and CART");
    auto* synth = app.add_subcommand("synth", "generate a synthetic panel with planted business models");
    auto* tune = app.add_subcommand("tune", "out-of-bag error over the mtry x min_node_size grid");
    for (auto* cmd : {run, fit, interpret, cluster, stats, profile, bench, synth, tune}) add_common(cmd, opts);

    interpret->add_option("--forest", forest_path, "forest.txt from `fit`")->required();
    interpret->add_option("--panel", panel_path, "panel CSV")->required();
    cluster->add_option("--contributions", contrib_path, "contributions.csv")->required();
    stats->add_option("--contributions", contrib_path, "contributions.csv")->required();
    stats->add_option("--assignments", assign_path, "assignments.csv")->required();
    profile->add_option("--panel", panel_path, "panel CSV")->required();
    profile->add_option("--contributions", contrib_path, "contributions.csv")->required();
    profile->add_option("--assignments", assign_path, "assignments.csv")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        set_num_threads(opts.threads);
        if (run->parsed()) return cmd_run(opts);
        if (fit->parsed()) return cmd_fit(opts);
        if (interpret->parsed()) return cmd_interpret(opts, forest_path, panel_path);
        if (cluster->parsed()) return cmd_cluster(opts, contrib_path);
        if (stats->parsed()) return cmd_stats(opts, contrib_path, assign_path);
        if (profile->parsed()) return cmd_profile(opts, panel_path, contrib_path, assign_path);
        if (bench->parsed()) return cmd_bench(opts);
        if (synth->parsed()) return cmd_synth(opts);
        if (tune->parsed()) return cmd_tune(opts);
    } catch (const StageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return stage_exit_code("");
    }
    return 0;
}
