#include "bizmodel/report.hpp"

#include "bizmodel/csv.hpp"
#include "bizmodel/error.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace bizmodel {

namespace {

std::string fmt(double v) { return csv::format_double(v); }
std::string count(std::size_t n) { return std::to_string(n); }

std::string superscript_text(const std::vector<int>& others) {
    std::string s;
    for (int o : others) s += std::to_string(o);
    return s;
}

std::string comparison_name(int a, int b) { return "BM" + std::to_string(a) + "-BM" + std::to_string(b); }

void discriminant_rows(csv::Writer& w, const std::string& comparison, const DiscriminantReport& report) {
    const std::string approx = report.approximation == WilksApproximation::kRao ? "rao_f" : "bartlett_chi2";
    for (std::size_t f = 0; f < report.functions.size(); ++f) {
        const auto& fn = report.functions[f];
        w.row({comparison, count(f + 1), fmt(fn.eigenvalue), fmt(fn.wilks_lambda), fmt(fn.statistic), fmt(fn.df1),
               fmt(fn.df2), fmt(fn.p_value), significance_stars(fn.p_value), approx});
    }
}

void group_mean_rows(csv::Writer& w, const std::string& comparison, const std::vector<GroupMeanTest>& tests) {
    for (std::size_t c = 0; c < tests.size(); ++c) {
        const auto& t = tests[c];
        const std::string name(feature_names()[c]);
        if (!t.defined) {
            w.row({comparison, name, "NA", "NA", fmt(t.df1), fmt(t.df2), "NA", ""});
            continue;
        }
        w.row({comparison, name, fmt(t.wilks_lambda), fmt(t.f_stat), fmt(t.df1), fmt(t.df2), fmt(t.p_value),
               significance_stars(t.p_value)});
    }
}

} // namespace

std::string table3_csv(const AnalysisResult& result) { return importance_csv(result.importance); }

std::string table4_discriminant_csv(const AnalysisResult& result) {
    csv::Writer w({"comparison", "function", "eigenvalue", "wilks_lambda", "statistic", "df1", "df2", "p_value",
                   "stars", "approximation"});
    discriminant_rows(w, "all", result.discriminant);
    for (const auto& p : result.pairwise) discriminant_rows(w, comparison_name(p.model_a, p.model_b), p.discriminant);
    return w.str();
}

std::string table4_group_means_csv(const AnalysisResult& result) {
    csv::Writer w({"comparison", "component", "wilks_lambda", "f_stat", "df1", "df2", "p_value", "stars"});
    group_mean_rows(w, "all", result.group_means);
    for (const auto& p : result.pairwise) group_mean_rows(w, comparison_name(p.model_a, p.model_b), p.group_means);
    return w.str();
}

std::string table5_csv(const AnalysisResult& result) {
    csv::Writer w({"panel", "row", "obs", "component", "value", "p_value", "stars", "superscripts", "characteristic"});
    for (const auto& m : result.models) {
        for (std::size_t c = 0; c < kNumFeatures; ++c)
            w.row({"A", m.label, count(m.members.size()), std::string(feature_names()[c]),
                   fmt(m.mean_contributions[c]), "", "", "", ""});
        w.row({"A", m.label, count(m.members.size()), "total", fmt(m.total_contribution), "", "", "", ""});
    }
    const std::size_t n = result.panel.size();
    for (std::size_t r = 0; r < result.models.size(); ++r) {
        const auto& m = result.models[r];
        const auto& tests = result.characterization[r];
        for (std::size_t c = 0; c < kNumFeatures; ++c) {
            const std::string name(feature_names()[c]);
            if (tests.empty()) {
                w.row({"B", m.label, count(m.members.size()), name, fmt(m.mean_ratios[c]), "NA", "",
                       superscript_text(result.superscripts[r][c]), "false"});
                continue;
            }
            const auto& t = tests[c];
            w.row({"B", m.label, count(m.members.size()), name, fmt(t.mean_in), fmt(t.test.p_two_sided),
                   significance_stars(t.test.p_two_sided), superscript_text(result.superscripts[r][c]),
                   t.characteristic ? "true" : "false"});
        }
        if (tests.empty()) continue;
        for (std::size_t c = 0; c < kNumFeatures; ++c)
            w.row({"B", "S-" + m.label, count(n - m.members.size()), std::string(feature_names()[c]),
                   fmt(tests[c].mean_out), "", "", "", ""});
    }
    return w.str();
}

std::string table5_markdown(const AnalysisResult& result) {
    std::ostringstream out;
    const auto labels = feature_labels();
    out << "# Business models: " << result.label << "\n\n";
    out << "## Panel A: mean contributions to profitability (x100)\n\n";
    out << "| Business model | Obs. |";
    for (auto l : labels) out << ' ' << l << " |";
    out << " Total contrib. |\n|---|---:|";
    for (std::size_t c = 0; c < kNumFeatures; ++c) out << "---:|";
    out << "---:|\n";
    for (const auto& m : result.models) {
        out << "| " << m.label << " | " << m.members.size() << " |";
        for (double v : m.mean_contributions) out << ' ' << csv::format_fixed(100.0 * v, 4) << " |";
        out << ' ' << csv::format_fixed(100.0 * m.total_contribution, 4) << " |\n";
    }
    out << "\n## Panel B: mean ratios of the portfolio components\n\n";
    out << "| Business model | Obs. |";
    for (auto l : labels) out << ' ' << l << " |";
    out << "\n|---|---:|";
    for (std::size_t c = 0; c < kNumFeatures; ++c) out << "---:|";
    out << '\n';
    const std::size_t n = result.panel.size();
    for (std::size_t r = 0; r < result.models.size(); ++r) {
        const auto& m = result.models[r];
        const auto& tests = result.characterization[r];
        out << "| " << m.label << " | " << m.members.size() << " |";
        for (std::size_t c = 0; c < kNumFeatures; ++c) {
            std::string cell = csv::format_fixed(tests.empty() ? m.mean_ratios[c] : tests[c].mean_in, 4);
            // Escaped so the significance stars do not read as emphasis.
            if (!tests.empty())
                for (char ch : significance_stars(tests[c].test.p_two_sided)) cell += std::string("\\") + ch;
            const auto sup = superscript_text(result.superscripts[r][c]);
            if (!sup.empty()) cell += " ^" + sup;
            if (!tests.empty() && tests[c].characteristic) cell = "**" + cell + "**";
            out << ' ' << cell << " |";
        }
        out << '\n';
        if (tests.empty()) continue;
        out << "| S-" << m.label << " | " << n - m.members.size() << " |";
        for (std::size_t c = 0; c < kNumFeatures; ++c) out << ' ' << csv::format_fixed(tests[c].mean_out, 4) << " |";
        out << '\n';
    }
    out << "\nStars: Wilcoxon-Mann-Whitney test of the model against its complement, "
           "*** p < 0.01, ** p < 0.05, * p < 0.10. Superscripts name the other models whose "
           "distribution differs at the 10% level. Bold cells are characteristic components.\n";
    return out.str();
}

std::string table6_csv(const RunResult& result) {
    csv::Writer w({"period", "model", "obs", "assets", "liabilities", "total"});
    auto emit = [&](const AnalysisResult& a) {
        for (std::size_t r = 0; r < a.sides.size(); ++r)
            w.row({a.label, a.sides[r].label, count(a.models[r].members.size()), fmt(a.sides[r].assets),
                   fmt(a.sides[r].liabilities), fmt(a.models[r].total_contribution)});
    };
    emit(result.whole);
    for (const auto& p : result.periods) emit(p);
    return w.str();
}

std::string table10_csv(const RunResult& result) {
    csv::Writer w({"period", "worse", "equal", "better", "year_pairs"});
    for (const auto& t : result.transitions)
        w.row({t.label, fmt(t.worse), fmt(t.equal), fmt(t.better), count(t.year_pairs)});
    return w.str();
}

std::string assignments_csv(const AnalysisResult& result) {
    csv::Writer w({"bank_id", "year", "cluster", "model"});
    for (std::size_t i = 0; i < result.panel.size(); ++i)
        w.row({result.panel.records[i].bank_id, std::to_string(result.panel.records[i].year),
               std::to_string(result.solution.assignments[i]), "BM" + std::to_string(result.ranks[i])});
    return w.str();
}

Bundle analysis_files(const AnalysisResult& result) {
    Bundle b;
    b["table3.csv"] = table3_csv(result);
    b["table4_discriminant.csv"] = table4_discriminant_csv(result);
    b["table4_group_means.csv"] = table4_group_means_csv(result);
    b["table5.csv"] = table5_csv(result);
    b["table5.md"] = table5_markdown(result);
    b["contributions.csv"] = contribution_csv(result.contributions);
    b["assignments.csv"] = assignments_csv(result);
    if (result.k_selection) b["k_selection.csv"] = k_selection_csv(*result.k_selection);
    if (result.tuning) b["tuning_grid.csv"] = tune_grid_csv(*result.tuning);
    std::ostringstream forest;
    write_forest(forest, *result.forest);
    b["forest.txt"] = forest.str();
    return b;
}

Bundle run_bundle(const RunResult& result, const RunConfig& config) {
    Bundle b = analysis_files(result.whole);
    for (const auto& p : result.periods)
        for (auto& [name, text] : analysis_files(p)) b["periods/" + p.label + "/" + name] = std::move(text);
    b["table6.csv"] = table6_csv(result);
    b["table10.csv"] = table10_csv(result);
    b["rejects.csv"] = rejects_to_csv(result.rejects);
    if (result.bench) {
        b["table2.csv"] = bench_csv(*result.bench);
        b["table2_settings.csv"] = bench_settings_csv(*result.bench);
    }
    if (result.bounds) {
        csv::Writer w({"variable", "lower", "upper"});
        for (std::size_t v = 0; v < kNumFilteredVariables; ++v)
            w.row({v == 0 ? std::string("roa") : std::string(feature_names()[v - 1]), fmt(result.bounds->lower[v]),
                   fmt(result.bounds->upper[v])});
        b["outlier_bounds.csv"] = w.str();
    }
    if (!result.planted_labels.empty()) {
        csv::Writer w({"bank_id", "year", "planted"});
        for (std::size_t i = 0; i < result.whole.panel.size(); ++i)
            w.row({result.whole.panel.records[i].bank_id, std::to_string(result.whole.panel.records[i].year),
                   std::to_string(result.planted_labels[i])});
        b["planted_labels.csv"] = w.str();
    }

    nlohmann::ordered_json m;
    m["tool"] = "bizmodel";
    m["version"] = BIZMODEL_VERSION;
    m["seed"] = config.seed;
    m["config"] = nlohmann::ordered_json::parse(config_to_json(config));
    m["records"] = {{"loaded", result.loaded_records},
                    {"rejected", result.rejects.size()},
                    {"outliers_dropped", result.outliers_dropped},
                    {"analysed", result.whole.panel.size()}};
    auto analysis_summary = [](const AnalysisResult& a) {
        nlohmann::ordered_json s;
        s["label"] = a.label;
        s["records"] = a.panel.size();
        s["forest_mtry"] = a.forest_config.mtry;
        s["forest_min_node_size"] = a.forest_config.min_node_size;
        s["k"] = a.solution.k;
        s["k_source"] = a.k_selection ? "majority_vote" : "fixed";
        return s;
    };
    nlohmann::ordered_json analyses = nlohmann::ordered_json::array();
    analyses.push_back(analysis_summary(result.whole));
    for (const auto& p : result.periods) analyses.push_back(analysis_summary(p));
    m["analyses"] = analyses;
    std::vector<std::string> files;
    for (const auto& [name, text] : b) files.push_back(name);
    files.emplace_back("manifest.json");
    m["files"] = files;
    b["manifest.json"] = m.dump(2) + "\n";
    return b;
}

void write_bundle(const Bundle& bundle, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    const fs::path target = fs::absolute(dir).lexically_normal();
    const fs::path staging = target.parent_path() / (target.filename().string() + ".partial");
    std::error_code ec;
    fs::remove_all(staging, ec);
    fs::create_directories(staging);
    for (const auto& [name, text] : bundle) {
        const fs::path path = staging / name;
        fs::create_directories(path.parent_path());
        std::ofstream out(path, std::ios::binary);
        out << text;
        if (!out) throw Error("cannot write " + path.string());
    }
    const fs::path old = target.parent_path() / (target.filename().string() + ".old");
    fs::remove_all(old, ec);
    if (fs::exists(target)) fs::rename(target, old);
    fs::rename(staging, target);
    fs::remove_all(old, ec);
}

} // namespace bizmodel
