// One PASS/FAIL line per acceptance criterion. Exit status is nonzero if any fails.
#include "bizmodel/bench.hpp"
#include "bizmodel/cluster.hpp"
#include "bizmodel/config.hpp"
#include "bizmodel/forest.hpp"
#include "bizmodel/interpret.hpp"
#include "bizmodel/pipeline.hpp"
#include "bizmodel/profile.hpp"
#include "bizmodel/rng.hpp"
#include "bizmodel/stats.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace bizmodel;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> row_of(const Matrix& m, std::size_t i) {
    std::vector<double> out(m.cols());
    for (std::size_t j = 0; j < m.cols(); ++j) out[j] = m(i, j);
    return out;
}

// Adjusted Rand index from the contingency table.
double adjusted_rand(const std::vector<int>& a, const std::vector<int>& b) {
    std::map<std::pair<int, int>, double> cells;
    std::map<int, double> ra, rb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cells[{a[i], b[i]}] += 1;
        ra[a[i]] += 1;
        rb[b[i]] += 1;
    }
    auto c2 = [](double n) { return n * (n - 1) / 2; };
    double index = 0, sa = 0, sb = 0;
    for (const auto& [k, n] : cells) index += c2(n);
    for (const auto& [k, n] : ra) sa += c2(n);
    for (const auto& [k, n] : rb) sb += c2(n);
    const double expected = sa * sb / c2(static_cast<double>(a.size()));
    const double max_index = (sa + sb) / 2;
    return (index - expected) / (max_index - expected);
}

// --- 1 -------------------------------------------------------------------

Outcome additivity() {
    const auto t0 = std::chrono::steady_clock::now();
    SynthConfig sc;
    sc.n_banks = 1000;
    sc.years = 10;
    sc.seed = 101;
    const Panel panel = synth_generate(sc).panel;
    ForestConfig fc;
    fc.n_trees = 100;
    fc.seed = 5;
    const Forest forest = fit_forest(panel, fc);
    const Matrix x = panel.features();
    double worst_forest = 0.0, worst_tree = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto q = row_of(x, i);
        const auto c = decompose_forest(forest, q);
        worst_forest = std::max(worst_forest, std::abs(c.prediction() - predict(forest, q)));
        if (i % 10 == 0)
            for (const auto& tree : forest.trees()) {
                const auto ct = decompose(tree, q);
                worst_tree = std::max(worst_tree, std::abs(ct.prediction() - predict_tree(tree, q)));
            }
    }
    const double secs = seconds_since(t0);
    return {x.rows() == 10000 && worst_forest <= 1e-9 && worst_tree <= 1e-12 && secs < 60.0,
            std::to_string(x.rows()) + " records, forest max err " + fmt("%.2e", worst_forest) + ", tree max err " +
                fmt("%.2e", worst_tree) + ", " + fmt("%.1f", secs) + " s"};
}

// --- 2 -------------------------------------------------------------------

Outcome figure_three() {
    auto internal = [](int id, std::size_t f, double t, int l, int r, double mean) {
        return TreeNode{id, false, f, t, l, r, mean, 2, 1.0};
    };
    auto leaf = [](int id, double mean) { return TreeNode{id, true, 0, 0.0, -1, -1, mean, 1, 0.0}; };
    const RegressionTree tree({internal(0, 0, 0.5, 1, 2, 0.3), internal(1, 1, 0.5, 3, 4, 0.5), leaf(2, 0.1),
                               leaf(3, 0.9), internal(4, 2, 0.5, 5, 6, 0.1), leaf(5, -0.2),
                               internal(6, 0, 0.25, 7, 8, 0.4), leaf(7, 0.6), leaf(8, 0.2)},
                              3);
    const std::vector<double> x{0.1, 0.9, 0.9};
    const auto c = decompose(tree, x);
    const double tol = 1e-15;
    const bool ok = c.bias == 0.3 && std::abs(c.contributions[0] - 0.4) <= tol &&
                    std::abs(c.contributions[1] + 0.4) <= tol && std::abs(c.contributions[2] - 0.3) <= tol &&
                    std::abs(c.prediction() - 0.6) <= tol && predict_tree(tree, x) == 0.6;
    return {ok, "bias " + fmt("%.17g", c.bias) + ", V1 " + fmt("%.17g", c.contributions[0]) + ", V2 " +
                    fmt("%.17g", c.contributions[1]) + ", V3 " + fmt("%.17g", c.contributions[2]) + ", prediction " +
                    fmt("%.17g", c.prediction())};
}

// --- 3 -------------------------------------------------------------------

Outcome cross_footing() {
    BusinessModel bm1;
    bm1.label = "BM1";
    bm1.mean_contributions = {0.1245, 0.1087, 0.0540, 0.1275, 0.1214, 0.1261, 0.0367, 0.0952, 0.2447};
    const std::vector<BusinessModel> models{bm1};
    const auto s = side_contributions(models)[0];
    const double sum = s.assets + s.liabilities;
    // Rounding of the parts leaves exactly 1e-4 between parts and total.
    const bool ok = std::abs(s.assets - 0.4147) <= 1e-12 && std::abs(s.liabilities - 0.6241) <= 1e-12 &&
                    std::abs(sum - 1.0387) <= 1e-4 + 1e-12;
    return {ok, "assets " + fmt("%.4f", s.assets) + ", liabilities " + fmt("%.4f", s.liabilities) + ", sum " +
                    fmt("%.4f", sum) + " vs 1.0387"};
}

// --- 4 -------------------------------------------------------------------

Outcome bagging_fraction() {
    const std::size_t n = 10000, trees = 500;
    double total = 0.0;
    for (std::size_t t = 0; t < trees; ++t) {
        const auto rows = bootstrap_rows(n, n, 77, t);
        std::vector<char> seen(n, 0);
        for (auto r : rows) seen[r] = 1;
        total += static_cast<double>(std::count(seen.begin(), seen.end(), 1)) / static_cast<double>(n);
    }
    const double mean = total / static_cast<double>(trees);
    return {std::abs(mean - 0.632) <= 0.01, "mean unique in-bag fraction " + fmt("%.4f", mean)};
}

// --- 5 -------------------------------------------------------------------

Outcome planted_recovery() {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig config = parse_config(R"({"seed": 2024, "synth": {"n_banks": 500, "years": 10, "k_planted": 3}})");
    const PreparedPanel prepared = prepare_panel(config);
    const AnalysisResult r = run_analysis(prepared.panel, config.analysis, config.seed, "whole_sample");
    const double ari = adjusted_rand(r.solution.assignments, prepared.planted_labels);

    // Elevated ratios of an archetype: above the mean of the other archetypes.
    const auto archetypes = default_archetypes();
    std::vector<std::set<std::size_t>> elevated(archetypes.size());
    for (std::size_t g = 0; g < archetypes.size(); ++g)
        for (std::size_t j = 0; j < kNumFeatures; ++j) {
            double others = 0.0;
            for (std::size_t h = 0; h < archetypes.size(); ++h)
                if (h != g) others += archetypes[h].mean_ratios()[j];
            others /= static_cast<double>(archetypes.size() - 1);
            if (archetypes[g].mean_ratios()[j] > others) elevated[g].insert(j);
        }

    bool sets_ok = r.models.size() == 3;
    std::string sets;
    for (std::size_t m = 0; sets_ok && m < r.models.size(); ++m) {
        std::map<int, std::size_t> votes;
        for (std::size_t i : r.models[m].members) ++votes[prepared.planted_labels[i]];
        const int planted =
            std::max_element(votes.begin(), votes.end(), [](auto& a, auto& b) { return a.second < b.second; })->first;
        std::set<std::size_t> found;
        for (std::size_t j = 0; j < kNumFeatures; ++j)
            if (r.characterization[m][j].characteristic) found.insert(j);
        sets_ok = sets_ok && found == elevated[static_cast<std::size_t>(planted)];
        sets += " " + r.models[m].label + "=" + std::to_string(found.size()) + "/" +
                std::to_string(elevated[static_cast<std::size_t>(planted)].size());
    }
    const std::size_t k = r.k_selection ? r.k_selection->final_k : 0;
    const double secs = seconds_since(t0);
    return {k == 3 && ari >= 0.9 && sets_ok && secs < 300.0,
            "k " + std::to_string(k) + ", ARI " + fmt("%.4f", ari) + ", characteristic sets" + sets +
                (sets_ok ? " exact" : " differ") + ", " + fmt("%.1f", secs) + " s"};
}

// --- 6 -------------------------------------------------------------------

Outcome wmw_equivalence() {
    // Sizes start at 5: below that the exact null has too few atoms for any
    // normal approximation to stay within 0.03.
    Rng rng(606);
    double worst = 0.0;
    bool sums_exact = true;
    std::size_t exact_used = 0;
    for (int pair = 0; pair < 200; ++pair) {
        const std::size_t na = 5 + rng.uniform_index(4), nb = 5 + rng.uniform_index(4);
        std::vector<double> a(na), b(nb);
        for (auto& v : a) v = rng.normal();
        for (auto& v : b) v = rng.normal() + 0.8 * rng.uniform01();
        const auto res = wmw_test(a, b);
        exact_used += res.exact ? 1 : 0;
        sums_exact = sums_exact && res.u_a + res.u_b == static_cast<double>(na * nb);
        const double exact = wmw_exact_p(na, nb, res.u_a);
        const double normal = wmw_normal_p(na, nb, res.u_a, 0.0);
        worst = std::max(worst, std::abs(exact - normal));
    }
    return {worst <= 0.03 && sums_exact && exact_used == 200,
            "200 tie-free pairs with sizes 5..8, max |normal - exact| " + fmt("%.4f", worst) +
                (sums_exact ? ", U sums exact" : ", U sums off")};
}

// --- 7 -------------------------------------------------------------------

Outcome wilks_f_identity() {
    Rng rng(707);
    double worst = 0.0;
    bool lambda_ok = true;
    for (int d = 0; d < 100; ++d) {
        const std::size_t na = 3 + rng.uniform_index(20), nb = 3 + rng.uniform_index(20);
        std::vector<double> v;
        std::vector<int> labels;
        for (std::size_t i = 0; i < na; ++i) v.push_back(rng.normal()), labels.push_back(0);
        for (std::size_t i = 0; i < nb; ++i) v.push_back(rng.normal() + rng.uniform(-1.0, 1.0)), labels.push_back(1);
        Matrix column(v.size(), 1);
        for (std::size_t i = 0; i < v.size(); ++i) column(i, 0) = v[i];
        const auto g = group_mean_tests(column, labels).at(0);

        // Pooled two-sample t statistic.
        double ma = 0, mb = 0;
        for (std::size_t i = 0; i < na; ++i) ma += v[i];
        for (std::size_t i = na; i < na + nb; ++i) mb += v[i];
        ma /= static_cast<double>(na);
        mb /= static_cast<double>(nb);
        double ss = 0;
        for (std::size_t i = 0; i < na; ++i) ss += (v[i] - ma) * (v[i] - ma);
        for (std::size_t i = na; i < na + nb; ++i) ss += (v[i] - mb) * (v[i] - mb);
        const double sp2 = ss / static_cast<double>(na + nb - 2);
        const double t = (ma - mb) / std::sqrt(sp2 * (1.0 / static_cast<double>(na) + 1.0 / static_cast<double>(nb)));
        worst = std::max(worst, std::abs(g.f_stat - t * t) / std::max(t * t, 1e-300));
        lambda_ok = lambda_ok && g.wilks_lambda > 0.0 && g.wilks_lambda <= 1.0;
    }
    return {worst <= 1e-9 && lambda_ok,
            "100 datasets, max relative |F - t^2| " + fmt("%.2e", worst) + (lambda_ok ? ", lambda in (0,1]" : ", lambda out of range")};
}

// --- 8 -------------------------------------------------------------------

Outcome benchmark_ordering() {
    bool ok = true;
    std::string detail;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SynthConfig sc;
        sc.n_banks = 100;
        sc.years = 5;
        sc.seed = seed;
        const Panel panel = synth_generate(sc).panel;
        BenchConfig bc;
        bc.mode = EvalMode::kInSample;
        bc.seed = seed;
        set_warning_sink([](const std::string&) {});
        const auto res = run_benchmark(panel, bc);
        set_warning_sink(nullptr);
        double rf = 0, best_other = INFINITY;
        for (const auto& row : res.rows) {
            ok = ok && row.scores.mae <= row.scores.rmse;
            if (row.model == "rf")
                rf = row.scores.rmse;
            else
                best_other = std::min(best_other, row.scores.rmse);
        }
        ok = ok && rf < best_other;
        detail += (seed > 1 ? "; " : "") + std::string("seed ") + std::to_string(seed) + " rf " + fmt("%.2e", rf) +
                  " next " + fmt("%.2e", best_other);
    }
    return {ok, detail};
}

// --- 9 -------------------------------------------------------------------

Outcome kmeans_contracts() {
    Rng rng(909);
    bool ok = true;
    for (int d = 0; d < 20; ++d) {
        Matrix pts(80, 3);
        for (std::size_t i = 0; i < 80; ++i)
            for (std::size_t j = 0; j < 3; ++j) pts(i, j) = rng.normal() + (i % 4 == 0 ? 3.0 : 0.0);
        const std::size_t k = 2 + rng.uniform_index(4);
        KMeansOptions one{1, 300, 1000 + static_cast<std::uint64_t>(d)};
        KMeansOptions many{100, 300, 1000 + static_cast<std::uint64_t>(d)};
        // lloyd() throws if inertia rises in any iteration.
        ok = ok && kmeans(pts, k, many).inertia <= kmeans(pts, k, one).inertia;
    }

    Matrix blobs(60, 2);
    std::vector<int> truth;
    const double centres[3][2] = {{0, 0}, {20, 0}, {0, 20}};
    for (std::size_t i = 0; i < 60; ++i) {
        const std::size_t g = i / 20;
        blobs(i, 0) = centres[g][0] + rng.uniform(-1, 1);
        blobs(i, 1) = centres[g][1] + rng.uniform(-1, 1);
        truth.push_back(static_cast<int>(g));
    }
    const auto sol = kmeans(blobs, 3, KMeansOptions{100, 300, 9});
    const double ari = adjusted_rand(sol.assignments, truth);
    return {ok && ari == 1.0,
            std::string("best-of-100 <= best-of-1 on 20 datasets: ") + (ok ? "yes" : "no") + ", three-blob ARI " +
                fmt("%.3f", ari)};
}

// --- 10 ------------------------------------------------------------------

Outcome transitions() {
    const std::vector<RankObservation> obs{{"A", 2000, 1}, {"A", 2001, 1}, {"A", 2002, 2},
                                           {"B", 2000, 2}, {"B", 2001, 2}, {"B", 2002, 2}};
    const std::vector<PeriodSpec> all{{"all", 2000, 2002}};
    const auto row = transition_report(obs, all).at(0);
    bool ok = row.worse == 25.0 && row.equal == 75.0 && row.better == 0.0;

    Rng rng(1010);
    std::vector<RankObservation> random;
    for (int b = 0; b < 200; ++b)
        for (int y = 2005; y < 2017; ++y)
            if (rng.uniform01() < 0.9)
                random.push_back({"b" + std::to_string(b), y, 1 + static_cast<int>(rng.uniform_index(4))});
    const std::vector<PeriodSpec> periods{{"p1", 2005, 2008}, {"p2", 2009, 2012}, {"p3", 2013, 2016}};
    double worst = 0.0;
    for (const auto& r : transition_report(random, periods)) worst = std::max(worst, std::abs(r.worse + r.equal + r.better - 100.0));
    for (const auto& p : transition_pairs(random)) worst = std::max(worst, std::abs(p.worse + p.equal + p.better - 100.0));
    ok = ok && worst <= 1e-9;
    return {ok, "two-bank example (" + fmt("%g", row.worse) + ", " + fmt("%g", row.equal) + ", " + fmt("%g", row.better) +
                    "), max row-sum error " + fmt("%.1e", worst)};
}

// --- 11 ------------------------------------------------------------------

std::map<std::string, std::string> read_tree(const fs::path& dir) {
    std::map<std::string, std::string> out;
    if (!fs::exists(dir)) return out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        out[fs::relative(e.path(), dir).generic_string()] = s.str();
    }
    return out;
}

Outcome determinism(const std::string& cli) {
    const fs::path base = fs::temp_directory_path() / "bizmodel_acceptance_det";
    fs::remove_all(base);
    fs::create_directories(base);
    const fs::path config = base / "config.json";
    std::ofstream(config) << R"({
  "seed": 11,
  "synth": {"n_banks": 80, "years": 6},
  "periods": [{"label": "early", "year_min": 2012, "year_max": 2014}, {"label": "late", "year_min": 2015, "year_max": 2017}],
  "min_period_records": 100,
  "forest": {"n_trees": 60},
  "cluster": {"k_max": 5, "n_starts": 10},
  "bench": {"enabled": true, "mode": "cv", "folds": 3, "gb": {"n_stages": 20}, "cart_min_node_grid": [1, 10]}
})";
    std::vector<std::map<std::string, std::string>> runs;
    for (const auto& [name, threads] : std::vector<std::pair<std::string, int>>{{"a1", 1}, {"b1", 1}, {"a8", 8}, {"b8", 8}}) {
        const fs::path out = base / name;
        const std::string cmd = "\"" + cli + "\" run --config \"" + config.string() + "\" --threads " +
                                std::to_string(threads) + " --out \"" + out.string() + "\" > /dev/null 2>&1";
        if (std::system(cmd.c_str()) != 0) return {false, "run " + name + " failed: " + cmd};
        runs.push_back(read_tree(out));
    }
    std::size_t csvs = 0;
    for (const auto& [file, text] : runs[0]) csvs += file.ends_with(".csv") ? 1 : 0;
    bool ok = csvs > 0;
    for (std::size_t r = 1; r < runs.size(); ++r) ok = ok && runs[r] == runs[0];
    fs::remove_all(base);
    return {ok, std::to_string(runs[0].size()) + " files (" + std::to_string(csvs) +
                    " CSV) byte-identical across 2 runs x {1, 8} threads: " + (ok ? "yes" : "no")};
}

// --- 12 ------------------------------------------------------------------

Outcome monotone_invariance() {
    SynthConfig sc;
    sc.n_banks = 200;
    sc.years = 10;
    sc.seed = 1212;
    const Panel panel = synth_generate(sc).panel;
    const Matrix x = panel.features();
    Matrix cubed = x;
    const std::size_t col = 1;
    for (std::size_t i = 0; i < x.rows(); ++i) cubed(i, col) = x(i, col) * x(i, col) * x(i, col);
    const auto y = panel.responses();
    ForestConfig fc;
    fc.n_trees = 100;
    fc.seed = 12;
    const Forest f1 = fit_forest(x, y, fc);
    const Forest f2 = fit_forest(cubed, y, fc);
    std::size_t differing = 0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto a = row_of(x, i), b = row_of(cubed, i);
        const auto ca = decompose_forest(f1, a), cb = decompose_forest(f2, b);
        if (predict(f1, a) != predict(f2, b) || ca.contributions != cb.contributions || ca.bias != cb.bias) ++differing;
    }
    return {differing == 0, "column " + std::string(feature_names()[col]) + " cubed, " + std::to_string(x.rows()) +
                                " rows, " + std::to_string(differing) + " differ"};
}

} // namespace

int main(int argc, char** argv) {
    const std::string cli = argc > 1 ? argv[1] : "bizmodel";
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"additivity identity", additivity},
        {"worked path example", figure_three},
        {"asset/liability cross-footing", cross_footing},
        {"bagging fraction", bagging_fraction},
        {"planted recovery", planted_recovery},
        {"WMW normal vs exact", wmw_equivalence},
        {"Wilks F equals t^2", wilks_f_identity},
        {"benchmark ordering", benchmark_ordering},
        {"k-means contracts", kmeans_contracts},
        {"transition bookkeeping", transitions},
        {"determinism", [&] { return determinism(cli); }},
        {"monotone-transform invariance", monotone_invariance},
    };
    int failed = 0;
    for (std::size_t c = 0; c < criteria.size(); ++c) {
        Outcome o;
        try {
            o = criteria[c].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << (c + 1) << "] " << criteria[c].first << ": " << o.detail
                  << std::endl;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
              << std::endl;
    return failed == 0 ? 0 : 1;
}
