#include "bizmodel/config.hpp"

#include "bizmodel/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace bizmodel {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Rejects keys outside `allowed` so typos do not silently fall back to defaults.
void check_keys(const json& obj, const std::string& where, std::initializer_list<std::string_view> allowed) {
    if (!obj.is_object()) throw Error("config: '" + where + "' must be an object");
    for (const auto& [key, value] : obj.items()) {
        bool known = false;
        for (auto a : allowed) known = known || key == a;
        if (!known) throw Error("config: unknown key '" + where + "." + key + "'");
    }
}

template <typename T>
void read(const json& obj, const std::string& where, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw Error("config: bad value for '" + where + "." + key + "': " + e.what());
    }
}

void read_optional_size(const json& obj, const std::string& where, const char* key,
                        std::optional<std::size_t>& out) {
    if (!obj.contains(key)) return;
    if (obj.at(key).is_null()) {
        out.reset();
        return;
    }
    std::size_t v = 0;
    read(obj, where, key, v);
    out = v;
}

std::string threshold_name(ThresholdRule rule) {
    return rule == ThresholdRule::kMidpoint ? "midpoint" : "lower_value";
}

ThresholdRule parse_threshold(const std::string& s) {
    if (s == "midpoint") return ThresholdRule::kMidpoint;
    if (s == "lower_value") return ThresholdRule::kLowerValue;
    throw Error("config: threshold_rule must be lower_value or midpoint, got '" + s + "'");
}

void read_forest(const json& j, const std::string& where, ForestConfig& f) {
    check_keys(j, where, {"n_trees", "mtry", "min_node_size", "max_depth", "bootstrap_size", "threshold_rule"});
    read(j, where, "n_trees", f.n_trees);
    read(j, where, "mtry", f.mtry);
    read(j, where, "min_node_size", f.min_node_size);
    read_optional_size(j, where, "max_depth", f.max_depth);
    read_optional_size(j, where, "bootstrap_size", f.bootstrap_size);
    if (j.contains("threshold_rule")) {
        std::string s;
        read(j, where, "threshold_rule", s);
        f.threshold_rule = parse_threshold(s);
    }
}

ordered_json forest_json(const ForestConfig& f) {
    ordered_json j;
    j["n_trees"] = f.n_trees;
    j["mtry"] = f.mtry;
    j["min_node_size"] = f.min_node_size;
    j["max_depth"] = f.max_depth ? ordered_json(*f.max_depth) : ordered_json(nullptr);
    j["bootstrap_size"] = f.bootstrap_size ? ordered_json(*f.bootstrap_size) : ordered_json(nullptr);
    j["threshold_rule"] = threshold_name(f.threshold_rule);
    return j;
}

std::string metric_name(ErrorMetric m) { return m == ErrorMetric::kMae ? "mae" : "rmse"; }

} // namespace

RunConfig parse_config(std::string_view json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw Error(std::string("config: invalid JSON: ") + e.what());
    }
    check_keys(root, "config",
               {"seed", "input", "synth", "outliers", "periods", "min_period_records", "transition_ranking", "forest",
                "tune", "importance", "cluster", "stats", "bench", "output"});
    RunConfig c;
    if (!root.contains("seed")) throw Error("config: 'seed' is mandatory");
    read(root, "config", "seed", c.seed);

    if (root.contains("input")) {
        const auto& j = root["input"];
        check_keys(j, "input", {"path", "schema"});
        InputConfig in;
        std::string path;
        read(j, "input", "path", path);
        if (path.empty()) throw Error("config: 'input.path' is required");
        in.path = path;
        if (j.contains("schema")) {
            const auto& s = j["schema"];
            check_keys(s, "input.schema", {"bank_id", "country", "year", "roa", "ratios"});
            read(s, "input.schema", "bank_id", in.schema.bank_id);
            read(s, "input.schema", "country", in.schema.country);
            read(s, "input.schema", "year", in.schema.year);
            read(s, "input.schema", "roa", in.schema.roa);
            if (s.contains("ratios")) {
                const auto& r = s["ratios"];
                if (!r.is_object()) throw Error("config: 'input.schema.ratios' must be an object");
                for (const auto& [key, value] : r.items()) {
                    const auto names = feature_names();
                    const auto it = std::find(names.begin(), names.end(), key);
                    if (it == names.end()) throw Error("config: unknown feature 'input.schema.ratios." + key + "'");
                    in.schema.ratios[static_cast<std::size_t>(it - names.begin())] = value.get<std::string>();
                }
            }
        }
        c.input = in;
    }
    if (root.contains("synth")) {
        const auto& j = root["synth"];
        check_keys(j, "synth",
                   {"n_banks", "first_year", "years", "k_planted", "noise_sd", "bank_dispersion", "year_dispersion",
                    "switch_prob"});
        SynthConfig s;
        read(j, "synth", "n_banks", s.n_banks);
        read(j, "synth", "first_year", s.first_year);
        read(j, "synth", "years", s.years);
        read(j, "synth", "k_planted", s.k_planted);
        read(j, "synth", "noise_sd", s.noise_sd);
        read(j, "synth", "bank_dispersion", s.bank_dispersion);
        read(j, "synth", "year_dispersion", s.year_dispersion);
        read(j, "synth", "switch_prob", s.switch_prob);
        c.synth = s;
    }
    if (root.contains("outliers")) {
        const auto& j = root["outliers"];
        check_keys(j, "outliers", {"enabled", "lower_quantile", "upper_quantile"});
        read(j, "outliers", "enabled", c.outliers.enabled);
        read(j, "outliers", "lower_quantile", c.outliers.lower_quantile);
        read(j, "outliers", "upper_quantile", c.outliers.upper_quantile);
    }
    if (root.contains("periods")) {
        const auto& arr = root["periods"];
        if (!arr.is_array()) throw Error("config: 'periods' must be an array");
        c.periods.clear();
        for (const auto& p : arr) {
            check_keys(p, "periods[]", {"label", "year_min", "year_max"});
            PeriodSpec spec;
            read(p, "periods[]", "label", spec.label);
            read(p, "periods[]", "year_min", spec.year_min);
            read(p, "periods[]", "year_max", spec.year_max);
            c.periods.push_back(spec);
        }
    }
    read(root, "config", "min_period_records", c.min_period_records);
    if (root.contains("transition_ranking")) {
        std::string s;
        read(root, "config", "transition_ranking", s);
        if (s == "whole_sample")
            c.transition_ranking = TransitionRanking::kWholeSample;
        else if (s == "per_period")
            c.transition_ranking = TransitionRanking::kPerPeriod;
        else
            throw Error("config: transition_ranking must be whole_sample or per_period");
    }
    if (root.contains("forest")) read_forest(root["forest"], "forest", c.analysis.forest);
    if (root.contains("tune")) {
        const auto& j = root["tune"];
        check_keys(j, "tune", {"enabled", "mtry_values", "min_node_values", "metric"});
        read(j, "tune", "enabled", c.analysis.tune.enabled);
        read(j, "tune", "mtry_values", c.analysis.tune.mtry_values);
        read(j, "tune", "min_node_values", c.analysis.tune.min_node_values);
        if (j.contains("metric")) {
            std::string s;
            read(j, "tune", "metric", s);
            if (s == "rmse")
                c.analysis.tune.metric = ErrorMetric::kRmse;
            else if (s == "mae")
                c.analysis.tune.metric = ErrorMetric::kMae;
            else
                throw Error("config: tune.metric must be rmse or mae");
        }
    }
    if (root.contains("importance")) {
        const auto& j = root["importance"];
        check_keys(j, "importance", {"kind", "scaling"});
        std::string kind = "impurity", scaling = "min_max";
        read(j, "importance", "kind", kind);
        read(j, "importance", "scaling", scaling);
        if (kind == "impurity")
            c.analysis.importance.kind = ImportanceKind::kImpurity;
        else if (kind == "permutation")
            c.analysis.importance.kind = ImportanceKind::kPermutation;
        else
            throw Error("config: importance.kind must be impurity or permutation");
        if (scaling == "min_max")
            c.analysis.importance.scaling = ImportanceScaling::kMinMax;
        else if (scaling == "relative_to_max")
            c.analysis.importance.scaling = ImportanceScaling::kRelativeToMax;
        else
            throw Error("config: importance.scaling must be min_max or relative_to_max");
    }
    if (root.contains("cluster")) {
        const auto& j = root["cluster"];
        check_keys(j, "cluster", {"k_min", "k_max", "fixed_k", "n_starts", "max_iter", "indices", "standardize"});
        auto& cl = c.analysis.cluster;
        read(j, "cluster", "k_min", cl.k_min);
        read(j, "cluster", "k_max", cl.k_max);
        read_optional_size(j, "cluster", "fixed_k", cl.fixed_k);
        read(j, "cluster", "n_starts", cl.n_starts);
        read(j, "cluster", "max_iter", cl.max_iter);
        read(j, "cluster", "standardize", cl.standardize);
        if (j.contains("indices")) {
            std::vector<std::string> names;
            read(j, "cluster", "indices", names);
            cl.indices.clear();
            for (const auto& n : names) {
                auto idx = parse_index_name(n);
                if (!idx) throw Error("config: unknown validity index '" + n + "'");
                cl.indices.push_back(*idx);
            }
        }
    }
    if (root.contains("stats")) {
        const auto& j = root["stats"];
        check_keys(j, "stats", {"alpha", "wilks_approximation"});
        read(j, "stats", "alpha", c.analysis.alpha);
        if (j.contains("wilks_approximation")) {
            std::string s;
            read(j, "stats", "wilks_approximation", s);
            if (s == "rao")
                c.analysis.wilks = WilksApproximation::kRao;
            else if (s == "bartlett")
                c.analysis.wilks = WilksApproximation::kBartlett;
            else
                throw Error("config: stats.wilks_approximation must be rao or bartlett");
        }
    }
    if (root.contains("bench")) {
        const auto& j = root["bench"];
        check_keys(j, "bench",
                   {"enabled", "models", "mode", "knn_k", "gb", "cart_min_node_grid", "folds", "holdout_fraction",
                    "forest"});
        read(j, "bench", "enabled", c.bench_enabled);
        read(j, "bench", "models", c.bench.models);
        if (j.contains("mode")) {
            std::string s;
            read(j, "bench", "mode", s);
            auto mode = parse_eval_mode(s);
            if (!mode) throw Error("config: bench.mode must be in_sample, holdout or cv");
            c.bench.mode = *mode;
        }
        read(j, "bench", "knn_k", c.bench.knn_k);
        read(j, "bench", "cart_min_node_grid", c.bench.cart_min_node_grid);
        read(j, "bench", "folds", c.bench.folds);
        read(j, "bench", "holdout_fraction", c.bench.holdout_fraction);
        if (j.contains("gb")) {
            const auto& g = j["gb"];
            check_keys(g, "bench.gb", {"n_stages", "shrinkage", "tree_depth", "min_node_size"});
            read(g, "bench.gb", "n_stages", c.bench.gb.n_stages);
            read(g, "bench.gb", "shrinkage", c.bench.gb.shrinkage);
            read_optional_size(g, "bench.gb", "tree_depth", c.bench.gb.tree_depth);
            read(g, "bench.gb", "min_node_size", c.bench.gb.min_node_size);
        }
    }
    // The benchmark forest mirrors the analysis forest unless overridden.
    c.bench.forest = c.analysis.forest;
    if (root.contains("bench") && root["bench"].contains("forest"))
        read_forest(root["bench"]["forest"], "bench.forest", c.bench.forest);
    if (root.contains("output")) {
        std::string out;
        read(root, "config", "output", out);
        c.output = out;
    }
    validate_config(c);
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

void validate_config(const RunConfig& c) {
    if (c.input && c.synth) throw Error("config: give either 'input' or 'synth', not both");
    if (c.outliers.enabled &&
        !(c.outliers.lower_quantile >= 0.0 && c.outliers.lower_quantile < 0.5 && c.outliers.upper_quantile > 0.5 &&
          c.outliers.upper_quantile <= 1.0))
        throw Error("config: outlier quantiles must satisfy 0 <= lower < 0.5 < upper <= 1");
    validate_periods(c.periods);
    const auto& f = c.analysis.forest;
    if (f.n_trees < 1) throw Error("config: forest.n_trees must be >= 1");
    if (f.mtry < 1 || f.mtry > kNumFeatures) throw Error("config: forest.mtry must lie in [1, 9]");
    if (f.min_node_size < 1) throw Error("config: forest.min_node_size must be >= 1");
    const auto& cl = c.analysis.cluster;
    if (cl.k_min < 1 || cl.k_min > cl.k_max) throw Error("config: cluster k range invalid");
    if (cl.fixed_k && *cl.fixed_k < 1) throw Error("config: cluster.fixed_k must be >= 1");
    if (cl.n_starts < 1) throw Error("config: cluster.n_starts must be >= 1");
    if (cl.indices.empty() && !cl.fixed_k) throw Error("config: cluster.indices is empty");
    if (!(c.analysis.alpha >= 0.0 && c.analysis.alpha <= 1.0)) throw Error("config: stats.alpha must lie in [0, 1]");
    for (std::size_t m : c.analysis.tune.mtry_values)
        if (m < 1 || m > kNumFeatures) throw Error("config: tune.mtry_values must lie in [1, 9]");
    for (const auto& m : c.bench.models)
        if (m != "rf" && m != "knn" && m != "gb" && m != "cart")
            throw Error("config: unknown benchmark model '" + m + "'");
}

std::string config_to_json(const RunConfig& c) {
    ordered_json j;
    j["seed"] = c.seed;
    if (c.input) {
        ordered_json schema;
        schema["bank_id"] = c.input->schema.bank_id;
        schema["country"] = c.input->schema.country;
        schema["year"] = c.input->schema.year;
        schema["roa"] = c.input->schema.roa;
        ordered_json ratios;
        for (std::size_t f = 0; f < kNumFeatures; ++f)
            ratios[std::string(feature_names()[f])] = c.input->schema.ratios[f];
        schema["ratios"] = ratios;
        j["input"] = {{"path", c.input->path.string()}, {"schema", schema}};
    }
    if (c.synth) {
        ordered_json s;
        s["n_banks"] = c.synth->n_banks;
        s["first_year"] = c.synth->first_year;
        s["years"] = c.synth->years;
        s["k_planted"] = c.synth->k_planted;
        s["noise_sd"] = c.synth->noise_sd;
        s["bank_dispersion"] = c.synth->bank_dispersion;
        s["year_dispersion"] = c.synth->year_dispersion;
        s["switch_prob"] = c.synth->switch_prob;
        j["synth"] = s;
    }
    j["outliers"] = {{"enabled", c.outliers.enabled},
                     {"lower_quantile", c.outliers.lower_quantile},
                     {"upper_quantile", c.outliers.upper_quantile}};
    ordered_json periods = ordered_json::array();
    for (const auto& p : c.periods)
        periods.push_back({{"label", p.label}, {"year_min", p.year_min}, {"year_max", p.year_max}});
    j["periods"] = periods;
    j["min_period_records"] = c.min_period_records;
    j["transition_ranking"] =
        c.transition_ranking == TransitionRanking::kWholeSample ? "whole_sample" : "per_period";
    const auto& a = c.analysis;
    j["forest"] = forest_json(a.forest);
    j["tune"] = {{"enabled", a.tune.enabled},
                 {"mtry_values", a.tune.mtry_values},
                 {"min_node_values", a.tune.min_node_values},
                 {"metric", metric_name(a.tune.metric)}};
    j["importance"] = {{"kind", a.importance.kind == ImportanceKind::kImpurity ? "impurity" : "permutation"},
                       {"scaling", a.importance.scaling == ImportanceScaling::kMinMax ? "min_max" : "relative_to_max"}};
    std::vector<std::string> index_names;
    for (auto idx : a.cluster.indices) index_names.emplace_back(index_name(idx));
    j["cluster"] = {{"k_min", a.cluster.k_min},
                    {"k_max", a.cluster.k_max},
                    {"fixed_k", a.cluster.fixed_k ? ordered_json(*a.cluster.fixed_k) : ordered_json(nullptr)},
                    {"n_starts", a.cluster.n_starts},
                    {"max_iter", a.cluster.max_iter},
                    {"indices", index_names},
                    {"standardize", a.cluster.standardize}};
    j["stats"] = {{"alpha", a.alpha},
                  {"wilks_approximation", a.wilks == WilksApproximation::kRao ? "rao" : "bartlett"}};
    ordered_json gb;
    gb["n_stages"] = c.bench.gb.n_stages;
    gb["shrinkage"] = c.bench.gb.shrinkage;
    gb["tree_depth"] = c.bench.gb.tree_depth ? ordered_json(*c.bench.gb.tree_depth) : ordered_json(nullptr);
    gb["min_node_size"] = c.bench.gb.min_node_size;
    j["bench"] = {{"enabled", c.bench_enabled},
                  {"models", c.bench.models},
                  {"mode", eval_mode_name(c.bench.mode)},
                  {"knn_k", c.bench.knn_k},
                  {"gb", gb},
                  {"cart_min_node_grid", c.bench.cart_min_node_grid},
                  {"folds", c.bench.folds},
                  {"holdout_fraction", c.bench.holdout_fraction},
                  {"forest", forest_json(c.bench.forest)}};
    j["output"] = c.output.string();
    return j.dump(2) + "\n";
}

} // namespace bizmodel
