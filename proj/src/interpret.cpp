#include "bizmodel/interpret.hpp"

#include "bizmodel/error.hpp"
#include "bizmodel/parallel.hpp"

#include <numeric>

namespace bizmodel {

double ContributionVector::prediction() const {
    return std::accumulate(contributions.begin(), contributions.end(), bias);
}

ContributionVector decompose(const RegressionTree& tree, std::span<const double> x) {
    const auto path = decision_path(tree, x);
    ContributionVector out;
    out.bias = tree.root().mean;
    out.contributions.assign(tree.n_features(), 0.0);
    for (std::size_t s = 1; s < path.size(); ++s) {
        const auto& parent = tree.node(path[s - 1]);
        out.contributions[parent.feature] += tree.node(path[s]).mean - parent.mean;
    }
    return out;
}

ContributionVector decompose_forest(const Forest& forest, std::span<const double> x) {
    ContributionVector out;
    out.contributions.assign(forest.n_features(), 0.0);
    for (const auto& tree : forest.trees()) {
        const auto part = decompose(tree, x);
        out.bias += part.bias;
        for (std::size_t j = 0; j < part.contributions.size(); ++j) out.contributions[j] += part.contributions[j];
    }
    const double t = static_cast<double>(forest.trees().size());
    out.bias /= t;
    for (double& c : out.contributions) c /= t;
    return out;
}

ContributionMatrix contribution_matrix(const Forest& forest, const Panel& panel) {
    if (forest.n_features() != kNumFeatures) throw DimensionError("forest was not fitted on panel ratios");
    const std::size_t n = panel.size();
    ContributionMatrix m;
    m.bank_ids.resize(n);
    m.years.resize(n);
    m.bias.resize(n);
    m.contributions = Matrix(n, kNumFeatures);
    m.prediction.resize(n);
    m.actual.resize(n);
    parallel_for(n, [&](std::size_t i) {
        const auto& rec = panel.records[i];
        const auto cv = decompose_forest(forest, rec.ratios);
        m.bank_ids[i] = rec.bank_id;
        m.years[i] = rec.year;
        m.bias[i] = cv.bias;
        std::copy(cv.contributions.begin(), cv.contributions.end(), m.contributions.row(i).begin());
        m.prediction[i] = predict(forest, rec.ratios);
        m.actual[i] = rec.roa;
    });
    return m;
}

std::string contribution_csv(const ContributionMatrix& m) {
    std::vector<std::string> header = {"bank_id", "year", "bias"};
    for (auto name : feature_names()) header.emplace_back(name);
    header.emplace_back("prediction");
    header.emplace_back("actual");
    csv::Writer w(header);
    for (std::size_t i = 0; i < m.size(); ++i) {
        std::vector<std::string> row = {m.bank_ids[i], std::to_string(m.years[i]), csv::format_double(m.bias[i])};
        for (double c : m.contributions.row(i)) row.push_back(csv::format_double(c));
        row.push_back(csv::format_double(m.prediction[i]));
        row.push_back(csv::format_double(m.actual[i]));
        w.row(row);
    }
    return w.str();
}

ContributionMatrix parse_contribution_csv(const csv::Table& table) {
    const std::size_t c_bank = table.require_column("bank_id");
    const std::size_t c_year = table.require_column("year");
    const std::size_t c_bias = table.require_column("bias");
    const std::size_t c_pred = table.require_column("prediction");
    const std::size_t c_actual = table.require_column("actual");
    std::array<std::size_t, kNumFeatures> c_feat{};
    for (std::size_t j = 0; j < kNumFeatures; ++j) c_feat[j] = table.require_column(feature_names()[j]);

    auto num = [&](const std::vector<std::string>& row, std::size_t col, std::size_t line) {
        auto v = csv::parse_double(row[col]);
        if (!v) throw DataError("contribution file line " + std::to_string(line) + ": bad number");
        return *v;
    };
    ContributionMatrix m;
    const std::size_t n = table.rows.size();
    m.contributions = Matrix(n, kNumFeatures);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& row = table.rows[i];
        const std::size_t line = table.line_numbers[i];
        if (row.size() != table.header.size())
            throw DataError("contribution file line " + std::to_string(line) + ": wrong field count");
        m.bank_ids.push_back(row[c_bank]);
        auto year = csv::parse_int(row[c_year]);
        if (!year) throw DataError("contribution file line " + std::to_string(line) + ": bad year");
        m.years.push_back(static_cast<int>(*year));
        m.bias.push_back(num(row, c_bias, line));
        for (std::size_t j = 0; j < kNumFeatures; ++j) m.contributions(i, j) = num(row, c_feat[j], line);
        m.prediction.push_back(num(row, c_pred, line));
        m.actual.push_back(num(row, c_actual, line));
    }
    return m;
}

} // namespace bizmodel
