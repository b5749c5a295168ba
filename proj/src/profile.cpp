#include "bizmodel/profile.hpp"

#include "bizmodel/error.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace bizmodel {

std::vector<BusinessModel> rank_models(std::span<const int> assignments, std::size_t k, const Matrix& contributions,
                                       const Matrix& ratios) {
    const std::size_t n = assignments.size();
    if (contributions.rows() != n || ratios.rows() != n)
        throw DimensionError("assignments, contributions and ratios must cover the same records");
    std::vector<BusinessModel> models(k);
    for (std::size_t c = 0; c < k; ++c) {
        models[c].cluster = static_cast<int>(c);
        models[c].mean_contributions.assign(contributions.cols(), 0.0);
        models[c].mean_ratios.assign(ratios.cols(), 0.0);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const int a = assignments[i];
        if (a < 0 || static_cast<std::size_t>(a) >= k) throw Error("cluster label out of range");
        auto& m = models[static_cast<std::size_t>(a)];
        m.members.push_back(i);
        for (std::size_t j = 0; j < contributions.cols(); ++j) m.mean_contributions[j] += contributions(i, j);
        for (std::size_t j = 0; j < ratios.cols(); ++j) m.mean_ratios[j] += ratios(i, j);
    }
    for (auto& m : models) {
        if (m.members.empty()) throw Error("cluster " + std::to_string(m.cluster) + " is empty");
        const double size = static_cast<double>(m.members.size());
        for (double& v : m.mean_contributions) v /= size;
        for (double& v : m.mean_ratios) v /= size;
        m.total_contribution = std::accumulate(m.mean_contributions.begin(), m.mean_contributions.end(), 0.0);
    }
    std::sort(models.begin(), models.end(), [](const BusinessModel& a, const BusinessModel& b) {
        if (a.total_contribution != b.total_contribution) return a.total_contribution > b.total_contribution;
        if (a.members.size() != b.members.size()) return a.members.size() > b.members.size();
        return a.cluster < b.cluster;
    });
    for (std::size_t r = 0; r < models.size(); ++r) models[r].label = "BM" + std::to_string(r + 1);
    return models;
}

std::vector<int> record_ranks(std::span<const BusinessModel> models, std::size_t n_records) {
    std::vector<int> ranks(n_records, 0);
    for (std::size_t r = 0; r < models.size(); ++r)
        for (std::size_t i : models[r].members) ranks.at(i) = static_cast<int>(r + 1);
    return ranks;
}

namespace {

std::vector<double> column_values(const Matrix& m, std::span<const std::size_t> rows, std::size_t col) {
    std::vector<double> out;
    out.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(m(r, col));
    return out;
}

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

bool all_equal(const std::vector<double>& a, const std::vector<double>& b) {
    const double first = a.front();
    auto same = [&](double v) { return v == first; };
    return std::all_of(a.begin(), a.end(), same) && std::all_of(b.begin(), b.end(), same);
}

bool rejects(const WmwResult& r, double alpha) { return alpha > 0.0 && r.p_two_sided <= alpha; }

} // namespace

std::vector<ComponentTest> characterize(const Matrix& ratios, std::span<const std::size_t> model_rows,
                                        std::span<const std::size_t> complement, double alpha) {
    if (model_rows.empty() || complement.empty()) throw Error("characterization needs a model and a nonempty complement");
    std::vector<ComponentTest> out;
    for (std::size_t j = 0; j < ratios.cols(); ++j) {
        const auto in = column_values(ratios, model_rows, j);
        const auto rest = column_values(ratios, complement, j);
        ComponentTest t;
        t.mean_in = mean_of(in);
        t.mean_out = mean_of(rest);
        t.test = wmw_test(in, rest);
        const bool degenerate = all_equal(in, rest);
        t.characteristic = !degenerate && t.mean_in > t.mean_out && rejects(t.test, alpha);
        out.push_back(t);
    }
    return out;
}

std::vector<std::size_t> complement_rows(const BusinessModel& model, std::size_t n_records) {
    std::vector<char> in(n_records, 0);
    for (std::size_t i : model.members) in.at(i) = 1;
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n_records; ++i)
        if (!in[i]) out.push_back(i);
    return out;
}

std::vector<std::vector<std::vector<int>>> pairwise_superscripts(std::span<const BusinessModel> models,
                                                                 const Matrix& ratios, double alpha) {
    const std::size_t k = models.size();
    std::vector<std::vector<std::vector<int>>> out(k, std::vector<std::vector<int>>(ratios.cols()));
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = a + 1; b < k; ++b)
            for (std::size_t j = 0; j < ratios.cols(); ++j) {
                const auto xa = column_values(ratios, models[a].members, j);
                const auto xb = column_values(ratios, models[b].members, j);
                if (all_equal(xa, xb) || !rejects(wmw_test(xa, xb), alpha)) continue;
                out[a][j].push_back(static_cast<int>(b + 1));
                out[b][j].push_back(static_cast<int>(a + 1));
            }
    for (auto& per_model : out)
        for (auto& list : per_model) std::sort(list.begin(), list.end());
    return out;
}

std::vector<SideContribution> side_contributions(std::span<const BusinessModel> models) {
    std::vector<SideContribution> out;
    for (const auto& m : models) {
        if (m.mean_contributions.size() != kNumFeatures)
            throw DimensionError("side split needs the nine balance-sheet components");
        SideContribution s;
        s.label = m.label;
        for (std::size_t j = 0; j < kNumFeatures; ++j)
            (is_asset_feature(j) ? s.assets : s.liabilities) += m.mean_contributions[j];
        out.push_back(s);
    }
    return out;
}

std::vector<YearPairShares> transition_pairs(std::span<const RankObservation> observations) {
    std::map<int, std::map<std::string, int>> by_year;
    for (const auto& o : observations) {
        auto [it, inserted] = by_year[o.year].emplace(o.bank_id, o.rank);
        if (!inserted) throw DataError("duplicate observation for bank " + o.bank_id + " in " + std::to_string(o.year));
    }
    std::vector<YearPairShares> out;
    for (const auto& [year, ranks] : by_year) {
        auto next = by_year.find(year + 1);
        if (next == by_year.end()) continue;
        YearPairShares s;
        s.year = year + 1;
        std::size_t worse = 0, equal = 0, better = 0;
        for (const auto& [bank, rank] : ranks) {
            auto later = next->second.find(bank);
            if (later == next->second.end()) continue;
            ++s.banks;
            if (later->second > rank)
                ++worse;
            else if (later->second < rank)
                ++better;
            else
                ++equal;
        }
        if (s.banks == 0) continue;
        const double n = static_cast<double>(s.banks);
        s.worse = 100.0 * static_cast<double>(worse) / n;
        s.equal = 100.0 * static_cast<double>(equal) / n;
        s.better = 100.0 * static_cast<double>(better) / n;
        out.push_back(s);
    }
    return out;
}

std::vector<TransitionRow> transition_report(std::span<const RankObservation> observations,
                                             std::span<const PeriodSpec> periods) {
    const auto pairs = transition_pairs(observations);
    if (pairs.empty()) throw DataError("no bank is observed in two consecutive years");
    std::vector<TransitionRow> out;
    for (const auto& period : periods) {
        TransitionRow row;
        row.label = period.label;
        for (const auto& p : pairs) {
            if (!period.contains(p.year)) continue;
            row.worse += p.worse;
            row.equal += p.equal;
            row.better += p.better;
            ++row.year_pairs;
        }
        if (row.year_pairs == 0) {
            warn("period '" + period.label + "' has no consecutive-year pairs");
            continue;
        }
        const double n = static_cast<double>(row.year_pairs);
        row.worse /= n;
        row.equal /= n;
        row.better /= n;
        out.push_back(row);
    }
    return out;
}

} // namespace bizmodel
