#include "bizmodel/data.hpp"
#include "bizmodel/error.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

using namespace bizmodel;

namespace {

const char* kHeader =
    "bank_id,country,year,roa,customer_loans,interbank_lending,derivative_exposures,securities,"
    "customer_deposits,interbank_borrowing,short_term_funding,long_term_funding,equity\n";

std::filesystem::path write_temp(const std::string& name, const std::string& text) {
    auto path = std::filesystem::temp_directory_path() / ("bizmodel_test_" + name);
    std::ofstream(path) << text;
    return path;
}

BankYearRecord make_record(std::string bank, int year, double roa, double fill = 0.1) {
    BankYearRecord r;
    r.bank_id = std::move(bank);
    r.country = "ES";
    r.year = year;
    r.roa = roa;
    r.ratios.fill(fill);
    return r;
}

// Type-7 quantile written out independently of the library.
double oracle_quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

} // namespace

TEST_CASE("load_panel accepts well-formed rows") {
    auto path = write_temp("three.csv", std::string(kHeader) +
                                            "A,ES,2005,0.01,0.5,0.2,0.01,0.29,0.6,0.2,0.05,0.05,0.1\n"
                                            "A,ES,2006,0.02,0.5,0.2,0.01,0.29,0.6,0.2,0.05,0.05,0.1\n"
                                            "B,FR,2005,-0.01,0.4,0.3,0.02,0.28,0.5,0.3,0.05,0.05,0.1\n");
    auto loaded = load_panel(path);
    CHECK(loaded.panel.size() == 3);
    CHECK(loaded.rejects.empty());
    CHECK(loaded.panel.records[2].roa == -0.01);
    CHECK(loaded.panel.records[2].country == "FR");
}

TEST_CASE("load_panel rejects a NaN ratio") {
    auto path = write_temp("nan.csv", std::string(kHeader) +
                                          "A,ES,2005,0.01,0.5,0.2,0.01,0.29,0.6,0.2,0.05,0.05,NaN\n"
                                          "A,ES,2006,0.02,0.5,0.2,0.01,0.29,0.6,0.2,0.05,0.05,0.1\n");
    auto loaded = load_panel(path);
    CHECK(loaded.panel.size() == 1);
    REQUIRE(loaded.rejects.size() == 1);
    CHECK(loaded.rejects[0].line == 2);
}

TEST_CASE("load_panel rejects negative ratios and missing cells but keeps ratios above one") {
    auto path = write_temp("mixed.csv", std::string(kHeader) +
                                            "A,ES,2005,0.01,-0.5,0.2,0.01,0.29,0.6,0.2,0.05,0.05,0.1\n"
                                            "A,ES,2006,0.02,0.5,0.2,,0.29,0.6,0.2,0.05,0.05,0.1\n"
                                            "A,ES,2007,0.02,0.5,0.2,1.7,0.29,0.6,0.2,0.05,0.05,0.1\n");
    auto loaded = load_panel(path);
    CHECK(loaded.panel.size() == 1);
    CHECK(loaded.rejects.size() == 2);
    CHECK(loaded.panel.records[0].ratios[2] == 1.7);
}

TEST_CASE("load_panel reports duplicate bank-years") {
    auto path = write_temp("dup.csv", std::string(kHeader) +
                                          "bankA,ES,2005,0.01,0.5,0.2,0.01,0.29,0.6,0.2,0.05,0.05,0.1\n"
                                          "bankA,ES,2005,0.02,0.5,0.2,0.01,0.29,0.6,0.2,0.05,0.05,0.1\n");
    try {
        load_panel(path);
        FAIL("expected a duplicate-key error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("bankA/2005") != std::string::npos);
    }
}

TEST_CASE("load_panel errors on a missing file or column") {
    CHECK_THROWS_AS(load_panel("/nonexistent/panel.csv"), DataError);
    auto path = write_temp("nocol.csv", "bank_id,year,roa\nA,2005,0.1\n");
    CHECK_THROWS_AS(load_panel(path), DataError);
}

TEST_CASE("load_panel honours a column mapping") {
    auto path = write_temp("mapped.csv",
                           "id,yr,profit,loans,ib_lend,deriv,sec,dep,ib_borr,stf,ltf,eq\n"
                           "A,2005,0.01,0.5,0.2,0.01,0.29,0.6,0.2,0.05,0.05,0.1\n");
    ColumnSchema schema;
    schema.bank_id = "id";
    schema.country = "";
    schema.year = "yr";
    schema.roa = "profit";
    schema.ratios = {"loans", "ib_lend", "deriv", "sec", "dep", "ib_borr", "stf", "ltf", "eq"};
    auto loaded = load_panel(path, schema);
    REQUIRE(loaded.panel.size() == 1);
    CHECK(loaded.panel.records[0].ratios[8] == 0.1);
}

TEST_CASE("panel CSV round trip is the identity") {
    Panel p;
    p.records.push_back(make_record("A", 2001, 0.0123456789012345));
    p.records.push_back(make_record("B,quoted", 2002, -1e-17, 1.0 / 3.0));
    auto loaded = parse_panel(csv::parse(panel_to_csv(p)));
    CHECK(loaded.rejects.empty());
    CHECK(loaded.panel == p);
}

TEST_CASE("quantile grid filter drops the two extreme records") {
    Panel p;
    for (int i = 0; i < 100; ++i) p.records.push_back(make_record("b" + std::to_string(i), 2000, i));
    std::vector<double> roa;
    for (const auto& r : p.records) roa.push_back(r.roa);
    const double lo = oracle_quantile(roa, 0.01), hi = oracle_quantile(roa, 0.99);
    std::size_t expected = 0;
    for (double v : roa) expected += (v < lo || v > hi) ? 1 : 0;
    CHECK(expected == 2);

    auto result = filter_outliers(p, 0.01, 0.99);
    CHECK(result.dropped == expected);
    CHECK(result.bounds.lower[0] == doctest::Approx(lo).epsilon(1e-15));
    CHECK(result.bounds.upper[0] == doctest::Approx(hi).epsilon(1e-15));
}

TEST_CASE("full-range filter keeps everything") {
    Panel p;
    for (int i = 0; i < 10; ++i) p.records.push_back(make_record("b" + std::to_string(i), 2000, i * 0.1));
    auto result = filter_outliers(p, 0.0, 1.0);
    CHECK(result.dropped == 0);
    CHECK(result.panel == p);
}

TEST_CASE("an equity outlier ten times the rest is dropped") {
    Panel p;
    for (int i = 0; i < 400; ++i) {
        auto r = make_record("b" + std::to_string(i), 2000, 0.01);
        r.ratios[8] = 0.05 + 0.0001 * i;
        p.records.push_back(r);
    }
    p.records[123].ratios[8] = 10.0 * 0.0899;
    std::vector<double> equity;
    for (const auto& r : p.records) equity.push_back(r.ratios[8]);
    CHECK(p.records[123].ratios[8] > oracle_quantile(equity, 0.995));

    auto result = filter_outliers(p, 0.005, 0.995);
    CHECK(std::none_of(result.panel.records.begin(), result.panel.records.end(),
                       [](const BankYearRecord& r) { return r.bank_id == "b123"; }));
}

TEST_CASE("filtering with frozen bounds is idempotent") {
    Panel p;
    for (int i = 0; i < 300; ++i) {
        auto r = make_record("b" + std::to_string(i), 2000 + i % 5, std::sin(i * 0.7));
        for (std::size_t j = 0; j < kNumFeatures; ++j) r.ratios[j] = std::abs(std::cos(i * 1.3 + j));
        p.records.push_back(r);
    }
    auto once = filter_outliers(p, 0.05, 0.95);
    auto twice = apply_outlier_bounds(once.panel, once.bounds);
    CHECK(twice.dropped == 0);
    CHECK(twice.panel == once.panel);
}

TEST_CASE("split_periods follows the year ranges") {
    Panel p;
    for (int y = 1997; y <= 2021; ++y) p.records.push_back(make_record("A", y, 0.0));
    auto parts = split_periods(p, crisis_periods());
    REQUIRE(parts.size() == 3);
    CHECK(parts[0].size() == 11);
    CHECK(parts[1].size() == 6);
    CHECK(parts[2].size() == 8);
    CHECK(parts[0].records.front().year == 1997);
    CHECK(parts[2].records.back().year == 2021);

    const std::vector<PeriodSpec> all{{"all", 1997, 2021}};
    CHECK(split_periods(p, all)[0] == p);

    const std::vector<PeriodSpec> late{{"late", 2014, 2019}};
    auto sub = split_periods(p, late)[0];
    CHECK(sub.size() == 6);
    CHECK(sub.records.front().year == 2014);
    CHECK(sub.records.back().year == 2019);
}

TEST_CASE("overlapping or inverted periods are rejected") {
    const std::vector<PeriodSpec> overlap{{"a", 2000, 2005}, {"b", 2005, 2010}};
    CHECK_THROWS_AS(validate_periods(overlap), DataError);
    const std::vector<PeriodSpec> inverted{{"a", 2005, 2000}};
    CHECK_THROWS_AS(validate_periods(inverted), DataError);
}

TEST_CASE("synthetic panels are deterministic and noise-free roa follows the archetype") {
    SynthConfig cfg;
    cfg.n_banks = 40;
    cfg.years = 5;
    cfg.seed = 11;
    auto a = synth_generate(cfg);
    auto b = synth_generate(cfg);
    CHECK(a.panel == b.panel);
    CHECK(a.labels == b.labels);
    CHECK(a.panel.size() == 200);

    cfg.noise_sd = 0.0;
    auto clean = synth_generate(cfg);
    const auto archetypes = default_archetypes();
    for (std::size_t i = 0; i < clean.panel.size(); ++i) {
        const auto& rec = clean.panel.records[i];
        CHECK(rec.roa == archetypes[static_cast<std::size_t>(clean.labels[i])].response(rec.ratios));
        for (double v : rec.ratios) CHECK(v >= 0.0);
    }
}

TEST_CASE("synth rejects archetypes whose sides do not sum to one") {
    SynthConfig cfg;
    cfg.archetypes = default_archetypes();
    cfg.archetypes[0].asset_means[0] += 0.01;
    CHECK_THROWS_AS(synth_generate(cfg), Error);
}
