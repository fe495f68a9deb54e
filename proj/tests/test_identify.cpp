#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <nlohmann/json.hpp>

#include "choicectx/identify.hpp"
#include "test_helpers.hpp"

using namespace choicectx;
using namespace testutil;

namespace {

ChoiceDataset from_sets(int d, const std::vector<Matrix>& sets) {
    ChoiceDataset data;
    data.d = d;
    for (const Matrix& s : sets) {
        Observation o;
        o.items = s;
        o.chosen = 0;
        data.observations.push_back(std::move(o));
    }
    return data;
}

}  // namespace

TEST_CASE("context_row vanishes when the item sits at the context mean") {
    Vector x_C = vec({0.5, -1.0, 2.0});
    CHECK(context_row(x_C, x_C).cwiseAbs().maxCoeff() == 0.0);
    CHECK(context_row(x_C, x_C).size() == 12);
}

TEST_CASE("context_row in one dimension is [x_C * diff, diff]") {
    Vector row = context_row(vec({2.0}), vec({3.0}));
    REQUIRE(row.size() == 2);
    CHECK(row[0] == 2.0);
    CHECK(row[1] == 1.0);
}

TEST_CASE("context_row blocks follow the column-stacking layout") {
    Vector row = context_row(vec({0.0, 1.0}), vec({1.0, 1.0}));
    // diff = (1, 0); block 0 scaled by (x_C)_0 = 0, block 1 by (x_C)_1 = 1,
    // final block is diff itself.
    REQUIRE(row.size() == 6);
    CHECK(row == vec({0.0, 0.0, 1.0, 0.0, 1.0, 0.0}));
}

TEST_CASE("a dataset of identical items spans nothing") {
    Matrix s(3, 2);
    s << 1, 2, 1, 2, 1, 2;
    auto report = lcl_identifiable(from_sets(2, {s, s}));
    CHECK(report.span_dim == 0);
    CHECK(report.required == 6);
    CHECK_FALSE(report.identifiable);
    CHECK_FALSE(report.necessary_ok);
}

TEST_CASE("two distinct pairs in one dimension achieve full rank") {
    Matrix s1(2, 1), s2(2, 1);
    s1 << 0.0, 1.0;   // mean 0.5
    s2 << 1.0, 3.0;   // mean 2.0
    auto report = lcl_identifiable(from_sets(1, {s1, s2}));
    CHECK(report.required == 2);
    CHECK(report.span_dim == 2);
    CHECK(report.identifiable);
    CHECK(report.affine_count == 2);
    CHECK(report.necessary_ok);
}

TEST_CASE("affinely_independent_count on hand geometries") {
    CHECK(affinely_independent_count({vec({1.0, 2.0}), vec({1.0, 2.0}), vec({1.0, 2.0})}) == 1);
    CHECK(affinely_independent_count(
              {vec({0.0, 0.0}), vec({1.0, 0.0}), vec({0.0, 1.0})}) == 3);
    // Three collinear points only give two affinely independent ones.
    CHECK(affinely_independent_count(
              {vec({0.0, 0.0}), vec({1.0, 1.0}), vec({2.0, 2.0})}) == 2);
    CHECK_THROWS(affinely_independent_count({}));
}

TEST_CASE("report is invariant to observation order and duplication") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Matrix> sets;
    for (int s = 0; s < 6; ++s) {
        Matrix m(3, 2);
        for (int i = 0; i < 6; ++i) m.data()[i] = u(rng);
        sets.push_back(m);
    }
    auto base = lcl_identifiable(from_sets(2, sets));

    std::vector<Matrix> shuffled(sets.rbegin(), sets.rend());
    shuffled.insert(shuffled.end(), sets.begin(), sets.end());  // duplicates
    auto again = lcl_identifiable(from_sets(2, shuffled));

    CHECK(again.span_dim == base.span_dim);
    CHECK(again.identifiable == base.identifiable);
    CHECK(again.affine_count == base.affine_count);
    CHECK(again.rows_used == base.rows_used);
}

TEST_CASE("choice sets sharing a single mean vector are never identifiable") {
    // All sets are pairs symmetric about the origin, so every context
    // vector is zero and the first d^2 coordinates of each row vanish.
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Matrix> sets;
    for (int s = 0; s < 40; ++s) {
        Matrix m(2, 3);
        for (int j = 0; j < 3; ++j) {
            m(0, j) = u(rng);
            m(1, j) = -m(0, j);
        }
        sets.push_back(m);
    }
    auto report = lcl_identifiable(from_sets(3, sets));
    CHECK(report.span_dim <= 3);  // only the final (unscaled) block survives
    CHECK_FALSE(report.identifiable);
    CHECK(report.affine_count == 1);
    CHECK_FALSE(report.necessary_ok);
}

TEST_CASE("rich random data in three dimensions is identifiable") {
    Model gen = Model::zeros(ModelKind::mnl, 3);
    ChoiceDataset data = sample_dataset(gen, 200, 4, 13);
    auto report = lcl_identifiable(data);
    CHECK(report.required == 12);
    CHECK(report.span_dim == 12);
    CHECK(report.identifiable);
    CHECK(report.necessary_ok);
    CHECK_FALSE(report.subsampled);
}

TEST_CASE("subsampling caps rows_used and keeps a full-rank verdict") {
    Model gen = Model::zeros(ModelKind::mnl, 2);
    ChoiceDataset data = sample_dataset(gen, 300, 3, 17);
    IdentifyOptions options;
    options.max_rows = 50;
    auto report = lcl_identifiable(data, options);
    CHECK(report.subsampled);
    CHECK(report.rows_used == 50);
    CHECK(report.identifiable);
}

TEST_CASE("identifiable always implies the necessary condition") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Model gen = Model::zeros(ModelKind::mnl, 2);
        ChoiceDataset data = sample_dataset(gen, 5 + int(seed) * 3, 3, 100 + seed);
        auto report = lcl_identifiable(data);
        if (report.identifiable) CHECK(report.necessary_ok);
    }
}

TEST_CASE("report JSON carries the span and affine summaries") {
    Model gen = Model::zeros(ModelKind::mnl, 2);
    ChoiceDataset data = sample_dataset(gen, 100, 3, 19);
    auto report = lcl_identifiable(data);
    auto j = nlohmann::json::parse(identifiability_report_json(report));
    CHECK(j.at("d") == 2);
    CHECK(j.at("span") == "6/6");
    CHECK(j.at("span_dim") == 6);
    CHECK(j.at("required") == 6);
    CHECK(j.at("identifiable") == true);
    CHECK(j.at("affine") == "3/3");
    CHECK(j.at("necessary_ok") == true);
    CHECK(j.at("rank_tolerance").get<double>() > 0.0);
    CHECK(j.at("rows_used").get<long>() > 0);
    CHECK(j.at("subsampled") == false);
}
