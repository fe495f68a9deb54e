#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>

#include "choicectx/dataset.hpp"
#include "choicectx/standardize.hpp"
#include "test_helpers.hpp"

using namespace choicectx;
using namespace testutil;

TEST_CASE("load_dataset reads JSONL observations") {
    TempFile f("cc_ds_basic.jsonl");
    write_text(f.path,
               "{\"choice_set\":[[0.0],[1.0]],\"chosen\":1}\n"
               "{\"choice_set\":[[0.0],[1.0]],\"chosen\":1}\n"
               "{\"choice_set\":[[0.0],[1.0]],\"chosen\":1}\n");
    auto loaded = load_dataset(f.path);
    CHECK(loaded.dataset.size() == 3);
    CHECK(loaded.dataset.d == 1);
    CHECK(loaded.dataset.observations[0].chosen == 1);
    CHECK(loaded.dataset.observations[2].items(1, 0) == 1.0);
    CHECK(loaded.dropped_singletons == 0);
}

TEST_CASE("load_dataset drops singleton choice sets with a count") {
    TempFile f("cc_ds_singleton.jsonl");
    write_text(f.path,
               "{\"choice_set\":[[0.0],[1.0]],\"chosen\":0}\n"
               "{\"choice_set\":[[2.0]],\"chosen\":0}\n");
    auto loaded = load_dataset(f.path);
    CHECK(loaded.dataset.size() == 1);
    CHECK(loaded.dropped_singletons == 1);
}

TEST_CASE("load_dataset names the line of a dimension mismatch") {
    TempFile f("cc_ds_dim.jsonl");
    write_text(f.path,
               "{\"choice_set\":[[0.0,1.0],[1.0,0.0]],\"chosen\":0}\n"
               "{\"choice_set\":[[0.0,1.0,2.0],[1.0,0.0,2.0]],\"chosen\":0}\n");
    try {
        load_dataset(f.path);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("2") != std::string::npos);
    }
}

TEST_CASE("load_dataset rejects out-of-range chosen index and bad JSON with line numbers") {
    TempFile f("cc_ds_chosen.jsonl");
    write_text(f.path, "{\"choice_set\":[[0.0],[1.0]],\"chosen\":2}\n");
    CHECK_THROWS_AS(load_dataset(f.path), DataError);
    write_text(f.path, "not json\n");
    CHECK_THROWS_AS(load_dataset(f.path), DataError);
}

TEST_CASE("optional feature_names header line") {
    TempFile f("cc_ds_names.jsonl");
    write_text(f.path,
               "{\"feature_names\":[\"a\",\"b\"]}\n"
               "{\"choice_set\":[[0.0,1.0],[1.0,0.0]],\"chosen\":0}\n");
    auto loaded = load_dataset(f.path);
    REQUIRE(loaded.dataset.feature_names.has_value());
    CHECK((*loaded.dataset.feature_names)[1] == "b");
    CHECK(loaded.dataset.size() == 1);
}

TEST_CASE("write/load round-trip preserves the dataset") {
    ChoiceDataset data;
    data.d = 2;
    data.observations = {obs({{0.5, -1.25}, {3.0, 0.0625}}, 1),
                         obs({{1.0, 2.0}, {3.0, 4.0}, {5.0, 6.0}}, 2)};
    data.feature_names = std::vector<std::string>{"u", "v"};
    TempFile f("cc_ds_rt.jsonl");
    write_dataset(data, f.path);
    auto loaded = load_dataset(f.path);
    REQUIRE(loaded.dataset.size() == 2);
    CHECK(loaded.dataset.d == 2);
    CHECK(*loaded.dataset.feature_names == *data.feature_names);
    for (int h = 0; h < 2; ++h) {
        CHECK(loaded.dataset.observations[h].chosen == data.observations[h].chosen);
        CHECK((loaded.dataset.observations[h].items - data.observations[h].items)
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
    }
}

TEST_CASE("mean_feature_vector matches the worked fixtures") {
    // The two context vectors of the d=3 fixture used throughout.
    Vector m1 = mean_feature_vector(items({{-1, 2, -1}, {-1, 1, -2}}));
    CHECK((m1 - vec({-1, 1.5, -1.5})).cwiseAbs().maxCoeff() == 0.0);
    Vector m2 = mean_feature_vector(items({{1, 0, 1}, {-1, 2, -1}}));
    CHECK((m2 - vec({0, 1, 0})).cwiseAbs().maxCoeff() == 0.0);
    // Singleton means are the item itself.
    Vector m3 = mean_feature_vector(items({{7, -2, 0.5}}));
    CHECK((m3 - vec({7, -2, 0.5})).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mean_feature_vector is permutation invariant") {
    Matrix a = items({{1, 2}, {3, 4}, {5, 6}});
    Matrix b = items({{5, 6}, {1, 2}, {3, 4}});
    CHECK((mean_feature_vector(a) - mean_feature_vector(b)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("fit_standardizer: two symmetric points") {
    ChoiceDataset data;
    data.d = 1;
    data.observations = {obs({{1.0}, {3.0}}, 0)};
    Standardizer s = fit_standardizer(data);
    CHECK(s.means[0] == doctest::Approx(2.0));
    CHECK(s.stds[0] == doctest::Approx(1.0));
}

TEST_CASE("fit_standardizer: constant feature falls back to std 1") {
    ChoiceDataset data;
    data.d = 2;
    data.observations = {obs({{5.0, 1.0}, {5.0, 2.0}}, 0), obs({{5.0, 3.0}, {5.0, 4.0}}, 1)};
    Standardizer s = fit_standardizer(data);
    CHECK(s.means[0] == doctest::Approx(5.0));
    CHECK(s.stds[0] == doctest::Approx(1.0));
    ChoiceDataset out = apply_standardizer(s, data);
    for (const auto& o : out.observations)
        CHECK(o.items.col(0).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("fit_standardizer: {0,0,3,3} gives mean 1.5, std 1.5 (population moments)") {
    ChoiceDataset data;
    data.d = 1;
    data.observations = {obs({{0.0}, {0.0}}, 0), obs({{3.0}, {3.0}}, 0)};
    Standardizer s = fit_standardizer(data);
    CHECK(s.means[0] == doctest::Approx(1.5));
    CHECK(s.stds[0] == doctest::Approx(1.5));
    ChoiceDataset out = apply_standardizer(s, data);
    CHECK(out.observations[0].items(0, 0) == doctest::Approx(-1.0));
    CHECK(out.observations[1].items(1, 0) == doctest::Approx(1.0));
}

TEST_CASE("apply_standardizer basics") {
    Standardizer s;
    s.means = vec({5.0});
    s.stds = vec({2.0});
    ChoiceDataset data;
    data.d = 1;
    data.observations = {obs({{5.0}, {7.0}}, 0)};
    ChoiceDataset out = apply_standardizer(s, data);
    CHECK(out.observations[0].items(0, 0) == doctest::Approx(0.0));
    CHECK(out.observations[0].items(1, 0) == doctest::Approx(1.0));

    Standardizer identity;
    identity.means = vec({0.0});
    identity.stds = vec({1.0});
    ChoiceDataset same = apply_standardizer(identity, data);
    CHECK((same.observations[0].items - data.observations[0].items).cwiseAbs().maxCoeff() ==
          0.0);
}

TEST_CASE("standardized occurrences have mean 0 and unit population variance") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> feat(-3.0, 5.0);
    ChoiceDataset data;
    data.d = 3;
    for (int h = 0; h < 40; ++h) {
        Observation o;
        o.items.resize(2 + int(rng() % 4), 3);
        for (int i = 0; i < o.items.rows(); ++i)
            for (int j = 0; j < 3; ++j) o.items(i, j) = feat(rng);
        o.chosen = 0;
        data.observations.push_back(std::move(o));
    }
    ChoiceDataset out = apply_standardizer(fit_standardizer(data), data);
    long n = 0;
    Vector sum = Vector::Zero(3), sum2 = Vector::Zero(3);
    for (const auto& o : out.observations) {
        for (int i = 0; i < o.items.rows(); ++i) {
            sum += o.items.row(i).transpose();
            sum2 += o.items.row(i).transpose().cwiseAbs2();
            ++n;
        }
    }
    Vector mean = sum / double(n);
    Vector var = sum2 / double(n) - mean.cwiseAbs2();
    CHECK(mean.cwiseAbs().maxCoeff() < 1e-10);
    CHECK((var - Vector::Ones(3)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("standardizer JSON round-trip") {
    Standardizer s;
    s.means = vec({1.5, -2.0});
    s.stds = vec({0.25, 3.0});
    Standardizer back = standardizer_from_json(standardizer_to_json(s));
    CHECK((back.means - s.means).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.stds - s.stds).cwiseAbs().maxCoeff() == 0.0);
}

namespace {

ChoiceDataset numbered(int n) {
    ChoiceDataset data;
    data.d = 1;
    for (int h = 0; h < n; ++h)
        data.observations.push_back(obs({{double(h)}, {double(h) + 0.5}}, 0));
    return data;
}

}  // namespace

TEST_CASE("temporal split of 10 observations is 0-5 / 6-7 / 8-9") {
    DatasetSplit split = split_dataset(numbered(10), SplitMode::temporal, {}, 0);
    REQUIRE(split.train.size() == 6);
    REQUIRE(split.validation.size() == 2);
    REQUIRE(split.test.size() == 2);
    CHECK(split.train.observations[0].items(0, 0) == 0.0);
    CHECK(split.train.observations[5].items(0, 0) == 5.0);
    CHECK(split.validation.observations[0].items(0, 0) == 6.0);
    CHECK(split.test.observations[1].items(0, 0) == 9.0);
}

TEST_CASE("random split is deterministic in the seed and partitions the source") {
    ChoiceDataset data = numbered(23);
    DatasetSplit a = split_dataset(data, SplitMode::random, {}, 42);
    DatasetSplit b = split_dataset(data, SplitMode::random, {}, 42);
    CHECK(a.train_indices == b.train_indices);
    CHECK(a.test_indices == b.test_indices);

    DatasetSplit c = split_dataset(data, SplitMode::random, {}, 43);
    CHECK(a.train_indices != c.train_indices);  // overwhelmingly likely

    std::vector<int> all;
    for (auto* part : {&a.train_indices, &a.validation_indices, &a.test_indices})
        all.insert(all.end(), part->begin(), part->end());
    std::sort(all.begin(), all.end());
    std::vector<int> expected(23);
    std::iota(expected.begin(), expected.end(), 0);
    CHECK(all == expected);

    // floor(23*0.6)=13, floor(23*0.2)=4, remainder 6 to test
    CHECK(a.train.size() == 13);
    CHECK(a.validation.size() == 4);
    CHECK(a.test.size() == 6);
}

TEST_CASE("invalid split fractions are rejected") {
    CHECK_THROWS_AS(split_dataset(numbered(10), SplitMode::random, {0.5, 0.5, 0.2}, 0),
                    DataError);
}

TEST_CASE("split manifest JSON lists indices, mode, seed") {
    DatasetSplit split = split_dataset(numbered(5), SplitMode::temporal, {}, 9);
    std::string j = split_manifest_json(split);
    CHECK(j.find("temporal") != std::string::npos);
    CHECK(j.find("\"seed\"") != std::string::npos);
}
