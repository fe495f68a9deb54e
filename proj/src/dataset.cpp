#include "choicectx/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>

namespace choicectx {

using nlohmann::json;

Vector mean_feature_vector(const Matrix& choice_set) {
    if (choice_set.rows() == 0) throw DataError("mean_feature_vector: empty choice set");
    return choice_set.colwise().mean().transpose();
}

LoadResult load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file: " + path);

    LoadResult result;
    ChoiceDataset& ds = result.dataset;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError("parse error at line " + std::to_string(line_no) + ": " + e.what());
        }
        if (line_no == 1 && j.contains("feature_names")) {
            ds.feature_names = j.at("feature_names").get<std::vector<std::string>>();
            continue;
        }
        if (!j.contains("choice_set") || !j.contains("chosen"))
            throw DataError("line " + std::to_string(line_no) +
                            ": expected keys \"choice_set\" and \"chosen\"");
        auto rows = j.at("choice_set").get<std::vector<std::vector<double>>>();
        if (rows.empty())
            throw DataError("line " + std::to_string(line_no) + ": empty choice set");
        const int k = static_cast<int>(rows.size());
        const int dim = static_cast<int>(rows[0].size());
        if (ds.d == 0) {
            ds.d = dim;
        } else if (dim != ds.d) {
            throw DataError("line " + std::to_string(line_no) + ": feature dimension " +
                            std::to_string(dim) + " does not match dataset dimension " +
                            std::to_string(ds.d));
        }
        Observation obs;
        obs.items.resize(k, dim);
        for (int r = 0; r < k; ++r) {
            if (static_cast<int>(rows[r].size()) != dim)
                throw DataError("line " + std::to_string(line_no) + ": ragged choice set");
            for (int c = 0; c < dim; ++c) {
                if (!std::isfinite(rows[r][c]))
                    throw DataError("line " + std::to_string(line_no) + ": non-finite feature");
                obs.items(r, c) = rows[r][c];
            }
        }
        obs.chosen = j.at("chosen").get<int>();
        if (obs.chosen < 0 || obs.chosen >= k)
            throw DataError("line " + std::to_string(line_no) + ": chosen index " +
                            std::to_string(obs.chosen) + " out of range for set of " +
                            std::to_string(k));
        if (k < 2) {
            ++result.dropped_singletons;
            continue;
        }
        ds.observations.push_back(std::move(obs));
    }
    if (ds.empty()) throw DataError("dataset is empty: " + path);
    return result;
}

void write_dataset(const ChoiceDataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    if (dataset.feature_names) {
        json header;
        header["feature_names"] = *dataset.feature_names;
        out << header.dump() << "\n";
    }
    for (const auto& obs : dataset.observations) {
        json j;
        std::vector<std::vector<double>> rows(obs.size());
        for (int r = 0; r < obs.size(); ++r) {
            rows[r].resize(dataset.d);
            for (int c = 0; c < dataset.d; ++c) rows[r][c] = obs.items(r, c);
        }
        j["choice_set"] = rows;
        j["chosen"] = obs.chosen;
        out << j.dump() << "\n";
    }
}

DatasetSplit split_dataset(const ChoiceDataset& dataset, SplitMode mode,
                           SplitFractions fractions, std::uint64_t seed) {
    const double sum = fractions.train + fractions.validation + fractions.test;
    if (fractions.train <= 0 || fractions.validation <= 0 || fractions.test <= 0 ||
        std::abs(sum - 1.0) > 1e-9)
        throw DataError("split fractions must be positive and sum to 1");

    const int n = dataset.size();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    if (mode == SplitMode::random) {
        std::mt19937_64 rng(seed);
        std::shuffle(order.begin(), order.end(), rng);
    }
    const int n_train = static_cast<int>(std::floor(n * fractions.train));
    const int n_val = static_cast<int>(std::floor(n * fractions.validation));

    DatasetSplit split;
    split.mode = mode;
    split.fractions = fractions;
    split.seed = seed;
    auto take = [&](ChoiceDataset& part, std::vector<int>& indices, int begin, int end) {
        part.d = dataset.d;
        part.feature_names = dataset.feature_names;
        for (int i = begin; i < end; ++i) {
            indices.push_back(order[i]);
            part.observations.push_back(dataset.observations[order[i]]);
        }
    };
    take(split.train, split.train_indices, 0, n_train);
    take(split.validation, split.validation_indices, n_train, n_train + n_val);
    take(split.test, split.test_indices, n_train + n_val, n);
    return split;
}

std::string split_manifest_json(const DatasetSplit& split) {
    json j;
    j["mode"] = split.mode == SplitMode::random ? "random" : "temporal";
    j["seed"] = split.seed;
    j["fractions"] = {split.fractions.train, split.fractions.validation, split.fractions.test};
    j["train"] = split.train_indices;
    j["validation"] = split.validation_indices;
    j["test"] = split.test_indices;
    return j.dump(2) + "\n";
}

}  // namespace choicectx
