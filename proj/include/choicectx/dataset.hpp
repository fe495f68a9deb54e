#pragma once

#include <Eigen/Dense>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace choicectx {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// One choice instance: the items on offer (rows of `items`) and which
/// one was picked.
struct Observation {
    Matrix items;  // |C| x d, one row per item
    int chosen = 0;

    int size() const { return static_cast<int>(items.rows()); }
    Vector item(int j) const { return items.row(j).transpose(); }
    Vector chosen_item() const { return items.row(chosen).transpose(); }
    Vector mean_item() const { return items.colwise().mean().transpose(); }
};

struct ChoiceDataset {
    std::vector<Observation> observations;
    int d = 0;
    std::optional<std::vector<std::string>> feature_names;

    int size() const { return static_cast<int>(observations.size()); }
    bool empty() const { return observations.empty(); }
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Componentwise mean of a non-empty choice set (the x_C vector).
Vector mean_feature_vector(const Matrix& choice_set);

struct LoadResult {
    ChoiceDataset dataset;
    int dropped_singletons = 0;
};

// JSONL, one observation per line: {"choice_set": [[...], ...], "chosen": k}.
// An optional first line {"feature_names": [...]} labels the features.
// Choice sets with fewer than two items are dropped and counted.
LoadResult load_dataset(const std::string& path);
void write_dataset(const ChoiceDataset& dataset, const std::string& path);

enum class SplitMode { random, temporal };

struct SplitFractions {
    double train = 0.6;
    double validation = 0.2;
    double test = 0.2;
};

struct DatasetSplit {
    ChoiceDataset train;
    ChoiceDataset validation;
    ChoiceDataset test;
    SplitMode mode = SplitMode::random;
    SplitFractions fractions;
    std::uint64_t seed = 0;
    // Source indices of each part, in the order they were assigned.
    std::vector<int> train_indices, validation_indices, test_indices;
};

// Train/validation parts get floor(n*f) observations; the remainder goes
// to test. Temporal mode keeps the original observation order.
DatasetSplit split_dataset(const ChoiceDataset& dataset, SplitMode mode,
                           SplitFractions fractions, std::uint64_t seed);

std::string split_manifest_json(const DatasetSplit& split);

}  // namespace choicectx
