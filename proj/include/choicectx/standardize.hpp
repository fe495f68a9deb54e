#pragma once

#include "choicectx/dataset.hpp"

namespace choicectx {

/// Per-feature affine transform v -> (v - mean) / std, fitted over every
/// (item, choice set) occurrence. Constant features get std = 1 so their
/// transformed values are 0.
struct Standardizer {
    Vector means;
    Vector stds;

    int d() const { return static_cast<int>(means.size()); }
};

Standardizer fit_standardizer(const ChoiceDataset& dataset);
ChoiceDataset apply_standardizer(const Standardizer& s, const ChoiceDataset& dataset);

std::string standardizer_to_json(const Standardizer& s);
Standardizer standardizer_from_json(const std::string& text);

}  // namespace choicectx
