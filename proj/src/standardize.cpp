#include "choicectx/standardize.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

namespace choicectx {

Standardizer fit_standardizer(const ChoiceDataset& dataset) {
    if (dataset.empty()) throw DataError("fit_standardizer: empty dataset");
    const int d = dataset.d;
    Vector sum = Vector::Zero(d);
    Vector sum_sq = Vector::Zero(d);
    long count = 0;
    for (const auto& obs : dataset.observations) {
        sum += obs.items.colwise().sum().transpose();
        sum_sq += obs.items.array().square().colwise().sum().matrix().transpose();
        count += obs.size();
    }
    Standardizer s;
    s.means = sum / static_cast<double>(count);
    // Population variance; clamp at 0 against cancellation on constants.
    Vector var =
        (sum_sq / static_cast<double>(count) - s.means.cwiseProduct(s.means)).cwiseMax(0.0);
    s.stds = var.cwiseSqrt();
    for (int k = 0; k < d; ++k) {
        if (s.stds[k] <= 0.0) s.stds[k] = 1.0;  // constant feature
    }
    return s;
}

ChoiceDataset apply_standardizer(const Standardizer& s, const ChoiceDataset& dataset) {
    if (s.d() != dataset.d) throw DataError("apply_standardizer: dimension mismatch");
    ChoiceDataset out = dataset;
    for (auto& obs : out.observations) {
        obs.items.rowwise() -= s.means.transpose();
        obs.items.array().rowwise() /= s.stds.transpose().array();
    }
    return out;
}

std::string standardizer_to_json(const Standardizer& s) {
    nlohmann::json j;
    j["means"] = std::vector<double>(s.means.data(), s.means.data() + s.means.size());
    j["stds"] = std::vector<double>(s.stds.data(), s.stds.data() + s.stds.size());
    return j.dump();
}

Standardizer standardizer_from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    auto means = j.at("means").get<std::vector<double>>();
    auto stds = j.at("stds").get<std::vector<double>>();
    if (means.size() != stds.size()) throw DataError("standardizer: means/stds length mismatch");
    Standardizer s;
    s.means = Eigen::Map<const Vector>(means.data(), means.size());
    s.stds = Eigen::Map<const Vector>(stds.data(), stds.size());
    return s;
}

}  // namespace choicectx
