#pragma once

#include "choicectx/model.hpp"
#include "choicectx/optimize.hpp"

namespace choicectx {

/// Upper-tail chi-squared probability, Q(dof/2, x/2) via the regularized
/// incomplete gamma function.
double chi2_sf(double x, int dof);

struct LRTResult {
    double statistic = 0.0;  // 2 * (nll_null - nll_full); may be negative
    int dof = 0;
    double p_value = 1.0;  // chi2_sf(max(statistic, 0), dof)
};

LRTResult likelihood_ratio_test(double nll_null, double nll_full, int dof);

struct WilcoxonResult {
    double T = 0.0;  // min of positive / negative rank sums
    int n_effective = 0;
    double p_value = 1.0;
    std::string method;  // "exact" or "normal_approx"
};

/// Two-sided Wilcoxon signed-rank test. Zeros are discarded; ties get
/// average ranks. Exact p by sign enumeration for n < 20, otherwise the
/// normal approximation with tie and continuity corrections.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& differences);

struct RelativeRankResult {
    double mean = 0.0;
    std::vector<double> per_observation;
};

/// Chosen item's position in the model's descending-probability ordering
/// (ties take the mean of the occupied indices), divided by |C| - 1.
RelativeRankResult mean_relative_rank(const Model& model, const ChoiceDataset& dataset);

// Exposed so tie handling is testable without a model.
double relative_rank(const Vector& probabilities, int chosen);

struct WlsFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    double slope_se = 0.0;
};

WlsFit weighted_least_squares(const std::vector<double>& xs, const std::vector<double>& ys,
                              const std::vector<double>& weights);

struct BinnedFitConfig {
    int n_bins = 100;
    int min_bin_count = 50;
    bool quantile_bins = false;   // default: equal-width over the observed range
    bool sqrt_count_weights = false;  // default: WLS weights = bin counts
    TrainConfig optimizer;
};

struct BinRecord {
    double center = 0.0;
    double coefficient = 0.0;  // fitted MNL coefficient of the target feature
    int count = 0;
};

struct BinnedFit {
    std::vector<BinRecord> bins;
    WlsFit wls;
    int total_used = 0;  // observations in fitted bins
};

/// Fits an MNL inside each bin of the choice-set mean of feature q and
/// regresses the fitted coefficient of feature p on the bin center.
BinnedFit binned_mnl(const ChoiceDataset& dataset, int context_feature_q, int target_feature_p,
                     const BinnedFitConfig& config);

std::string binned_fit_csv(const BinnedFit& fit);

}  // namespace choicectx
