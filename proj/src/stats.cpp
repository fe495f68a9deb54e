#include "choicectx/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "choicectx/optimize.hpp"
#include "choicectx/parallel.hpp"

namespace choicectx {

namespace {

constexpr int kGammaMaxIter = 10000;
constexpr double kGammaEps = 1e-16;

// Regularized lower incomplete gamma P(a, x) by series expansion (x < a+1).
double gamma_p_series(double a, double x) {
    double term = 1.0 / a;
    double sum = term;
    double ap = a;
    for (int i = 0; i < kGammaMaxIter; ++i) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::abs(term) < std::abs(sum) * kGammaEps) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Regularized upper incomplete gamma Q(a, x) by Lentz continued fraction
// (x >= a+1).
double gamma_q_cf(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= kGammaMaxIter; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kGammaEps) break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gamma_q(double a, double x) {
    if (x <= 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
    return gamma_q_cf(a, x);
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace

double chi2_sf(double x, int dof) {
    if (dof < 1) throw DataError("chi2_sf: dof must be positive");
    if (x < 0) throw DataError("chi2_sf: x must be nonnegative");
    return gamma_q(0.5 * dof, 0.5 * x);
}

LRTResult likelihood_ratio_test(double nll_null, double nll_full, int dof) {
    if (dof < 0) throw DataError("likelihood_ratio_test: negative dof");
    LRTResult r;
    r.statistic = 2.0 * (nll_null - nll_full);
    r.dof = dof;
    // Zero dof: the chi-squared limit is a point mass at 0.
    if (dof == 0) r.p_value = r.statistic > 0.0 ? 0.0 : 1.0;
    else r.p_value = chi2_sf(std::max(r.statistic, 0.0), dof);
    return r;
}

namespace {

// Average ranks of |d| over the nonzero differences.
std::vector<double> signed_ranks(const std::vector<double>& nonzero) {
    const int n = static_cast<int>(nonzero.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return std::abs(nonzero[a]) < std::abs(nonzero[b]);
    });
    std::vector<double> ranks(n);
    int i = 0;
    while (i < n) {
        int j = i;
        while (j + 1 < n && std::abs(nonzero[order[j + 1]]) == std::abs(nonzero[order[i]])) ++j;
        const double avg = 0.5 * (i + j) + 1.0;  // 1-based average rank
        for (int k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& differences) {
    if (differences.empty()) throw DataError("wilcoxon_signed_rank: no differences");
    std::vector<double> nonzero;
    for (double d : differences)
        if (d != 0.0) nonzero.push_back(d);

    WilcoxonResult result;
    result.n_effective = static_cast<int>(nonzero.size());
    if (nonzero.empty()) {
        result.method = "exact";
        result.p_value = 1.0;
        return result;
    }

    const std::vector<double> ranks = signed_ranks(nonzero);
    double w_pos = 0.0, w_neg = 0.0;
    for (size_t i = 0; i < nonzero.size(); ++i)
        (nonzero[i] > 0 ? w_pos : w_neg) += ranks[i];
    result.T = std::min(w_pos, w_neg);

    const int n = result.n_effective;
    if (n < 20) {
        result.method = "exact";
        // Enumerate all sign assignments; two-sided p doubles the lower tail.
        const std::uint64_t total = 1ull << n;
        std::uint64_t at_most = 0;
        const double tol = 1e-9;
        for (std::uint64_t bits = 0; bits < total; ++bits) {
            double w = 0.0;
            for (int i = 0; i < n; ++i)
                if (bits & (1ull << i)) w += ranks[i];
            if (w <= result.T + tol) ++at_most;
        }
        result.p_value =
            std::min(1.0, 2.0 * static_cast<double>(at_most) / static_cast<double>(total));
    } else {
        result.method = "normal_approx";
        const double mu = n * (n + 1) / 4.0;
        double tie_term = 0.0;
        {
            std::vector<double> sorted(ranks);
            std::sort(sorted.begin(), sorted.end());
            size_t i = 0;
            while (i < sorted.size()) {
                size_t j = i;
                while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
                const double t = static_cast<double>(j - i + 1);
                tie_term += (t * t * t - t);
                i = j + 1;
            }
        }
        const double var = n * (n + 1) * (2.0 * n + 1) / 24.0 - tie_term / 48.0;
        const double z = (result.T - mu + 0.5) / std::sqrt(var);
        result.p_value = std::clamp(2.0 * (1.0 - normal_sf(z)), 0.0, 1.0);
    }
    return result;
}

double relative_rank(const Vector& probabilities, int chosen) {
    const int k = static_cast<int>(probabilities.size());
    if (k < 2) throw DataError("relative_rank: choice set must have at least two items");
    const double p_c = probabilities[chosen];
    int greater = 0, tied = 0;
    for (int j = 0; j < k; ++j) {
        if (probabilities[j] > p_c) ++greater;
        else if (probabilities[j] == p_c) ++tied;  // includes chosen itself
    }
    const double mean_index = greater + 0.5 * (tied - 1);
    return mean_index / (k - 1);
}

RelativeRankResult mean_relative_rank(const Model& model, const ChoiceDataset& dataset) {
    RelativeRankResult result;
    result.per_observation.reserve(dataset.size());
    double sum = 0.0;
    for (const auto& obs : dataset.observations) {
        const double rr = relative_rank(choice_probabilities(model, obs.items), obs.chosen);
        result.per_observation.push_back(rr);
        sum += rr;
    }
    result.mean = sum / dataset.size();
    return result;
}

WlsFit weighted_least_squares(const std::vector<double>& xs, const std::vector<double>& ys,
                              const std::vector<double>& weights) {
    const size_t n = xs.size();
    if (n < 2 || ys.size() != n || weights.size() != n)
        throw DataError("weighted_least_squares: need >= 2 points with matching weights");
    for (double w : weights)
        if (w <= 0) throw DataError("weighted_least_squares: weights must be positive");

    double w_sum = 0.0, x_mean = 0.0, y_mean = 0.0;
    for (size_t i = 0; i < n; ++i) {
        w_sum += weights[i];
        x_mean += weights[i] * xs[i];
        y_mean += weights[i] * ys[i];
    }
    x_mean /= w_sum;
    y_mean /= w_sum;

    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double dx = xs[i] - x_mean;
        const double dy = ys[i] - y_mean;
        sxx += weights[i] * dx * dx;
        sxy += weights[i] * dx * dy;
        syy += weights[i] * dy * dy;
    }
    if (sxx <= 0) throw DataError("weighted_least_squares: degenerate xs");

    WlsFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = y_mean - fit.slope * x_mean;
    double rss = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double e = ys[i] - fit.slope * xs[i] - fit.intercept;
        rss += weights[i] * e * e;
    }
    fit.r_squared = syy > 0 ? 1.0 - rss / syy : 1.0;
    if (n > 2) fit.slope_se = std::sqrt(rss / (static_cast<double>(n) - 2.0) / sxx);
    return fit;
}

BinnedFit binned_mnl(const ChoiceDataset& dataset, int context_feature_q, int target_feature_p,
                     const BinnedFitConfig& config) {
    const int d = dataset.d;
    if (context_feature_q < 0 || context_feature_q >= d || target_feature_p < 0 ||
        target_feature_p >= d)
        throw DataError("binned_mnl: feature index out of range");
    if (config.n_bins < 2) throw DataError("binned_mnl: need at least 2 bins");

    const int n = dataset.size();
    std::vector<double> context_means(n);
    for (int i = 0; i < n; ++i)
        context_means[i] = dataset.observations[i].mean_item()[context_feature_q];

    // Bin edges: equal-width over the observed range, or quantiles.
    std::vector<double> edges(config.n_bins + 1);
    if (config.quantile_bins) {
        std::vector<double> sorted(context_means);
        std::sort(sorted.begin(), sorted.end());
        for (int b = 0; b <= config.n_bins; ++b) {
            const size_t idx = std::min<size_t>(
                static_cast<size_t>(static_cast<double>(b) * n / config.n_bins), n - 1);
            edges[b] = sorted[idx];
        }
        edges.back() = sorted.back();
    } else {
        const auto [lo_it, hi_it] = std::minmax_element(context_means.begin(), context_means.end());
        const double lo = *lo_it, hi = *hi_it;
        for (int b = 0; b <= config.n_bins; ++b)
            edges[b] = lo + (hi - lo) * b / config.n_bins;
    }

    std::vector<std::vector<int>> members(config.n_bins);
    for (int i = 0; i < n; ++i) {
        int b;
        if (config.quantile_bins) {
            b = static_cast<int>(std::upper_bound(edges.begin() + 1, edges.end() - 1,
                                                  context_means[i]) -
                                 (edges.begin() + 1));
        } else {
            const double span = edges.back() - edges.front();
            b = span > 0 ? static_cast<int>((context_means[i] - edges.front()) / span *
                                            config.n_bins)
                         : 0;
        }
        b = std::clamp(b, 0, config.n_bins - 1);
        members[b].push_back(i);
    }

    std::vector<int> usable;
    for (int b = 0; b < config.n_bins; ++b)
        if (static_cast<int>(members[b].size()) >= config.min_bin_count) usable.push_back(b);
    if (usable.empty()) throw DataError("binned_mnl: no bin reaches the minimum count");

    std::vector<BinRecord> records(usable.size());
    parallel_for(static_cast<int>(usable.size()), [&](int u) {
        const int b = usable[u];
        ChoiceDataset bin_data;
        bin_data.d = d;
        for (int i : members[b]) bin_data.observations.push_back(dataset.observations[i]);
        FitResult fit = fit_mle(ModelKind::mnl, bin_data, config.optimizer);
        records[u].center = 0.5 * (edges[b] + edges[b + 1]);
        records[u].coefficient = fit.model.theta[target_feature_p];
        records[u].count = static_cast<int>(members[b].size());
    });

    BinnedFit result;
    result.bins = std::move(records);
    std::vector<double> xs, ys, ws;
    for (const auto& rec : result.bins) {
        xs.push_back(rec.center);
        ys.push_back(rec.coefficient);
        ws.push_back(config.sqrt_count_weights ? std::sqrt(static_cast<double>(rec.count))
                                               : static_cast<double>(rec.count));
        result.total_used += rec.count;
    }
    result.wls = weighted_least_squares(xs, ys, ws);
    return result;
}

std::string binned_fit_csv(const BinnedFit& fit) {
    std::ostringstream out;
    out << "bin_center,coefficient,count\n";
    out.precision(17);
    for (const auto& rec : fit.bins)
        out << rec.center << "," << rec.coefficient << "," << rec.count << "\n";
    return out.str();
}

}  // namespace choicectx
