#pragma once

#include "choicectx/dataset.hpp"

namespace choicectx {

/// Kronecker product [x_C; 1] (x) (x_i - x_C), column-stacking convention:
/// block b < d holds (x_C)_b * (x_i - x_C), the final block holds
/// (x_i - x_C) itself. Length d^2 + d.
Vector context_row(const Vector& x_C, const Vector& x_i);

struct IdentifyOptions {
    // Compare choice sets within this tolerance when deduplicating
    // (0 = bitwise equality).
    double dedup_tolerance = 0.0;
    // Uniform row subsampling cap; a full-rank verdict survives
    // subsampling, a deficient one may be pessimistic.
    long max_rows = 1'000'000;
    std::uint64_t subsample_seed = 0;
};

struct IdentifiabilityReport {
    int d = 0;
    int span_dim = 0;
    int required = 0;  // d^2 + d
    bool identifiable = false;
    int affine_count = 0;
    int affine_required = 0;  // d + 1
    bool necessary_ok = false;
    double rank_tolerance = 0.0;
    long rows_used = 0;
    bool subsampled = false;
};

/// Exact rank condition for LCL identifiability: one context row per
/// (item, unique choice set) pair must span R^{d^2+d}. Also evaluates the
/// necessary condition of d+1 affinely independent mean vectors.
IdentifiabilityReport lcl_identifiable(const ChoiceDataset& dataset,
                                       const IdentifyOptions& options = {});

/// Size of a maximum affinely independent subset: rank of the lifted
/// vectors [x; 1].
int affinely_independent_count(const std::vector<Vector>& mean_vectors);

std::string identifiability_report_json(const IdentifiabilityReport& report);

}  // namespace choicectx
