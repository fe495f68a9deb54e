#pragma once

#include "choicectx/optimize.hpp"

namespace choicectx {

/// r(h, k): posterior probability that observation h came from mixture
/// component k. Rows sum to 1.
using Responsibilities = Matrix;  // n x d

/// Per-component probabilities of the chosen item, one entry per mixture
/// component of the DLCL.
Vector component_probabilities(const Model& dlcl, const Observation& obs);

Responsibilities compute_responsibilities(const Model& dlcl, const ChoiceDataset& dataset);

/// Expected complete-data log-likelihood sum_h sum_k r[h][k] log p_hk and
/// its gradient with respect to [vec(A); vec(B)].
std::pair<double, Vector> q_function(const Matrix& A, const Matrix& B,
                                     const Responsibilities& r, const ChoiceDataset& dataset);

struct EmConfig {
    TrainConfig inner;       // M-step optimizer (Adam, full batch)
    int inner_iterations = 50;
    int max_outer_iterations = 500;
    double gradient_tolerance = 1e-6;  // on ||grad NLL||_2
    double wall_clock_limit_seconds = 3600.0;
    std::uint64_t seed = 0;
};

struct EmTraceEntry {
    int t = 0;
    double nll = 0.0;
    double grad_norm = 0.0;
    Vector pi;
};

struct EmResult {
    Model model;
    std::vector<EmTraceEntry> trace;
    std::string stop_reason;  // "gradient", "max_iterations", "wall_clock"
};

/// EM for the DLCL: E-step responsibilities, concave M-step over (A, B)
/// solved with full-batch Adam, closed-form mixture weight update. The
/// full-data NLL is non-increasing across outer iterations.
EmResult em_fit(const ChoiceDataset& train, const EmConfig& config,
                const std::optional<Model>& init = std::nullopt);

std::string em_trace_jsonl(const std::vector<EmTraceEntry>& trace);

}  // namespace choicectx
