#pragma once

#include <functional>
#include <optional>

#include "choicectx/model.hpp"

namespace choicectx {

struct OptimizeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// AMSGrad-flavored Adam state over a flat parameter vector.
struct AdamState {
    long step_count = 0;
    Vector first_moment;
    Vector second_moment;
    Vector max_second_moment;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    bool amsgrad = true;

    static AdamState init(int n_params);
};

struct TrainConfig {
    double learning_rate = 0.01;
    double weight_decay = 0.0;  // coupled L2: added to the gradient
    int batch_size = 128;
    int epochs = 500;
    double wall_clock_limit_seconds = 3600.0;
    std::uint64_t seed = 0;
    double l1_lambda = 0.0;  // applied to A entries only, via proximal step
};

/// One optimizer step. Weight decay is folded into the gradient before the
/// moment updates (matching torch.optim.Adam semantics). Returns the step
/// that was applied (params_new - params_old).
Vector adam_step(AdamState& state, Vector& params, const Vector& gradient,
                 const TrainConfig& config);

struct TrainLogEntry {
    int epoch = 0;
    double train_nll = 0.0;
    std::optional<double> val_nll;
    double elapsed_s = 0.0;
};

enum class StopReason { epochs_exhausted, wall_clock };

struct FitResult {
    Model model;
    std::vector<TrainLogEntry> log;
    StopReason stop_reason = StopReason::epochs_exhausted;
};

std::string training_log_jsonl(const std::vector<TrainLogEntry>& log);

struct FitOptions {
    std::optional<Model> init;
    // Validation set to score at each epoch end (grid search needs this).
    const ChoiceDataset* validation = nullptr;
    // 0/1 mask over the flat layout; zeroed entries receive no updates.
    std::optional<Vector> gradient_mask;
};

/// Minibatch Adam MLE. Deterministic given the config seed: epoch
/// shuffling is seeded and batches are contiguous slices of the shuffled
/// order. Aborts (throws OptimizeError) when the loss becomes non-finite
/// or exceeds ten times its initial value.
FitResult fit_mle(ModelKind kind, const ChoiceDataset& train, const TrainConfig& config,
                  const FitOptions& options = {});

struct GridSearchSpec {
    std::vector<double> learning_rates = {0.0005, 0.001, 0.005, 0.01, 0.05, 0.1};
    std::vector<double> weight_decays = {0.0, 0.0001, 0.0005, 0.001, 0.005, 0.01};
    int selection_window = 5;  // last epochs considered when ranking runs
};

struct GridCell {
    double learning_rate = 0.0;
    double weight_decay = 0.0;
    // max validation NLL over the final `selection_window` epochs
    // (= min validation likelihood); +inf for diverged runs.
    double worst_val_nll = 0.0;
    bool diverged = false;
};

struct GridSearchResult {
    Model best;
    double learning_rate = 0.0;
    double weight_decay = 0.0;
    std::vector<GridCell> table;
};

/// Trains one model per (lr, wd) pair and keeps the run whose worst
/// validation NLL over the final window is smallest. Ties break toward
/// the earlier (lr, wd) position in the spec's lists, so the selection
/// does not depend on evaluation order.
GridSearchResult grid_search(ModelKind kind, const ChoiceDataset& train,
                             const ChoiceDataset& validation, const GridSearchSpec& spec,
                             const TrainConfig& base_config);

double soft_threshold(double x, double lambda);

struct RegPathConfig {
    std::vector<double> lambdas;  // nonnegative, strictly increasing
    TrainConfig base;
};

struct RegPathEntry {
    double lambda = 0.0;
    Model model;
    double nll = 0.0;  // unpenalized full-data NLL
    int nnz_A = 0;
    double lrt_vs_mnl_p = 1.0;
    double lrt_statistic = 0.0;
};

struct RegPathResult {
    std::vector<RegPathEntry> entries;
    double mnl_nll = 0.0;
};

/// L1 regularization path for the LCL, warm-starting each fit from the
/// previous lambda's solution. An MNL is fitted once as the LRT baseline.
RegPathResult l1_path(const ChoiceDataset& train, const RegPathConfig& config);

struct ConstrainedLclResult {
    Model model;  // full LCL shape; A zero outside (p, q)
    double nll = 0.0;
};

/// LCL fit with every entry of A frozen at zero except A[p][q].
ConstrainedLclResult fit_constrained_lcl(const ChoiceDataset& train, int p, int q,
                                         const TrainConfig& config);

}  // namespace choicectx
