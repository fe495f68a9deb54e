#include "choicectx/optimize.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>

#include "choicectx/parallel.hpp"
#include "choicectx/stats.hpp"

namespace choicectx {

AdamState AdamState::init(int n_params) {
    AdamState s;
    s.first_moment = Vector::Zero(n_params);
    s.second_moment = Vector::Zero(n_params);
    s.max_second_moment = Vector::Zero(n_params);
    return s;
}

Vector adam_step(AdamState& state, Vector& params, const Vector& gradient,
                 const TrainConfig& config) {
    if (gradient.size() != params.size()) throw OptimizeError("adam_step: shape mismatch");
    for (Eigen::Index i = 0; i < gradient.size(); ++i) {
        if (!std::isfinite(gradient[i]))
            throw OptimizeError("non-finite gradient at component " + std::to_string(i));
    }
    Vector g = gradient + config.weight_decay * params;
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * g;
    state.second_moment =
        state.beta2 * state.second_moment + (1.0 - state.beta2) * g.cwiseProduct(g);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    Vector v = state.second_moment;
    if (state.amsgrad) {
        state.max_second_moment = state.max_second_moment.cwiseMax(state.second_moment);
        v = state.max_second_moment;
    }
    Vector denom = (v / bc2).cwiseSqrt().array() + state.epsilon;
    Vector step = -(config.learning_rate / bc1) * state.first_moment.cwiseQuotient(denom);
    params += step;
    return step;
}

std::string training_log_jsonl(const std::vector<TrainLogEntry>& log) {
    std::string out;
    for (const auto& e : log) {
        nlohmann::json j;
        j["epoch"] = e.epoch;
        j["train_nll"] = e.train_nll;
        j["val_nll"] = e.val_nll ? nlohmann::json(*e.val_nll) : nlohmann::json(nullptr);
        j["elapsed_s"] = e.elapsed_s;
        out += j.dump() + "\n";
    }
    return out;
}

namespace {

Model default_init(ModelKind kind, int d, std::uint64_t seed) {
    Model m = Model::zeros(kind, d);
    if (kind == ModelKind::mixed_logit || kind == ModelKind::dlcl) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(-0.1, 0.1);
        for (Eigen::Index c = 0; c < m.B.cols(); ++c)
            for (Eigen::Index r = 0; r < m.B.rows(); ++r) m.B(r, c) = u(rng);
        if (kind == ModelKind::dlcl)
            for (Eigen::Index c = 0; c < m.A.cols(); ++c)
                for (Eigen::Index r = 0; r < m.A.rows(); ++r) m.A(r, c) = u(rng);
    }
    return m;
}

// Per-coordinate threshold for the proximal L1 step under Adam's diagonal
// metric: lambda scaled by the same factor as the gradient step.
void prox_l1_on_A(const Model& shape, Vector& flat, const AdamState& state,
                  const TrainConfig& config) {
    auto [offset, count] = shape.a_block();
    if (count == 0 || config.l1_lambda <= 0.0) return;
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
    const Vector& v = state.amsgrad ? state.max_second_moment : state.second_moment;
    for (int i = offset; i < offset + count; ++i) {
        const double denom = std::sqrt(v[i] / bc2) + state.epsilon;
        flat[i] = soft_threshold(flat[i], config.learning_rate * config.l1_lambda / denom);
    }
}

int count_nonzero_A(const Model& m) {
    int nnz = 0;
    for (Eigen::Index c = 0; c < m.A.cols(); ++c)
        for (Eigen::Index r = 0; r < m.A.rows(); ++r)
            if (m.A(r, c) != 0.0) ++nnz;
    return nnz;
}

}  // namespace

FitResult fit_mle(ModelKind kind, const ChoiceDataset& train, const TrainConfig& config,
                  const FitOptions& options) {
    if (train.empty()) throw OptimizeError("fit_mle: empty training set");
    if (config.learning_rate <= 0 || config.batch_size < 1 || config.epochs < 1)
        throw OptimizeError("fit_mle: invalid config");

    Model model = options.init ? *options.init : default_init(kind, train.d, config.seed);
    if (model.kind != kind || model.d != train.d)
        throw OptimizeError("fit_mle: init does not match kind/dimension");

    Vector flat = model.flatten();
    AdamState state = AdamState::init(static_cast<int>(flat.size()));
    std::mt19937_64 shuffle_rng(config.seed);

    const int n = train.size();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    FitResult result;
    const auto start = std::chrono::steady_clock::now();
    double initial_nll = -1.0;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_nll = 0.0;
        for (int begin = 0; begin < n; begin += config.batch_size) {
            const int end = std::min(begin + config.batch_size, n);
            std::vector<int> batch(order.begin() + begin, order.begin() + end);
            model.unflatten(flat);
            auto [batch_nll, grad] = nll_and_gradient(model, train, batch);
            epoch_nll += batch_nll;
            grad /= static_cast<double>(batch.size());
            if (options.gradient_mask) grad = grad.cwiseProduct(*options.gradient_mask);
            adam_step(state, flat, grad, config);
            prox_l1_on_A(model, flat, state, config);
        }
        model.unflatten(flat);

        if (!std::isfinite(epoch_nll))
            throw OptimizeError("fit_mle diverged: non-finite NLL at epoch " +
                                std::to_string(epoch));
        if (initial_nll < 0) initial_nll = epoch_nll;
        if (epoch_nll > 10.0 * initial_nll + 1.0)
            throw OptimizeError("fit_mle diverged: NLL " + std::to_string(epoch_nll) +
                                " exceeds 10x initial at epoch " + std::to_string(epoch));

        TrainLogEntry entry;
        entry.epoch = epoch;
        entry.train_nll = epoch_nll;
        if (options.validation) entry.val_nll = negative_log_likelihood(model, *options.validation);
        entry.elapsed_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.log.push_back(entry);

        if (entry.elapsed_s > config.wall_clock_limit_seconds && epoch < config.epochs) {
            result.stop_reason = StopReason::wall_clock;
            break;
        }
    }
    result.model = std::move(model);
    return result;
}

GridSearchResult grid_search(ModelKind kind, const ChoiceDataset& train,
                             const ChoiceDataset& validation, const GridSearchSpec& spec,
                             const TrainConfig& base_config) {
    if (spec.learning_rates.empty() || spec.weight_decays.empty())
        throw OptimizeError("grid_search: empty grid");

    const int n_cells =
        static_cast<int>(spec.learning_rates.size() * spec.weight_decays.size());
    std::vector<GridCell> table(n_cells);
    std::vector<std::optional<Model>> models(n_cells);

    parallel_for(n_cells, [&](int cell) {
        const size_t li = cell / spec.weight_decays.size();
        const size_t wi = cell % spec.weight_decays.size();
        GridCell& out = table[cell];
        out.learning_rate = spec.learning_rates[li];
        out.weight_decay = spec.weight_decays[wi];
        TrainConfig config = base_config;
        config.learning_rate = out.learning_rate;
        config.weight_decay = out.weight_decay;
        FitOptions options;
        options.validation = &validation;
        try {
            FitResult fit = fit_mle(kind, train, config, options);
            const int n_epochs = static_cast<int>(fit.log.size());
            const int window = std::min(spec.selection_window, n_epochs);
            double worst = -std::numeric_limits<double>::infinity();
            for (int e = n_epochs - window; e < n_epochs; ++e)
                worst = std::max(worst, *fit.log[e].val_nll);
            out.worst_val_nll = worst;
            models[cell] = std::move(fit.model);
        } catch (const OptimizeError&) {
            out.diverged = true;
            out.worst_val_nll = std::numeric_limits<double>::infinity();
        }
    });

    int best = -1;
    for (int cell = 0; cell < n_cells; ++cell) {
        if (table[cell].diverged) continue;
        if (best < 0 || table[cell].worst_val_nll < table[best].worst_val_nll) best = cell;
    }
    if (best < 0) {
        std::string msg = "grid_search: all runs diverged;";
        for (const auto& c : table)
            msg += " (lr=" + std::to_string(c.learning_rate) +
                   ", wd=" + std::to_string(c.weight_decay) + ")";
        throw OptimizeError(msg);
    }

    GridSearchResult result;
    result.best = std::move(*models[best]);
    result.learning_rate = table[best].learning_rate;
    result.weight_decay = table[best].weight_decay;
    result.table = std::move(table);
    return result;
}

double soft_threshold(double x, double lambda) {
    if (lambda < 0) throw OptimizeError("soft_threshold: negative lambda");
    const double mag = std::abs(x) - lambda;
    return mag > 0 ? (x < 0 ? -mag : mag) : 0.0;
}

RegPathResult l1_path(const ChoiceDataset& train, const RegPathConfig& config) {
    for (size_t i = 0; i < config.lambdas.size(); ++i) {
        if (config.lambdas[i] < 0 || (i > 0 && config.lambdas[i] <= config.lambdas[i - 1]))
            throw OptimizeError("l1_path: lambdas must be nonnegative and strictly increasing");
    }

    TrainConfig mnl_config = config.base;
    mnl_config.l1_lambda = 0.0;
    FitResult mnl = fit_mle(ModelKind::mnl, train, mnl_config);

    RegPathResult result;
    result.mnl_nll = negative_log_likelihood(mnl.model, train);

    const int d = train.d;
    std::optional<Model> warm;
    for (double lambda : config.lambdas) {
        TrainConfig cfg = config.base;
        cfg.l1_lambda = lambda;
        FitOptions options;
        options.init = warm;
        FitResult fit = fit_mle(ModelKind::lcl, train, cfg, options);

        RegPathEntry entry;
        entry.lambda = lambda;
        entry.nll = negative_log_likelihood(fit.model, train);
        entry.nnz_A = count_nonzero_A(fit.model);
        LRTResult lrt = likelihood_ratio_test(result.mnl_nll, entry.nll, d * d);
        entry.lrt_statistic = lrt.statistic;
        entry.lrt_vs_mnl_p = lrt.p_value;
        entry.model = fit.model;
        result.entries.push_back(std::move(entry));
        warm = std::move(fit.model);
    }
    return result;
}

ConstrainedLclResult fit_constrained_lcl(const ChoiceDataset& train, int p, int q,
                                         const TrainConfig& config) {
    const int d = train.d;
    if (p < 0 || p >= d || q < 0 || q >= d)
        throw OptimizeError("fit_constrained_lcl: entry index out of range");

    Model shape = Model::zeros(ModelKind::lcl, d);
    Vector mask = Vector::Zero(shape.n_params());
    mask.head(d).setOnes();
    mask[d + q * d + p] = 1.0;  // vec(A) is column-stacked

    FitOptions options;
    options.gradient_mask = mask;
    FitResult fit = fit_mle(ModelKind::lcl, train, config, options);

    ConstrainedLclResult result;
    result.nll = negative_log_likelihood(fit.model, train);
    result.model = std::move(fit.model);
    return result;
}

}  // namespace choicectx
