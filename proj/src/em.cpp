#include "choicectx/em.hpp"

#include <chrono>
#include <cmath>
#include <nlohmann/json.hpp>
#include <random>

namespace choicectx {

namespace {

double log_sum_exp(const Vector& v) {
    const double m = v.maxCoeff();
    return m + std::log((v.array() - m).exp().sum());
}

// log p_hk for one observation: per-component log-probability of the
// chosen item under preferences B_k + A_k * (x_C)_k.
Vector component_log_probs(const Matrix& A, const Matrix& B, const Observation& obs) {
    const int d = static_cast<int>(A.rows());
    const Vector x_C = obs.mean_item();
    Vector out(d);
    for (int k = 0; k < d; ++k) {
        Vector u = obs.items * Vector(B.col(k) + A.col(k) * x_C[k]);
        if (!u.allFinite()) throw DataError("non-finite utility in component " + std::to_string(k));
        const double m = u.maxCoeff();
        out[k] = u[obs.chosen] - (m + std::log((u.array() - m).exp().sum()));
    }
    return out;
}

}  // namespace

Vector component_probabilities(const Model& dlcl, const Observation& obs) {
    if (dlcl.kind != ModelKind::dlcl) throw DataError("component_probabilities: not a DLCL");
    if (obs.items.cols() != dlcl.d) throw DataError("component_probabilities: dimension mismatch");
    return component_log_probs(dlcl.A, dlcl.B, obs).array().exp();
}

Responsibilities compute_responsibilities(const Model& dlcl, const ChoiceDataset& dataset) {
    const int n = dataset.size();
    const int d = dlcl.d;
    const Vector log_pi = dlcl.mix_logits.array() - log_sum_exp(dlcl.mix_logits);
    Responsibilities r(n, d);
    for (int h = 0; h < n; ++h) {
        Vector lw = log_pi + component_log_probs(dlcl.A, dlcl.B, dataset.observations[h]);
        r.row(h) = (lw.array() - log_sum_exp(lw)).exp();
    }
    return r;
}

std::pair<double, Vector> q_function(const Matrix& A, const Matrix& B,
                                     const Responsibilities& r, const ChoiceDataset& dataset) {
    const int d = static_cast<int>(A.rows());
    const int n = dataset.size();
    if (r.rows() != n || r.cols() != d) throw DataError("q_function: responsibility shape");

    double q = 0.0;
    Matrix grad_A = Matrix::Zero(d, d);
    Matrix grad_B = Matrix::Zero(d, d);
    for (int h = 0; h < n; ++h) {
        const Observation& obs = dataset.observations[h];
        const Vector x_C = obs.mean_item();
        const Vector x_i = obs.chosen_item();
        for (int k = 0; k < d; ++k) {
            Vector u = obs.items * Vector(B.col(k) + A.col(k) * x_C[k]);
            const double m = u.maxCoeff();
            const double lse = m + std::log((u.array() - m).exp().sum());
            q += r(h, k) * (u[obs.chosen] - lse);
            Vector p = (u.array() - lse).exp();
            Vector diff = x_i - obs.items.transpose() * p;
            grad_B.col(k) += r(h, k) * diff;
            grad_A.col(k) += r(h, k) * diff * x_C[k];
        }
    }
    Vector grad(2 * d * d);
    grad.head(d * d) = Eigen::Map<const Vector>(grad_A.data(), d * d);
    grad.tail(d * d) = Eigen::Map<const Vector>(grad_B.data(), d * d);
    return {q, grad};
}

EmResult em_fit(const ChoiceDataset& train, const EmConfig& config,
                const std::optional<Model>& init) {
    const int d = train.d;
    Model model;
    if (init) {
        model = *init;
        if (model.kind != ModelKind::dlcl || model.d != d)
            throw OptimizeError("em_fit: init must be a DLCL of matching dimension");
    } else {
        model = Model::zeros(ModelKind::dlcl, d);
        std::mt19937_64 rng(config.seed);
        std::uniform_real_distribution<double> u(-0.1, 0.1);
        for (int c = 0; c < d; ++c)
            for (int rr = 0; rr < d; ++rr) {
                model.A(rr, c) = u(rng);
                model.B(rr, c) = u(rng);
            }
    }

    EmResult result;
    const auto start = std::chrono::steady_clock::now();
    const int n = train.size();

    for (int t = 0;; ++t) {
        auto [nll, grad] = nll_and_gradient(model, train);
        EmTraceEntry entry;
        entry.t = t;
        entry.nll = nll;
        entry.grad_norm = grad.norm();
        entry.pi = model.mixture_weights();
        result.trace.push_back(entry);

        if (entry.grad_norm < config.gradient_tolerance) {
            result.stop_reason = "gradient";
            break;
        }
        if (t >= config.max_outer_iterations) {
            result.stop_reason = "max_iterations";
            break;
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (elapsed > config.wall_clock_limit_seconds) {
            result.stop_reason = "wall_clock";
            break;
        }

        // E-step.
        Responsibilities r = compute_responsibilities(model, train);

        // Components with vanishing weight keep their parameters.
        Vector pi = model.mixture_weights();
        Vector mask = Vector::Ones(2 * d * d);
        for (int k = 0; k < d; ++k) {
            if (pi[k] < 1e-12) {
                mask.segment(k * d, d).setZero();
                mask.segment(d * d + k * d, d).setZero();
            }
        }

        // M-step: full-batch Adam on -Q, keeping the best iterate seen.
        Vector x(2 * d * d);
        x.head(d * d) = Eigen::Map<const Vector>(model.A.data(), d * d);
        x.tail(d * d) = Eigen::Map<const Vector>(model.B.data(), d * d);
        auto [q0, g0] = q_function(model.A, model.B, r, train);
        Vector best_x = x;
        double best_q = q0;

        AdamState inner_state = AdamState::init(2 * d * d);
        TrainConfig inner = config.inner;
        Vector g = g0;
        for (int it = 0; it < config.inner_iterations; ++it) {
            Vector descent = (-g / static_cast<double>(n)).cwiseProduct(mask);
            adam_step(inner_state, x, descent, inner);
            Matrix A = Eigen::Map<const Matrix>(x.data(), d, d);
            Matrix B = Eigen::Map<const Matrix>(x.data() + d * d, d, d);
            auto [q, gq] = q_function(A, B, r, train);
            if (q > best_q) {
                best_q = q;
                best_x = x;
            }
            g = gq;
        }
        model.A = Eigen::Map<const Matrix>(best_x.data(), d, d);
        model.B = Eigen::Map<const Matrix>(best_x.data() + d * d, d, d);

        // Closed-form mixture update: column means of the responsibilities.
        Vector new_pi = r.colwise().mean().transpose();
        model.mix_logits = new_pi.array().max(1e-300).log();
    }

    result.model = std::move(model);
    return result;
}

std::string em_trace_jsonl(const std::vector<EmTraceEntry>& trace) {
    std::string out;
    for (const auto& e : trace) {
        nlohmann::json j;
        j["t"] = e.t;
        j["nll"] = e.nll;
        j["grad_norm"] = e.grad_norm;
        j["pi"] = std::vector<double>(e.pi.data(), e.pi.data() + e.pi.size());
        out += j.dump() + "\n";
    }
    return out;
}

}  // namespace choicectx
